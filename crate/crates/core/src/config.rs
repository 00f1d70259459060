//! Run configuration: a TOML file with one table per stage. Every key has a
//! default, unknown keys are rejected by name, and [`RunConfig::validate`]
//! runs before any stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::StudentConfig;
use crate::envsim::{EnvParams, FIXTURES};
use crate::error::{Error, Result};
use crate::evalkit::{MIN_REPETITIONS, POLICY_NAMES};
use crate::nnkit::optim::optimizer_names;
use crate::repr::{ActionDims, EncoderDims};
use crate::teacher::TeacherConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Simulated users, recurrent state encoder, distillation.
    Featurized,
    /// A fixture MDP with one-hot states; teachers only, checked against
    /// value iteration.
    Tabular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub mode: Mode,
    /// Fixture MDP for tabular mode.
    pub fixture: String,
    /// Alternations of teacher training, data generation and student training.
    pub outer_rounds: usize,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 7,
            mode: Mode::Featurized,
            fixture: "random-6x4".into(),
            outer_rounds: 1,
            out: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSection {
    pub n_items: usize,
    /// Item file to load instead of a synthetic catalog.
    pub path: Option<PathBuf>,
}

impl Default for CatalogSection {
    fn default() -> Self {
        CatalogSection { n_items: 50, path: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub sessions_per_user: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { sessions_per_user: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReprSection {
    pub gru_layers: usize,
    pub gru_hidden: usize,
    pub h0_std: f64,
    pub train_h0: bool,
}

impl Default for ReprSection {
    fn default() -> Self {
        ReprSection {
            gru_layers: 3,
            gru_hidden: 10,
            h0_std: 0.01,
            train_h0: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub sessions: usize,
    pub k: usize,
    pub policies: Vec<String>,
    pub bench_repetitions: usize,
    pub bench_states: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            sessions: 10_000,
            k: 5,
            policies: POLICY_NAMES.iter().map(|s| s.to_string()).collect(),
            bench_repetitions: 1000,
            bench_states: 200,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub catalog: CatalogSection,
    pub simulate: SimulateSection,
    pub env: EnvParams,
    pub repr: ReprSection,
    pub teacher: TeacherConfig,
    pub distill: StudentConfig,
    pub eval: EvalSection,
}

fn positive(checks: &[(&str, usize)]) -> Result<()> {
    match checks.iter().find(|(_, v)| *v == 0) {
        Some((name, _)) => Err(Error::Config(format!("{name} must be positive"))),
        None => Ok(()),
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} must be in [0,1], got {v}")));
    }
    Ok(())
}

fn positive_real(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn known_optimizer(name: &str, v: &str) -> Result<()> {
    if !optimizer_names().any(|o| o == v) {
        let known: Vec<&str> = optimizer_names().collect();
        return Err(Error::Config(format!("{name} `{v}` is not one of {known:?}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let (t, d, e) = (&self.teacher, &self.distill, &self.eval);
        positive(&[
            ("run.outer_rounds", self.run.outer_rounds),
            ("catalog.n_items", self.catalog.n_items),
            ("simulate.sessions_per_user", self.simulate.sessions_per_user),
            ("repr.gru_layers", self.repr.gru_layers),
            ("repr.gru_hidden", self.repr.gru_hidden),
            ("teacher.batch_size", t.batch_size),
            ("teacher.buffer_size", t.buffer_size),
            ("teacher.target_sync", t.target_sync),
            ("teacher.states_per_teacher", t.states_per_teacher),
            ("distill.batch_size", d.batch_size),
            ("eval.sessions", e.sessions),
            ("eval.k", e.k),
            ("eval.bench_states", e.bench_states),
        ])?;
        if t.hidden.contains(&0) || d.trunk.contains(&0) || d.branch_hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if d.trunk.is_empty() {
            return Err(Error::Config("distill.trunk needs at least one layer".into()));
        }
        if self.run.mode == Mode::Tabular && !FIXTURES.contains(&self.run.fixture.as_str()) {
            return Err(Error::Config(format!(
                "run.fixture `{}` is not one of {FIXTURES:?}",
                self.run.fixture
            )));
        }
        self.env.validate()?;
        probability("teacher.gamma", t.gamma)?;
        probability("teacher.epsilon", t.epsilon)?;
        probability("teacher.epsilon_start", t.epsilon_start)?;
        probability("teacher.epsilon_end", t.epsilon_end)?;
        probability("teacher.collect_epsilon", t.collect_epsilon)?;
        positive_real("teacher.lr", t.lr)?;
        positive_real("distill.lr", d.lr)?;
        positive_real("distill.tau", d.tau)?;
        probability("distill.smoothing", d.smoothing)?;
        known_optimizer("teacher.optimizer", &t.optimizer)?;
        known_optimizer("distill.optimizer", &d.optimizer)?;
        if !(d.rho >= 0.0 && d.rho.is_finite()) {
            return Err(Error::Config(format!("distill.rho must be non-negative, got {}", d.rho)));
        }
        if !(d.sigma >= 0.0 && d.sigma.is_finite()) {
            return Err(Error::Config(format!("distill.sigma must be non-negative, got {}", d.sigma)));
        }
        if let Some(l) = d.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("distill.lambdas entries must be >= 0, got {l}")));
        }
        if self.run.mode == Mode::Featurized {
            if d.lambdas.len() != self.env.n_tasks {
                return Err(Error::Config(format!(
                    "distill.lambdas has {} entries but env.n_tasks = {}",
                    d.lambdas.len(),
                    self.env.n_tasks
                )));
            }
            if d.reference_teacher >= self.env.n_tasks {
                return Err(Error::Config(format!(
                    "distill.reference_teacher {} must be below env.n_tasks = {}",
                    d.reference_teacher, self.env.n_tasks
                )));
            }
            if e.k > self.catalog.n_items {
                return Err(Error::Config(format!(
                    "eval.k = {} exceeds catalog.n_items = {}",
                    e.k, self.catalog.n_items
                )));
            }
        }
        if e.bench_repetitions < MIN_REPETITIONS {
            return Err(Error::Config(format!("eval.bench_repetitions must be at least {MIN_REPETITIONS}")));
        }
        if let Some(p) = e.policies.iter().find(|p| !POLICY_NAMES.contains(&p.as_str())) {
            return Err(Error::Config(format!("eval.policies: unknown policy `{p}`, expected one of {POLICY_NAMES:?}")));
        }
        Ok(())
    }

    pub fn encoder_dims(&self) -> EncoderDims {
        EncoderDims {
            input: ActionDims::default().total() + self.env.n_tasks,
            hidden: self.repr.gru_hidden,
            layers: self.repr.gru_layers,
            window: self.env.window,
            train_h0: self.repr.train_h0,
        }
    }
}
