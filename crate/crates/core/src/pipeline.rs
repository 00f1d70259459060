//! The staged pipeline behind the command line. Each stage reads the
//! artifacts of earlier stages from the output directory, writes its own,
//! and records an input digest in `manifest.json`; a stage whose digest is
//! unchanged and whose outputs exist is skipped unless forced.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_model, save_model, write_atomic};
use crate::config::{Mode, RunConfig};
use crate::distill::{
    gen_distill_dataset, read_dataset, student_curve_csv, train_student, write_dataset, DistillGenConfig,
    StudentModel, StudentNet,
};
use crate::envsim::{make_fixture_mdp, read_log, write_log, FeaturizedEnv, TabularEnv};
use crate::error::{Error, Result};
use crate::evalkit::{
    bench_latency, build_policy, evaluate_policies, greedy_policy, value_iteration, PolicySources,
};
use crate::nnkit::{argmax, Matrix};
use crate::repr::{ActionDims, Catalog, GruEncoder, Observation};
use crate::seed::{derive_seed, stage_rng};
use crate::teacher::{collect_states, curve_csv, train_teacher, TeacherDims, TeacherNet};

pub const STAGES: &[&str] = &["simulate", "train-teachers", "gen-distill", "train-student", "evaluate", "bench"];

/// File layout of one run directory.
#[derive(Clone, Debug)]
pub struct Paths {
    pub root: PathBuf,
}

impl Paths {
    pub fn catalog(&self) -> PathBuf {
        self.root.join("catalog.jsonl")
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("log.jsonl")
    }
    pub fn teacher(&self, task: usize) -> PathBuf {
        self.root.join("teachers").join(format!("teacher_{task}.json"))
    }
    pub fn teacher_curve(&self, task: usize) -> PathBuf {
        self.root.join("teachers").join(format!("curve_{task}.csv"))
    }
    pub fn states(&self) -> PathBuf {
        self.root.join("teachers").join("states.jsonl")
    }
    pub fn oracle(&self) -> PathBuf {
        self.root.join("teachers").join("oracle.json")
    }
    pub fn distill(&self) -> PathBuf {
        self.root.join("distill.jsonl")
    }
    pub fn student(&self) -> PathBuf {
        self.root.join("student.json")
    }
    pub fn student_curve(&self) -> PathBuf {
        self.root.join("student_curve.csv")
    }
    pub fn eval_json(&self) -> PathBuf {
        self.root.join("eval.json")
    }
    pub fn eval_txt(&self) -> PathBuf {
        self.root.join("eval.txt")
    }
    pub fn bench_json(&self) -> PathBuf {
        self.root.join("bench.json")
    }
    pub fn bench_txt(&self) -> PathBuf {
        self.root.join("bench.txt")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_digest: String,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Option<Manifest>> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| Error::Malformed {
                    line: e.line(),
                    message: format!("{}: {e}", path.display()),
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// What a stage did.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub skipped: bool,
    pub summary: String,
}

/// Result of checking tabular teachers against value iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub task: usize,
    pub policy_agreement: f64,
    pub max_abs_error: f64,
    pub error_bound: f64,
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingPrerequisite {
            stage,
            path: path.to_path_buf(),
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_states(path: &Path, states: &[Observation]) -> Result<()> {
    let mut text = String::new();
    for s in states {
        text.push_str(&serde_json::to_string(s).expect("observation serializes"));
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_states(path: &Path) -> Result<Vec<Observation>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub paths: Paths,
    pub force: bool,
    /// Log to warm-start teacher training from, instead of the simulated one.
    pub log_override: Option<PathBuf>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>, force: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            paths: Paths { root: out.into() },
            force,
            log_override: None,
        })
    }

    fn seed(&self) -> u64 {
        self.cfg.run.seed
    }

    fn featurized_only(&self, stage: &str) -> Result<()> {
        if self.cfg.run.mode != Mode::Featurized {
            return Err(Error::Config(format!("`{stage}` needs run.mode = \"featurized\"")));
        }
        Ok(())
    }

    fn digest(&self, stage: &str, config_parts: &serde_json::Value, inputs: &[PathBuf]) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update([0]);
        h.update(config_parts.to_string().as_bytes());
        for p in inputs {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            h.update([0]);
            h.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
            h.update(sha_hex(&bytes).as_bytes());
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    fn run_stage(
        &self,
        stage: &'static str,
        config_parts: serde_json::Value,
        inputs: &[PathBuf],
        outputs: Vec<PathBuf>,
        body: impl FnOnce() -> Result<String>,
    ) -> Result<StageOutcome> {
        let digest = self.digest(stage, &config_parts, inputs)?;
        let manifest = Manifest::load(&self.paths.manifest())?;
        let rel = |p: &PathBuf| {
            p.strip_prefix(&self.paths.root)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        if !self.force {
            if let Some(rec) = manifest.as_ref().and_then(|m| m.stages.get(stage)) {
                if rec.input_digest == digest && outputs.iter().all(|p| p.exists()) {
                    log::info!("{stage}: inputs unchanged, skipping (use --force to rerun)");
                    return Ok(StageOutcome {
                        stage,
                        skipped: true,
                        summary: format!("{stage}: up to date"),
                    });
                }
            }
        }
        fs::create_dir_all(&self.paths.root).map_err(|e| Error::io(&self.paths.root, e))?;
        let start = Instant::now();
        let summary = body()?;
        let mut manifest = manifest.unwrap_or_default();
        manifest.version = version_string();
        manifest.seed = self.seed();
        manifest.config = serde_json::to_value(&self.cfg).expect("config serializes");
        manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                input_digest: digest,
                outputs: outputs.iter().map(rel).collect(),
                wall_clock_s: start.elapsed().as_secs_f64(),
            },
        );
        write_text(&self.paths.manifest(), &to_json(&manifest))?;
        Ok(StageOutcome {
            stage,
            skipped: false,
            summary,
        })
    }

    fn catalog_seed(&self) -> u64 {
        derive_seed(self.seed(), "catalog")
    }

    fn load_catalog(&self) -> Result<Arc<Catalog>> {
        let path = self.paths.catalog();
        require(&path, "simulate")?;
        Ok(Arc::new(Catalog::load(
            &path,
            ActionDims::default(),
            self.cfg.env.n_genres,
            self.catalog_seed(),
        )?))
    }

    fn training_env(&self, catalog: Arc<Catalog>) -> Result<FeaturizedEnv> {
        FeaturizedEnv::new(catalog, self.cfg.env.clone(), derive_seed(self.seed(), "env/train"))
    }

    fn heldout_env(&self, catalog: Arc<Catalog>) -> Result<FeaturizedEnv> {
        FeaturizedEnv::new(catalog, self.cfg.env.clone(), derive_seed(self.seed(), "env/heldout"))
    }

    fn n_teachers(&self) -> Result<usize> {
        Ok(match self.cfg.run.mode {
            Mode::Featurized => self.cfg.env.n_tasks,
            Mode::Tabular => make_fixture_mdp(&self.cfg.run.fixture, self.cfg.teacher.gamma)?.n_tasks(),
        })
    }

    fn teacher_paths(&self) -> Result<Vec<PathBuf>> {
        Ok((0..self.n_teachers()?).map(|i| self.paths.teacher(i)).collect())
    }

    fn load_teachers(&self) -> Result<Vec<TeacherNet>> {
        self.teacher_paths()?
            .iter()
            .map(|p| {
                require(p, "train-teachers")?;
                Ok(load_model::<TeacherNet>(p)?.0)
            })
            .collect()
    }

    pub fn simulate(&self) -> Result<StageOutcome> {
        self.featurized_only("simulate")?;
        let cfg = &self.cfg;
        let parts = serde_json::json!([cfg.run.seed, cfg.catalog, cfg.env, cfg.simulate]);
        let mut inputs = Vec::new();
        if let Some(p) = &cfg.catalog.path {
            require(p, "simulate")?;
            inputs.push(p.clone());
        }
        let outputs = vec![self.paths.catalog(), self.paths.log()];
        self.run_stage("simulate", parts, &inputs, outputs, || {
            let dims = ActionDims::default();
            let catalog = match &cfg.catalog.path {
                Some(p) => Catalog::load(p, dims, cfg.env.n_genres, self.catalog_seed())?,
                None => Catalog::synthetic(cfg.catalog.n_items, dims, cfg.env.n_genres, self.catalog_seed())?,
            };
            catalog.save(&self.paths.catalog())?;
            let mut env = self.training_env(Arc::new(catalog))?;
            env.reseed(derive_seed(self.seed(), "simulate"));
            let events = env.simulate_log(cfg.simulate.sessions_per_user)?;
            write_log(&self.paths.log(), &events)?;
            Ok(format!("simulate: wrote {} events to {}", events.len(), self.paths.log().display()))
        })
    }

    fn teacher_dims(&self, feature_dim: usize, action_dim: usize, encoder: bool) -> TeacherDims {
        TeacherDims {
            feature_dim,
            action_dim,
            hidden: self.cfg.teacher.hidden.clone(),
            encoder: encoder.then(|| self.cfg.encoder_dims()),
            encoder_frozen: encoder && self.cfg.teacher.share_encoder,
        }
    }

    /// Trains one teacher per task on worker threads. With `resume`,
    /// existing checkpoints are the starting point instead of a fresh
    /// initialization.
    pub fn train_teachers(&self, resume: bool) -> Result<StageOutcome> {
        match self.cfg.run.mode {
            Mode::Featurized => self.train_featurized_teachers(resume),
            Mode::Tabular => self.train_tabular_teachers(),
        }
    }

    fn initial_teacher(&self, task: usize, dims: &TeacherDims, resume: bool, shared: Option<&GruEncoder>) -> Result<TeacherNet> {
        let path = self.paths.teacher(task);
        if resume && path.exists() {
            return Ok(load_model::<TeacherNet>(&path)?.0);
        }
        let mut rng = stage_rng(self.seed(), &format!("train-teachers/init{task}"));
        let mut net = TeacherNet::init(dims, self.cfg.repr.h0_std, &mut rng)?;
        if let Some(enc) = shared {
            net.encoder = Some(enc.clone());
        }
        Ok(net)
    }

    fn train_featurized_teachers(&self, resume: bool) -> Result<StageOutcome> {
        let cfg = &self.cfg;
        let log_path = self.log_override.clone().unwrap_or_else(|| self.paths.log());
        require(&self.paths.catalog(), "simulate")?;
        require(&log_path, "simulate")?;
        let parts = serde_json::json!([cfg.run.seed, cfg.env, cfg.repr, cfg.teacher, resume]);
        let mut inputs = vec![self.paths.catalog(), log_path.clone()];
        if resume {
            inputs.extend(self.teacher_paths()?.into_iter().filter(|p| p.exists()));
        }
        let n = cfg.env.n_tasks;
        let mut outputs: Vec<PathBuf> = (0..n).flat_map(|i| [self.paths.teacher(i), self.paths.teacher_curve(i)]).collect();
        outputs.push(self.paths.states());
        self.run_stage("train-teachers", parts, &inputs, outputs, || {
            let catalog = self.load_catalog()?;
            let events = read_log(&log_path, cfg.env.n_tasks)?;
            let mut base = self.training_env(Arc::clone(&catalog))?;
            let applied = base.warm_start(&events)?;
            log::info!("warm-started {applied} of {} logged events", events.len());
            let dims = self.teacher_dims(base.feature_dim(), catalog.dims().total(), true);
            let shared = cfg.teacher.share_encoder.then(|| {
                let mut rng = stage_rng(self.seed(), "train-teachers/encoder");
                GruEncoder::new(cfg.encoder_dims(), cfg.repr.h0_std, &mut rng)
            });
            let results: Vec<Result<(TeacherNet, String, Vec<Observation>)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..n)
                    .map(|task| {
                        let (base, dims, shared) = (&base, &dims, shared.as_ref());
                        scope.spawn(move || -> Result<_> {
                            let net = self.initial_teacher(task, dims, resume, shared)?;
                            let mut env = base.clone();
                            env.reseed(derive_seed(self.seed(), &format!("train-teachers/env{task}")));
                            let rng = stage_rng(self.seed(), &format!("train-teachers/task{task}"));
                            let mut trained = train_teacher(task, net, env, &cfg.teacher, rng).map_err(|e| e.for_task(task))?;
                            let mut crng = stage_rng(self.seed(), &format!("train-teachers/collect{task}"));
                            let states = collect_states(
                                &trained.net,
                                &mut trained.env,
                                task,
                                cfg.teacher.states_per_teacher,
                                cfg.teacher.collect_epsilon,
                                &mut crng,
                            )
                            .map_err(|e| e.for_task(task))?;
                            Ok((trained.net, curve_csv(&trained.curve), states))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Training {
                        context: "teacher worker".into(),
                        message: "thread panicked".into(),
                    })))
                    .collect()
            });
            let mut all_states = Vec::new();
            for (task, r) in results.into_iter().enumerate() {
                let (net, curve, states) = r?;
                save_model(&self.paths.teacher(task), &net, derive_seed(self.seed(), &format!("train-teachers/init{task}")), cfg.teacher.total_steps() as u64)?;
                write_text(&self.paths.teacher_curve(task), &curve)?;
                all_states.extend(states);
            }
            write_states(&self.paths.states(), &all_states)?;
            Ok(format!(
                "train-teachers: {n} teachers trained for {} steps each; {} states recorded",
                cfg.teacher.total_steps(),
                all_states.len()
            ))
        })
    }

    fn train_tabular_teachers(&self) -> Result<StageOutcome> {
        let cfg = &self.cfg;
        let parts = serde_json::json!([cfg.run, cfg.env.session_len, cfg.teacher]);
        let mdp = make_fixture_mdp(&cfg.run.fixture, cfg.teacher.gamma)?;
        let n = mdp.n_tasks();
        let mut outputs: Vec<PathBuf> = (0..n).flat_map(|i| [self.paths.teacher(i), self.paths.teacher_curve(i)]).collect();
        outputs.push(self.paths.oracle());
        self.run_stage("train-teachers", parts, &[], outputs, || {
            let dims = self.teacher_dims(mdp.n_states(), mdp.n_actions(), false);
            let results: Vec<Result<(TeacherNet, String)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..n)
                    .map(|task| {
                        let (mdp, dims) = (&mdp, &dims);
                        scope.spawn(move || -> Result<_> {
                            let net = self.initial_teacher(task, dims, false, None)?;
                            let env = TabularEnv::new(
                                mdp.clone(),
                                task,
                                cfg.env.session_len,
                                derive_seed(self.seed(), &format!("train-teachers/env{task}")),
                            )?;
                            let rng = stage_rng(self.seed(), &format!("train-teachers/task{task}"));
                            let trained = train_teacher(task, net, env, &cfg.teacher, rng).map_err(|e| e.for_task(task))?;
                            Ok((trained.net, curve_csv(&trained.curve)))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Training {
                        context: "teacher worker".into(),
                        message: "thread panicked".into(),
                    })))
                    .collect()
            });
            let mut checks = Vec::new();
            for (task, r) in results.into_iter().enumerate() {
                let (net, curve) = r?;
                checks.push(oracle_check(&net, &mdp, task)?);
                save_model(&self.paths.teacher(task), &net, derive_seed(self.seed(), &format!("train-teachers/init{task}")), cfg.teacher.total_steps() as u64)?;
                write_text(&self.paths.teacher_curve(task), &curve)?;
            }
            write_text(&self.paths.oracle(), &to_json(&checks))?;
            let worst = checks.iter().map(|c| c.policy_agreement).fold(1.0, f64::min);
            Ok(format!("train-teachers: {n} tabular teachers; worst policy agreement with value iteration {worst:.3}"))
        })
    }

    pub fn gen_distill(&self) -> Result<StageOutcome> {
        self.featurized_only("gen-distill")?;
        let cfg = &self.cfg;
        let mut inputs = self.teacher_paths()?;
        inputs.push(self.paths.states());
        inputs.push(self.paths.catalog());
        for p in &inputs {
            require(p, if p.ends_with("catalog.jsonl") { "simulate" } else { "train-teachers" })?;
        }
        let d = &cfg.distill;
        let parts = serde_json::json!([cfg.run.seed, d.tau, d.rho, d.sigma, d.reference_teacher]);
        self.run_stage("gen-distill", parts, &inputs, vec![self.paths.distill()], || {
            let teachers = self.load_teachers()?;
            let catalog = self.load_catalog()?;
            let states = read_states(&self.paths.states())?;
            let state_dim = teachers[d.reference_teacher].state_dim();
            let short = teachers[d.reference_teacher].encoder.as_ref().map_or(0, GruEncoder::output_dim);
            let mut noise_dims: Vec<usize> = (0..short).collect();
            noise_dims.extend(state_dim - 3..state_dim);
            let gen = DistillGenConfig {
                tau: d.tau,
                rho: d.rho,
                sigma: d.sigma,
                noise_dims,
                reference: d.reference_teacher,
            };
            let mut rng = stage_rng(self.seed(), "gen-distill");
            let data = gen_distill_dataset(&teachers, &states, catalog.matrix(), &gen, &mut rng)?;
            write_dataset(&self.paths.distill(), &data)?;
            Ok(format!(
                "gen-distill: {} samples ({} observed, {} augmented)",
                data.len(),
                states.len(),
                data.len() - states.len()
            ))
        })
    }

    /// With `resume`, training continues from the existing student.
    pub fn train_student(&self, resume: bool) -> Result<StageOutcome> {
        self.featurized_only("train-student")?;
        let cfg = &self.cfg;
        let d = &cfg.distill;
        let reference = self.paths.teacher(d.reference_teacher);
        require(&reference, "train-teachers")?;
        require(&self.paths.distill(), "gen-distill")?;
        let mut inputs = vec![self.paths.distill(), reference.clone()];
        if resume && self.paths.student().exists() {
            inputs.push(self.paths.student());
        }
        let parts = serde_json::json!([cfg.run.seed, d, resume]);
        let outputs = vec![self.paths.student(), self.paths.student_curve()];
        self.run_stage("train-student", parts, &inputs, outputs, || {
            let data = read_dataset(&self.paths.distill())?;
            let (teacher, _) = load_model::<TeacherNet>(&reference)?;
            let n_actions = data[0].targets[0].len();
            let init_seed = derive_seed(self.seed(), "train-student/init");
            let net = if resume && self.paths.student().exists() {
                load_model::<StudentModel>(&self.paths.student())?.0.net
            } else {
                let mut rng = stage_rng(self.seed(), "train-student/init");
                StudentNet::init(&d.dims(data[0].state.len(), n_actions), &mut rng)?
            };
            let mut rng = stage_rng(self.seed(), "train-student");
            let trained = train_student(&data, net, d, &mut rng)?;
            let model = StudentModel {
                encoder: teacher.encoder.clone(),
                net: trained.net,
            };
            let steps = (d.epochs * data.len().div_ceil(d.batch_size)) as u64;
            save_model(&self.paths.student(), &model, init_seed, steps)?;
            write_text(&self.paths.student_curve(), &student_curve_csv(&trained.curve))?;
            let last = trained.curve.last().map_or(f64::NAN, |e| e.loss);
            Ok(format!("train-student: {} epochs on {} samples; final loss {last:.6}", d.epochs, data.len()))
        })
    }

    fn policy_sources(&self, names: &[String], catalog: &Catalog) -> Result<PolicySources> {
        let student = if names.iter().any(|p| p == "student") {
            require(&self.paths.student(), "train-student")?;
            Some(load_model::<StudentModel>(&self.paths.student())?.0)
        } else {
            None
        };
        let teachers = if names.iter().any(|p| p == "teacher") {
            Some(self.load_teachers()?)
        } else {
            None
        };
        Ok(PolicySources {
            student,
            teachers,
            actions: catalog.matrix().clone(),
        })
    }

    fn model_inputs(&self, names: &[String]) -> Result<Vec<PathBuf>> {
        let mut inputs = vec![self.paths.catalog()];
        if names.iter().any(|p| p == "student") {
            inputs.push(self.paths.student());
        }
        if names.iter().any(|p| p == "teacher") {
            inputs.extend(self.teacher_paths()?);
        }
        for p in &inputs {
            let stage = if p.ends_with("catalog.jsonl") {
                "simulate"
            } else if p.ends_with("student.json") {
                "train-student"
            } else {
                "train-teachers"
            };
            require(p, stage)?;
        }
        Ok(inputs)
    }

    pub fn evaluate(&self) -> Result<StageOutcome> {
        self.featurized_only("evaluate")?;
        let cfg = &self.cfg;
        let names = cfg.eval.policies.clone();
        let inputs = self.model_inputs(&names)?;
        let parts = serde_json::json!([cfg.run.seed, cfg.env, cfg.eval.sessions, cfg.eval.k, names]);
        let outputs = vec![self.paths.eval_json(), self.paths.eval_txt()];
        self.run_stage("evaluate", parts, &inputs, outputs, || {
            let catalog = self.load_catalog()?;
            let sources = self.policy_sources(&names, &catalog)?;
            let policies = names
                .iter()
                .map(|n| build_policy(n, &sources))
                .collect::<Result<Vec<_>>>()?;
            let env = self.heldout_env(catalog)?;
            let report = evaluate_policies(
                &policies,
                &env,
                cfg.eval.sessions,
                cfg.eval.k,
                derive_seed(self.seed(), "evaluate"),
            )?;
            write_text(&self.paths.eval_json(), &to_json(&report))?;
            let table = report.to_table();
            write_text(&self.paths.eval_txt(), &table)?;
            Ok(table)
        })
    }

    pub fn bench(&self) -> Result<StageOutcome> {
        self.featurized_only("bench")?;
        let cfg = &self.cfg;
        let names = vec!["student".to_string(), "teacher".to_string()];
        let inputs = self.model_inputs(&names)?;
        let parts = serde_json::json!([cfg.run.seed, cfg.env, cfg.eval.bench_repetitions, cfg.eval.bench_states]);
        let outputs = vec![self.paths.bench_json(), self.paths.bench_txt()];
        self.run_stage("bench", parts, &inputs, outputs, || {
            let catalog = self.load_catalog()?;
            let sources = self.policy_sources(&names, &catalog)?;
            let env = self.heldout_env(catalog)?;
            let states = sample_states(&env, cfg.eval.bench_states, derive_seed(self.seed(), "bench"))?;
            let report = bench_latency(
                sources.student.as_ref().expect("student requested"),
                sources.teachers.as_deref().expect("teachers requested"),
                &states,
                &sources.actions,
                cfg.eval.bench_repetitions,
            )?;
            write_text(&self.paths.bench_json(), &to_json(&report))?;
            let table = report.to_table();
            write_text(&self.paths.bench_txt(), &table)?;
            Ok(table)
        })
    }

    /// Every featurized stage in order, repeated `run.outer_rounds` times;
    /// later rounds continue from the previous round's models.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        self.featurized_only("run-all")?;
        let mut out = vec![self.simulate()?];
        for round in 0..self.cfg.run.outer_rounds {
            out.push(self.train_teachers(round > 0)?);
            out.push(self.gen_distill()?);
            out.push(self.train_student(round > 0)?);
        }
        out.push(self.evaluate()?);
        out.push(self.bench()?);
        Ok(out)
    }
}

/// Session-start observations of held-out users, one per state.
pub fn sample_states(env: &FeaturizedEnv, n: usize, seed: u64) -> Result<Vec<Observation>> {
    (0..n)
        .map(|j| {
            let mut fork = env.fork(j % env.users().len(), derive_seed(seed, &format!("state/{j}")));
            fork.begin_session(0)
        })
        .collect()
}

/// Compares a tabular teacher with value iteration. A state counts as
/// agreeing when the learned greedy action is optimal under `Q*`, allowing
/// for exact ties.
pub fn oracle_check(net: &TeacherNet, mdp: &crate::envsim::TabularMdp, task: usize) -> Result<OracleCheck> {
    let q_star = value_iteration(mdp, task, 1e-10)?;
    let best = greedy_policy(&q_star);
    let actions = Matrix::identity(mdp.n_actions());
    let mut agree = 0;
    let mut max_err: f64 = 0.0;
    for s in 0..mdp.n_states() {
        let mut one_hot = vec![0.0; mdp.n_states()];
        one_hot[s] = 1.0;
        let learned = net.score_catalog(&one_hot, &actions)?;
        let a = argmax(&learned).expect("non-empty catalog");
        if q_star[s][a] >= q_star[s][best[s]] - 1e-9 {
            agree += 1;
        }
        for (l, q) in learned.iter().zip(&q_star[s]) {
            max_err = max_err.max((l - q).abs());
        }
    }
    Ok(OracleCheck {
        task,
        policy_agreement: agree as f64 / mdp.n_states() as f64,
        max_abs_error: max_err,
        error_bound: 0.05 / (1.0 - mdp.gamma()),
    })
}

/// Sizes the global worker pool used for data generation and evaluation.
/// Results do not depend on the pool size.
pub fn set_jobs(jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(Error::Config("--jobs must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))
}
