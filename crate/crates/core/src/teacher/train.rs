use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dqn::{select_action, teacher_loss_and_grad, Experience};
use super::net::TeacherNet;
use super::replay::ReplayBuffer;
use crate::envsim::Environment;
use crate::error::{Error, Result};
use crate::nnkit::{apply_update, optimizer_by_name, Optimizer};
use crate::repr::Observation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub gamma: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub buffer_size: usize,
    pub target_sync: usize,
    pub epsilon: f64,
    /// Linear decay from `epsilon_start` to `epsilon_end` over the first
    /// half of training instead of a fixed `epsilon`.
    pub epsilon_decay: bool,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub optimizer: String,
    /// Hidden widths of the Q head.
    pub hidden: Vec<usize>,
    /// Give every teacher the same initial encoder and keep it frozen.
    pub share_encoder: bool,
    /// Observations each trained teacher records for the distill dataset.
    pub states_per_teacher: usize,
    pub collect_epsilon: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            gamma: 0.6,
            epochs: 8,
            steps_per_epoch: 500,
            batch_size: 64,
            lr: 0.01,
            buffer_size: 256,
            target_sync: 20,
            epsilon: 0.1,
            epsilon_decay: false,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            optimizer: "adam".into(),
            hidden: vec![64, 32, 16],
            share_encoder: false,
            states_per_teacher: 1000,
            collect_epsilon: 0.1,
        }
    }
}

impl TeacherConfig {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn epsilon_at(&self, step: usize) -> f64 {
        if !self.epsilon_decay {
            return self.epsilon;
        }
        let half = (self.total_steps() / 2).max(1);
        let frac = (step as f64 / half as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    /// `lr / (1 + p/2)` for zero-based epoch `p`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr / (1.0 + epoch as f64 / 2.0)
    }
}

/// Per-epoch training telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub mean_reward: f64,
    pub epsilon: f64,
    pub lr: f64,
}

/// Step-wise driver of the DDQN loop for one task.
pub struct TeacherTrainer<E: Environment, R: Rng> {
    task: usize,
    cfg: TeacherConfig,
    net: TeacherNet,
    target: TeacherNet,
    buffer: ReplayBuffer<Experience>,
    opt: Box<dyn Optimizer>,
    env: E,
    obs: Observation,
    step: usize,
    rng: R,
}

impl<E: Environment, R: Rng> TeacherTrainer<E, R> {
    pub fn new(task: usize, net: TeacherNet, mut env: E, cfg: TeacherConfig, rng: R) -> Result<Self> {
        if task >= env.n_tasks() {
            return Err(Error::OutOfRange {
                what: "task",
                index: task,
                len: env.n_tasks(),
            });
        }
        if cfg.batch_size == 0 || cfg.target_sync == 0 {
            return Err(Error::Param("batch_size and target_sync must be positive".into()));
        }
        let opt = optimizer_by_name(&cfg.optimizer)?;
        let buffer = ReplayBuffer::new(cfg.buffer_size)?;
        let obs = env.reset();
        Ok(TeacherTrainer {
            task,
            target: net.clone(),
            net,
            buffer,
            opt,
            env,
            obs,
            step: 0,
            cfg,
            rng,
        })
    }

    pub fn net(&self) -> &TeacherNet {
        &self.net
    }

    pub fn target(&self) -> &TeacherNet {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer<Experience> {
        &self.buffer
    }

    pub fn global_step(&self) -> usize {
        self.step
    }

    /// One interaction plus one gradient step; returns `(loss, reward)`.
    pub fn step(&mut self, epoch: usize) -> Result<(f64, f64)> {
        let ctx = |e: Error| e.for_task(self.task);
        let actions = self.env.action_features().clone();
        let s = self.net.encode(&self.obs).map_err(ctx)?;
        let eps = self.cfg.epsilon_at(self.step);
        let action = select_action(&self.net, &s, &actions, eps, &mut self.rng).map_err(ctx)?;
        let tr = self.env.step(self.task, action).map_err(|e| {
            Error::Training {
                context: format!("teacher {} step {}", self.task, self.step),
                message: e.to_string(),
            }
        })?;
        let reward = tr.reward;
        let next_obs = if tr.session_over { self.env.reset() } else { tr.next.clone() };
        let obs = std::mem::replace(&mut self.obs, next_obs);
        self.buffer.push(Experience {
            obs,
            action,
            reward,
            next: tr.next,
            terminal: tr.terminal,
        });

        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng)?;
        let (loss, grads) =
            teacher_loss_and_grad(&self.net, &self.target, &batch, &actions, self.cfg.gamma).map_err(ctx)?;
        let context = format!("teacher {} epoch {epoch} step {}", self.task, self.step);
        apply_update(self.opt.as_mut(), &mut self.net, &grads, self.cfg.lr_at(epoch), &context)?;

        self.step += 1;
        if self.step % self.cfg.target_sync == 0 {
            self.target = self.net.clone();
        }
        Ok((loss, reward))
    }

    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        let (mut loss, mut reward) = (0.0, 0.0);
        let eps = self.cfg.epsilon_at(self.step);
        for _ in 0..self.cfg.steps_per_epoch {
            let (l, r) = self.step(epoch)?;
            loss += l;
            reward += r;
        }
        let n = self.cfg.steps_per_epoch.max(1) as f64;
        Ok(EpochStats {
            epoch,
            steps: self.cfg.steps_per_epoch,
            mean_loss: loss / n,
            mean_reward: reward / n,
            epsilon: eps,
            lr: self.cfg.lr_at(epoch),
        })
    }

    pub fn finish(self) -> (TeacherNet, E, R) {
        (self.net, self.env, self.rng)
    }
}

pub struct TrainedTeacher<E> {
    pub net: TeacherNet,
    pub curve: Vec<EpochStats>,
    pub env: E,
}

/// Runs `cfg.epochs` epochs of the DDQN loop for `task` starting from `net`.
pub fn train_teacher<E: Environment, R: Rng>(
    task: usize,
    net: TeacherNet,
    env: E,
    cfg: &TeacherConfig,
    rng: R,
) -> Result<TrainedTeacher<E>> {
    let mut trainer = TeacherTrainer::new(task, net, env, cfg.clone(), rng)?;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stats = trainer.run_epoch(epoch)?;
        log::info!(
            "teacher {task} epoch {epoch}: loss {:.5} reward {:.4} eps {:.3}",
            stats.mean_loss,
            stats.mean_reward,
            stats.epsilon
        );
        curve.push(stats);
    }
    let (net, env, _) = trainer.finish();
    Ok(TrainedTeacher { net, curve, env })
}

/// Rolls out the epsilon-greedy policy of `net` for `n` steps and returns
/// every observation it acted on.
pub fn collect_states<E: Environment, R: Rng + ?Sized>(
    net: &TeacherNet,
    env: &mut E,
    task: usize,
    n: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    let actions = env.action_features().clone();
    let mut out = Vec::with_capacity(n);
    let mut obs = env.reset();
    for _ in 0..n {
        let s = net.encode(&obs)?;
        let a = select_action(net, &s, &actions, epsilon, rng)?;
        let tr = env.step(task, a)?;
        out.push(std::mem::replace(&mut obs, if tr.session_over { env.reset() } else { tr.next }));
    }
    Ok(out)
}

pub const CURVE_HEADER: &str = "epoch,steps,mean_loss,mean_reward,epsilon,lr";

pub fn curve_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for s in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.epoch, s.steps, s.mean_loss, s.mean_reward, s.epsilon, s.lr
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{make_fixture_mdp, TabularEnv};
    use crate::nnkit::Params;
    use crate::teacher::net::TeacherDims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tabular(fixture: &str) -> (TeacherNet, TabularEnv) {
        let mdp = make_fixture_mdp(fixture, 0.6).unwrap();
        let dims = TeacherDims {
            feature_dim: mdp.n_states(),
            action_dim: mdp.n_actions(),
            hidden: vec![16],
            encoder: None,
            encoder_frozen: false,
        };
        let net = TeacherNet::init(&dims, 0.01, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (net, TabularEnv::new(mdp, 0, 10, 2).unwrap())
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (net, env) = tabular("chain-4");
        let cfg = TeacherConfig {
            epochs: 0,
            ..TeacherConfig::default()
        };
        let out = train_teacher(0, net.clone(), env, &cfg, ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.net, net);
        assert!(out.curve.is_empty());
    }

    #[test]
    fn target_syncs_exactly_every_period() {
        let (net, env) = tabular("two-state-switch");
        let cfg = TeacherConfig {
            target_sync: 5,
            batch_size: 4,
            ..TeacherConfig::default()
        };
        let mut tr = TeacherTrainer::new(0, net, env, cfg, ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut last_target = tr.target().clone();
        for _ in 0..23 {
            tr.step(0).unwrap();
            if tr.global_step() % 5 == 0 {
                assert_eq!(tr.target().flatten(), tr.net().flatten());
                last_target = tr.target().clone();
            } else {
                assert_eq!(tr.target(), &last_target);
                assert_ne!(tr.target().flatten(), tr.net().flatten());
            }
        }
    }

    #[test]
    fn epsilon_and_lr_schedules() {
        let cfg = TeacherConfig {
            epochs: 4,
            steps_per_epoch: 10,
            epsilon_decay: true,
            ..TeacherConfig::default()
        };
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(10) - 0.525).abs() < 1e-12);
        assert!((cfg.epsilon_at(20) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon_at(39) - 0.05).abs() < 1e-12);
        assert_eq!(cfg.lr_at(0), 0.01);
        assert!((cfg.lr_at(2) - 0.005).abs() < 1e-15);
        assert_eq!(TeacherConfig::default().epsilon_at(100), 0.1);
    }

    #[test]
    fn single_loop_converges_to_geometric_value() {
        let (net, env) = tabular("single-loop");
        let cfg = TeacherConfig {
            epochs: 6,
            steps_per_epoch: 300,
            ..TeacherConfig::default()
        };
        let out = train_teacher(0, net, env, &cfg, ChaCha8Rng::seed_from_u64(5)).unwrap();
        let q = out.net.q_value(&[1.0], &[1.0]).unwrap();
        assert!((q - 2.5).abs() < 0.1, "q = {q}");
    }
}
