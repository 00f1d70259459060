#![allow(dead_code)]

pub mod brute;

use std::sync::Arc;

use distillrec::config::RunConfig;
use distillrec::distill::DistillSample;
use distillrec::envsim::{Environment, FeaturizedEnv};
use distillrec::nnkit::{softmax_tau, Matrix};
use distillrec::repr::{ActionDims, Catalog};
use distillrec::teacher::{Experience, TeacherDims, TeacherNet};
use rand::Rng;

pub struct World {
    pub cfg: RunConfig,
    pub env: FeaturizedEnv,
    pub actions: Matrix,
}

/// Default-sized population and catalog.
pub fn world(n_users: usize, seed: u64) -> World {
    let mut cfg = RunConfig::default();
    cfg.env.n_users = n_users;
    let catalog = Catalog::synthetic(cfg.catalog.n_items, ActionDims::default(), cfg.env.n_genres, seed).unwrap();
    let actions = catalog.matrix().clone();
    let env = FeaturizedEnv::new(Arc::new(catalog), cfg.env.clone(), seed ^ 0x5eed).unwrap();
    World { cfg, env, actions }
}

impl World {
    pub fn teacher_dims(&self) -> TeacherDims {
        TeacherDims {
            feature_dim: self.env.feature_dim(),
            action_dim: self.actions.cols(),
            hidden: self.cfg.teacher.hidden.clone(),
            encoder: Some(self.cfg.encoder_dims()),
            encoder_frozen: false,
        }
    }

    pub fn teacher<R: Rng>(&self, rng: &mut R) -> TeacherNet {
        TeacherNet::init(&self.teacher_dims(), self.cfg.repr.h0_std, rng).unwrap()
    }

    /// Transitions under uniformly random recommendations.
    pub fn random_experiences<R: Rng>(&mut self, task: usize, n: usize, rng: &mut R) -> Vec<Experience> {
        let mut obs = self.env.reset();
        (0..n)
            .map(|_| {
                let action = rng.random_range(0..self.actions.rows());
                let tr = self.env.step(task, action).unwrap();
                let next_obs = if tr.session_over { self.env.reset() } else { tr.next.clone() };
                Experience {
                    obs: std::mem::replace(&mut obs, next_obs),
                    action,
                    reward: tr.reward,
                    next: tr.next,
                    terminal: tr.terminal,
                }
            })
            .collect()
    }
}

pub fn random_vec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Samples with Gaussian-ish states and softened random targets.
pub fn random_samples<R: Rng>(n: usize, state_dim: usize, n_tasks: usize, n_actions: usize, tau: f64, rng: &mut R) -> Vec<DistillSample> {
    (0..n)
        .map(|_| DistillSample {
            state: random_vec(state_dim, 1.0, rng),
            targets: (0..n_tasks)
                .map(|_| softmax_tau(&random_vec(n_actions, 0.05, rng), tau).unwrap())
                .collect(),
        })
        .collect()
}
