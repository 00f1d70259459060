//! User environments: a featurized multi-feedback simulator, small tabular
//! MDPs with exact oracles, and interaction-log ingestion.

pub mod featurized;
pub mod feedback;
pub mod log;
pub mod tabular;

pub use featurized::{click_probability, env_step, EnvParams, FeaturizedEnv, SimUser, UserState};
pub use feedback::{task_name, validate_chain, FeedbackVector};
pub use log::{ingest_log, read_log, write_log, LogEvent, LogReader};
pub use tabular::{make_fixture_mdp, tabular_sample, TabularEnv, TabularMdp, FIXTURES};

use crate::error::Result;
use crate::nnkit::Matrix;
use crate::repr::Observation;

/// Outcome of recommending one item for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub next: Observation,
    /// No bootstrap past this transition.
    pub terminal: bool,
    /// The session ended; the caller should `reset`.
    pub session_over: bool,
}

/// Single-owner interactive environment driven by a per-task agent.
pub trait Environment {
    fn n_tasks(&self) -> usize;

    /// Row `k` is the feature vector of action `k`.
    fn action_features(&self) -> &Matrix;

    fn n_actions(&self) -> usize {
        self.action_features().rows()
    }

    /// Starts a new session and returns its first observation.
    fn reset(&mut self) -> Observation;

    fn step(&mut self, task: usize, action: usize) -> Result<Transition>;
}
