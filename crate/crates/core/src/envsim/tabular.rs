use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, Transition};
use crate::error::{Error, Result};
use crate::nnkit::Matrix;
use crate::repr::Observation;

pub const ROW_SUM_TOLERANCE: f64 = 1e-10;

/// Finite MDP with one transition kernel and reward table per task.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `transition[task][s][a][s']`
    transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `reward[task][s][a]`, the Bernoulli mean of the immediate reward.
    reward: Vec<Vec<Vec<f64>>>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<Vec<f64>>>>,
        reward: Vec<Vec<Vec<f64>>>,
        gamma: f64,
    ) -> Result<Self> {
        if transition.is_empty() {
            return Err(Error::Empty("task list"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Param(format!("gamma must be in [0,1], got {gamma}")));
        }
        let n_states = transition[0].len();
        let n_actions = transition[0].first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Empty("state or action set"));
        }
        if reward.len() != transition.len() {
            return Err(Error::shape("reward tasks", transition.len(), reward.len()));
        }
        for (task, (p_task, r_task)) in transition.iter().zip(&reward).enumerate() {
            if p_task.len() != n_states || r_task.len() != n_states {
                return Err(Error::shape("states per task", n_states, p_task.len().min(r_task.len())));
            }
            for s in 0..n_states {
                if p_task[s].len() != n_actions || r_task[s].len() != n_actions {
                    return Err(Error::shape("actions per state", n_actions, p_task[s].len()));
                }
                for a in 0..n_actions {
                    let row = &p_task[s][a];
                    if row.len() != n_states {
                        return Err(Error::shape("transition row", n_states, row.len()));
                    }
                    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                        return Err(Error::Param(format!(
                            "task {task}: transition[{s}][{a}] has an entry outside [0,1]"
                        )));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(Error::Param(format!(
                            "task {task}: transition[{s}][{a}] sums to {sum}"
                        )));
                    }
                    if !(0.0..=1.0).contains(&r_task[s][a]) {
                        return Err(Error::Param(format!(
                            "task {task}: reward[{s}][{a}] outside [0,1]"
                        )));
                    }
                }
            }
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_tasks(&self) -> usize {
        self.transition.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Param(format!("gamma must be in [0,1], got {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn transition_row(&self, task: usize, s: usize, a: usize) -> &[f64] {
        &self.transition[task][s][a]
    }

    pub fn expected_reward(&self, task: usize, s: usize, a: usize) -> f64 {
        self.reward[task][s][a]
    }

    pub fn max_row_error(&self) -> f64 {
        self.transition
            .iter()
            .flatten()
            .flatten()
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn check_indices(&self, task: usize, s: usize, a: usize) -> Result<()> {
        if task >= self.n_tasks() {
            return Err(Error::OutOfRange {
                what: "task",
                index: task,
                len: self.n_tasks(),
            });
        }
        if s >= self.n_states {
            return Err(Error::OutOfRange {
                what: "state",
                index: s,
                len: self.n_states,
            });
        }
        if a >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: a,
                len: self.n_actions,
            });
        }
        Ok(())
    }
}

/// Draws `(r, s')` with `r ~ Bernoulli(reward[s][a])` and `s' ~ P(.|s,a)`.
pub fn tabular_sample<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    task: usize,
    s: usize,
    a: usize,
    rng: &mut R,
) -> Result<(f64, usize)> {
    mdp.check_indices(task, s, a)?;
    let p = mdp.reward[task][s][a];
    let r = if p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p) {
        1.0
    } else {
        0.0
    };
    let row = &mdp.transition[task][s][a];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut next = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (k, &pk) in row.iter().enumerate() {
        acc += pk;
        if pk > 0.0 && u < acc {
            next = k;
            break;
        }
    }
    Ok((r, next))
}

/// Named oracle fixtures.
pub const FIXTURES: &[&str] = &["single-loop", "two-state-switch", "chain-4", "random-6x4"];

pub fn make_fixture_mdp(name: &str, gamma: f64) -> Result<TabularMdp> {
    let (transition, reward) = match name {
        // 1 state, 1 action, reward 1, self-loop
        "single-loop" => (vec![vec![vec![vec![1.0]]]], vec![vec![vec![1.0]]]),
        // both actions swap the state; only action 0 in state 0 pays
        "two-state-switch" => (
            vec![vec![
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            ]],
            vec![vec![vec![1.0, 0.0], vec![0.0, 0.0]]],
        ),
        "chain-4" => chain_fixture(),
        "random-6x4" => random_fixture(),
        other => {
            return Err(Error::UnknownName {
                kind: "fixture",
                name: other.to_string(),
            })
        }
    };
    TabularMdp::new(transition, reward, gamma)
}

type Tables = (Vec<Vec<Vec<Vec<f64>>>>, Vec<Vec<Vec<f64>>>);

/// Four states in a line. Action 0 steps right and pays only from the last
/// state; action 1 resets to state 0 and pays only from state 1.
fn chain_fixture() -> Tables {
    let n = 4;
    let mut p = vec![vec![vec![0.0; n]; 2]; n];
    let mut r = vec![vec![0.0; 2]; n];
    for s in 0..n {
        p[s][0][(s + 1).min(n - 1)] = 1.0;
        p[s][1][0] = 1.0;
    }
    r[n - 1][0] = 1.0;
    r[1][1] = 1.0;
    (vec![p], vec![r])
}

/// Six states, four actions, three tasks with stochastic transitions and
/// nested 0/1 rewards (a task-`i` reward implies the task-`i-1` reward).
fn random_fixture() -> Tables {
    let (n_s, n_a, n_tasks) = (6, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6_04);
    let mut base_reward = vec![vec![0usize; n_a]; n_s];
    for row in base_reward.iter_mut() {
        for depth in row.iter_mut() {
            let u: f64 = rng.random();
            *depth = if u < 0.45 {
                0
            } else if u < 0.7 {
                1
            } else if u < 0.85 {
                2
            } else {
                3
            };
        }
    }
    let mut transition = Vec::with_capacity(n_tasks);
    let mut reward = Vec::with_capacity(n_tasks);
    for task in 0..n_tasks {
        let mut p = vec![vec![vec![0.0; n_s]; n_a]; n_s];
        for s in 0..n_s {
            for a in 0..n_a {
                let s1 = rng.random_range(0..n_s);
                let s2 = rng.random_range(0..n_s);
                let w: f64 = rng.random_range(0.2..0.8);
                p[s][a][s1] += w;
                p[s][a][s2] += 1.0 - w;
            }
        }
        transition.push(p);
        reward.push(
            base_reward
                .iter()
                .map(|row| row.iter().map(|&d| if d > task { 1.0 } else { 0.0 }).collect())
                .collect(),
        );
    }
    (transition, reward)
}

/// A tabular MDP bound to one task, exposed through one-hot observations.
/// Sessions are time-limited but never terminal, so bootstrapping always
/// applies and the learned values target the infinite-horizon optimum.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    mdp: TabularMdp,
    task: usize,
    session_len: usize,
    state: usize,
    t: usize,
    actions: Matrix,
    rng: ChaCha8Rng,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, task: usize, session_len: usize, seed: u64) -> Result<Self> {
        if task >= mdp.n_tasks() {
            return Err(Error::OutOfRange {
                what: "task",
                index: task,
                len: mdp.n_tasks(),
            });
        }
        let actions = Matrix::identity(mdp.n_actions());
        Ok(TabularEnv {
            mdp,
            task,
            session_len: session_len.max(1),
            state: 0,
            t: 0,
            actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.n_states()];
        v[s] = 1.0;
        v
    }

    pub fn observation(&self, s: usize) -> Observation {
        Observation::features_only(self.one_hot(s))
    }
}

impl Environment for TabularEnv {
    fn n_tasks(&self) -> usize {
        self.mdp.n_tasks()
    }

    fn action_features(&self) -> &Matrix {
        &self.actions
    }

    fn reset(&mut self) -> Observation {
        self.state = self.rng.random_range(0..self.mdp.n_states());
        self.t = 0;
        self.observation(self.state)
    }

    fn step(&mut self, task: usize, action: usize) -> Result<Transition> {
        if task != self.task {
            return Err(Error::Param(format!(
                "tabular environment is bound to task {}, got {task}",
                self.task
            )));
        }
        let (reward, next) = tabular_sample(&self.mdp, task, self.state, action, &mut self.rng)?;
        self.state = next;
        self.t += 1;
        Ok(Transition {
            reward,
            next: self.observation(next),
            terminal: false,
            session_over: self.t >= self.session_len,
        })
    }
}
