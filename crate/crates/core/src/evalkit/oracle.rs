use crate::envsim::TabularMdp;
use crate::error::{Error, Result};
use crate::nnkit::{argmax, Params};

/// One Bellman-optimality backup of `q` for `task`.
pub fn bellman_backup(mdp: &TabularMdp, task: usize, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let v: Vec<f64> = q
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| {
                    let future: f64 = mdp.transition_row(task, s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                    mdp.expected_reward(task, s, a) + mdp.gamma() * future
                })
                .collect()
        })
        .collect()
}

pub fn sup_norm_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Iterates Bellman backups from zero until the sup-norm change drops
/// below `tol`; returns `Q*[s][a]`.
pub fn value_iteration(mdp: &TabularMdp, task: usize, tol: f64) -> Result<Vec<Vec<f64>>> {
    if mdp.gamma() >= 1.0 {
        return Err(Error::Param("value iteration needs gamma < 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Param(format!("tolerance must be positive, got {tol}")));
    }
    if task >= mdp.n_tasks() {
        return Err(Error::OutOfRange {
            what: "task",
            index: task,
            len: mdp.n_tasks(),
        });
    }
    let mut q = vec![vec![0.0; mdp.n_actions()]; mdp.n_states()];
    loop {
        let next = bellman_backup(mdp, task, &q);
        let delta = sup_norm_diff(&next, &q);
        q = next;
        if delta < tol {
            return Ok(q);
        }
    }
}

/// Greedy action per state, ties to the lowest index.
pub fn greedy_policy(q: &[Vec<f64>]) -> Vec<usize> {
    q.iter().map(|row| argmax(row).unwrap_or(0)).collect()
}

/// Scalar parameter count across every block of a network.
pub fn count_params<P: Params + ?Sized>(net: &P) -> usize {
    net.param_count()
}
