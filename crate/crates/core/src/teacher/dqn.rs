use rand::Rng;

use super::net::TeacherNet;
use crate::error::{Error, Result};
use crate::nnkit::{argmax, Matrix, Params};
use crate::repr::Observation;

/// One transition `(s, a, r, s')` for a single task. States are kept as raw
/// observations because the encoder that turns them into vectors is trained.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next: Observation,
    pub terminal: bool,
}

/// Epsilon-greedy choice over the catalog: uniform with probability
/// `epsilon`, otherwise the highest score with ties to the lowest index.
/// One uniform draw is consumed per call either way.
pub fn select_action<R: Rng + ?Sized>(
    net: &TeacherNet,
    s: &[f64],
    actions: &Matrix,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if actions.rows() == 0 {
        return Err(Error::Empty("catalog"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Param(format!("epsilon must be in [0,1], got {epsilon}")));
    }
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..actions.rows()));
    }
    let scores = net.score_catalog(s, actions)?;
    Ok(argmax(&scores).expect("non-empty catalog"))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Param(format!("gamma must be in [0,1], got {gamma}")));
    }
    Ok(())
}

/// Double-DQN target: the current net picks `a*` at `s'`, the target net
/// values it. Terminal transitions do not bootstrap.
pub fn ddqn_target(
    current: &TeacherNet,
    target: &TeacherNet,
    reward: f64,
    next: &Observation,
    actions: &Matrix,
    gamma: f64,
    terminal: bool,
) -> Result<f64> {
    check_gamma(gamma)?;
    if actions.rows() == 0 {
        return Err(Error::Empty("catalog"));
    }
    if terminal {
        return Ok(reward);
    }
    let proj = current.project_catalog(actions)?;
    bootstrap(current, target, &proj, reward, next, actions, gamma)
}

fn bootstrap(
    current: &TeacherNet,
    target: &TeacherNet,
    proj: &Matrix,
    reward: f64,
    next: &Observation,
    actions: &Matrix,
    gamma: f64,
) -> Result<f64> {
    let s_cur = current.encode(next)?;
    let best = argmax(&current.score_projected(&s_cur, proj)?).expect("non-empty catalog");
    let s_tgt = target.encode(next)?;
    Ok(reward + gamma * target.q_value(&s_tgt, actions.row(best))?)
}

/// Targets for a whole batch, sharing one catalog projection.
pub fn ddqn_targets(
    current: &TeacherNet,
    target: &TeacherNet,
    batch: &[&Experience],
    actions: &Matrix,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if actions.rows() == 0 {
        return Err(Error::Empty("catalog"));
    }
    let proj = current.project_catalog(actions)?;
    batch
        .iter()
        .map(|e| {
            if e.terminal {
                Ok(e.reward)
            } else {
                bootstrap(current, target, &proj, e.reward, &e.next, actions, gamma)
            }
        })
        .collect()
}

/// `(1 / 2N) * sum_j (y_j - Q(s_j, a_j))^2` with the targets held fixed.
pub fn loss_with_targets(net: &TeacherNet, batch: &[&Experience], ys: &[f64], actions: &Matrix) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut sum = 0.0;
    for (e, y) in batch.iter().zip(ys) {
        let q = net.q_value(&net.encode(&e.obs)?, actions.row(e.action))?;
        sum += (y - q) * (y - q);
    }
    Ok(sum / (2.0 * batch.len() as f64))
}

/// Loss and gradient for fixed targets. Targets are constants, so the
/// gradient is `-(1/N) * sum_j (y_j - Q_j) dQ_j/dtheta`.
pub fn loss_and_grad_with_targets(
    net: &TeacherNet,
    batch: &[&Experience],
    ys: &[f64],
    actions: &Matrix,
) -> Result<(f64, TeacherNet)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if ys.len() != batch.len() {
        return Err(Error::shape("targets", batch.len(), ys.len()));
    }
    let n = batch.len() as f64;
    let mut grads = net.zeros_like();
    let mut sum = 0.0;
    for (e, &y) in batch.iter().zip(ys) {
        if e.action >= actions.rows() {
            return Err(Error::OutOfRange {
                what: "action",
                index: e.action,
                len: actions.rows(),
            });
        }
        let (q, trace) = net.q_traced(&e.obs, actions.row(e.action))?;
        sum += (y - q) * (y - q);
        net.backward(&trace, (q - y) / n, &mut grads)?;
    }
    Ok((sum / (2.0 * n), grads))
}

pub fn teacher_loss_and_grad(
    net: &TeacherNet,
    target: &TeacherNet,
    batch: &[&Experience],
    actions: &Matrix,
    gamma: f64,
) -> Result<(f64, TeacherNet)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let ys = ddqn_targets(net, target, batch, actions, gamma)?;
    loss_and_grad_with_targets(net, batch, &ys, actions)
}
