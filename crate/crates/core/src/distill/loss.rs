use serde::{Deserialize, Serialize};

use super::net::StudentNet;
use crate::error::{check_dim, Error, Result};
use crate::nnkit::{log_softmax_tau, softmax_tau, Params};

/// Floor applied to `q` before the logarithm in [`kl_divergence`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Student training row: the student's input state and one softened
/// teacher distribution over the catalog per task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSample {
    pub state: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
}

/// `sum_k p_k ln(p_k / q_k)` with `q_k` floored at [`PROB_FLOOR`]; terms
/// with `p_k = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dim("kl inputs", p.len(), q.len())?;
    Ok(p
        .iter()
        .zip(q)
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &qk)| pk * (pk.ln() - qk.max(PROB_FLOOR).ln()))
        .sum())
}

fn check_lambdas(lambdas: &[f64], n_tasks: usize) -> Result<()> {
    check_dim("lambda weights", n_tasks, lambdas.len())?;
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Param(format!("lambdas must be finite and non-negative: {lambdas:?}")));
    }
    Ok(())
}

/// `KL(p || softmax_tau(o))` computed from log-probabilities, so very
/// confident student outputs never hit the floor.
fn branch_kl(p: &[f64], o: &[f64], tau: f64) -> Result<f64> {
    check_dim("target vs branch output", o.len(), p.len())?;
    let log_q = log_softmax_tau(o, tau)?;
    Ok(p.iter()
        .zip(&log_q)
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &lq)| pk * (pk.ln() - lq))
        .sum())
}

/// Unweighted KL of each branch against its target.
pub fn per_task_losses(student: &StudentNet, sample: &DistillSample, tau: f64) -> Result<Vec<f64>> {
    check_dim("sample targets", student.n_tasks(), sample.targets.len())?;
    let outs = student.forward(&sample.state, None)?;
    outs.iter().zip(&sample.targets).map(|(o, p)| branch_kl(p, o, tau)).collect()
}

/// `sum_i lambda_i KL(p_i || softmax_tau(o_i))`.
pub fn student_loss(student: &StudentNet, sample: &DistillSample, tau: f64, lambdas: &[f64]) -> Result<f64> {
    check_lambdas(lambdas, student.n_tasks())?;
    Ok(per_task_losses(student, sample, tau)?
        .iter()
        .zip(lambdas)
        .map(|(l, w)| w * l)
        .sum())
}

/// Mean of [`student_loss`] over `samples`.
pub fn dataset_loss(student: &StudentNet, samples: &[DistillSample], tau: f64, lambdas: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("distill dataset"));
    }
    let mut sum = 0.0;
    for s in samples {
        sum += student_loss(student, s, tau, lambdas)?;
    }
    Ok(sum / samples.len() as f64)
}

/// Gradient of `lambda * KL(p || softmax_tau(o))` with respect to `o`:
/// `lambda * (q_k * sum(p) - p_k) / tau`.
pub fn output_grad(p: &[f64], o: &[f64], tau: f64, lambda: f64) -> Result<Vec<f64>> {
    check_dim("target vs branch output", o.len(), p.len())?;
    let q = softmax_tau(o, tau)?;
    let mass: f64 = p.iter().sum();
    Ok(q.iter().zip(p).map(|(qk, pk)| lambda * (qk * mass - pk) / tau).collect())
}

/// The same gradient written as the chain rule through the softmax
/// Jacobian: `-lambda * sum_a (p_a / q_a) * q_a (delta_ak - q_k) / tau`.
/// Quadratic in the catalog size; used to cross-check [`output_grad`].
pub fn output_grad_jacobian(p: &[f64], o: &[f64], tau: f64, lambda: f64) -> Result<Vec<f64>> {
    check_dim("target vs branch output", o.len(), p.len())?;
    let q = softmax_tau(o, tau)?;
    let n = q.len();
    let mut g = vec![0.0; n];
    for (k, gk) in g.iter_mut().enumerate() {
        let mut acc = 0.0;
        for a in 0..n {
            let delta = if a == k { 1.0 } else { 0.0 };
            let dlogq = (delta - q[k]) / tau;
            acc += p[a] * dlogq;
        }
        *gk = -lambda * acc;
    }
    Ok(g)
}

/// Which closed form of the output gradient to backpropagate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradRoute {
    Fused,
    Jacobian,
}

/// Batch-mean loss and parameter gradient.
pub fn student_loss_and_grad(
    student: &StudentNet,
    batch: &[&DistillSample],
    tau: f64,
    lambdas: &[f64],
    route: GradRoute,
) -> Result<(f64, StudentNet)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    check_lambdas(lambdas, student.n_tasks())?;
    let n = batch.len() as f64;
    let mut grads = student.zeros_like();
    let mut loss = 0.0;
    for sample in batch {
        check_dim("sample targets", student.n_tasks(), sample.targets.len())?;
        let (outs, trace) = student.forward_cached(&sample.state)?;
        let mut d_out = Vec::with_capacity(outs.len());
        for ((o, p), &lambda) in outs.iter().zip(&sample.targets).zip(lambdas) {
            loss += lambda * branch_kl(p, o, tau)?;
            let g = match route {
                GradRoute::Fused => output_grad(p, o, tau, lambda / n)?,
                GradRoute::Jacobian => output_grad_jacobian(p, o, tau, lambda / n)?,
            };
            d_out.push(g);
        }
        student.backward(&trace, &d_out, &mut grads)?;
    }
    Ok((loss / n, grads))
}

/// Telemetry for the two-part objective: every teacher's own loss plus the
/// weighted distillation loss. The parts are optimized in alternation, never
/// jointly, so this is bookkeeping only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CombinedLoss {
    pub teacher_losses: Vec<f64>,
    pub distill_loss: f64,
}

impl CombinedLoss {
    pub fn total(&self) -> f64 {
        self.teacher_losses.iter().sum::<f64>() + self.distill_loss
    }
}
