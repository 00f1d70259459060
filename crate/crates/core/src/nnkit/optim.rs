//! First-order optimizers, selectable by name.

use std::fmt;

use super::params::Params;
use crate::error::{check_dim, Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

pub trait Optimizer: Send + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Applies one update to `params` given aligned gradient blocks.
    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()>;
}

/// Plain gradient descent: `p -= lr * g`.
#[derive(Debug, Default, Clone)]
pub struct Sgd;

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        check_blocks(params, grads)?;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pv, gv) in p.iter_mut().zip(g.iter()) {
                *pv -= lr * gv;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// One bias-corrected Adam update. Moment buffers are created on the first
/// call and must keep the same shapes afterwards.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    check_blocks(params, grads)?;
    if state.step == 0 && state.first_moment.is_empty() {
        state.first_moment = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.second_moment = state.first_moment.clone();
    }
    check_dim("adam moment blocks", state.first_moment.len(), grads.len())?;
    for (m, g) in state.first_moment.iter().zip(grads) {
        check_dim("adam moment block", m.len(), g.len())?;
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
    {
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Default, Clone)]
pub struct Adam {
    pub state: AdamState,
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        adam_step(params, grads, &mut self.state, lr)
    }
}

fn check_blocks(params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    check_dim("optimizer blocks", params.len(), grads.len())?;
    for (bi, (p, g)) in params.iter().zip(grads).enumerate() {
        check_dim(&format!("optimizer block {bi}"), p.len(), g.len())?;
        if let Some(k) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training {
                context: format!("optimizer block {bi}"),
                message: format!("non-finite gradient at index {k}"),
            });
        }
    }
    Ok(())
}

type OptimizerCtor = fn() -> Box<dyn Optimizer>;

const REGISTRY: &[(&str, OptimizerCtor)] = &[
    ("sgd", || Box::new(Sgd)),
    ("adam", || Box::new(Adam::default())),
];

pub fn optimizer_names() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(n, _)| *n)
}

pub fn optimizer_by_name(name: &str) -> Result<Box<dyn Optimizer>> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor())
        .ok_or_else(|| Error::UnknownName {
            kind: "optimizer",
            name: name.to_string(),
        })
}

/// Runs `opt` on a whole parameter container. `context` names the caller in
/// any training error (module, epoch, batch).
pub fn apply_update<P: Params>(
    opt: &mut dyn Optimizer,
    params: &mut P,
    grads: &P,
    lr: f64,
    context: &str,
) -> Result<()> {
    let grad_blocks: Vec<&[f64]> = grads.blocks().into_iter().map(|(_, b)| b).collect();
    let mut param_blocks = params.blocks_mut();
    opt.step(&mut param_blocks, &grad_blocks, lr).map_err(|e| match e {
        Error::Training { context: inner, message } => Error::Training {
            context: format!("{context}, {inner}"),
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![0.3, -1.0];
        let mut state = AdamState::default();
        adam_step(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], &mut state, 0.01).unwrap();
        assert_eq!(p, vec![0.3, -1.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_hand_value() {
        // m_hat = v_hat = 1 at step 1, so p = 0 - 0.01 * 1 / (1 + 1e-8)
        let mut p = vec![0.0];
        let mut state = AdamState::default();
        adam_step(&mut [p.as_mut_slice()], &[&[1.0]], &mut state, 0.01).unwrap();
        assert!((p[0] - (-0.01 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = vec![0.5, -0.25, 2.0];
            let mut opt = optimizer_by_name("adam").unwrap();
            for t in 0..100 {
                let g: Vec<f64> = p.iter().map(|v| 2.0 * v + (t as f64).sin()).collect();
                opt.step(&mut [p.as_mut_slice()], &[g.as_slice()], 0.01).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_gradient_is_training_error() {
        let mut p = vec![0.0];
        let err = Sgd.step(&mut [p.as_mut_slice()], &[&[f64::NAN]], 0.1).unwrap_err();
        assert!(matches!(err, Error::Training { .. }));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![0.0, 1.0];
        let mut state = AdamState::default();
        assert!(adam_step(&mut [p.as_mut_slice()], &[&[1.0]], &mut state, 0.1).is_err());
        adam_step(&mut [p.as_mut_slice()], &[&[1.0, 1.0]], &mut state, 0.1).unwrap();
        let mut q = vec![0.0; 3];
        assert!(adam_step(&mut [q.as_mut_slice()], &[&[1.0; 3]], &mut state, 0.1).is_err());
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(optimizer_by_name("sgd").unwrap().name(), "sgd");
        assert_eq!(optimizer_by_name("adam").unwrap().name(), "adam");
        assert!(matches!(optimizer_by_name("rmsprop"), Err(Error::UnknownName { .. })));
        assert_eq!(optimizer_names().collect::<Vec<_>>(), vec!["sgd", "adam"]);
    }
}
