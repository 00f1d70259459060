use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{dataset_loss, student_loss_and_grad, DistillSample, GradRoute};
use super::net::{StudentDims, StudentNet};
use crate::error::{Error, Result};
use crate::nnkit::{apply_update, optimizer_by_name, Optimizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    pub trunk: Vec<usize>,
    pub branch_hidden: Vec<usize>,
    pub tau: f64,
    pub lambdas: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: String,
    /// Weight of the newest epoch loss in the smoothed telemetry.
    pub smoothing: f64,
    /// Augmented states as a fraction of the observed ones.
    pub rho: f64,
    /// Std of the perturbation applied to short-term and context features.
    pub sigma: f64,
    /// Teacher whose encoder the student adopts.
    pub reference_teacher: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            trunk: vec![64, 32],
            branch_hidden: vec![32],
            tau: 0.01,
            lambdas: vec![0.25, 0.25, 0.5],
            epochs: 8,
            batch_size: 64,
            lr: 0.01,
            optimizer: "adam".into(),
            smoothing: 0.5,
            rho: 0.2,
            sigma: 0.05,
            reference_teacher: 0,
        }
    }
}

impl StudentConfig {
    pub fn dims(&self, state_dim: usize, n_actions: usize) -> StudentDims {
        StudentDims {
            state_dim,
            trunk: self.trunk.clone(),
            branch_hidden: self.branch_hidden.clone(),
            n_actions,
            n_tasks: self.lambdas.len(),
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr / (1.0 + epoch as f64 / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentEpoch {
    pub epoch: usize,
    /// Mean weighted KL over the whole dataset after the epoch.
    pub loss: f64,
    pub smoothed: f64,
    pub lr: f64,
}

/// One optimizer step on a batch; returns the batch loss before the step.
pub fn student_grad_step(
    student: &mut StudentNet,
    opt: &mut dyn Optimizer,
    batch: &[&DistillSample],
    tau: f64,
    lambdas: &[f64],
    lr: f64,
    context: &str,
) -> Result<f64> {
    let (loss, grads) = student_loss_and_grad(student, batch, tau, lambdas, GradRoute::Fused)?;
    apply_update(opt, student, &grads, lr, context)?;
    Ok(loss)
}

pub struct TrainedStudent {
    pub net: StudentNet,
    pub curve: Vec<StudentEpoch>,
}

/// Shuffled mini-batch passes over a fixed dataset. The full-dataset loss
/// is recorded after each epoch; a rise in its smoothed value is logged as a
/// warning.
pub fn train_student<R: Rng + ?Sized>(
    dataset: &[DistillSample],
    mut net: StudentNet,
    cfg: &StudentConfig,
    rng: &mut R,
) -> Result<TrainedStudent> {
    if dataset.is_empty() {
        return Err(Error::Empty("distill dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Param("batch_size must be positive".into()));
    }
    let mut opt = optimizer_by_name(&cfg.optimizer)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve: Vec<StudentEpoch> = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&DistillSample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let context = format!("student epoch {epoch} batch {b}");
            student_grad_step(&mut net, opt.as_mut(), &batch, cfg.tau, &cfg.lambdas, lr, &context)?;
        }
        let loss = dataset_loss(&net, dataset, cfg.tau, &cfg.lambdas)?;
        let smoothed = match curve.last() {
            Some(prev) => cfg.smoothing * loss + (1.0 - cfg.smoothing) * prev.smoothed,
            None => loss,
        };
        if let Some(prev) = curve.last() {
            if smoothed > prev.smoothed {
                log::warn!(
                    "student epoch {epoch}: smoothed loss rose from {:.6} to {smoothed:.6}",
                    prev.smoothed
                );
            }
        }
        log::info!("student epoch {epoch}: loss {loss:.6} smoothed {smoothed:.6}");
        curve.push(StudentEpoch { epoch, loss, smoothed, lr });
    }
    Ok(TrainedStudent { net, curve })
}

pub const STUDENT_CURVE_HEADER: &str = "epoch,loss,smoothed,lr";

pub fn student_curve_csv(curve: &[StudentEpoch]) -> String {
    let mut out = String::from(STUDENT_CURVE_HEADER);
    out.push('\n');
    for e in curve {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.smoothed, e.lr));
    }
    out
}

/// True when the smoothed loss never increases between epochs.
pub fn smoothed_non_increasing(curve: &[StudentEpoch]) -> bool {
    curve.windows(2).all(|w| w[1].smoothed <= w[0].smoothed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::Params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Vec<DistillSample>, StudentNet, StudentConfig) {
        let cfg = StudentConfig {
            trunk: vec![8],
            branch_hidden: vec![8],
            tau: 0.5,
            lambdas: vec![0.5, 0.5],
            epochs: 3,
            batch_size: 4,
            ..StudentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = StudentNet::init(&cfg.dims(3, 4), &mut rng).unwrap();
        let data = (0..10)
            .map(|i| DistillSample {
                state: vec![i as f64 / 10.0, 1.0, -0.5],
                targets: vec![vec![0.7, 0.1, 0.1, 0.1], vec![0.25; 4]],
            })
            .collect();
        (data, net, cfg)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (data, net, cfg) = setup();
        let cfg = StudentConfig { epochs: 0, ..cfg };
        let out = train_student(&data, net.clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.net, net);
        assert!(out.curve.is_empty());
        assert!(train_student(&[], net, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (data, net, cfg) = setup();
        let a = train_student(&data, net.clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = train_student(&data, net, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let bits = |n: &StudentNet| n.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.net), bits(&b.net));
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn sgd_overfits_one_sample() {
        let (data, net, cfg) = setup();
        let cfg = StudentConfig {
            epochs: 400,
            optimizer: "sgd".into(),
            lr: 0.5,
            ..cfg
        };
        let out = train_student(&data[..1], net, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let last = out.curve.last().unwrap().loss;
        assert!(last < 1e-3, "loss {last}");
    }
}
