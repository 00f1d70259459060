use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::loss::DistillSample;
use crate::error::{check_dim, Error, Result};
use crate::nnkit::{softmax_tau, Matrix};
use crate::repr::Observation;
use crate::teacher::TeacherNet;

/// Tolerance on the total mass of a target distribution.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Softened teacher distributions over the catalog, one per teacher, each
/// teacher encoding `obs` with its own encoder.
pub fn teacher_soft_targets(teachers: &[TeacherNet], obs: &Observation, actions: &Matrix, tau: f64) -> Result<Vec<Vec<f64>>> {
    if actions.rows() == 0 {
        return Err(Error::Empty("catalog"));
    }
    teachers
        .iter()
        .map(|t| softmax_tau(&t.score_catalog(&t.encode(obs)?, actions)?, tau))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillGenConfig {
    pub tau: f64,
    /// Augmented states as a fraction of the observed ones.
    pub rho: f64,
    pub sigma: f64,
    /// State coordinates perturbed in augmented samples.
    pub noise_dims: Vec<usize>,
    /// Teacher whose encoder produces the stored student state.
    pub reference: usize,
}

/// Checks a target vector: finite, non-negative, mass one.
pub fn validate_target(p: &[f64]) -> std::result::Result<(), String> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err("target entries must lie in [0, 1]".into());
    }
    let mass: f64 = p.iter().sum();
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(format!("target mass {mass} is not 1"));
    }
    Ok(())
}

fn validate_sample(sample: &DistillSample, state_dim: usize, n_tasks: usize, n_actions: usize) -> std::result::Result<(), String> {
    if sample.state.len() != state_dim {
        return Err(format!("state has {} entries, expected {state_dim}", sample.state.len()));
    }
    if sample.state.iter().any(|v| !v.is_finite()) {
        return Err("state has non-finite entries".into());
    }
    if sample.targets.len() != n_tasks {
        return Err(format!("{} targets, expected {n_tasks}", sample.targets.len()));
    }
    for (i, t) in sample.targets.iter().enumerate() {
        if t.len() != n_actions {
            return Err(format!("target {i} has {} entries, expected {n_actions}", t.len()));
        }
        validate_target(t).map_err(|m| format!("target {i}: {m}"))?;
    }
    Ok(())
}

struct Job {
    obs: usize,
    noise: Option<Vec<f64>>,
}

/// One sample per observation followed by `ceil(rho * n)` perturbed copies
/// of randomly chosen observations. Noise is drawn up front from `rng`, so
/// the result does not depend on the rayon pool size.
pub fn gen_distill_dataset<R: Rng + ?Sized>(
    teachers: &[TeacherNet],
    observed: &[Observation],
    actions: &Matrix,
    cfg: &DistillGenConfig,
    rng: &mut R,
) -> Result<Vec<DistillSample>> {
    if teachers.is_empty() {
        return Err(Error::Empty("teachers"));
    }
    if actions.rows() == 0 {
        return Err(Error::Empty("catalog"));
    }
    if !(cfg.rho >= 0.0 && cfg.rho.is_finite()) {
        return Err(Error::Param(format!("rho must be non-negative, got {}", cfg.rho)));
    }
    let reference = teachers.get(cfg.reference).ok_or(Error::OutOfRange {
        what: "reference teacher",
        index: cfg.reference,
        len: teachers.len(),
    })?;
    let state_dim = reference.state_dim();
    for t in teachers {
        check_dim("teacher state dim", state_dim, t.state_dim())?;
    }
    if let Some(&d) = cfg.noise_dims.iter().find(|&&d| d >= state_dim) {
        return Err(Error::OutOfRange {
            what: "noise dim",
            index: d,
            len: state_dim,
        });
    }

    let mut jobs: Vec<Job> = (0..observed.len()).map(|obs| Job { obs, noise: None }).collect();
    let n_aug = (cfg.rho * observed.len() as f64).ceil() as usize;
    if n_aug > 0 {
        if observed.is_empty() {
            return Err(Error::Empty("observed states"));
        }
        let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Param(format!("sigma: {e}")))?;
        for _ in 0..n_aug {
            let obs = rng.random_range(0..observed.len());
            let noise = cfg.noise_dims.iter().map(|_| normal.sample(rng)).collect();
            jobs.push(Job { obs, noise: Some(noise) });
        }
    }

    let projections = teachers
        .iter()
        .map(|t| t.project_catalog(actions))
        .collect::<Result<Vec<_>>>()?;
    let perturb = |mut s: Vec<f64>, noise: &Option<Vec<f64>>| {
        if let Some(noise) = noise {
            for (&d, v) in cfg.noise_dims.iter().zip(noise) {
                s[d] += v;
            }
        }
        s
    };

    let samples = jobs
        .par_iter()
        .map(|job| {
            let obs = &observed[job.obs];
            let state = perturb(reference.encode(obs)?, &job.noise);
            let targets = teachers
                .iter()
                .zip(&projections)
                .map(|(t, proj)| {
                    let s = perturb(t.encode(obs)?, &job.noise);
                    softmax_tau(&t.score_projected(&s, proj)?, cfg.tau)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DistillSample { state, targets })
        })
        .collect::<Result<Vec<_>>>()?;

    for (i, s) in samples.iter().enumerate() {
        validate_sample(s, state_dim, teachers.len(), actions.rows()).map_err(|message| Error::Validation {
            line: i + 1,
            message,
        })?;
    }
    Ok(samples)
}

pub fn write_dataset(path: &Path, samples: &[DistillSample]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a dataset and checks every record against the first one's shape.
pub fn read_dataset(path: &Path) -> Result<Vec<DistillSample>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out: Vec<DistillSample> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: DistillSample = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        let (dim, tasks, acts) = match out.first() {
            Some(f) => (f.state.len(), f.targets.len(), f.targets.first().map_or(0, Vec::len)),
            None => (
                sample.state.len(),
                sample.targets.len(),
                sample.targets.first().map_or(0, Vec::len),
            ),
        };
        validate_sample(&sample, dim, tasks, acts).map_err(|message| Error::Validation { line: i + 1, message })?;
        out.push(sample);
    }
    if out.is_empty() {
        return Err(Error::Empty("distill dataset"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::{Activation, DenseLayer, Mlp};
    use crate::teacher::TeacherDims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn teachers(n: usize) -> Vec<TeacherNet> {
        let dims = TeacherDims {
            feature_dim: 4,
            action_dim: 3,
            hidden: vec![8],
            encoder: None,
            encoder_frozen: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..n).map(|_| TeacherNet::init(&dims, 0.01, &mut rng).unwrap()).collect()
    }

    fn observed(n: usize) -> Vec<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        (0..n)
            .map(|_| Observation::features_only((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    }

    fn cfg(rho: f64) -> DistillGenConfig {
        DistillGenConfig {
            tau: 0.5,
            rho,
            sigma: 0.05,
            noise_dims: vec![0, 3],
            reference: 0,
        }
    }

    #[test]
    fn zero_head_gives_uniform_targets() {
        let dims = teachers(1)[0].dims();
        let zero = TeacherNet::zeros(&dims).unwrap();
        let t = teacher_soft_targets(&[zero.clone(), zero], &observed(1)[0], &Matrix::identity(3), 0.01).unwrap();
        assert_eq!(t[0], t[1]);
        assert!(t[0].iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn fixture_scores_soften_to_reference() {
        // Q(s, a) = w . a with w = (1, 2, 3)
        let w = Matrix::from_vec(7, 1, vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        let head = Mlp::new(vec![DenseLayer::new(w, vec![0.0], Activation::Identity).unwrap()]).unwrap();
        let net = TeacherNet::new(None, head, 4, false).unwrap();
        let t = teacher_soft_targets(&[net], &observed(1)[0], &Matrix::identity(3), 1.0).unwrap();
        for (a, b) in t[0].iter().zip([0.0900306, 0.2447285, 0.6652410]) {
            assert!((a - b).abs() < 5e-8);
        }
    }

    #[test]
    fn sample_counts() {
        let ts = teachers(3);
        let obs = observed(100);
        let actions = Matrix::identity(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plain = gen_distill_dataset(&ts, &obs, &actions, &cfg(0.0), &mut rng).unwrap();
        assert_eq!(plain.len(), 100);
        for (s, o) in plain.iter().zip(&obs) {
            assert_eq!(s.state, o.features);
        }
        let aug = gen_distill_dataset(&ts, &obs, &actions, &cfg(0.5), &mut rng).unwrap();
        assert_eq!(aug.len(), 150);
        assert_eq!(gen_distill_dataset(&ts, &obs, &actions, &cfg(0.01), &mut rng).unwrap().len(), 101);
    }

    #[test]
    fn augmentation_touches_only_noise_dims() {
        let ts = teachers(2);
        let obs = observed(10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = gen_distill_dataset(&ts, &obs, &Matrix::identity(3), &cfg(1.0), &mut rng).unwrap();
        for s in &data[10..] {
            let src = obs
                .iter()
                .find(|o| o.features[1] == s.state[1] && o.features[2] == s.state[2])
                .expect("augmented state keeps untouched coordinates");
            assert_ne!(src.features[0], s.state[0]);
            for t in &s.targets {
                validate_target(t).unwrap();
            }
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let ts = teachers(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = gen_distill_dataset(&ts, &observed(5), &Matrix::identity(3), &cfg(0.4), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&path, &data).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), data);

        std::fs::write(&path, "{\"state\":[0.0],\"targets\":[[0.5,0.4]]}\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Validation { line: 1, .. })));
    }
}
