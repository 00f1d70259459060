use crate::error::{Error, Result};

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Param(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Temperature softmax `exp(q_k/tau) / sum_l exp(q_l/tau)`, evaluated with
/// max-subtraction so that small temperatures do not overflow.
pub fn softmax_tau(q: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = q.iter().map(|&v| ((v - max) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// `ln softmax_tau(q)`, exact even where the probability underflows.
pub fn log_softmax_tau(q: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = q.iter().map(|&v| (v - max) / tau).collect();
    let lse = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    Ok(scaled.into_iter().map(|s| s - lse).collect())
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scores_are_uniform() {
        for tau in [0.01, 1.0, 7.5] {
            let p = softmax_tau(&[3.3; 4], tau).unwrap();
            assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn reference_values() {
        // exp(k) / (e + e^2 + e^3), evaluated to 7 decimals
        let p = softmax_tau(&[1.0, 2.0, 3.0], 1.0).unwrap();
        let expected = [0.0900306, 0.2447285, 0.6652410];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 5e-8, "{a} vs {b}");
        }
        let shifted = softmax_tau(&[11.0, 12.0, 13.0], 1.0).unwrap();
        for (a, b) in p.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn small_temperature_does_not_overflow() {
        let p = softmax_tau(&[10.0, 20.0, 30.0], 0.01).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(p[2], 1.0);
        let lp = log_softmax_tau(&[10.0, 20.0, 30.0], 0.01).unwrap();
        assert!((lp[1] - (-1000.0)).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_positive_temperature() {
        assert!(softmax_tau(&[1.0], 0.0).is_err());
        assert!(softmax_tau(&[1.0], -1.0).is_err());
        assert!(log_softmax_tau(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
