use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TASK_NAMES: [&str; 3] = ["click", "install", "play"];

/// Human-readable name of feedback type `task`.
pub fn task_name(task: usize) -> String {
    TASK_NAMES
        .get(task)
        .map_or_else(|| format!("task{task}"), |s| s.to_string())
}

/// Binary feedback per task, ordered so that each type implies the previous
/// one (`play => install => click`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct FeedbackVector(Vec<u8>);

impl FeedbackVector {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        validate_chain(&values).map_err(Error::Param)?;
        Ok(FeedbackVector(values))
    }

    pub fn zeros(n_tasks: usize) -> Self {
        FeedbackVector(vec![0; n_tasks])
    }

    pub fn n_tasks(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, task: usize) -> u8 {
        self.0[task]
    }

    pub fn reward(&self, task: usize) -> f64 {
        f64::from(self.0[task])
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn to_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|&v| f64::from(v))
    }

    /// Positive-feedback count, i.e. the depth reached along the chain.
    pub fn depth(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1).count()
    }
}

/// Checks binary entries and the monotone chain; the message names the
/// offending fields.
pub fn validate_chain(values: &[u8]) -> std::result::Result<(), String> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(format!("feedback {} must be 0 or 1, got {v}", task_name(i)));
    }
    for i in 1..values.len() {
        if values[i] > values[i - 1] {
            return Err(format!(
                "monotone feedback chain violated: {}={} but {}={}",
                task_name(i),
                values[i],
                task_name(i - 1),
                values[i - 1]
            ));
        }
    }
    Ok(())
}

impl TryFrom<Vec<u8>> for FeedbackVector {
    type Error = String;

    fn try_from(values: Vec<u8>) -> std::result::Result<Self, String> {
        validate_chain(&values)?;
        Ok(FeedbackVector(values))
    }
}

impl From<FeedbackVector> for Vec<u8> {
    fn from(f: FeedbackVector) -> Self {
        f.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_validation() {
        assert!(FeedbackVector::new(vec![1, 0, 0]).is_ok());
        assert!(FeedbackVector::new(vec![1, 1, 1]).is_ok());
        assert!(FeedbackVector::new(vec![0, 0, 0]).is_ok());
        let err = FeedbackVector::new(vec![0, 1, 0]).unwrap_err().to_string();
        assert!(err.contains("monotone feedback chain violated"), "{err}");
        assert!(err.contains("install=1") && err.contains("click=0"), "{err}");
        assert!(FeedbackVector::new(vec![2, 0, 0]).is_err());
    }

    #[test]
    fn serde_rejects_bad_chain() {
        assert!(serde_json::from_str::<FeedbackVector>("[1,1,0]").is_ok());
        assert!(serde_json::from_str::<FeedbackVector>("[1,0,1]").is_err());
    }
}
