use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::distill::StudentModel;
use crate::error::{Error, Result};
use crate::nnkit::{argmax, argsort_desc, Matrix};
use crate::repr::Observation;
use crate::teacher::TeacherNet;

/// Something that orders the catalog for one task given an observation.
pub trait RankingPolicy: Send + Sync {
    fn name(&self) -> &str;

    fn rank(&self, obs: &Observation, task: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>>;

    /// The single item shown at a step; the head of [`Self::rank`] unless
    /// overridden.
    fn choose(&self, obs: &Observation, task: usize, rng: &mut dyn RngCore) -> Result<usize> {
        self.rank(obs, task, rng)?
            .first()
            .copied()
            .ok_or(Error::Empty("ranking"))
    }
}

pub struct StudentPolicy {
    model: StudentModel,
}

impl StudentPolicy {
    pub fn new(model: StudentModel) -> Self {
        StudentPolicy { model }
    }

    fn scores(&self, obs: &Observation, task: usize) -> Result<Vec<f64>> {
        self.model.net.branch_output(&self.model.encode(obs)?, task)
    }
}

impl RankingPolicy for StudentPolicy {
    fn name(&self) -> &str {
        "student"
    }

    fn rank(&self, obs: &Observation, task: usize, _: &mut dyn RngCore) -> Result<Vec<usize>> {
        Ok(argsort_desc(&self.scores(obs, task)?))
    }

    fn choose(&self, obs: &Observation, task: usize, _: &mut dyn RngCore) -> Result<usize> {
        argmax(&self.scores(obs, task)?).ok_or(Error::Empty("catalog"))
    }
}

/// Teacher `i` answers task `i`, scoring through a catalog projection
/// computed once at construction.
pub struct TeacherPolicy {
    nets: Vec<TeacherNet>,
    projections: Vec<Matrix>,
}

impl TeacherPolicy {
    pub fn new(nets: Vec<TeacherNet>, actions: &Matrix) -> Result<Self> {
        let projections = nets
            .iter()
            .map(|n| n.project_catalog(actions))
            .collect::<Result<Vec<_>>>()?;
        Ok(TeacherPolicy { nets, projections })
    }

    fn scores(&self, obs: &Observation, task: usize) -> Result<Vec<f64>> {
        let net = self.nets.get(task).ok_or(Error::OutOfRange {
            what: "task",
            index: task,
            len: self.nets.len(),
        })?;
        net.score_projected(&net.encode(obs)?, &self.projections[task])
    }
}

impl RankingPolicy for TeacherPolicy {
    fn name(&self) -> &str {
        "teacher"
    }

    fn rank(&self, obs: &Observation, task: usize, _: &mut dyn RngCore) -> Result<Vec<usize>> {
        Ok(argsort_desc(&self.scores(obs, task)?))
    }

    fn choose(&self, obs: &Observation, task: usize, _: &mut dyn RngCore) -> Result<usize> {
        argmax(&self.scores(obs, task)?).ok_or(Error::Empty("catalog"))
    }
}

/// Uniformly random permutations of the catalog.
pub struct RandomPolicy {
    n_actions: usize,
}

impl RandomPolicy {
    pub fn new(n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::Empty("catalog"));
        }
        Ok(RandomPolicy { n_actions })
    }
}

impl RankingPolicy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn rank(&self, _: &Observation, _: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n_actions).collect();
        order.shuffle(rng);
        Ok(order)
    }

    fn choose(&self, _: &Observation, _: usize, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(rng.random_range(0..self.n_actions))
    }
}

pub const POLICY_NAMES: &[&str] = &["student", "teacher", "random"];

/// Models a policy can be built from; absent models make the matching
/// policy unavailable.
pub struct PolicySources {
    pub student: Option<StudentModel>,
    pub teachers: Option<Vec<TeacherNet>>,
    pub actions: Matrix,
}

pub fn build_policy(name: &str, sources: &PolicySources) -> Result<Box<dyn RankingPolicy>> {
    let missing = |what: &str| Error::Param(format!("policy `{name}` needs {what}"));
    match name {
        "student" => Ok(Box::new(StudentPolicy::new(
            sources.student.clone().ok_or_else(|| missing("a trained student"))?,
        ))),
        "teacher" => Ok(Box::new(TeacherPolicy::new(
            sources.teachers.clone().ok_or_else(|| missing("trained teachers"))?,
            &sources.actions,
        )?)),
        "random" => Ok(Box::new(RandomPolicy::new(sources.actions.rows())?)),
        other => Err(Error::UnknownName {
            kind: "policy",
            name: other.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_policy_permutes() {
        let p = RandomPolicy::new(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = p.rank(&Observation::features_only(vec![]), 0, &mut rng).unwrap();
        r.sort_unstable();
        assert_eq!(r, (0..6).collect::<Vec<_>>());
        assert!(RandomPolicy::new(0).is_err());
    }

    #[test]
    fn registry_names() {
        let sources = PolicySources {
            student: None,
            teachers: None,
            actions: Matrix::identity(3),
        };
        assert_eq!(build_policy("random", &sources).unwrap().name(), "random");
        assert!(matches!(build_policy("student", &sources), Err(Error::Param(_))));
        assert!(matches!(build_policy("oracle", &sources), Err(Error::UnknownName { .. })));
    }
}
