use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nnkit::params::push_prefixed;
use crate::nnkit::{argsort_desc, Activation, DenseCache, EvalCounters, Mlp, Params};
use crate::repr::{GruEncoder, Observation};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentDims {
    pub state_dim: usize,
    /// Widths of the shared layers.
    pub trunk: Vec<usize>,
    /// Hidden widths inside each branch; the branch output is `n_actions`.
    pub branch_hidden: Vec<usize>,
    pub n_actions: usize,
    pub n_tasks: usize,
}

impl StudentDims {
    fn trunk_widths(&self) -> Vec<usize> {
        let mut w = vec![self.state_dim];
        w.extend(&self.trunk);
        w
    }

    fn branch_widths(&self) -> Vec<usize> {
        let mut w = vec![*self.trunk.last().unwrap_or(&self.state_dim)];
        w.extend(&self.branch_hidden);
        w.push(self.n_actions);
        w
    }
}

/// Shared ReLU trunk on the state followed by one head per task, each
/// scoring every catalog item at once.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentNet {
    pub trunk: Mlp,
    pub branches: Vec<Mlp>,
}

#[derive(Clone, Debug)]
pub struct StudentTrace {
    trunk: Vec<DenseCache>,
    branches: Vec<Vec<DenseCache>>,
}

fn zero_mlp(widths: &[usize], hidden: Activation, output: Activation) -> Result<Mlp> {
    let n = widths.len() - 1;
    Mlp::new(
        (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                crate::nnkit::DenseLayer::zeros(widths[i], widths[i + 1], act)
            })
            .collect(),
    )
}

impl StudentNet {
    pub fn new(trunk: Mlp, branches: Vec<Mlp>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Empty("student branches"));
        }
        let n_actions = branches[0].output_dim();
        for b in &branches {
            check_dim("branch input", trunk.output_dim(), b.input_dim())?;
            check_dim("branch output", n_actions, b.output_dim())?;
        }
        Ok(StudentNet { trunk, branches })
    }

    pub fn init<R: Rng + ?Sized>(dims: &StudentDims, rng: &mut R) -> Result<Self> {
        if dims.trunk.is_empty() {
            return Err(Error::Param("student trunk needs at least one layer".into()));
        }
        let trunk = Mlp::glorot(&dims.trunk_widths(), Activation::Relu, Activation::Relu, rng)?;
        let branches = (0..dims.n_tasks)
            .map(|_| Mlp::glorot(&dims.branch_widths(), Activation::Relu, Activation::Identity, rng))
            .collect::<Result<Vec<_>>>()?;
        StudentNet::new(trunk, branches)
    }

    pub fn zeros(dims: &StudentDims) -> Result<Self> {
        if dims.trunk.is_empty() {
            return Err(Error::Param("student trunk needs at least one layer".into()));
        }
        let trunk = zero_mlp(&dims.trunk_widths(), Activation::Relu, Activation::Relu)?;
        let branches = (0..dims.n_tasks)
            .map(|_| zero_mlp(&dims.branch_widths(), Activation::Relu, Activation::Identity))
            .collect::<Result<Vec<_>>>()?;
        StudentNet::new(trunk, branches)
    }

    pub fn dims(&self) -> StudentDims {
        let b = &self.branches[0];
        StudentDims {
            state_dim: self.trunk.input_dim(),
            trunk: self.trunk.layers.iter().map(|l| l.fan_out()).collect(),
            branch_hidden: b.layers[..b.layers.len() - 1].iter().map(|l| l.fan_out()).collect(),
            n_actions: b.output_dim(),
            n_tasks: self.branches.len(),
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.branches.len()
    }

    pub fn n_actions(&self) -> usize {
        self.branches[0].output_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// All branch outputs from one trunk evaluation.
    pub fn forward(&self, s: &[f64], counters: Option<&EvalCounters>) -> Result<Vec<Vec<f64>>> {
        let h = self.trunk.forward(s)?;
        EvalCounters::bump(counters.map(|c| &c.trunk_evals), 1);
        self.branches
            .iter()
            .map(|b| {
                EvalCounters::bump(counters.map(|c| &c.branch_evals), 1);
                b.forward(&h)
            })
            .collect()
    }

    pub fn branch_output(&self, s: &[f64], task: usize) -> Result<Vec<f64>> {
        let branch = self.branches.get(task).ok_or(Error::OutOfRange {
            what: "task",
            index: task,
            len: self.branches.len(),
        })?;
        branch.forward(&self.trunk.forward(s)?)
    }

    pub fn forward_cached(&self, s: &[f64]) -> Result<(Vec<Vec<f64>>, StudentTrace)> {
        let trunk = self.trunk.forward_cached(s)?;
        let h = &trunk.last().expect("trunk has layers").output;
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut branches = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let c = b.forward_cached(h)?;
            outs.push(c.last().expect("branch has layers").output.clone());
            branches.push(c);
        }
        Ok((outs, StudentTrace { trunk, branches }))
    }

    /// Accumulates gradients for upstream `d_out[i]` on branch `i`.
    pub fn backward(&self, trace: &StudentTrace, d_out: &[Vec<f64>], grads: &mut StudentNet) -> Result<()> {
        check_dim("branch gradients", self.branches.len(), d_out.len())?;
        let mut dh = vec![0.0; self.trunk.output_dim()];
        for ((b, (c, g)), d) in self
            .branches
            .iter()
            .zip(trace.branches.iter().zip(grads.branches.iter_mut()))
            .zip(d_out)
        {
            let dx = b.backward_into(c, d, g)?;
            for (acc, v) in dh.iter_mut().zip(dx) {
                *acc += v;
            }
        }
        self.trunk.backward_into(&trace.trunk, &dh, &mut grads.trunk)?;
        Ok(())
    }
}

impl Params for StudentNet {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        push_prefixed(&mut out, "trunk", self.trunk.blocks());
        for (i, b) in self.branches.iter().enumerate() {
            push_prefixed(&mut out, &format!("branch{i}"), b.blocks());
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.trunk.blocks_mut();
        for b in &mut self.branches {
            out.extend(b.blocks_mut());
        }
        out
    }
}

/// Catalog indices by descending branch-`task` score, ties to the lowest index.
pub fn student_policy(student: &StudentNet, s: &[f64], task: usize) -> Result<Vec<usize>> {
    Ok(argsort_desc(&student.branch_output(s, task)?))
}

/// A student together with the frozen encoder that turns raw observations
/// into its input states.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentModel {
    pub encoder: Option<GruEncoder>,
    pub net: StudentNet,
}

impl StudentModel {
    pub fn feature_dim(&self) -> usize {
        self.net.state_dim() - self.encoder.as_ref().map_or(0, GruEncoder::output_dim)
    }

    pub fn encode(&self, obs: &Observation) -> Result<Vec<f64>> {
        check_dim("observation features", self.feature_dim(), obs.features.len())?;
        let mut s = match &self.encoder {
            Some(e) => e.encode(&obs.history)?,
            None => Vec::new(),
        };
        s.extend_from_slice(&obs.features);
        Ok(s)
    }

    /// One encode and one trunk pass answering every task.
    pub fn answer(&self, obs: &Observation, counters: Option<&EvalCounters>) -> Result<Vec<Vec<f64>>> {
        let s = self.encode(obs)?;
        EvalCounters::bump(counters.map(|c| &c.encodes), 1);
        self.net.forward(&s, counters)
    }

    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        if let Some(e) = &self.encoder {
            push_prefixed(&mut out, "encoder", e.arrays());
        }
        push_prefixed(&mut out, "student", self.net.blocks());
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.encoder {
            out.extend(e.arrays_mut());
        }
        out.extend(self.net.blocks_mut());
        out
    }

    /// Scalars stored by a checkpoint, frozen encoder included.
    pub fn stored_count(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }
}
