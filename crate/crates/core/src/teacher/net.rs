use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nnkit::params::push_prefixed;
use crate::nnkit::{Activation, DenseCache, EvalCounters, Matrix, Mlp, Params};
use crate::repr::{EncoderDims, EncoderTrace, GruEncoder, Observation};

/// Architecture of a teacher, enough to rebuild it from a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherDims {
    /// Width of the static observation features (`u_l` and `u_c`, or a
    /// one-hot state in tabular mode).
    pub feature_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub encoder: Option<EncoderDims>,
    #[serde(default)]
    pub encoder_frozen: bool,
}

impl TeacherDims {
    pub fn state_dim(&self) -> usize {
        self.feature_dim + self.encoder.map_or(0, |e| e.hidden)
    }

    pub fn head_widths(&self) -> Vec<usize> {
        let mut w = vec![self.state_dim() + self.action_dim];
        w.extend(&self.hidden);
        w.push(1);
        w
    }
}

/// Q-network `Q(s, a)`: an optional recurrent encoder producing the
/// short-term part of `s`, and a dense head over `concat(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherNet {
    pub encoder: Option<GruEncoder>,
    /// A frozen encoder is not trained and is excluded from [`Params`].
    pub encoder_frozen: bool,
    pub head: Mlp,
    pub feature_dim: usize,
}

/// Forward values needed to backpropagate one `Q(s, a)`.
#[derive(Clone, Debug)]
pub struct QTrace {
    encoder: Option<EncoderTrace>,
    head: Vec<DenseCache>,
}

impl TeacherNet {
    pub fn new(encoder: Option<GruEncoder>, head: Mlp, feature_dim: usize, encoder_frozen: bool) -> Result<Self> {
        let state_dim = feature_dim + encoder.as_ref().map_or(0, GruEncoder::output_dim);
        if head.input_dim() <= state_dim {
            return Err(Error::Param(format!(
                "head input {} leaves no room for actions after a {state_dim}-dim state",
                head.input_dim()
            )));
        }
        check_dim("teacher head output", 1, head.output_dim())?;
        Ok(TeacherNet {
            encoder,
            encoder_frozen,
            head,
            feature_dim,
        })
    }

    /// Glorot head with ReLU hidden layers and a linear output.
    pub fn init<R: Rng + ?Sized>(dims: &TeacherDims, h0_std: f64, rng: &mut R) -> Result<Self> {
        let encoder = dims.encoder.map(|e| GruEncoder::new(e, h0_std, rng));
        let head = Mlp::glorot(&dims.head_widths(), Activation::Relu, Activation::Identity, rng)?;
        TeacherNet::new(encoder, head, dims.feature_dim, dims.encoder_frozen)
    }

    /// Same layout as `init` with every array zero.
    pub fn zeros(dims: &TeacherDims) -> Result<Self> {
        let encoder = dims.encoder.map(GruEncoder::zeros);
        let widths = dims.head_widths();
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                crate::nnkit::DenseLayer::zeros(widths[i], widths[i + 1], act)
            })
            .collect();
        TeacherNet::new(encoder, Mlp::new(layers)?, dims.feature_dim, dims.encoder_frozen)
    }

    pub fn dims(&self) -> TeacherDims {
        TeacherDims {
            feature_dim: self.feature_dim,
            action_dim: self.action_dim(),
            hidden: self.head.layers[..self.head.layers.len() - 1]
                .iter()
                .map(|l| l.fan_out())
                .collect(),
            encoder: self.encoder.as_ref().map(GruEncoder::dims),
            encoder_frozen: self.encoder_frozen,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.feature_dim + self.encoder.as_ref().map_or(0, GruEncoder::output_dim)
    }

    pub fn action_dim(&self) -> usize {
        self.head.input_dim() - self.state_dim()
    }

    fn trains_encoder(&self) -> bool {
        self.encoder.is_some() && !self.encoder_frozen
    }

    /// State vector `concat(u_s, features)` for an observation.
    pub fn encode(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.encode_traced(obs, false)?.0)
    }

    fn encode_traced(&self, obs: &Observation, trace: bool) -> Result<(Vec<f64>, Option<EncoderTrace>)> {
        check_dim("observation features", self.feature_dim, obs.features.len())?;
        let Some(enc) = &self.encoder else {
            return Ok((obs.features.clone(), None));
        };
        let (mut s, t) = if trace {
            let (s, t) = enc.encode_traced(&obs.history)?;
            (s, Some(t))
        } else {
            (enc.encode(&obs.history)?, None)
        };
        s.extend_from_slice(&obs.features);
        Ok((s, t))
    }

    fn head_input(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        check_dim("teacher state", self.state_dim(), s.len())?;
        check_dim("teacher action", self.action_dim(), a.len())?;
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        Ok(x)
    }

    pub fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.head.forward(&self.head_input(s, a)?)?[0])
    }

    /// Action part of the first head layer applied to every catalog row.
    /// Valid until the head's first layer changes.
    pub fn project_catalog(&self, actions: &Matrix) -> Result<Matrix> {
        check_dim("catalog action dim", self.action_dim(), actions.cols())?;
        let first = &self.head.layers[0];
        let sd = self.state_dim();
        let width = first.fan_out();
        let mut proj = Matrix::zeros(actions.rows(), width);
        let mut row = vec![0.0; width];
        for k in 0..actions.rows() {
            row.fill(0.0);
            for (j, &a) in actions.row(k).iter().enumerate() {
                if a != 0.0 {
                    for (r, &w) in row.iter_mut().zip(first.weights.row(sd + j)) {
                        *r += a * w;
                    }
                }
            }
            for (c, &v) in row.iter().enumerate() {
                proj.set(k, c, v);
            }
        }
        Ok(proj)
    }

    /// `Q(s, a_k)` for every catalog row, reusing a [`Self::project_catalog`] result.
    pub fn score_projected(&self, s: &[f64], proj: &Matrix) -> Result<Vec<f64>> {
        check_dim("teacher state", self.state_dim(), s.len())?;
        let first = &self.head.layers[0];
        check_dim("catalog projection width", first.fan_out(), proj.cols())?;
        let mut base = first.bias.clone();
        for (i, &x) in s.iter().enumerate() {
            if x != 0.0 {
                for (b, &w) in base.iter_mut().zip(first.weights.row(i)) {
                    *b += x * w;
                }
            }
        }
        let mut scores = Vec::with_capacity(proj.rows());
        for k in 0..proj.rows() {
            let mut h: Vec<f64> = base
                .iter()
                .zip(proj.row(k))
                .map(|(b, p)| first.activation.apply(b + p))
                .collect();
            for layer in &self.head.layers[1..] {
                h = layer.forward(&h)?;
            }
            scores.push(h[0]);
        }
        Ok(scores)
    }

    pub fn score_catalog(&self, s: &[f64], actions: &Matrix) -> Result<Vec<f64>> {
        self.score_projected(s, &self.project_catalog(actions)?)
    }

    /// Encodes `obs` and evaluates the full head once per catalog row, with
    /// no shared work across rows. This is the per-task serving path.
    pub fn answer(&self, obs: &Observation, actions: &Matrix, counters: Option<&EvalCounters>) -> Result<Vec<f64>> {
        let s = self.encode(obs)?;
        EvalCounters::bump(counters.map(|c| &c.encodes), 1);
        let mut scores = Vec::with_capacity(actions.rows());
        for k in 0..actions.rows() {
            scores.push(self.q_value(&s, actions.row(k))?);
            EvalCounters::bump(counters.map(|c| &c.head_evals), 1);
        }
        Ok(scores)
    }

    pub fn q_traced(&self, obs: &Observation, a: &[f64]) -> Result<(f64, QTrace)> {
        let (s, encoder) = self.encode_traced(obs, self.trains_encoder())?;
        let head = self.head.forward_cached(&self.head_input(&s, a)?)?;
        let q = head.last().expect("head has layers").output[0];
        Ok((q, QTrace { encoder, head }))
    }

    /// Accumulates `dq * dQ/dtheta` into `grads`.
    pub fn backward(&self, trace: &QTrace, dq: f64, grads: &mut TeacherNet) -> Result<()> {
        let dx = self.head.backward_into(&trace.head, &[dq], &mut grads.head)?;
        if let (Some(enc), Some(t), Some(g)) = (&self.encoder, &trace.encoder, grads.encoder.as_mut()) {
            if !self.encoder_frozen {
                enc.backward_into(t, &dx[..enc.output_dim()], g)?;
            }
        }
        Ok(())
    }

    /// Every stored array including frozen ones, in checkpoint order.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        if let Some(e) = &self.encoder {
            push_prefixed(&mut out, "encoder", e.arrays());
        }
        push_prefixed(&mut out, "head", self.head.blocks());
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.encoder {
            out.extend(e.arrays_mut());
        }
        out.extend(self.head.blocks_mut());
        out
    }
}

impl Params for TeacherNet {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        if let (Some(e), false) = (&self.encoder, self.encoder_frozen) {
            push_prefixed(&mut out, "encoder", e.blocks());
        }
        push_prefixed(&mut out, "head", self.head.blocks());
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if !self.encoder_frozen {
            if let Some(e) = &mut self.encoder {
                out.extend(e.blocks_mut());
            }
        }
        out.extend(self.head.blocks_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::DenseLayer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn reference_dims() -> TeacherDims {
        TeacherDims {
            feature_dim: 13,
            action_dim: 49,
            hidden: vec![64, 32, 16],
            encoder: Some(EncoderDims {
                input: 52,
                hidden: 10,
                layers: 3,
                window: 3,
                train_h0: false,
            }),
            encoder_frozen: false,
        }
    }

    fn obs(rng: &mut ChaCha8Rng) -> Observation {
        Observation {
            history: (0..3).map(|_| (0..52).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            features: (0..13).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    #[test]
    fn zero_head_scores_zero() {
        let net = TeacherNet::zeros(&reference_dims()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = net.encode(&obs(&mut rng)).unwrap();
        assert_eq!(s.len(), 23);
        assert_eq!(net.q_value(&s, &[0.7; 49]).unwrap(), 0.0);
    }

    #[test]
    fn single_identity_layer_is_a_dot_product() {
        let head = Mlp::new(vec![DenseLayer::new(
            Matrix::from_vec(3, 1, vec![1.0; 3]).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let net = TeacherNet::new(None, head, 2, false).unwrap();
        assert_eq!(net.q_value(&[1.0, 0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn projected_scores_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = TeacherNet::init(&reference_dims(), 0.01, &mut rng).unwrap();
        let s = net.encode(&obs(&mut rng)).unwrap();
        let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..49).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let actions = Matrix::from_rows(&rows).unwrap();
        let fast = net.score_catalog(&s, &actions).unwrap();
        for (k, row) in rows.iter().enumerate() {
            let direct = net.q_value(&s, row).unwrap();
            assert!((fast[k] - direct).abs() < 1e-12);
        }
        let counters = EvalCounters::default();
        let ob = obs(&mut rng);
        net.answer(&ob, &actions, Some(&counters)).unwrap();
        assert_eq!(EvalCounters::get(&counters.head_evals), 7);
        assert_eq!(EvalCounters::get(&counters.encodes), 1);
    }

    #[test]
    fn parameter_count_matches_layout() {
        let net = TeacherNet::zeros(&reference_dims()).unwrap();
        let head = 72 * 64 + 64 + 64 * 32 + 32 + 32 * 16 + 16 + 16 + 1;
        let gru = 3 * (52 * 10 + 100 + 10) + 2 * 3 * (10 * 10 + 100 + 10);
        assert_eq!(net.param_count(), head + gru);
        let frozen = TeacherNet {
            encoder_frozen: true,
            ..net.clone()
        };
        assert_eq!(frozen.param_count(), head);
        assert_eq!(frozen.arrays().len(), net.arrays().len());
        assert_eq!(net.dims(), reference_dims());
    }
}
