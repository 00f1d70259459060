use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::ActionVector;
use super::state::interaction_input;
use crate::envsim::FeedbackVector;
use crate::error::{check_dim, Error, Result};
use crate::nnkit::init::gaussian_vec;
use crate::nnkit::params::push_prefixed;
use crate::nnkit::{GruCell, GruTrace, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    /// Width of one interaction input (action dim + number of tasks).
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub window: usize,
    pub train_h0: bool,
}

/// Stacked GRU over the last `window` interactions; the short-term interest
/// is the top layer's final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct GruEncoder {
    pub cells: Vec<GruCell>,
    /// Initial hidden state per layer.
    pub h0: Vec<Vec<f64>>,
    pub window: usize,
    pub train_h0: bool,
}

/// Per-layer, per-step GRU traces of one encoding.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    steps: Vec<Vec<GruTrace>>,
}

impl GruEncoder {
    pub fn zeros(dims: EncoderDims) -> Self {
        let cells = (0..dims.layers)
            .map(|k| {
                let input = if k == 0 { dims.input } else { dims.hidden };
                GruCell::zeros(input, dims.hidden)
            })
            .collect();
        GruEncoder {
            cells,
            h0: vec![vec![0.0; dims.hidden]; dims.layers],
            window: dims.window,
            train_h0: dims.train_h0,
        }
    }

    /// Glorot weights, zero biases, and initial states drawn from `N(0, h0_std^2)`.
    pub fn new<R: Rng + ?Sized>(dims: EncoderDims, h0_std: f64, rng: &mut R) -> Self {
        let cells = (0..dims.layers)
            .map(|k| {
                let input = if k == 0 { dims.input } else { dims.hidden };
                GruCell::glorot(input, dims.hidden, rng)
            })
            .collect();
        let h0 = (0..dims.layers)
            .map(|_| gaussian_vec(dims.hidden, h0_std, rng))
            .collect();
        GruEncoder {
            cells,
            h0,
            window: dims.window,
            train_h0: dims.train_h0,
        }
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            input: self.cells.first().map_or(0, GruCell::input_dim),
            hidden: self.output_dim(),
            layers: self.cells.len(),
            window: self.window,
            train_h0: self.train_h0,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.cells.first().map_or(0, GruCell::hidden_dim)
    }

    fn check_history(&self, history: &[Vec<f64>]) -> Result<()> {
        check_dim("encoder history length", self.window, history.len())?;
        let input = self.dims().input;
        for x in history {
            check_dim("encoder history entry", input, x.len())?;
        }
        Ok(())
    }

    pub fn encode(&self, history: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_history(history)?;
        let mut inputs: Vec<Vec<f64>> = history.to_vec();
        for (cell, h0) in self.cells.iter().zip(&self.h0) {
            let mut h = h0.clone();
            for x in inputs.iter_mut() {
                h = cell.step(x, &h)?.0;
                *x = h.clone();
            }
        }
        Ok(inputs.pop().unwrap_or_else(|| self.h0.last().cloned().unwrap_or_default()))
    }

    pub fn encode_traced(&self, history: &[Vec<f64>]) -> Result<(Vec<f64>, EncoderTrace)> {
        self.check_history(history)?;
        let mut steps = Vec::with_capacity(self.cells.len());
        let mut inputs: Vec<Vec<f64>> = history.to_vec();
        for (cell, h0) in self.cells.iter().zip(&self.h0) {
            let mut h = h0.clone();
            let mut layer = Vec::with_capacity(self.window);
            for x in inputs.iter_mut() {
                let (h_new, trace) = cell.step(x, &h)?;
                layer.push(trace);
                *x = h_new.clone();
                h = h_new;
            }
            steps.push(layer);
        }
        let out = inputs.pop().unwrap_or_else(|| self.h0.last().cloned().unwrap_or_default());
        Ok((out, EncoderTrace { steps }))
    }

    /// Backprop through time from the gradient of the output; accumulates
    /// into `grads` and returns the gradient with respect to each input row.
    pub fn backward_into(
        &self,
        trace: &EncoderTrace,
        d_out: &[f64],
        grads: &mut GruEncoder,
    ) -> Result<Vec<Vec<f64>>> {
        check_dim("encoder output gradient", self.output_dim(), d_out.len())?;
        let n_layers = self.cells.len();
        // gradient arriving at each time step from the layer above
        let mut from_above: Vec<Vec<f64>> = vec![vec![0.0; self.output_dim()]; self.window];
        if let Some(last) = from_above.last_mut() {
            last.copy_from_slice(d_out);
        }
        for k in (0..n_layers).rev() {
            let cell = &self.cells[k];
            let mut dh_next = vec![0.0; cell.hidden_dim()];
            let mut below = vec![Vec::new(); self.window];
            for t in (0..self.window).rev() {
                let dh: Vec<f64> = dh_next.iter().zip(&from_above[t]).map(|(a, b)| a + b).collect();
                let (dx, dh_prev) = cell.backward_into(&trace.steps[k][t], &dh, &mut grads.cells[k])?;
                below[t] = dx;
                dh_next = dh_prev;
            }
            if self.train_h0 {
                for (g, d) in grads.h0[k].iter_mut().zip(&dh_next) {
                    *g += d;
                }
            }
            from_above = below;
        }
        Ok(from_above)
    }
}

/// Short-term interest from `(action, feedback)` pairs, oldest first.
/// Histories shorter than the window are left-padded with zero interactions.
pub fn encode_short_term(enc: &GruEncoder, history: &[(ActionVector, FeedbackVector)]) -> Result<Vec<f64>> {
    if history.len() > enc.window {
        return Err(Error::shape("short-term history length", enc.window, history.len()));
    }
    let width = enc.dims().input;
    let mut rows = vec![vec![0.0; width]; enc.window - history.len()];
    for (a, r) in history {
        let x = interaction_input(a.as_slice(), r);
        check_dim("short-term history entry", width, x.len())?;
        rows.push(x);
    }
    enc.encode(&rows)
}

impl GruEncoder {
    /// Every stored array, including the initial states even when frozen.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (k, cell) in self.cells.iter().enumerate() {
            push_prefixed(&mut out, &format!("gru{k}"), cell.blocks());
        }
        for (k, h) in self.h0.iter().enumerate() {
            out.push((format!("h0.{k}"), h.as_slice()));
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.cells.iter_mut().flat_map(|c| c.blocks_mut()).collect();
        out.extend(self.h0.iter_mut().map(Vec::as_mut_slice));
        out
    }
}

impl Params for GruEncoder {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (k, cell) in self.cells.iter().enumerate() {
            push_prefixed(&mut out, &format!("gru{k}"), cell.blocks());
        }
        if self.train_h0 {
            for (k, h) in self.h0.iter().enumerate() {
                out.push((format!("h0.{k}"), h.as_slice()));
            }
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.cells.iter_mut().flat_map(|c| c.blocks_mut()).collect();
        if self.train_h0 {
            out.extend(self.h0.iter_mut().map(Vec::as_mut_slice));
        }
        out
    }
}
