use rand::Rng;

use super::dense::sigmoid;
use super::init::glorot_matrix;
use super::matrix::Matrix;
use super::params::Params;
use crate::error::{check_dim, Error, Result};

/// Single GRU cell with row-vector convention:
///
/// ```text
/// z  = sigmoid(x W_xz + h W_hz + b_z)
/// r  = sigmoid(x W_xr + h W_hr + b_r)
/// h~ = tanh(x W_xh + (r * h) W_hh + b_h)
/// h' = z * h + (1 - z) * h~
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_xz: Matrix,
    pub w_hz: Matrix,
    pub b_z: Vec<f64>,
    pub w_xh: Matrix,
    pub w_hh: Matrix,
    pub b_h: Vec<f64>,
    pub w_xr: Matrix,
    pub w_hr: Matrix,
    pub b_r: Vec<f64>,
}

/// Intermediate values of one [`GruCell::step`], kept for backprop.
#[derive(Clone, Debug)]
pub struct GruTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub hhat: Vec<f64>,
    pub h: Vec<f64>,
}

impl GruCell {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GruCell {
            w_xz: Matrix::zeros(input_dim, hidden_dim),
            w_hz: Matrix::zeros(hidden_dim, hidden_dim),
            b_z: vec![0.0; hidden_dim],
            w_xh: Matrix::zeros(input_dim, hidden_dim),
            w_hh: Matrix::zeros(hidden_dim, hidden_dim),
            b_h: vec![0.0; hidden_dim],
            w_xr: Matrix::zeros(input_dim, hidden_dim),
            w_hr: Matrix::zeros(hidden_dim, hidden_dim),
            b_r: vec![0.0; hidden_dim],
        }
    }

    pub fn glorot<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        GruCell {
            w_xz: glorot_matrix(input_dim, hidden_dim, rng),
            w_hz: glorot_matrix(hidden_dim, hidden_dim, rng),
            b_z: vec![0.0; hidden_dim],
            w_xh: glorot_matrix(input_dim, hidden_dim, rng),
            w_hh: glorot_matrix(hidden_dim, hidden_dim, rng),
            b_h: vec![0.0; hidden_dim],
            w_xr: glorot_matrix(input_dim, hidden_dim, rng),
            w_hr: glorot_matrix(hidden_dim, hidden_dim, rng),
            b_r: vec![0.0; hidden_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_xz.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xz.cols()
    }

    fn gate(x: &[f64], h: &[f64], wx: &Matrix, wh: &Matrix, b: &[f64]) -> Vec<f64> {
        let mut pre = b.to_vec();
        wx.accumulate_left_mul(x, &mut pre);
        wh.accumulate_left_mul(h, &mut pre);
        pre
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<(Vec<f64>, GruTrace)> {
        check_dim("gru input", self.input_dim(), x.len())?;
        check_dim("gru hidden state", self.hidden_dim(), h_prev.len())?;
        let z: Vec<f64> = Self::gate(x, h_prev, &self.w_xz, &self.w_hz, &self.b_z)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = Self::gate(x, h_prev, &self.w_xr, &self.w_hr, &self.b_r)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let hhat: Vec<f64> = Self::gate(x, &rh, &self.w_xh, &self.w_hh, &self.b_h)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h = blend(&z, h_prev, &hhat);
        let trace = GruTrace {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            hhat,
            h: h.clone(),
        };
        Ok((h, trace))
    }

    /// Backprop of one step. Accumulates into `grads`; returns `(dx, dh_prev)`.
    pub fn backward_into(
        &self,
        trace: &GruTrace,
        dh: &[f64],
        grads: &mut GruCell,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.hidden_dim();
        check_dim("gru upstream gradient", n, dh.len())?;
        let GruTrace {
            x,
            h_prev,
            z,
            r,
            hhat,
            ..
        } = trace;

        let mut dx = vec![0.0; self.input_dim()];
        let mut dh_prev: Vec<f64> = dh.iter().zip(z).map(|(g, zi)| g * zi).collect();

        // candidate branch
        let d_hhat_pre: Vec<f64> = (0..n)
            .map(|k| dh[k] * (1.0 - z[k]) * (1.0 - hhat[k] * hhat[k]))
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        grads.w_xh.accumulate_outer(x, &d_hhat_pre);
        grads.w_hh.accumulate_outer(&rh, &d_hhat_pre);
        add_into(&mut grads.b_h, &d_hhat_pre);
        self.w_xh.accumulate_right_mul(&d_hhat_pre, &mut dx);
        let mut d_rh = vec![0.0; n];
        self.w_hh.accumulate_right_mul(&d_hhat_pre, &mut d_rh);
        for k in 0..n {
            dh_prev[k] += d_rh[k] * r[k];
        }

        // update gate
        let dz_pre: Vec<f64> = (0..n)
            .map(|k| dh[k] * (h_prev[k] - hhat[k]) * z[k] * (1.0 - z[k]))
            .collect();
        grads.w_xz.accumulate_outer(x, &dz_pre);
        grads.w_hz.accumulate_outer(h_prev, &dz_pre);
        add_into(&mut grads.b_z, &dz_pre);
        self.w_xz.accumulate_right_mul(&dz_pre, &mut dx);
        self.w_hz.accumulate_right_mul(&dz_pre, &mut dh_prev);

        // reset gate
        let dr_pre: Vec<f64> = (0..n)
            .map(|k| d_rh[k] * h_prev[k] * r[k] * (1.0 - r[k]))
            .collect();
        grads.w_xr.accumulate_outer(x, &dr_pre);
        grads.w_hr.accumulate_outer(h_prev, &dr_pre);
        add_into(&mut grads.b_r, &dr_pre);
        self.w_xr.accumulate_right_mul(&dr_pre, &mut dx);
        self.w_hr.accumulate_right_mul(&dr_pre, &mut dh_prev);

        Ok((dx, dh_prev))
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn blend(z: &[f64], h_prev: &[f64], hhat: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(h_prev.iter().zip(hhat))
        .map(|(zk, (hp, hh))| zk * hp + (1.0 - zk) * hh)
        .collect()
}

/// The GRU blend `z * h_prev + (1 - z) * hhat` with explicit gate values.
///
/// `r` is accepted for symmetry with the full step and validated, but the
/// blend itself does not read it.
pub fn gru_step_with_gates(z: &[f64], r: &[f64], h_prev: &[f64], hhat: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    check_dim("gate r", n, r.len())?;
    check_dim("h_prev", n, h_prev.len())?;
    check_dim("hhat", n, hhat.len())?;
    for (name, gate) in [("z", z), ("r", r)] {
        if let Some(v) = gate.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Param(format!("gate {name} entry {v} outside [0, 1]")));
        }
    }
    Ok(blend(z, h_prev, hhat))
}

impl Params for GruCell {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        vec![
            ("w_xz".into(), self.w_xz.as_slice()),
            ("w_hz".into(), self.w_hz.as_slice()),
            ("b_z".into(), self.b_z.as_slice()),
            ("w_xh".into(), self.w_xh.as_slice()),
            ("w_hh".into(), self.w_hh.as_slice()),
            ("b_h".into(), self.b_h.as_slice()),
            ("w_xr".into(), self.w_xr.as_slice()),
            ("w_hr".into(), self.w_hr.as_slice()),
            ("b_r".into(), self.b_r.as_slice()),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_xz.as_mut_slice(),
            self.w_hz.as_mut_slice(),
            self.b_z.as_mut_slice(),
            self.w_xh.as_mut_slice(),
            self.w_hh.as_mut_slice(),
            self.b_h.as_mut_slice(),
            self.w_xr.as_mut_slice(),
            self.w_hr.as_mut_slice(),
            self.b_r.as_mut_slice(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::gradcheck::{central_difference, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_halves_hidden_state() {
        let cell = GruCell::zeros(4, 3);
        let h_prev = [0.8, -1.2, 3.0];
        let (h, trace) = cell.step(&[1.0, 2.0, 3.0, 4.0], &h_prev).unwrap();
        assert_eq!(trace.z, vec![0.5; 3]);
        assert_eq!(trace.r, vec![0.5; 3]);
        assert_eq!(trace.hhat, vec![0.0; 3]);
        assert_eq!(h, vec![0.4, -0.6, 1.5]);
    }

    #[test]
    fn blend_hook_cases() {
        let hp = [4.0, 4.0];
        let hh = [0.0, 0.0];
        let r = [0.5, 0.5];
        assert_eq!(gru_step_with_gates(&[1.0, 1.0], &r, &hp, &hh).unwrap(), hp.to_vec());
        assert_eq!(gru_step_with_gates(&[0.0, 0.0], &r, &hp, &[2.0, -1.0]).unwrap(), vec![2.0, -1.0]);
        assert_eq!(gru_step_with_gates(&[0.25, 0.75], &r, &hp, &hh).unwrap(), vec![1.0, 3.0]);
        assert!(gru_step_with_gates(&[1.5, 0.0], &r, &hp, &hh).is_err());
        assert!(gru_step_with_gates(&[0.5], &r, &hp, &hh).is_err());
    }

    #[test]
    fn shape_errors() {
        let cell = GruCell::zeros(2, 3);
        assert!(cell.step(&[1.0], &[0.0; 3]).is_err());
        assert!(cell.step(&[1.0, 2.0], &[0.0; 2]).is_err());
    }

    #[test]
    fn step_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cell = GruCell::glorot(5, 4, &mut rng);
        for b in cell.blocks_mut() {
            for v in b.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |c: &GruCell, x: &[f64], h: &[f64]| -> f64 {
            c.step(x, h).unwrap().0.iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let (_, trace) = cell.step(&x, &h0).unwrap();
        let mut grads = cell.zeros_like();
        let (dx, dh) = cell.backward_into(&trace, &up, &mut grads).unwrap();

        let n_blocks = cell.blocks().len();
        for bi in 0..n_blocks {
            let len = cell.blocks()[bi].1.len();
            for k in 0..len {
                let base = cell.blocks()[bi].1[k];
                let fd = central_difference(
                    |v| {
                        let mut c = cell.clone();
                        c.blocks_mut()[bi][k] = v;
                        loss(&c, &x, &h0)
                    },
                    base,
                    1e-6,
                );
                let an = grads.blocks()[bi].1[k];
                assert!(relative_error(an, fd) <= 1e-4, "block {bi} idx {k}: {an} vs {fd}");
            }
        }
        for k in 0..5 {
            let fd = central_difference(
                |v| {
                    let mut xs = x.clone();
                    xs[k] = v;
                    loss(&cell, &xs, &h0)
                },
                x[k],
                1e-6,
            );
            assert!(relative_error(dx[k], fd) <= 1e-4);
        }
        for k in 0..4 {
            let fd = central_difference(
                |v| {
                    let mut hs = h0.clone();
                    hs[k] = v;
                    loss(&cell, &x, &hs)
                },
                h0[k],
                1e-6,
            );
            assert!(relative_error(dh[k], fd) <= 1e-4);
        }
    }
}
