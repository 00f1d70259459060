use crate::error::{check_dim, Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Weight matrices are stored input-major (`rows == fan_in`, `cols == fan_out`)
/// so that a layer computes `x W` with `x` as a row vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix data", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim("matrix row", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += x W` where `x` has length `rows`.
    pub fn accumulate_left_mul(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (xi, row) in x.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if *xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    /// Returns `x W`.
    pub fn left_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("left_mul input", self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        self.accumulate_left_mul(x, &mut out);
        Ok(out)
    }

    /// `out += W g` where `g` has length `cols` (backprop to the input side).
    pub fn accumulate_right_mul(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += row.iter().zip(g).map(|(w, gj)| w * gj).sum::<f64>();
        }
    }

    /// `W += x^T g`.
    pub fn accumulate_outer(&mut self, x: &[f64], g: &[f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(g.len(), self.cols);
        let cols = self.cols.max(1);
        for (xi, row) in x.iter().zip(self.data.chunks_exact_mut(cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (w, gj) in row.iter_mut().zip(g) {
                *w += xi * gj;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl TryFrom<(usize, usize, Vec<f64>)> for Matrix {
    type Error = Error;

    fn try_from((rows, cols, data): (usize, usize, Vec<f64>)) -> Result<Self> {
        Matrix::from_vec(rows, cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_mul_matches_hand_product() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(w.left_mul(&[1.0, -1.0]).unwrap(), vec![-3.0, -3.0, -3.0]);
        let mut back = vec![0.0; 2];
        w.accumulate_right_mul(&[1.0, 0.0, 1.0], &mut back);
        assert_eq!(back, vec![4.0, 10.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(matches!(
            Matrix::from_vec(2, 2, vec![0.0; 3]),
            Err(Error::Shape { expected: 4, got: 3, .. })
        ));
    }

    #[test]
    fn identity_left_mul_is_identity() {
        let x = [0.5, -2.0, 7.0];
        assert_eq!(Matrix::identity(3).left_mul(&x).unwrap(), x.to_vec());
    }
}
