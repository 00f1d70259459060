//! Finite-difference verification of analytic gradients.

use rand::Rng;

use super::params::Params;

/// Below this magnitude both gradients are compared by absolute difference.
pub const GRAD_FLOOR: f64 = 1e-8;

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Fourth-order stencil; its truncation error is small enough to use a
/// larger step when rounding dominates the central difference.
pub fn five_point_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    Central,
    FivePoint,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < GRAD_FLOOR {
        diff
    } else {
        diff / scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compares `analytic` against central differences of `loss` on `n_coords`
/// coordinates sampled uniformly over all scalar parameters.
pub fn grad_check<P, F, R>(params: &P, analytic: &P, loss: F, n_coords: usize, h: f64, rng: &mut R) -> GradCheckReport
where
    P: Params + Clone,
    F: Fn(&P) -> f64,
    R: Rng + ?Sized,
{
    grad_check_with(params, analytic, loss, n_coords, h, Stencil::Central, rng)
}

pub fn grad_check_with<P, F, R>(
    params: &P,
    analytic: &P,
    loss: F,
    n_coords: usize,
    h: f64,
    stencil: Stencil,
    rng: &mut R,
) -> GradCheckReport
where
    P: Params + Clone,
    F: Fn(&P) -> f64,
    R: Rng + ?Sized,
{
    let sizes: Vec<(String, usize)> = params
        .blocks()
        .into_iter()
        .map(|(n, b)| (n, b.len()))
        .collect();
    let total: usize = sizes.iter().map(|(_, s)| s).sum();
    let mut blocks: Vec<BlockReport> = sizes
        .iter()
        .map(|(n, _)| BlockReport {
            name: n.clone(),
            checked: 0,
            max_rel_error: 0.0,
        })
        .collect();
    if total == 0 {
        return GradCheckReport {
            blocks,
            max_rel_error: 0.0,
            checked: 0,
        };
    }

    let analytic_flat = analytic.flatten();
    let mut probe = params.clone();
    for _ in 0..n_coords {
        let flat = rng.random_range(0..total);
        let (mut bi, mut k) = (0, flat);
        while k >= sizes[bi].1 {
            k -= sizes[bi].1;
            bi += 1;
        }
        let base = params.blocks()[bi].1[k];
        let at = |v: f64| {
            probe.blocks_mut()[bi][k] = v;
            let l = loss(&probe);
            probe.blocks_mut()[bi][k] = base;
            l
        };
        let numeric = match stencil {
            Stencil::Central => central_difference(at, base, h),
            Stencil::FivePoint => five_point_difference(at, base, h),
        };
        let err = relative_error(analytic_flat[flat], numeric);
        let report = &mut blocks[bi];
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(err);
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    GradCheckReport {
        blocks,
        max_rel_error,
        checked: n_coords,
    }
}
