/// A container of trainable parameter blocks.
///
/// Block order is fixed per type; optimizers and checkpoints rely on it.
/// Gradients are represented by a value of the same type (see
/// [`Params::zeros_like`]), so parameter and gradient blocks line up one to one.
pub trait Params {
    fn blocks(&self) -> Vec<(String, &[f64])>;

    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, value: f64) {
        for b in self.blocks_mut() {
            b.fill(value);
        }
    }

    /// `self += scale * other`, block by block.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let src: Vec<Vec<f64>> = other.blocks().into_iter().map(|(_, b)| b.to_vec()).collect();
        for (dst, s) in self.blocks_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += scale * v;
            }
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks()
            .into_iter()
            .flat_map(|(_, b)| b.iter().copied())
            .collect()
    }

    fn all_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }
}

/// Prefixes every block name from `inner` and appends it to `out`.
pub(crate) fn push_prefixed<'a>(
    out: &mut Vec<(String, &'a [f64])>,
    prefix: &str,
    inner: Vec<(String, &'a [f64])>,
) {
    out.extend(
        inner
            .into_iter()
            .map(|(name, b)| (format!("{prefix}.{name}"), b)),
    );
}
