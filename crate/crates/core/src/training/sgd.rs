use super::Gradients;
use crate::error::Result;
use crate::model::{Dims, ModelParams, Scheme};
use crate::numerics::{clip_global_norm, Rng};

/// Clips `grads` to global norm `clip`, then `θ ← θ − lr·g`. Returns the
/// clip factor applied.
pub fn sgd_step(params: &mut ModelParams, grads: &mut Gradients, lr: f64, clip: f64) -> Result<f64> {
    let factor = {
        let mut gs: Vec<_> = grads.tensors_mut().into_iter().map(|(_, t)| t).collect();
        clip_global_norm(&mut gs, clip)?
    };
    for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        p.axpy(-lr, g)?;
    }
    Ok(factor)
}

/// Every tensor drawn uniformly from `[lo, hi)`.
pub fn init_params(scheme: Scheme, dims: Dims, rng: &mut Rng, lo: f64, hi: f64) -> Result<ModelParams> {
    ModelParams::random(scheme, dims, rng, lo, hi)
}
