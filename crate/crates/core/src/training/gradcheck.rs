use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use super::reference::ReferenceModel;
use super::{backward, batch_loss, Gradients};
use crate::corpus::{Batch, EncodedPair, BOS, EOS};
use crate::error::Result;
use crate::model::{Dims, ModelParams, Scheme};
use crate::numerics::{DoubleDouble, Real, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: BTreeMap<String, TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.values().all(|t| t.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|(_, t)| !t.passed)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.values().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, t) in &self.tensors {
            writeln!(
                f,
                "{}\t{name}\t{:.3e}\t(element {})",
                if t.passed { "ok" } else { "FAIL" },
                t.max_rel_error,
                t.worst_index
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` element by element against central differences of
/// the mean batch loss with step `eps`. The loss is re-evaluated in
/// double-double arithmetic so the difference quotient is not swamped by
/// f64 round-off on small gradient entries.
pub fn compare_gradients(
    params: &ModelParams,
    batch: &Batch,
    analytic: &Gradients,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    // validates the batch against the model
    batch_loss(params, batch)?;
    let base = ReferenceModel::<DoubleDouble>::new(params);
    let two_eps = DoubleDouble::from_f64(2.0 * eps);
    let mut tensors = BTreeMap::new();
    for (name, values) in params.tensors() {
        let grad = analytic.tensor(&name).expect("same layout").data();
        let errors: Vec<f64> = (0..grad.len())
            .into_par_iter()
            .map_init(
                || base.clone(),
                |probe, i| {
                    let orig = values.data()[i];
                    probe.nudge(&name, i, eps);
                    let plus = probe.batch_loss(batch);
                    probe.set(&name, i, orig);
                    probe.nudge(&name, i, -eps);
                    let minus = probe.batch_loss(batch);
                    probe.set(&name, i, orig);
                    relative_error(grad[i], ((plus - minus) / two_eps).to_f64())
                },
            )
            .collect();
        let mut worst = (0.0f64, 0usize);
        for (i, &err) in errors.iter().enumerate() {
            if err > worst.0 || err.is_nan() {
                worst = (err, i);
            }
        }
        tensors.insert(
            name,
            TensorCheck {
                max_rel_error: worst.0,
                worst_index: worst.1,
                passed: worst.0 < tolerance,
            },
        );
    }
    Ok(GradCheckReport { tolerance, tensors })
}

/// Dimensions of the model used by `grad_check`.
pub fn grad_check_dims() -> Dims {
    Dims {
        hidden: 8,
        embed: 6,
        attention: 8,
        stimulus: 6,
        post_vocab: 12,
        response_vocab: 12,
    }
}

/// A random batch of `rows` pairs over the given vocabularies.
pub fn random_batch(rng: &mut Rng, dims: &Dims, rows: usize, max_len: usize) -> Batch {
    let draw = |rng: &mut Rng, vocab: usize| 4 + (rng.next_u64() % (vocab as u64 - 4)) as usize;
    let pairs: Vec<EncodedPair> = (0..rows)
        .map(|_| {
            let plen = 1 + (rng.next_u64() % max_len as u64) as usize;
            let rlen = 1 + (rng.next_u64() % max_len as u64) as usize;
            let post = (0..plen).map(|_| draw(rng, dims.post_vocab)).collect();
            let mut response = vec![BOS];
            response.extend((0..rlen).map(|_| draw(rng, dims.response_vocab)));
            response.push(EOS);
            EncodedPair { post, response }
        })
        .collect();
    let refs: Vec<&EncodedPair> = pairs.iter().collect();
    Batch::from_pairs(&refs)
}

/// Gradient check on a fresh tiny model (`grad_check_dims`, batch of 3,
/// central differences with eps = 1e-5).
pub fn grad_check(scheme: Scheme, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let dims = grad_check_dims();
    let params = ModelParams::random(scheme, dims, &mut rng, -0.1, 0.1)?;
    let batch = random_batch(&mut rng, &dims, 3, 5);
    let (_, grads) = backward(&params, &batch)?;
    compare_gradients(&params, &batch, &grads, 1e-5, tolerance)
}
