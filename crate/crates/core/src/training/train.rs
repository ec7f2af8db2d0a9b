use std::fmt;

use log::{debug, info};

use super::{backward_threaded, sgd_step};
use crate::corpus::{make_batches, EncodedPair, EOS};
use crate::error::{NrmError, Result};
use crate::model::{Dims, ModelParams, Precision, Scheme};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// With `F32`, parameters are rounded to single precision after every
    /// update.
    pub precision: Precision,
    pub init_lo: f64,
    pub init_hi: f64,
    /// Responses are cut to this many content tokens before `</s>`.
    pub max_response_len: usize,
    pub threads: usize,
    /// Keep encoder tensors (embeddings included) fixed.
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            batch_size: 16,
            epochs: 10,
            clip_norm: 1.0,
            seed: 1,
            precision: Precision::F64,
            init_lo: -0.1,
            init_hi: 0.1,
            max_response_len: 30,
            threads: 1,
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(NrmError::InvalidArgument(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NrmError::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(NrmError::InvalidArgument(format!("clip norm must be > 0, got {}", self.clip_norm)));
        }
        if !(self.init_lo < self.init_hi) {
            return Err(NrmError::InvalidArgument("init range needs lo < hi".into()));
        }
        if self.max_response_len == 0 {
            return Err(NrmError::InvalidArgument("max response length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_nll: f64,
    pub perplexity: f64,
}

impl fmt::Display for EpochLog {
    /// `epoch<TAB>mean_nll<TAB>perplexity`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t{:.6}", self.epoch, self.mean_nll, self.perplexity)
    }
}

fn truncate(pair: &EncodedPair, max_len: usize) -> EncodedPair {
    if pair.response.len() <= max_len + 2 {
        return pair.clone();
    }
    let mut response = pair.response[..=max_len].to_vec();
    response.push(EOS);
    EncodedPair {
        post: pair.post.clone(),
        response,
    }
}

fn is_encoder_tensor(name: &str) -> bool {
    name.starts_with("encoder.")
        || name.starts_with("global_encoder.")
        || name == "post_embedding"
        || name == "global_post_embedding"
}

fn round_to_f32(params: &mut ModelParams) {
    for (_, t) in params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

fn norms(params: &ModelParams) -> String {
    params
        .tensors()
        .iter()
        .map(|(n, t)| format!("{n}={:.3e}", t.norm()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Minibatch SGD on the mean per-token NLL.
///
/// Without `init`, parameters are drawn from the config's init range using
/// the seeded generator, which then drives the per-epoch shuffles.
/// `on_epoch` sees each epoch's token-weighted mean loss as it finishes.
pub fn train(
    pairs: &[EncodedPair],
    scheme: Scheme,
    dims: Dims,
    config: &TrainConfig,
    init: Option<ModelParams>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ModelParams, Vec<EpochLog>)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(NrmError::InvalidArgument("training corpus is empty".into()));
    }
    let mut rng = Rng::new(config.seed);
    let mut params = match init {
        Some(p) => {
            if p.scheme != scheme || p.dims != dims {
                return Err(NrmError::InvalidArgument(format!(
                    "initial parameters are {} with {:?}, expected {scheme} with {dims:?}",
                    p.scheme, p.dims
                )));
            }
            p
        }
        None => ModelParams::random(scheme, dims, &mut rng, config.init_lo, config.init_hi)?,
    };
    if config.precision == Precision::F32 {
        round_to_f32(&mut params);
    }
    let data: Vec<EncodedPair> = pairs.iter().map(|p| truncate(p, config.max_response_len)).collect();
    info!(
        "training {scheme} model: {} pairs, {} parameters",
        data.len(),
        params.parameter_count()
    );

    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = make_batches(&data, config.batch_size, &mut rng)?;
        let mut nll_sum = 0.0;
        let mut tokens = 0usize;
        for (b, batch) in batches.iter().enumerate() {
            let (loss, mut grads) = backward_threaded(&params, batch, config.threads)?;
            if !loss.is_finite() {
                return Err(NrmError::NonFinite {
                    epoch,
                    batch: b,
                    diagnostic: norms(&params),
                });
            }
            let n = batch.token_count();
            nll_sum += loss * n as f64;
            tokens += n;
            if config.freeze_encoder {
                for (name, g) in grads.tensors_mut() {
                    if is_encoder_tensor(&name) {
                        g.fill(0.0);
                    }
                }
            }
            let factor = sgd_step(&mut params, &mut grads, config.learning_rate, config.clip_norm)?;
            if config.precision == Precision::F32 {
                round_to_f32(&mut params);
            }
            debug!("epoch {epoch} batch {b}: loss {loss:.5} clip {factor:.3}");
        }
        let mean_nll = nll_sum / tokens as f64;
        let entry = EpochLog {
            epoch,
            mean_nll,
            perplexity: mean_nll.exp(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok((params, log))
}
