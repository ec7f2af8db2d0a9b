use std::collections::BTreeMap;
use std::fmt;

use crate::error::{NrmError, Result};
use crate::model::{ModelParams, Scheme};
use crate::numerics::{uniform_init, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    FromLocal,
    FromGlobal,
    Fresh,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::FromLocal => "from-loc",
            Provenance::FromGlobal => "from-glo",
            Provenance::Fresh => "fresh",
        })
    }
}

/// Builds a hybrid model from separately trained local and global models.
///
/// The local-role encoder and post embedding come from `local`, the
/// global-role encoder and its post embedding from `global`. Decoder,
/// readout and attention tensors are taken from `local` when their shape
/// is unchanged; the ones whose input is the (now doubled) context are
/// drawn fresh from `[lo, hi)`.
pub fn init_hybrid_from_pretrained(
    local: &ModelParams,
    global: &ModelParams,
    rng: &mut Rng,
    lo: f64,
    hi: f64,
) -> Result<(ModelParams, BTreeMap<String, Provenance>)> {
    if local.scheme != Scheme::Local || global.scheme != Scheme::Global {
        return Err(NrmError::InvalidArgument(format!(
            "hybrid init needs a loc and a glo model, got {} and {}",
            local.scheme, global.scheme
        )));
    }
    let (a, b) = (local.dims, global.dims);
    let mismatch = [
        ("hidden", a.hidden, b.hidden),
        ("embed", a.embed, b.embed),
        ("stimulus", a.stimulus, b.stimulus),
        ("post_vocab", a.post_vocab, b.post_vocab),
        ("response_vocab", a.response_vocab, b.response_vocab),
    ]
    .into_iter()
    .find(|(_, x, y)| x != y);
    if let Some((name, x, y)) = mismatch {
        return Err(NrmError::InvalidArgument(format!(
            "loc and glo checkpoints disagree on {name}: {x} vs {y}"
        )));
    }

    let mut hybrid = ModelParams::zeros(Scheme::Hybrid, local.dims)?;
    let mut provenance = BTreeMap::new();
    for (name, t) in hybrid.tensors_mut() {
        let (source, value) = if name == "global_post_embedding" {
            (Provenance::FromGlobal, global.tensor("post_embedding"))
        } else if let Some(rest) = name.strip_prefix("global_encoder.") {
            (Provenance::FromGlobal, global.tensor(&format!("encoder.{rest}")))
        } else {
            (Provenance::FromLocal, local.tensor(&name))
        };
        match value {
            Some(v) if v.shape() == t.shape() => {
                *t = v.clone();
                provenance.insert(name, source);
            }
            _ => {
                *t = uniform_init(rng, t.rows(), t.cols(), lo, hi)?;
                provenance.insert(name, Provenance::Fresh);
            }
        }
    }
    Ok((hybrid, provenance))
}
