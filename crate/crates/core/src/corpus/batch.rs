use super::{PostResponsePair, Vocabulary, PAD};
use crate::error::{NrmError, Result};
use crate::numerics::Rng;

/// A pair mapped to ids. `response` is framed as `<s> ... </s>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub post: Vec<usize>,
    pub response: Vec<usize>,
}

impl EncodedPair {
    /// Number of predicted response tokens (everything after `<s>`).
    pub fn target_len(&self) -> usize {
        self.response.len().saturating_sub(1)
    }
}

/// Encodes pairs with the per-side vocabularies. Responses longer than
/// `max_response_len` content tokens are truncated before framing.
pub fn encode_pairs(
    pairs: &[PostResponsePair],
    post_vocab: &Vocabulary,
    response_vocab: &Vocabulary,
    max_response_len: Option<usize>,
) -> Vec<EncodedPair> {
    pairs
        .iter()
        .map(|p| {
            let limit = max_response_len.unwrap_or(usize::MAX).min(p.response.len());
            EncodedPair {
                post: post_vocab.encode(&p.post, false),
                response: response_vocab.encode(&p.response[..limit], true),
            }
        })
        .collect()
}

/// Padded minibatch. Masks are 1 exactly on the first `length` columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub post_ids: Vec<Vec<usize>>,
    pub post_mask: Vec<Vec<u8>>,
    pub post_lengths: Vec<usize>,
    pub response_ids: Vec<Vec<usize>>,
    pub response_mask: Vec<Vec<u8>>,
    pub response_lengths: Vec<usize>,
}

fn pad_rows(rows: &[&[usize]]) -> (Vec<Vec<usize>>, Vec<Vec<u8>>, Vec<usize>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(rows.len());
    let mut mask = Vec::with_capacity(rows.len());
    for r in rows {
        let mut row = r.to_vec();
        row.resize(width, PAD);
        ids.push(row);
        let mut m = vec![1u8; r.len()];
        m.resize(width, 0);
        mask.push(m);
    }
    (ids, mask, rows.iter().map(|r| r.len()).collect())
}

impl Batch {
    pub fn from_pairs(pairs: &[&EncodedPair]) -> Self {
        let posts: Vec<&[usize]> = pairs.iter().map(|p| p.post.as_slice()).collect();
        let responses: Vec<&[usize]> = pairs.iter().map(|p| p.response.as_slice()).collect();
        let (post_ids, post_mask, post_lengths) = pad_rows(&posts);
        let (response_ids, response_mask, response_lengths) = pad_rows(&responses);
        Batch {
            post_ids,
            post_mask,
            post_lengths,
            response_ids,
            response_mask,
            response_lengths,
        }
    }

    pub fn len(&self) -> usize {
        self.post_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.post_ids.is_empty()
    }

    /// Unpadded post ids and framed response ids of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[usize]) {
        (
            &self.post_ids[i][..self.post_lengths[i]],
            &self.response_ids[i][..self.response_lengths[i]],
        )
    }

    pub fn token_count(&self) -> usize {
        self.response_lengths.iter().map(|l| l.saturating_sub(1)).sum()
    }
}

/// Shuffles with `rng`, then cuts consecutive batches of `batch_size`
/// (the last one may be short).
pub fn make_batches(pairs: &[EncodedPair], batch_size: usize, rng: &mut Rng) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(NrmError::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.shuffle(&mut order);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let rows: Vec<&EncodedPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&rows)
        })
        .collect())
}
