//! Response generation: greedy decoding, beam search, the per-first-word
//! multi-response mode and a brute-force oracle for small vocabularies.
//!
//! Scores are raw sums of log-probabilities (no length normalisation).
//! Score ties are broken by lexicographic order of the token ids. `<pad>`
//! and `<s>` are never generated; `<unk>` can be suppressed as well.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::corpus::{Vocabulary, BOS, EOS, PAD, UNK};
use crate::error::{NrmError, Result};
use crate::model::{decoder_init, decoder_step, encode_post, DecoderState, EncodedPost, ModelParams};

pub const DEFAULT_BEAM: usize = 10;
pub const DEFAULT_MULTI_BEAM: usize = 500;
pub const DEFAULT_MAX_LEN: usize = 30;

/// Largest candidate space `exhaustive_oracle` will enumerate.
pub const ORACLE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeOptions {
    pub suppress_unk: bool,
}

impl DecodeOptions {
    fn allowed(&self, id: usize) -> bool {
        id != PAD && id != BOS && !(self.suppress_unk && id == UNK)
    }
}

/// A decoded response. `tokens` excludes `<s>` and ends with `</s>` when
/// the hypothesis finished before the length cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

impl Response {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Tab-separated `rank  log_prob  text` line.
    pub fn format_line(&self, rank: usize, vocab: &Vocabulary) -> String {
        format!("{rank}\t{:.6}\t{}", self.log_prob, vocab.decode(&self.tokens).join(" "))
    }
}

/// Partial response during beam search.
#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: DecoderState,
    pub finished: bool,
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.tokens.iter().map(usize::to_string).collect();
        write!(f, "{:.6}\t{}", self.log_prob, ids.join(" "))
    }
}

/// Descending score, then ascending id sequence.
fn rank_order(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_tokens.cmp(b_tokens))
}

fn prefix_plus_cmp(a: &[usize], a_next: Option<usize>, b: &[usize], b_next: Option<usize>) -> Ordering {
    a.iter()
        .copied()
        .chain(a_next)
        .cmp(b.iter().copied().chain(b_next))
}

fn prepare(params: &ModelParams, post: &[usize]) -> Result<(EncodedPost, DecoderState)> {
    let enc = encode_post(params, post)?;
    let state = decoder_init(params, &enc)?;
    Ok((enc, state))
}

/// Argmax decoding from `<s>`; stops after `</s>` or `max_len` tokens.
/// Ties go to the smallest id.
pub fn greedy_decode(params: &ModelParams, post: &[usize], max_len: usize, opts: &DecodeOptions) -> Result<Response> {
    let (enc, mut state) = prepare(params, post)?;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut prev = BOS;
    while tokens.len() < max_len {
        let out = decoder_step(params, &state, prev, &enc)?;
        let mut best: Option<(usize, f64)> = None;
        for (id, &lp) in out.log_probs.iter().enumerate() {
            if opts.allowed(id) && best.is_none_or(|(_, b)| lp > b) {
                best = Some((id, lp));
            }
        }
        let (id, lp) = best.ok_or_else(|| NrmError::InvalidArgument("no generatable tokens".into()))?;
        tokens.push(id);
        log_prob += lp;
        state = out.state;
        prev = id;
        if id == EOS {
            break;
        }
    }
    Ok(Response { tokens, log_prob })
}

enum Candidate {
    Keep(usize),
    Extend { parent: usize, token: usize, score: f64 },
}

/// Left-to-right beam search. At every step all unfinished hypotheses are
/// extended over the vocabulary, and the best `beam` of those extensions
/// together with the already finished hypotheses survive. Returns the
/// final beam, best first.
pub fn beam_search(
    params: &ModelParams,
    post: &[usize],
    beam: usize,
    max_len: usize,
    opts: &DecodeOptions,
) -> Result<Vec<Response>> {
    if beam == 0 {
        return Err(NrmError::InvalidArgument("beam width must be at least 1".into()));
    }
    let (enc, state) = prepare(params, post)?;
    let mut hyps = vec![BeamHypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
        finished: false,
    }];

    for _ in 0..max_len {
        if hyps.iter().all(|h| h.finished) {
            break;
        }
        let mut candidates = Vec::new();
        let mut next_states = Vec::with_capacity(hyps.len());
        for (i, h) in hyps.iter().enumerate() {
            if h.finished {
                candidates.push(Candidate::Keep(i));
                next_states.push(None);
                continue;
            }
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let out = decoder_step(params, &h.state, prev, &enc)?;
            for (id, &lp) in out.log_probs.iter().enumerate() {
                if opts.allowed(id) {
                    candidates.push(Candidate::Extend {
                        parent: i,
                        token: id,
                        score: h.log_prob + lp,
                    });
                }
            }
            next_states.push(Some(out.state));
        }

        let key = |c: &Candidate| match *c {
            Candidate::Keep(i) => (hyps[i].log_prob, &hyps[i].tokens[..], None),
            Candidate::Extend { parent, token, score } => (score, &hyps[parent].tokens[..], Some(token)),
        };
        let cmp = |a: &Candidate, b: &Candidate| {
            let (sa, ta, na) = key(a);
            let (sb, tb, nb) = key(b);
            sb.total_cmp(&sa).then_with(|| prefix_plus_cmp(ta, na, tb, nb))
        };
        if candidates.len() > beam {
            candidates.select_nth_unstable_by(beam - 1, cmp);
            candidates.truncate(beam);
        }
        candidates.sort_by(cmp);

        hyps = candidates
            .into_iter()
            .map(|c| match c {
                Candidate::Keep(i) => hyps[i].clone(),
                Candidate::Extend { parent, token, score } => {
                    let p = &hyps[parent];
                    let mut tokens = Vec::with_capacity(p.tokens.len() + 1);
                    tokens.extend_from_slice(&p.tokens);
                    tokens.push(token);
                    BeamHypothesis {
                        tokens,
                        log_prob: score,
                        state: next_states[parent].clone().expect("extended hypotheses were stepped"),
                        finished: token == EOS,
                    }
                }
            })
            .collect();
    }

    Ok(hyps
        .into_iter()
        .map(|h| Response {
            tokens: h.tokens,
            log_prob: h.log_prob,
        })
        .collect())
}

/// Beam search followed by keeping the best hypothesis for each distinct
/// first token, best first.
pub fn multi_response(
    params: &ModelParams,
    post: &[usize],
    beam: usize,
    max_len: usize,
    opts: &DecodeOptions,
) -> Result<Vec<Response>> {
    let mut groups: BTreeMap<usize, Response> = BTreeMap::new();
    for r in beam_search(params, post, beam, max_len, opts)? {
        let Some(&first) = r.tokens.first() else { continue };
        match groups.get(&first) {
            Some(best) if rank_order(best.log_prob, &best.tokens, r.log_prob, &r.tokens) != Ordering::Greater => {}
            _ => {
                groups.insert(first, r);
            }
        }
    }
    let mut out: Vec<Response> = groups.into_values().collect();
    out.sort_by(|a, b| rank_order(a.log_prob, &a.tokens, b.log_prob, &b.tokens));
    Ok(out)
}

/// Best sequence over every response of at most `max_len` tokens that
/// either ends in `</s>` or has exactly `max_len` tokens. Refuses when
/// `|V|^max_len` exceeds `ORACLE_LIMIT`.
pub fn exhaustive_oracle(
    params: &ModelParams,
    post: &[usize],
    max_len: usize,
    opts: &DecodeOptions,
) -> Result<Response> {
    let v = params.dims.response_vocab as u64;
    match u32::try_from(max_len).ok().and_then(|n| v.checked_pow(n)) {
        Some(n) if n <= ORACLE_LIMIT => {}
        _ => {
            return Err(NrmError::InvalidArgument(format!(
                "exhaustive search over {v}^{max_len} sequences exceeds the limit of {ORACLE_LIMIT}"
            )))
        }
    }
    let (enc, state) = prepare(params, post)?;
    let mut best = Response {
        tokens: Vec::new(),
        log_prob: f64::NEG_INFINITY,
    };
    if max_len == 0 {
        best.log_prob = 0.0;
        return Ok(best);
    }
    let mut prefix = Vec::new();
    search(params, &enc, opts, &state, 0.0, max_len, &mut prefix, &mut best)?;
    Ok(best)
}

// Depth-first in lexicographic order, so among equal scores the first
// complete sequence seen is the lexicographically smallest.
#[allow(clippy::too_many_arguments)]
fn search(
    params: &ModelParams,
    enc: &EncodedPost,
    opts: &DecodeOptions,
    state: &DecoderState,
    score: f64,
    max_len: usize,
    prefix: &mut Vec<usize>,
    best: &mut Response,
) -> Result<()> {
    let prev = prefix.last().copied().unwrap_or(BOS);
    let out = decoder_step(params, state, prev, enc)?;
    for (id, &lp) in out.log_probs.iter().enumerate() {
        if !opts.allowed(id) {
            continue;
        }
        let s = score + lp;
        prefix.push(id);
        if id == EOS || prefix.len() == max_len {
            if s > best.log_prob {
                best.tokens.clone_from(prefix);
                best.log_prob = s;
            }
        } else if s > best.log_prob {
            // log-probs are non-positive, so a prefix already below the
            // incumbent cannot overtake it
            search(params, enc, opts, &out.state, s, max_len, prefix, best)?;
        }
        prefix.pop();
    }
    Ok(())
}
