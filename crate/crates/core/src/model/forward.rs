use super::gru::{gru_forward, GruCache};
use super::{AttentionParams, ModelParams, Scheme};
use crate::corpus::BOS;
use crate::error::{NrmError, Result};
use crate::numerics::{log_sum_exp, Matrix};

/// Encoder output for one post.
///
/// `states` holds `h_1..h_T` of the (local-role) encoder, one row per
/// unmasked position. For the hybrid scheme `global_states` holds the
/// global-role encoder's states; its last row is `h_T^g`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPost {
    pub scheme: Scheme,
    pub states: Matrix,
    pub global_states: Option<Matrix>,
    /// Padded column of each state row.
    pub positions: Vec<usize>,
    pub padded_len: usize,
    /// Attended vectors `ĥ_j` (`h_j`, or `[h_j; h_T^g]` for hybrid).
    memory: Option<Matrix>,
    /// `U_a ĥ_j` for every position, reused across decode steps.
    keys: Option<Matrix>,
}

impl EncodedPost {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.row(self.len() - 1)
    }

    /// `h_T^g` (hybrid only).
    pub fn global_summary(&self) -> Option<&[f64]> {
        self.global_states.as_ref().map(|g| g.row(g.rows() - 1))
    }

    pub fn memory(&self) -> Option<&Matrix> {
        self.memory.as_ref()
    }

    /// Summary fed to the initial decoder state: `h_T`, or `[h_T; h_T^g]`.
    pub fn summary(&self) -> Vec<f64> {
        let mut c = self.last_state().to_vec();
        if let Some(g) = self.global_summary() {
            c.extend_from_slice(g);
        }
        c
    }
}

pub(crate) struct EncoderTrace {
    pub ids: Vec<usize>,
    pub local: Vec<GruCache>,
    pub global: Option<Vec<GruCache>>,
}

fn run_encoder(gru: &super::GruParams, embedding: &Matrix, ids: &[usize]) -> (Matrix, Vec<GruCache>) {
    let h = gru.hidden_dim();
    let mut states = Matrix::zeros(ids.len(), h);
    let mut caches = Vec::with_capacity(ids.len());
    let mut prev = vec![0.0; h];
    for (t, &id) in ids.iter().enumerate() {
        let c = gru_forward(gru, embedding.row(id), &prev);
        states.row_mut(t).copy_from_slice(&c.h);
        prev.clone_from(&c.h);
        caches.push(c);
    }
    (states, caches)
}

pub(crate) fn encode_traced(params: &ModelParams, ids: &[usize], mask: &[u8]) -> Result<(EncodedPost, EncoderTrace)> {
    if ids.len() != mask.len() {
        return Err(NrmError::shape("encode", format!("{} ids", ids.len()), format!("{} mask", mask.len())));
    }
    let positions: Vec<usize> = (0..ids.len()).filter(|&t| mask[t] != 0).collect();
    if positions.is_empty() {
        return Err(NrmError::InvalidArgument("post has no unmasked tokens".into()));
    }
    let kept: Vec<usize> = positions.iter().map(|&t| ids[t]).collect();
    if let Some(&bad) = kept.iter().find(|&&id| id >= params.dims.post_vocab) {
        return Err(NrmError::InvalidArgument(format!(
            "post id {bad} out of range for vocabulary of {}",
            params.dims.post_vocab
        )));
    }

    let (states, local) = run_encoder(&params.encoder, &params.post_embedding, &kept);
    let (global_states, global) = match (&params.global_encoder, &params.global_post_embedding) {
        (Some(g), Some(e)) => {
            let (s, c) = run_encoder(g, e, &kept);
            (Some(s), Some(c))
        }
        _ => (None, None),
    };

    let memory = match params.scheme {
        Scheme::Global => None,
        Scheme::Local => Some(states.clone()),
        Scheme::Hybrid => {
            let g = global_states.as_ref().expect("hybrid params carry a global encoder");
            let last = g.row(g.rows() - 1);
            let h = states.cols();
            let mut m = Matrix::zeros(states.rows(), 2 * h);
            for j in 0..states.rows() {
                let row = m.row_mut(j);
                row[..h].copy_from_slice(states.row(j));
                row[h..].copy_from_slice(last);
            }
            Some(m)
        }
    };
    let keys = match (&params.attention, &memory) {
        (Some(a), Some(m)) => Some(attention_keys(a, m)),
        _ => None,
    };

    let enc = EncodedPost {
        scheme: params.scheme,
        states,
        global_states,
        positions,
        padded_len: ids.len(),
        memory,
        keys,
    };
    Ok((
        enc,
        EncoderTrace {
            ids: kept,
            local,
            global,
        },
    ))
}

/// Runs the encoder(s) left to right over the unmasked positions, from a
/// zero initial state.
pub fn encode(params: &ModelParams, ids: &[usize], mask: &[u8]) -> Result<EncodedPost> {
    encode_traced(params, ids, mask).map(|(e, _)| e)
}

/// `encode` for an unpadded post.
pub fn encode_post(params: &ModelParams, ids: &[usize]) -> Result<EncodedPost> {
    encode(params, ids, &vec![1; ids.len()])
}

fn attention_keys(a: &AttentionParams, memory: &Matrix) -> Matrix {
    let mut keys = Matrix::zeros(memory.rows(), a.u_a.rows());
    for j in 0..memory.rows() {
        a.u_a.matvec_acc(memory.row(j), keys.row_mut(j));
    }
    keys
}

pub(crate) struct AttentionTrace {
    /// `tanh(W_a s + U_a ĥ_j + b_a)`, one row per position.
    pub hidden: Matrix,
    pub alpha: Vec<f64>,
}

fn attend(a: &AttentionParams, keys: &Matrix, s_prev: &[f64]) -> AttentionTrace {
    let mut query = a.b_a.data().to_vec();
    a.w_a.matvec_acc(s_prev, &mut query);
    let mut hidden = keys.clone();
    let mut scores = Vec::with_capacity(keys.rows());
    for j in 0..keys.rows() {
        let row = hidden.row_mut(j);
        for (u, q) in row.iter_mut().zip(&query) {
            *u = (*u + q).tanh();
        }
        scores.push(crate::numerics::dot(row, a.v_a.data()));
    }
    // non-finite scores only arise from diverged parameters; let NaN flow
    // through so the training loop reports it
    let alpha = crate::numerics::softmax_stable(&scores).unwrap_or_else(|_| vec![f64::NAN; scores.len()]);
    AttentionTrace { hidden, alpha }
}

/// Additive attention `α = softmax_j(v_aᵀ tanh(W_a s + U_a ĥ_j + b_a))` over
/// the unmasked positions of `enc`.
pub fn attention_weights(a: &AttentionParams, enc: &EncodedPost, s_prev: &[f64]) -> Result<Vec<f64>> {
    let memory = enc
        .memory
        .as_ref()
        .ok_or_else(|| NrmError::InvalidArgument("global scheme has no attention".into()))?;
    if a.u_a.cols() != memory.cols() || a.w_a.cols() != s_prev.len() {
        return Err(NrmError::shape(
            "attention_weights",
            format!("U_a {} / W_a {}", a.u_a.shape_str(), a.w_a.shape_str()),
            format!("memory {} / state {}", memory.shape_str(), s_prev.len()),
        ));
    }
    Ok(attend(a, &attention_keys(a, memory), s_prev).alpha)
}

/// `attention_weights` scattered onto the padded layout; masked columns
/// are exactly zero.
pub fn attention_weights_padded(a: &AttentionParams, enc: &EncodedPost, s_prev: &[f64]) -> Result<Vec<f64>> {
    let alpha = attention_weights(a, enc, s_prev)?;
    let mut out = vec![0.0; enc.padded_len];
    for (&pos, w) in enc.positions.iter().zip(alpha) {
        out[pos] = w;
    }
    Ok(out)
}

fn check_scheme(params: &ModelParams, enc: &EncodedPost) -> Result<()> {
    if params.scheme != enc.scheme {
        return Err(NrmError::InvalidArgument(format!(
            "post encoded with scheme {} but model uses {}",
            enc.scheme, params.scheme
        )));
    }
    Ok(())
}

fn context_traced(params: &ModelParams, enc: &EncodedPost, s_prev: &[f64]) -> (Vec<f64>, Option<AttentionTrace>) {
    match (&params.attention, &enc.keys, &enc.memory) {
        (Some(a), Some(keys), Some(memory)) => {
            let trace = attend(a, keys, s_prev);
            let mut c = vec![0.0; memory.cols()];
            memory.matvec_t_acc(&trace.alpha, &mut c);
            (c, Some(trace))
        }
        _ => (enc.last_state().to_vec(), None),
    }
}

/// Context vector for the next decoder step: `h_T` (global), `Σ α_j h_j`
/// (local) or `Σ α_j [h_j; h_T^g]` (hybrid).
pub fn context(params: &ModelParams, enc: &EncodedPost, s_prev: &[f64]) -> Result<Vec<f64>> {
    check_scheme(params, enc)?;
    Ok(context_traced(params, enc, s_prev).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub s: Vec<f64>,
    pub t: usize,
}

/// `s_0 = tanh(W_0 · summary)`.
pub fn decoder_init(params: &ModelParams, enc: &EncodedPost) -> Result<DecoderState> {
    check_scheme(params, enc)?;
    let s = params
        .init
        .matvec(&enc.summary())
        .into_iter()
        .map(f64::tanh)
        .collect();
    Ok(DecoderState { s, t: 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: DecoderState,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub context: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
}

pub(crate) struct StepTrace {
    pub y_prev: usize,
    pub s_prev: Vec<f64>,
    pub context: Vec<f64>,
    pub attention: Option<AttentionTrace>,
    pub gru: GruCache,
    pub readout: Vec<f64>,
    pub log_probs: Vec<f64>,
}

pub(crate) fn step_traced(params: &ModelParams, enc: &EncodedPost, s_prev: &[f64], y_prev: usize) -> StepTrace {
    let (context, attention) = context_traced(params, enc, s_prev);
    let stimulus = params.stimulus.matvec(&context);
    let word = params.response_embedding.row(y_prev);
    let mut input = Vec::with_capacity(word.len() + stimulus.len());
    input.extend_from_slice(word);
    input.extend_from_slice(&stimulus);
    let gru = gru_forward(&params.decoder, &input, s_prev);

    let mut pre = params.readout_bias.data().to_vec();
    params.readout_state.matvec_acc(&gru.h, &mut pre);
    params.readout_word.matvec_acc(word, &mut pre);
    params.readout_context.matvec_acc(&context, &mut pre);
    let readout: Vec<f64> = pre.into_iter().map(f64::tanh).collect();

    let mut logits = params.output_bias.data().to_vec();
    params.output.matvec_acc(&readout, &mut logits);
    let norm = log_sum_exp(&logits).unwrap_or(f64::NAN);
    let log_probs = logits.into_iter().map(|l| l - norm).collect();

    StepTrace {
        y_prev,
        s_prev: s_prev.to_vec(),
        context,
        attention,
        gru,
        readout,
        log_probs,
    }
}

/// One decoder step: context from `s_{t-1}`, GRU input `[E_y[y_{t-1}]; L c_t]`,
/// readout `tanh(W_s s_t + W_y E_y[y_{t-1}] + W_c c_t + b_r)` and softmax
/// over the response vocabulary.
pub fn decoder_step(params: &ModelParams, state: &DecoderState, y_prev: usize, enc: &EncodedPost) -> Result<StepOutput> {
    check_scheme(params, enc)?;
    if y_prev >= params.dims.response_vocab {
        return Err(NrmError::InvalidArgument(format!(
            "response id {y_prev} out of range for vocabulary of {}",
            params.dims.response_vocab
        )));
    }
    if state.s.len() != params.dims.hidden {
        return Err(NrmError::shape("decoder_step state", params.dims.hidden.to_string(), state.s.len().to_string()));
    }
    let trace = step_traced(params, enc, &state.s, y_prev);
    Ok(StepOutput {
        state: DecoderState {
            s: trace.gru.h,
            t: state.t + 1,
        },
        probs: trace.log_probs.iter().map(|l| l.exp()).collect(),
        log_probs: trace.log_probs,
        context: trace.context,
        alpha: trace.attention.map(|a| a.alpha),
    })
}

/// `Σ_t log p(y_t | y_<t, x)` under teacher forcing. `<s>` is prepended
/// internally; every id of `response` is scored, so a complete response
/// should end with `</s>`.
pub fn sequence_log_likelihood(params: &ModelParams, post: &[usize], response: &[usize]) -> Result<f64> {
    if response.is_empty() {
        return Err(NrmError::InvalidArgument("empty response".into()));
    }
    let enc = encode_post(params, post)?;
    let mut state = decoder_init(params, &enc)?;
    let mut prev = BOS;
    let mut total = 0.0;
    for &y in response {
        if y >= params.dims.response_vocab {
            return Err(NrmError::InvalidArgument(format!("response id {y} out of range")));
        }
        let out = decoder_step(params, &state, prev, &enc)?;
        total += out.log_probs[y];
        state = out.state;
        prev = y;
    }
    Ok(total)
}
