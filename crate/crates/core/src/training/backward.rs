use std::ops::{Deref, DerefMut};

use rayon::prelude::*;

use crate::corpus::Batch;
use crate::error::{NrmError, Result};
use crate::model::{
    decoder_init, decoder_step, encode_post, encode_traced, gru_backward, EncodedPost, EncoderTrace, GruCache,
    GruParams, ModelParams, Scheme, StepTrace,
};
use crate::numerics::Matrix;

/// Gradient of the loss, one tensor per model tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(ModelParams);

impl Gradients {
    pub fn zeros_for(params: &ModelParams) -> Self {
        Gradients(params.zeros_like())
    }

    pub fn global_norm(&self) -> f64 {
        self.0.tensors().iter().map(|(_, t)| t.norm_sq()).sum::<f64>().sqrt()
    }

    pub fn add(&mut self, other: &Gradients) {
        for ((_, a), (_, b)) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            a.axpy(1.0, b).expect("gradients share one layout");
        }
    }

    pub fn into_inner(self) -> ModelParams {
        self.0
    }
}

impl Deref for Gradients {
    type Target = ModelParams;

    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl DerefMut for Gradients {
    fn deref_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }
}

fn check_row(params: &ModelParams, response: &[usize]) -> Result<()> {
    if response.len() < 2 {
        return Err(NrmError::InvalidArgument("framed response needs <s> and at least one target".into()));
    }
    if let Some(&bad) = response.iter().find(|&&y| y >= params.dims.response_vocab) {
        return Err(NrmError::InvalidArgument(format!("response id {bad} out of range")));
    }
    Ok(())
}

/// Negative log-likelihood of one framed response (`<s> y_1 .. </s>`),
/// summed over its targets.
pub fn row_nll(params: &ModelParams, post: &[usize], response: &[usize]) -> Result<f64> {
    check_row(params, response)?;
    let enc = encode_post(params, post)?;
    let mut state = decoder_init(params, &enc)?;
    let mut nll = 0.0;
    for w in response.windows(2) {
        let out = decoder_step(params, &state, w[0], &enc)?;
        nll -= out.log_probs[w[1]];
        state = out.state;
    }
    Ok(nll)
}

/// Mean per-token negative log-likelihood over the unmasked response
/// tokens of the batch, and the token count.
pub fn batch_loss(params: &ModelParams, batch: &Batch) -> Result<(f64, usize)> {
    let tokens = batch.token_count();
    if tokens == 0 {
        return Err(NrmError::InvalidArgument("batch has no response tokens".into()));
    }
    let mut total = 0.0;
    for i in 0..batch.len() {
        let (post, response) = batch.row(i);
        total += row_nll(params, post, response)?;
    }
    Ok((total / tokens as f64, tokens))
}

fn add_to_row(m: &mut Matrix, row: usize, v: &[f64]) {
    for (a, b) in m.row_mut(row).iter_mut().zip(v) {
        *a += b;
    }
}

fn add_vec(m: &mut Matrix, v: &[f64]) {
    for (a, b) in m.data_mut().iter_mut().zip(v) {
        *a += b;
    }
}

fn encoder_backward(
    gru: &GruParams,
    grads: &mut GruParams,
    embedding_grad: &mut Matrix,
    caches: &[GruCache],
    ids: &[usize],
    d_states: &Matrix,
) {
    let h = gru.hidden_dim();
    let mut dh = vec![0.0; h];
    for j in (0..caches.len()).rev() {
        for (a, b) in dh.iter_mut().zip(d_states.row(j)) {
            *a += b;
        }
        let mut dx = vec![0.0; gru.input_dim()];
        let mut dh_prev = vec![0.0; h];
        gru_backward(gru, &caches[j], &dh, grads, &mut dx, &mut dh_prev);
        add_to_row(embedding_grad, ids[j], &dx);
        dh = dh_prev;
    }
}

/// Forward and backward pass for one row. Gradients of `scale * nll` are
/// accumulated into `g`; returns the unscaled nll.
fn row_backward(params: &ModelParams, post: &[usize], response: &[usize], scale: f64, g: &mut ModelParams) -> Result<f64> {
    check_row(params, response)?;
    let (enc, etrace): (EncodedPost, EncoderTrace) = encode_traced(params, post, &vec![1; post.len()])?;
    let h = params.dims.hidden;
    let emb = params.dims.embed;
    let summary = enc.summary();
    let s0: Vec<f64> = params.init.matvec(&summary).into_iter().map(f64::tanh).collect();

    let mut steps: Vec<(StepTrace, usize)> = Vec::with_capacity(response.len() - 1);
    let mut nll = 0.0;
    let mut s = s0.clone();
    for w in response.windows(2) {
        let tr = crate::model::step_traced(params, &enc, &s, w[0]);
        nll -= tr.log_probs[w[1]];
        s.clone_from(&tr.gru.h);
        steps.push((tr, w[1]));
    }

    let t_len = enc.len();
    let ctx_dim = params.context_dim();
    let mut d_memory = Matrix::zeros(t_len, ctx_dim);
    let mut d_keys = params.attention.as_ref().map(|a| Matrix::zeros(t_len, a.u_a.rows()));
    let mut d_last = vec![0.0; h];
    let mut ds_next = vec![0.0; h];

    for (tr, y) in steps.iter().rev() {
        let mut ds = std::mem::take(&mut ds_next);

        let mut dlogits: Vec<f64> = tr.log_probs.iter().map(|l| l.exp() * scale).collect();
        dlogits[*y] -= scale;
        g.output.add_outer(&dlogits, &tr.readout);
        add_vec(&mut g.output_bias, &dlogits);
        let mut dread = vec![0.0; h];
        params.output.matvec_t_acc(&dlogits, &mut dread);

        let dpre: Vec<f64> = dread.iter().zip(&tr.readout).map(|(d, r)| d * (1.0 - r * r)).collect();
        let word = params.response_embedding.row(tr.y_prev);
        g.readout_state.add_outer(&dpre, &tr.gru.h);
        params.readout_state.matvec_t_acc(&dpre, &mut ds);
        g.readout_word.add_outer(&dpre, word);
        let mut dword = vec![0.0; emb];
        params.readout_word.matvec_t_acc(&dpre, &mut dword);
        g.readout_context.add_outer(&dpre, &tr.context);
        let mut dc = vec![0.0; ctx_dim];
        params.readout_context.matvec_t_acc(&dpre, &mut dc);
        add_vec(&mut g.readout_bias, &dpre);

        let mut dinput = vec![0.0; emb + params.dims.stimulus];
        let mut ds_prev = vec![0.0; h];
        gru_backward(&params.decoder, &tr.gru, &ds, &mut g.decoder, &mut dinput, &mut ds_prev);
        for (a, b) in dword.iter_mut().zip(&dinput[..emb]) {
            *a += b;
        }
        let dstim = &dinput[emb..];
        g.stimulus.add_outer(dstim, &tr.context);
        params.stimulus.matvec_t_acc(dstim, &mut dc);
        add_to_row(&mut g.response_embedding, tr.y_prev, &dword);

        match (&tr.attention, &params.attention, enc.memory()) {
            (Some(att), Some(a), Some(memory)) => {
                let ga = g.attention.as_mut().expect("gradient layout mirrors params");
                let d_keys = d_keys.as_mut().expect("attention schemes track key gradients");
                let dalpha: Vec<f64> = (0..t_len).map(|j| crate::numerics::dot(&dc, memory.row(j))).collect();
                for j in 0..t_len {
                    let aj = att.alpha[j];
                    for (m, c) in d_memory.row_mut(j).iter_mut().zip(&dc) {
                        *m += aj * c;
                    }
                }
                let mean: f64 = att.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                let mut dq = vec![0.0; a.w_a.rows()];
                for j in 0..t_len {
                    let de = att.alpha[j] * (dalpha[j] - mean);
                    if de == 0.0 {
                        continue;
                    }
                    let hidden = att.hidden.row(j);
                    let v = a.v_a.data();
                    let gv = ga.v_a.data_mut();
                    let dk = d_keys.row_mut(j);
                    for k in 0..hidden.len() {
                        gv[k] += de * hidden[k];
                        let dp = de * v[k] * (1.0 - hidden[k] * hidden[k]);
                        dq[k] += dp;
                        dk[k] += dp;
                    }
                }
                ga.w_a.add_outer(&dq, &tr.s_prev);
                add_vec(&mut ga.b_a, &dq);
                a.w_a.matvec_t_acc(&dq, &mut ds_prev);
            }
            _ => {
                for (a, b) in d_last.iter_mut().zip(&dc) {
                    *a += b;
                }
            }
        }
        ds_next = ds_prev;
    }

    // s_0 = tanh(W_0 summary)
    let da0: Vec<f64> = ds_next.iter().zip(&s0).map(|(d, s)| d * (1.0 - s * s)).collect();
    g.init.add_outer(&da0, &summary);
    let mut d_summary = vec![0.0; ctx_dim];
    params.init.matvec_t_acc(&da0, &mut d_summary);

    if let (Some(a), Some(d_keys), Some(memory)) = (&params.attention, &d_keys, enc.memory()) {
        let ga = g.attention.as_mut().expect("gradient layout mirrors params");
        for j in 0..t_len {
            ga.u_a.add_outer(d_keys.row(j), memory.row(j));
            a.u_a.matvec_t_acc(d_keys.row(j), d_memory.row_mut(j));
        }
    }

    let mut d_states = Matrix::zeros(t_len, h);
    let mut d_global_last = vec![0.0; h];
    match params.scheme {
        Scheme::Global => {
            add_to_row(&mut d_states, t_len - 1, &d_last);
            add_to_row(&mut d_states, t_len - 1, &d_summary);
        }
        Scheme::Local => {
            d_states = d_memory;
            add_to_row(&mut d_states, t_len - 1, &d_summary);
        }
        Scheme::Hybrid => {
            for j in 0..t_len {
                let row = d_memory.row(j);
                add_to_row(&mut d_states, j, &row[..h]);
                for (a, b) in d_global_last.iter_mut().zip(&row[h..]) {
                    *a += b;
                }
            }
            add_to_row(&mut d_states, t_len - 1, &d_summary[..h]);
            for (a, b) in d_global_last.iter_mut().zip(&d_summary[h..]) {
                *a += b;
            }
        }
    }

    encoder_backward(&params.encoder, &mut g.encoder, &mut g.post_embedding, &etrace.local, &etrace.ids, &d_states);
    if let (Some(gp), Some(caches)) = (&params.global_encoder, &etrace.global) {
        let mut d_global = Matrix::zeros(t_len, h);
        d_global.row_mut(t_len - 1).copy_from_slice(&d_global_last);
        let gg = g.global_encoder.as_mut().expect("gradient layout mirrors params");
        let ge = g.global_post_embedding.as_mut().expect("gradient layout mirrors params");
        encoder_backward(gp, gg, ge, caches, &etrace.ids, &d_global);
    }

    Ok(nll)
}

/// Exact gradient of `batch_loss` with respect to every tensor.
pub fn backward(params: &ModelParams, batch: &Batch) -> Result<(f64, Gradients)> {
    backward_threaded(params, batch, 1)
}

/// `backward` with per-row work spread over `threads` workers. Row
/// gradients are summed in row order, so the result does not depend on the
/// thread count.
pub fn backward_threaded(params: &ModelParams, batch: &Batch, threads: usize) -> Result<(f64, Gradients)> {
    let tokens = batch.token_count();
    if tokens == 0 {
        return Err(NrmError::InvalidArgument("batch has no response tokens".into()));
    }
    let scale = 1.0 / tokens as f64;
    let one_row = |i: usize| -> Result<(f64, ModelParams)> {
        let (post, response) = batch.row(i);
        let mut g = params.zeros_like();
        let nll = row_backward(params, post, response, scale, &mut g)?;
        Ok((nll, g))
    };
    let rows: Vec<Result<(f64, ModelParams)>> = if threads > 1 && batch.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| NrmError::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| (0..batch.len()).into_par_iter().map(one_row).collect())
    } else {
        (0..batch.len()).map(one_row).collect()
    };

    let mut total = 0.0;
    let mut grads = Gradients::zeros_for(params);
    for r in rows {
        let (nll, g) = r?;
        total += nll;
        grads.add(&Gradients(g));
    }
    Ok((total * scale, grads))
}
