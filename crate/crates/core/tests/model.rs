use nrm::corpus::{Batch, EncodedPair, BOS, EOS};
use nrm::model::{
    attention_weights, attention_weights_padded, context, decoder_init, decoder_step, encode, encode_post,
    sequence_log_likelihood, Dims, ModelParams, Scheme,
};
use nrm::numerics::{Matrix, Rng};
use nrm::training::batch_loss;
use proptest::prelude::*;

fn dims(v: usize) -> Dims {
    Dims {
        hidden: 3,
        embed: 2,
        attention: 3,
        stimulus: 2,
        post_vocab: v,
        response_vocab: v,
    }
}

fn model(scheme: Scheme, seed: u64) -> ModelParams {
    let mut rng = Rng::new(seed);
    ModelParams::random(scheme, dims(7), &mut rng, -0.8, 0.8).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

// scalar re-statement of the network for the step oracle

fn mv(m: &Matrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, xj) in x.iter().enumerate() {
            *o += m.get(i, j) * xj;
        }
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gru(p: &nrm::model::GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = add(&add(&mv(&p.w_z, x), &mv(&p.u_z, h)), p.b_z.data()).into_iter().map(sig).collect();
    let r: Vec<f64> = add(&add(&mv(&p.w_r, x), &mv(&p.u_r, h)), p.b_r.data()).into_iter().map(sig).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let c: Vec<f64> = add(&add(&mv(&p.w_h, x), &mv(&p.u_h, &rh)), p.b_h.data())
        .into_iter()
        .map(f64::tanh)
        .collect();
    (0..h.len()).map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i]).collect()
}

fn oracle_step(p: &ModelParams, post: &[usize], s: &[f64], y_prev: usize) -> (Vec<f64>, Vec<f64>) {
    let mut hs = Vec::new();
    let mut h = vec![0.0; p.dims.hidden];
    for &x in post {
        h = gru(&p.encoder, p.post_embedding.row(x), &h);
        hs.push(h.clone());
    }
    let a = p.attention.as_ref().unwrap();
    let scores: Vec<f64> = hs
        .iter()
        .map(|hj| {
            let u = add(&add(&mv(&a.w_a, s), &mv(&a.u_a, hj)), a.b_a.data());
            u.iter().zip(a.v_a.data()).map(|(x, v)| x.tanh() * v).sum()
        })
        .collect();
    let z: f64 = scores.iter().map(|e| e.exp()).sum();
    let mut c = vec![0.0; p.dims.hidden];
    for (hj, e) in hs.iter().zip(&scores) {
        for (ci, hv) in c.iter_mut().zip(hj) {
            *ci += e.exp() / z * hv;
        }
    }
    let e = p.response_embedding.row(y_prev);
    let mut input = e.to_vec();
    input.extend(mv(&p.stimulus, &c));
    let s_new = gru(&p.decoder, &input, s);
    let pre = add(
        &add(&add(&mv(&p.readout_state, &s_new), &mv(&p.readout_word, e)), &mv(&p.readout_context, &c)),
        p.readout_bias.data(),
    );
    let r: Vec<f64> = pre.into_iter().map(f64::tanh).collect();
    let logits = add(&mv(&p.output, &r), p.output_bias.data());
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    (s_new, logits.iter().map(|l| l.exp() / z).collect())
}

#[test]
fn decoder_step_matches_scalar_oracle() {
    let d = Dims {
        hidden: 2,
        embed: 2,
        attention: 2,
        stimulus: 2,
        post_vocab: 4,
        response_vocab: 4,
    };
    let mut rng = Rng::new(21);
    let p = ModelParams::random(Scheme::Local, d, &mut rng, -1.0, 1.0).unwrap();
    let post = [3, 2, 3];
    let enc = encode_post(&p, &post).unwrap();
    let mut state = decoder_init(&p, &enc).unwrap();
    for y in [BOS, 3, 2] {
        let out = decoder_step(&p, &state, y, &enc).unwrap();
        let (s, probs) = oracle_step(&p, &post, &state.s, y);
        assert!(close(&out.state.s, &s, 1e-14), "{:?} vs {s:?}", out.state.s);
        assert!(close(&out.probs, &probs, 1e-14), "{:?} vs {probs:?}", out.probs);
        state = out.state;
    }
}

#[test]
fn two_position_attention_by_hand() {
    let p = model(Scheme::Local, 4);
    let enc = encode_post(&p, &[5, 6]).unwrap();
    let a = p.attention.as_ref().unwrap();
    let s = [0.3, -0.2, 0.5];
    let score = |j: usize| -> f64 {
        (0..3)
            .map(|k| {
                let mut u = a.b_a.data()[k];
                for i in 0..3 {
                    u += a.w_a.get(k, i) * s[i] + a.u_a.get(k, i) * enc.states.get(j, i);
                }
                a.v_a.data()[k] * u.tanh()
            })
            .sum()
    };
    let (e0, e1) = (score(0), score(1));
    let first = 1.0 / (1.0 + (e1 - e0).exp());
    let alpha = attention_weights(a, &enc, &s).unwrap();
    assert!(close(&alpha, &[first, 1.0 - first], 1e-15), "{alpha:?}");
}

#[test]
fn single_token_post_attends_fully() {
    let p = model(Scheme::Hybrid, 5);
    let enc = encode_post(&p, &[4]).unwrap();
    let alpha = attention_weights(p.attention.as_ref().unwrap(), &enc, &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(alpha, vec![1.0]);
}

#[test]
fn zero_scoring_vector_gives_uniform_attention() {
    let mut p = model(Scheme::Local, 6);
    p.attention.as_mut().unwrap().v_a.fill(0.0);
    let enc = encode_post(&p, &[4, 5, 6, 4]).unwrap();
    let alpha = attention_weights(p.attention.as_ref().unwrap(), &enc, &[0.4, -0.4, 0.9]).unwrap();
    assert!(close(&alpha, &[0.25; 4], 1e-15));
}

#[test]
fn padded_positions_get_no_attention() {
    let p = model(Scheme::Local, 7);
    let enc = encode(&p, &[4, 5, 0, 0], &[1, 1, 0, 0]).unwrap();
    let alpha = attention_weights_padded(p.attention.as_ref().unwrap(), &enc, &[0.0; 3]).unwrap();
    assert_eq!(alpha.len(), 4);
    assert_eq!(&alpha[2..], &[0.0, 0.0]);
    assert!((alpha[0] + alpha[1] - 1.0).abs() < 1e-15);
}

#[test]
fn padding_does_not_change_the_encoding() {
    for scheme in Scheme::ALL {
        let p = model(scheme, 8);
        let plain = encode_post(&p, &[4, 6, 5]).unwrap();
        let padded = encode(&p, &[4, 6, 5, 0, 0], &[1, 1, 1, 0, 0]).unwrap();
        assert_eq!(plain.states, padded.states);
        assert_eq!(plain.summary(), padded.summary());
        let s = [0.2, 0.1, -0.3];
        assert_eq!(context(&p, &plain, &s).unwrap(), context(&p, &padded, &s).unwrap());
    }
}

#[test]
fn global_context_ignores_decoder_state() {
    let p = model(Scheme::Global, 9);
    let enc = encode_post(&p, &[4, 5, 6]).unwrap();
    let a = context(&p, &enc, &[0.0; 3]).unwrap();
    let b = context(&p, &enc, &[0.9, -0.7, 0.5]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, enc.last_state());
}

#[test]
fn hybrid_context_stacks_local_and_global_parts() {
    let p = model(Scheme::Hybrid, 10);
    let enc = encode_post(&p, &[4, 5, 6]).unwrap();
    let s = [0.3, 0.3, -0.1];
    let c = context(&p, &enc, &s).unwrap();
    let alpha = attention_weights(p.attention.as_ref().unwrap(), &enc, &s).unwrap();
    assert_eq!(c.len(), 6);
    for i in 0..3 {
        let local: f64 = (0..3).map(|j| alpha[j] * enc.states.get(j, i)).sum();
        assert!((c[i] - local).abs() < 1e-15);
        // the global half is the same vector at every position
        assert!((c[3 + i] - enc.global_summary().unwrap()[i]).abs() < 1e-15);
    }
}

#[test]
fn zero_init_matrix_gives_zero_start_state() {
    for scheme in Scheme::ALL {
        let mut p = model(scheme, 11);
        p.init.fill(0.0);
        let enc = encode_post(&p, &[5]).unwrap();
        assert_eq!(decoder_init(&p, &enc).unwrap().s, vec![0.0; 3]);
    }
}

#[test]
fn same_encoder_gives_same_states_for_glo_and_loc() {
    let loc = model(Scheme::Local, 12);
    let mut glo = model(Scheme::Global, 13);
    glo.post_embedding = loc.post_embedding.clone();
    glo.encoder = loc.encoder.clone();
    let a = encode_post(&loc, &[6, 4, 5]).unwrap();
    let b = encode_post(&glo, &[6, 4, 5]).unwrap();
    assert_eq!(a.states, b.states);
}

#[test]
fn zeroed_output_layer_is_uniform() {
    for scheme in Scheme::ALL {
        let mut p = model(scheme, 14);
        p.output.fill(0.0);
        p.output_bias.fill(0.0);
        let response = [4, 5, 6, EOS];
        let ll = sequence_log_likelihood(&p, &[4, 5], &response).unwrap();
        let expected = 4.0 * (1.0f64 / 7.0).ln();
        assert!((ll - expected).abs() < 1e-12, "{scheme}: {ll} vs {expected}");
    }
}

#[test]
fn scheme_mismatch_is_rejected() {
    let loc = model(Scheme::Local, 15);
    let glo = model(Scheme::Global, 15);
    let enc = encode_post(&loc, &[4]).unwrap();
    assert!(decoder_init(&glo, &enc).is_err());
    assert!(encode_post(&loc, &[]).is_err());
    assert!(encode_post(&loc, &[7]).is_err());
}

#[test]
fn batch_loss_is_invariant_to_row_order() {
    let p = model(Scheme::Hybrid, 16);
    let pairs = [
        EncodedPair { post: vec![4, 5], response: vec![BOS, 6, EOS] },
        EncodedPair { post: vec![6], response: vec![BOS, 4, 5, 5, EOS] },
        EncodedPair { post: vec![5, 5, 4, 6], response: vec![BOS, EOS] },
    ];
    let fwd = Batch::from_pairs(&[&pairs[0], &pairs[1], &pairs[2]]);
    let rev = Batch::from_pairs(&[&pairs[2], &pairs[0], &pairs[1]]);
    let (a, n) = batch_loss(&p, &fwd).unwrap();
    let (b, m) = batch_loss(&p, &rev).unwrap();
    assert_eq!(n, m);
    assert!((a - b).abs() < 1e-14);
}

fn scheme_strategy() -> impl Strategy<Value = Scheme> {
    prop::sample::select(Scheme::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_distribution_is_positive_and_normalized(
        scheme in scheme_strategy(),
        seed in 0u64..1000,
        post in prop::collection::vec(3usize..7, 1..6),
        y in 1usize..7,
    ) {
        let p = model(scheme, seed);
        let enc = encode_post(&p, &post).unwrap();
        let out = decoder_step(&p, &decoder_init(&p, &enc).unwrap(), y, &enc).unwrap();
        prop_assert!(out.probs.iter().all(|&q| q > 0.0));
        prop_assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if let Some(alpha) = &out.alpha {
            prop_assert_eq!(alpha.len(), post.len());
            prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_likelihood_is_the_sum_of_step_log_probs(
        scheme in scheme_strategy(),
        seed in 0u64..1000,
        post in prop::collection::vec(3usize..7, 1..5),
        response in prop::collection::vec(2usize..7, 1..6),
    ) {
        let p = model(scheme, seed);
        let ll = sequence_log_likelihood(&p, &post, &response).unwrap();
        prop_assert!(ll <= 0.0);
        let enc = encode_post(&p, &post).unwrap();
        let mut state = decoder_init(&p, &enc).unwrap();
        let mut prev = BOS;
        let mut total = 0.0;
        for &y in &response {
            let out = decoder_step(&p, &state, prev, &enc).unwrap();
            total += out.log_probs[y];
            state = out.state;
            prev = y;
        }
        prop_assert!((ll - total).abs() < 1e-12);
    }
}
