use nrm::corpus::{Batch, EncodedPair, BOS, EOS};
use nrm::error::NrmError;
use nrm::model::{encode_post, sequence_log_likelihood, Dims, ModelParams, Scheme};
use nrm::numerics::Rng;
use nrm::training::{
    backward, backward_threaded, batch_loss, init_hybrid_from_pretrained, init_params, sgd_step, train, Gradients,
    Provenance, TrainConfig,
};

fn dims() -> Dims {
    Dims {
        hidden: 4,
        embed: 3,
        attention: 4,
        stimulus: 3,
        post_vocab: 9,
        response_vocab: 9,
    }
}

fn pairs() -> Vec<EncodedPair> {
    vec![
        EncodedPair { post: vec![4, 5], response: vec![BOS, 6, 7, EOS] },
        EncodedPair { post: vec![6, 6, 8], response: vec![BOS, 4, EOS] },
        EncodedPair { post: vec![7], response: vec![BOS, 8, 5, 5, EOS] },
        EncodedPair { post: vec![8, 4, 4, 5], response: vec![BOS, EOS] },
        EncodedPair { post: vec![5, 7], response: vec![BOS, 6, EOS] },
    ]
}

fn batch_of(pairs: &[EncodedPair]) -> Batch {
    Batch::from_pairs(&pairs.iter().collect::<Vec<_>>())
}

fn random(scheme: Scheme, seed: u64) -> ModelParams {
    init_params(scheme, dims(), &mut Rng::new(seed), -0.3, 0.3).unwrap()
}

#[test]
fn uniform_model_loss_is_log_vocab() {
    for scheme in Scheme::ALL {
        let mut p = random(scheme, 1);
        p.output.fill(0.0);
        p.output_bias.fill(0.0);
        let (loss, tokens) = batch_loss(&p, &batch_of(&pairs())).unwrap();
        assert_eq!(tokens, 12);
        assert!((loss - 9f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn batch_loss_is_mean_negative_log_likelihood() {
    let p = random(Scheme::Local, 2);
    let data = pairs();
    let mut total = 0.0;
    let mut tokens = 0;
    for pair in &data {
        total -= sequence_log_likelihood(&p, &pair.post, &pair.response[1..]).unwrap();
        tokens += pair.target_len();
    }
    let (loss, n) = batch_loss(&p, &batch_of(&data)).unwrap();
    assert_eq!(n, tokens);
    assert!((loss - total / tokens as f64).abs() < 1e-13);
}

#[test]
fn split_batches_combine_by_token_weight() {
    let p = random(Scheme::Hybrid, 3);
    let data = pairs();
    let (whole, n) = batch_loss(&p, &batch_of(&data)).unwrap();
    let (a, na) = batch_loss(&p, &batch_of(&data[..2])).unwrap();
    let (b, nb) = batch_loss(&p, &batch_of(&data[2..])).unwrap();
    assert_eq!(na + nb, n);
    assert!((whole - (a * na as f64 + b * nb as f64) / n as f64).abs() < 1e-13);
}

#[test]
fn backward_reports_the_batch_loss() {
    for scheme in Scheme::ALL {
        let p = random(scheme, 4);
        let batch = batch_of(&pairs());
        let (loss, _) = backward(&p, &batch).unwrap();
        assert!((loss - batch_loss(&p, &batch).unwrap().0).abs() < 1e-13);
    }
}

#[test]
fn unused_rows_get_zero_gradient() {
    let p = random(Scheme::Local, 5);
    // id 3 (<unk>) appears nowhere, on either side
    let (_, g) = backward(&p, &batch_of(&pairs())).unwrap();
    assert!(g.response_embedding.row(3).iter().all(|&v| v == 0.0));
    assert!(g.post_embedding.row(3).iter().all(|&v| v == 0.0));
    // </s> is a target but never an input
    assert!(g.response_embedding.row(EOS).iter().all(|&v| v == 0.0));
}

#[test]
fn global_scheme_has_no_attention_gradient() {
    let p = random(Scheme::Global, 6);
    let (_, g) = backward(&p, &batch_of(&pairs())).unwrap();
    assert!(g.attention.is_none());
    assert!(g.tensors().iter().all(|(n, _)| !n.starts_with("attention.")));
}

#[test]
fn threaded_backward_is_bitwise_identical() {
    for scheme in Scheme::ALL {
        let p = random(scheme, 7);
        let batch = batch_of(&pairs());
        let (l1, g1) = backward(&p, &batch).unwrap();
        for threads in [2, 3, 8] {
            let (l2, g2) = backward_threaded(&p, &batch, threads).unwrap();
            assert_eq!(l1.to_bits(), l2.to_bits());
            assert_eq!(g1, g2);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let mut p = random(Scheme::Hybrid, 8);
    let before = p.clone();
    let (_, mut g) = backward(&p, &batch_of(&pairs())).unwrap();
    sgd_step(&mut p, &mut g, 0.0, 1.0).unwrap();
    assert_eq!(p, before);
}

#[test]
fn two_half_steps_equal_one_full_step() {
    let p = random(Scheme::Local, 9);
    let (_, g) = backward(&p, &batch_of(&pairs())).unwrap();
    let mut once = p.clone();
    sgd_step(&mut once, &mut g.clone(), 0.2, f64::INFINITY).unwrap();
    let mut twice = p.clone();
    sgd_step(&mut twice, &mut g.clone(), 0.1, f64::INFINITY).unwrap();
    sgd_step(&mut twice, &mut g.clone(), 0.1, f64::INFINITY).unwrap();
    for ((name, a), (_, b)) in once.tensors().into_iter().zip(twice.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15, "{name}");
        }
    }
}

#[test]
fn sgd_clips_to_the_global_norm() {
    let p = random(Scheme::Global, 10);
    let (_, g) = backward(&p, &batch_of(&pairs())).unwrap();
    let norm = g.global_norm();
    let clip = norm / 4.0;
    let mut stepped = p.clone();
    let mut grads = g.clone();
    let factor = sgd_step(&mut stepped, &mut grads, 1.0, clip).unwrap();
    assert!((factor - 0.25).abs() < 1e-12);
    assert!((grads.global_norm() - clip).abs() < 1e-12);
    let moved: f64 = stepped
        .tensors()
        .iter()
        .zip(p.tensors())
        .flat_map(|((_, a), (_, b))| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).collect::<Vec<_>>())
        .sum::<f64>()
        .sqrt();
    assert!((moved - clip).abs() < 1e-12);
}

#[test]
fn small_steps_descend() {
    for scheme in Scheme::ALL {
        let mut p = random(scheme, 11);
        let batch = batch_of(&pairs());
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let (loss, mut g) = backward(&p, &batch).unwrap();
            assert!(loss <= last, "{scheme}: {loss} > {last}");
            last = loss;
            sgd_step(&mut p, &mut g, 0.05, f64::INFINITY).unwrap();
        }
    }
}

#[test]
fn init_is_seeded_and_in_range() {
    let a = init_params(Scheme::Hybrid, dims(), &mut Rng::new(12), -0.1, 0.1).unwrap();
    let b = init_params(Scheme::Hybrid, dims(), &mut Rng::new(12), -0.1, 0.1).unwrap();
    let c = init_params(Scheme::Hybrid, dims(), &mut Rng::new(13), -0.1, 0.1).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for (_, t) in a.tensors() {
        assert!(t.data().iter().all(|&v| (-0.1..0.1).contains(&v)));
    }
    let glo = init_params(Scheme::Global, dims(), &mut Rng::new(12), -0.1, 0.1).unwrap();
    assert!(glo.attention.is_none());
    assert!(glo.global_encoder.is_none());
}

#[test]
fn hybrid_warm_start_reuses_both_encoders() {
    let loc = random(Scheme::Local, 14);
    let glo = random(Scheme::Global, 15);
    let (hyb, provenance) = init_hybrid_from_pretrained(&loc, &glo, &mut Rng::new(16), -0.1, 0.1).unwrap();
    let names: Vec<String> = hyb.tensors().into_iter().map(|(n, _)| n).collect();
    assert_eq!(provenance.keys().cloned().collect::<std::collections::BTreeSet<_>>(), names.iter().cloned().collect());

    assert_eq!(hyb.encoder, loc.encoder);
    assert_eq!(hyb.post_embedding, loc.post_embedding);
    assert_eq!(hyb.global_encoder.as_ref(), Some(&glo.encoder));
    assert_eq!(provenance["global_encoder.u_h"], Provenance::FromGlobal);
    assert_eq!(provenance["decoder.w_z"], Provenance::FromLocal);
    assert_eq!(provenance["output.w"], Provenance::FromLocal);
    for fresh in ["stimulus", "init", "readout.w_c", "attention.u_a"] {
        assert_eq!(provenance[fresh], Provenance::Fresh, "{fresh}");
    }

    // both halves of the encoding reproduce the pretrained states exactly
    let post = [4, 8, 6];
    let e_h = encode_post(&hyb, &post).unwrap();
    assert_eq!(e_h.states, encode_post(&loc, &post).unwrap().states);
    assert_eq!(e_h.global_summary().unwrap(), encode_post(&glo, &post).unwrap().last_state());
}

#[test]
fn hybrid_warm_start_checks_its_inputs() {
    let loc = random(Scheme::Local, 17);
    let glo = random(Scheme::Global, 18);
    let mut rng = Rng::new(1);
    assert!(init_hybrid_from_pretrained(&glo, &loc, &mut rng, -0.1, 0.1).is_err());
    let wide = Dims { hidden: 5, ..dims() };
    let glo_wide = init_params(Scheme::Global, wide, &mut Rng::new(2), -0.1, 0.1).unwrap();
    assert!(init_hybrid_from_pretrained(&loc, &glo_wide, &mut rng, -0.1, 0.1).is_err());
}

fn config(lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        batch_size: 2,
        epochs: 4,
        seed: 19,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible() {
    let (p1, log1) = train(&pairs(), Scheme::Hybrid, dims(), &config(0.3), None, |_| {}).unwrap();
    let (p2, log2) = train(&pairs(), Scheme::Hybrid, dims(), &config(0.3), None, |_| {}).unwrap();
    assert_eq!(log1, log2);
    assert_eq!(p1, p2);
}

#[test]
fn zero_learning_rate_gives_a_flat_log() {
    let mut seen = Vec::new();
    let (p, log) = train(&pairs(), Scheme::Local, dims(), &config(0.0), None, |e| seen.push(*e)).unwrap();
    assert_eq!(seen, log);
    assert_eq!(log.len(), 4);
    let (expected, _) = batch_loss(&p, &batch_of(&pairs())).unwrap();
    for e in &log {
        assert!((e.mean_nll - expected).abs() < 1e-13);
        assert!((e.perplexity - expected.exp()).abs() < 1e-12);
    }
}

#[test]
fn training_reduces_the_loss() {
    let cfg = TrainConfig { epochs: 30, ..config(0.5) };
    let (_, log) = train(&pairs(), Scheme::Global, dims(), &cfg, None, |_| {}).unwrap();
    assert!(log.last().unwrap().mean_nll < log[0].mean_nll);
}

#[test]
fn frozen_encoder_does_not_move() {
    let init = random(Scheme::Hybrid, 20);
    let cfg = TrainConfig { freeze_encoder: true, ..config(0.5) };
    let (p, _) = train(&pairs(), Scheme::Hybrid, dims(), &cfg, Some(init.clone()), |_| {}).unwrap();
    assert_eq!(p.encoder, init.encoder);
    assert_eq!(p.global_encoder, init.global_encoder);
    assert_eq!(p.post_embedding, init.post_embedding);
    assert_ne!(p.decoder, init.decoder);
}

#[test]
fn non_finite_parameters_stop_training() {
    let mut init = random(Scheme::Local, 21);
    init.output_bias.data_mut()[5] = f64::NAN;
    let err = train(&pairs(), Scheme::Local, dims(), &config(0.5), Some(init), |_| {}).unwrap_err();
    assert!(matches!(err, NrmError::NonFinite { epoch: 1, batch: 0, .. }), "{err}");
}

#[test]
fn initial_parameters_must_match() {
    let init = random(Scheme::Global, 22);
    assert!(train(&pairs(), Scheme::Local, dims(), &config(0.5), Some(init), |_| {}).is_err());
    assert!(train(&[], Scheme::Local, dims(), &config(0.5), None, |_| {}).is_err());
}

#[test]
fn gradients_accumulate() {
    let p = random(Scheme::Local, 23);
    let (_, g) = backward(&p, &batch_of(&pairs())).unwrap();
    let mut sum = Gradients::zeros_for(&p);
    sum.add(&g);
    sum.add(&g);
    assert!((sum.global_norm() - 2.0 * g.global_norm()).abs() < 1e-12);
}
