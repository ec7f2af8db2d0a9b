use nrm::model::Scheme;
use nrm::training::{backward, compare_gradients, grad_check, grad_check_dims, random_batch};
use nrm::model::ModelParams;
use nrm::numerics::Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    for scheme in Scheme::ALL {
        for seed in [1, 2] {
            let report = grad_check(scheme, seed, 1e-4).unwrap();
            assert!(report.passed(), "{scheme} seed {seed}:\n{report}");
        }
    }
}

#[test]
fn corrupted_output_gradient_is_localized() {
    let mut rng = Rng::new(8);
    let dims = grad_check_dims();
    let params = ModelParams::random(Scheme::Local, dims, &mut rng, -0.1, 0.1).unwrap();
    let batch = random_batch(&mut rng, &dims, 3, 5);
    let (_, mut grads) = backward(&params, &batch).unwrap();
    grads.output.scale(-1.0);
    let report = compare_gradients(&params, &batch, &grads, 1e-5, 1e-4).unwrap();
    assert_eq!(report.failures(), vec!["output.w"]);
}

#[test]
fn infinite_tolerance_always_passes() {
    assert!(grad_check(Scheme::Hybrid, 3, f64::INFINITY).unwrap().passed());
}
