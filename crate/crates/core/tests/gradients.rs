//! Hand-derived adjoints against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sacts_core::network::{layers::l1_loss, BatchPass, Params};
use sacts_core::{Execution, Hyper, SacModel, Universe};

fn toy_model(independent_sides: bool, seed: u64) -> (SacModel, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let universe = Universe::build(&alphas).unwrap();
    let hyper = Hyper {
        window: 4,
        cbaa_size: 2,
        dilation: 1,
        independent_sides,
        stages: 1,
        kernel_h: 2,
        kernel_v: 2,
        out_factor: 2,
        hidden: 6,
    };
    let mut model = SacModel::new(hyper, universe, 1.0, 0.1, seed).unwrap();
    // move γ, δ and the CBAA taps off their symmetric initial values
    for (k, w) in model.params.cbaa.data_mut().iter_mut().enumerate() {
        *w = 0.3 + 0.25 * k as f64;
    }
    model.params.bn_gamma.data_mut()[0] = 1.3;
    model.params.bn_delta.data_mut()[0] = -0.2;
    let windows = (0..3).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    (model, windows)
}

fn weighted_output(model: &SacModel, windows: &[&[f64]], c: &[f64]) -> f64 {
    let mut pass = BatchPass::new(model, Execution::Sequential);
    let q = pass.forward(windows).unwrap();
    q.iter().zip(c).map(|(q, c)| q * c).sum()
}

fn check_all(independent_sides: bool, seed: u64) -> usize {
    let (model, windows) = toy_model(independent_sides, seed);
    let refs: Vec<&[f64]> = windows.iter().map(Vec::as_slice).collect();
    let c = [0.7, -1.1, 0.4];
    let mut pass = BatchPass::new(&model, Execution::Sequential);
    pass.forward(&refs).unwrap();
    let grads = pass.backward(&c).unwrap();

    let names = model.params.names();
    let h = 1e-6;
    let mut checked = 0;
    for (ti, g) in grads.tensors().into_iter().enumerate() {
        for k in 0..g.len() {
            let mut up = model.clone();
            up.params.tensors_mut()[ti].data_mut()[k] += h;
            let mut dn = model.clone();
            dn.params.tensors_mut()[ti].data_mut()[k] -= h;
            let num = (weighted_output(&up, &refs, &c) - weighted_output(&dn, &refs, &c)) / (2.0 * h);
            let ana = g.data()[k];
            let rel = (ana - num).abs() / num.abs().max(1.0);
            assert!(rel <= 1e-4, "{}[{k}]: analytic {ana}, numeric {num}", names[ti]);
            checked += 1;
        }
    }
    checked
}

#[test]
fn every_parameter_matches_finite_differences() {
    for seed in [1, 2, 3] {
        assert!(check_all(false, seed) > 0);
    }
}

#[test]
fn independent_cbaa_sides_match_finite_differences() {
    check_all(true, 11);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let (model, windows) = toy_model(false, 4);
    let refs: Vec<&[f64]> = windows.iter().map(Vec::as_slice).collect();
    let mut pass = BatchPass::new(&model, Execution::Sequential);
    let q = pass.forward(&refs).unwrap();
    // pred = target: the L1 subgradient is 0 at ties
    let (loss, dq) = l1_loss(&q, &q).unwrap();
    assert_eq!(loss, 0.0);
    let g = pass.backward(&dq).unwrap();
    assert!(g.tensors().iter().all(|t| t.data().iter().all(|&x| x == 0.0)));
}

#[test]
fn doubling_the_loss_doubles_every_gradient() {
    let (model, windows) = toy_model(true, 5);
    let refs: Vec<&[f64]> = windows.iter().map(Vec::as_slice).collect();
    let mut pass = BatchPass::new(&model, Execution::Sequential);
    pass.forward(&refs).unwrap();
    let c = [0.3, 0.9, -0.5];
    let c2: Vec<f64> = c.iter().map(|x| 2.0 * x).collect();
    let g1 = pass.backward(&c).unwrap();
    let g2 = pass.backward(&c2).unwrap();
    let mut doubled: Params = g1.clone();
    doubled.scale(2.0);
    assert_eq!(doubled, g2);
}

#[test]
fn parallel_and_sequential_passes_agree_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphas: Vec<f64> = (0..500).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let universe = Universe::build(&alphas).unwrap();
    let model = SacModel::new(Hyper::default(), universe, 2.0, 0.0, 3).unwrap();
    let windows: Vec<&[f64]> = alphas.windows(12).step_by(3).take(100).collect();
    let dq: Vec<f64> = (0..windows.len()).map(|i| if i % 3 == 0 { 0.01 } else { -0.01 }).collect();
    let run = |exec| {
        let mut pass = BatchPass::new(&model, exec);
        let q = pass.forward(&windows).unwrap();
        (q, pass.backward(&dq).unwrap())
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}
