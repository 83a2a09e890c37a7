use advmia::nn::{build_mlp, MlpClassifier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

fn random_model(rng: &mut ChaCha8Rng, sigmoid_head: bool) -> MlpClassifier {
    let depth = rng.random_range(0..=3);
    let mut dims = vec![rng.random_range(1..=8)];
    for _ in 0..depth {
        dims.push(rng.random_range(1..=64));
    }
    dims.push(if sigmoid_head {
        1
    } else {
        rng.random_range(2..=6)
    });
    build_mlp(&dims, rng.random()).unwrap()
}

fn check(model: &MlpClassifier, x: &[f64], y: usize) -> f64 {
    let g = model.backward_gradients(x, y).unwrap();
    let analytic = g.flattened_parameters();
    let base = model.parameters_flat();
    let mut worst: f64 = 0.0;
    let mut m = model.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += H;
        m.set_parameters_flat(&p).unwrap();
        let up = m.loss(x, y).unwrap();
        p[i] -= 2.0 * H;
        m.set_parameters_flat(&p).unwrap();
        let down = m.loss(x, y).unwrap();
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        xp[j] += H;
        let up = model.loss(&xp, y).unwrap();
        xp[j] -= 2.0 * H;
        let down = model.loss(&xp, y).unwrap();
        worst = worst.max(rel_err(g.input.values()[j], (up - down) / (2.0 * H)));
    }
    worst
}

#[test]
fn parameter_and_input_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..30 {
        let model = random_model(&mut rng, trial % 5 == 4);
        let x: Vec<f64> = (0..model.input_dim()).map(|_| rng.random()).collect();
        let y = rng.random_range(0..model.num_classes());
        let worst = check(&model, &x, y);
        assert!(
            worst <= 1e-4,
            "trial {trial}: dims {:?} worst {worst:e}",
            model.layer_dims()
        );
    }
}

#[test]
fn gradients_of_a_saturated_model_vanish() {
    let mut model = MlpClassifier::zeros(&[2, 3]).unwrap();
    model.layers_mut()[0].bias.values_mut()[1] = 50.0;
    let g = model.backward_gradients(&[0.3, 0.7], 1).unwrap();
    assert!(g.parameter_norm_squared() < 1e-30);
    // Below the probability clamp the loss is flat.
    let g = model.backward_gradients(&[0.3, 0.7], 0).unwrap();
    assert_eq!(g.parameter_norm_squared(), 0.0);
    model.layers_mut()[0].bias.values_mut()[1] = 5.0;
    let g = model.backward_gradients(&[0.3, 0.7], 0).unwrap();
    assert!(g.parameter_norm_squared() > 0.1);
}
