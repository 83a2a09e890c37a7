mod common;

use advmia::adversarial::{
    apgd_maximize_loss, find_adversarial, find_adversarial_budgets, AttackConfig, BoxBounds, Norm,
};
use advmia::nn::{build_mlp, MlpClassifier};
use rand::Rng;

fn linear_model(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> MlpClassifier {
    let mut m = build_mlp(&[d, 2], 0).unwrap();
    let p: Vec<f64> = (0..m.parameter_count())
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    m.set_parameters_flat(&p).unwrap();
    m
}

/// Signed decision margin `(w1 - w0)·x + (b1 - b0)` and `‖w1 - w0‖_2`.
fn margin(m: &MlpClassifier, x: &[f64]) -> (f64, f64) {
    let l = &m.layers()[0];
    let (w, b) = (l.weight.values(), l.bias.values());
    let d = x.len();
    let dw: Vec<f64> = (0..d).map(|j| w[d + j] - w[j]).collect();
    let f = dw.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b[1] - b[0];
    (f, dw.iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[test]
fn linear_attacks_never_beat_the_margin() {
    let mut rng = common::rng(4);
    let mut successes = 0;
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let m = linear_model(&mut rng, d);
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let y = m.predict_class(&x).unwrap();
        let cfg = AttackConfig {
            norm: Norm::L2,
            epsilon: 1.5,
            n_iter: 50,
            ..AttackConfig::default()
        };
        let out = find_adversarial(&m, &x, y, &cfg).unwrap();
        if out.success {
            successes += 1;
            let (f, norm) = margin(&m, &x);
            assert!(
                out.distance >= f.abs() / norm - 1e-6,
                "{} < {}",
                out.distance,
                f.abs() / norm
            );
        }
    }
    assert!(successes > 20, "only {successes} attacks succeeded");
}

#[test]
fn outputs_stay_inside_ball_and_box() {
    let mut rng = common::rng(5);
    for trial in 0..300 {
        let m = common::random_model(&mut rng, trial % 4 == 0);
        let norm = [Norm::L1, Norm::L2, Norm::Linf][trial % 3];
        let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.random()).collect();
        let y = rng.random_range(0..m.num_classes());
        let cfg = AttackConfig {
            norm,
            epsilon: rng.random_range(0.01..2.0),
            n_iter: 15,
            n_restarts: trial % 2,
            seed: trial as u64,
            ..AttackConfig::default()
        };
        let out = find_adversarial(&m, &x, y, &cfg).unwrap();
        let v = out.v.values();
        assert!(norm.of(v) <= cfg.epsilon + 1e-9);
        let adv: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
        assert!(BoxBounds::UNIT.contains(&adv));
        if out.success {
            assert_ne!(m.predict_class(&adv).unwrap(), y);
            assert!((out.distance - norm.of(v)).abs() < 1e-12);
        } else {
            assert_eq!(out.distance, cfg.epsilon);
        }
    }
}

#[test]
fn misclassified_inputs_have_zero_distance() {
    let mut rng = common::rng(6);
    let mut seen = 0;
    while seen < 20 {
        let m = common::random_model(&mut rng, false);
        let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.random()).collect();
        let pred = m.predict_class(&x).unwrap();
        let y = (pred + 1) % m.num_classes();
        let out = find_adversarial(&m, &x, y, &AttackConfig::default()).unwrap();
        assert!(out.success);
        assert_eq!(out.distance, 0.0);
        assert!(out.v.values().iter().all(|v| *v == 0.0));
        seen += 1;
    }
}

#[test]
fn larger_budgets_keep_smaller_examples() {
    let mut rng = common::rng(7);
    let budgets = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
    for trial in 0..60 {
        let m = common::random_model(&mut rng, false);
        let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.random()).collect();
        let y = m.predict_class(&x).unwrap();
        let cfg = AttackConfig {
            norm: [Norm::L1, Norm::L2, Norm::Linf][trial % 3],
            n_iter: 20,
            ..AttackConfig::default()
        };
        let outs = find_adversarial_budgets(&m, &x, y, &cfg, &budgets).unwrap();
        // Failures report their own budget; once found, an example is kept.
        for w in outs.windows(2) {
            if w[0].success {
                assert!(w[1].success);
                assert!(w[1].distance <= w[0].distance);
            }
        }
    }
}

#[test]
fn trace_is_feasible_and_tracks_the_best_loss() {
    let mut rng = common::rng(8);
    let m = common::random_model(&mut rng, false);
    let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.random()).collect();
    let cfg = AttackConfig {
        norm: Norm::L2,
        epsilon: 0.7,
        n_iter: 30,
        ..AttackConfig::default()
    };
    let trace = apgd_maximize_loss(&m, &x, 0, &cfg).unwrap();
    assert_eq!(trace.steps.len(), cfg.n_iter + 1);
    let mut best = f64::NEG_INFINITY;
    for s in &trace.steps {
        best = best.max(s.loss);
        assert_eq!(s.best_loss, best);
        assert!(s.distance <= cfg.epsilon + 1e-12);
        assert!(BoxBounds::UNIT.contains(&s.point));
    }
}

#[test]
fn attacks_are_deterministic() {
    let mut rng = common::rng(9);
    let m = common::random_model(&mut rng, false);
    let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.random()).collect();
    let cfg = AttackConfig {
        n_restarts: 2,
        seed: 77,
        ..AttackConfig::default()
    };
    let a = find_adversarial(&m, &x, 0, &cfg).unwrap();
    let b = find_adversarial(&m, &x, 0, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn best_loss_on_a_logistic_model_matches_grid_search() {
    let mut m = build_mlp(&[2, 1], 0).unwrap();
    m.set_parameters_flat(&[2.0, -3.0, 0.5]).unwrap();
    let x = [0.4, 0.3];
    for (norm, eps) in [(Norm::L2, 0.3), (Norm::Linf, 0.25), (Norm::L1, 0.4)] {
        for y in [0usize, 1] {
            let cfg = AttackConfig {
                norm,
                epsilon: eps,
                n_iter: 100,
                ..AttackConfig::default()
            };
            let found = apgd_maximize_loss(&m, &x, y, &cfg).unwrap().max_loss();
            let steps = 1000;
            let mut best = f64::NEG_INFINITY;
            for i in 0..=steps {
                for j in 0..=steps {
                    let p = [i as f64 / steps as f64, j as f64 / steps as f64];
                    if norm.distance(&p, &x) <= eps {
                        best = best.max(m.loss(&p, y).unwrap());
                    }
                }
            }
            assert!(
                (found - best).abs() <= 0.02 * best.abs(),
                "{norm} y={y}: {found} vs {best}"
            );
        }
    }
}
