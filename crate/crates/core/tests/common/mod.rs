//! Independent reference implementations used by the property and
//! acceptance suites. Nothing here calls into the library's numerics.
#![allow(dead_code, clippy::needless_range_loop)]

use advmia::nn::{build_mlp, MlpClassifier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLAMP: f64 = 1e-12;

/// Random MLP with at most three hidden layers of width at most 64.
pub fn random_model(rng: &mut ChaCha8Rng, sigmoid_head: bool) -> MlpClassifier {
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

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Loss, probabilities and the flattened parameter and input gradients,
/// computed with plain loops from the raw weights.
pub struct Reference {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub param_grad: Vec<f64>,
    pub input_grad: Vec<f64>,
}

pub fn reference_backprop(model: &MlpClassifier, x: &[f64], y: usize) -> Reference {
    let layers = model.layers();
    let mut acts = vec![x.to_vec()];
    let mut pre = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        let (o, n) = (l.out_dim(), l.in_dim());
        let w = l.weight.values();
        let b = l.bias.values();
        let h = acts.last().unwrap();
        let mut z = vec![0.0; o];
        for r in 0..o {
            let mut s = b[r];
            for c in 0..n {
                s += w[r * n + c] * h[c];
            }
            z[r] = s;
        }
        if i + 1 < layers.len() {
            acts.push(z.iter().map(|v| v.max(0.0)).collect());
        }
        pre.push(z);
    }
    let logits = pre.last().unwrap().clone();
    let (probs, mut dz) = if logits.len() == 1 {
        let p1 = 1.0 / (1.0 + (-logits[0]).exp());
        let probs = vec![1.0 - p1, p1];
        let d = if probs[y] < CLAMP {
            0.0
        } else if y == 1 {
            p1 - 1.0
        } else {
            p1
        };
        (probs, vec![d])
    } else {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let probs: Vec<f64> = e.iter().map(|v| v / s).collect();
        let d = if probs[y] < CLAMP {
            vec![0.0; probs.len()]
        } else {
            probs
                .iter()
                .enumerate()
                .map(|(k, p)| p - if k == y { 1.0 } else { 0.0 })
                .collect()
        };
        (probs, d)
    };
    let loss = -probs[y].max(CLAMP).ln();

    let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); layers.len()];
    let mut input_grad = Vec::new();
    for i in (0..layers.len()).rev() {
        let l = &layers[i];
        let (o, n) = (l.out_dim(), l.in_dim());
        let w = l.weight.values();
        let h = &acts[i];
        let mut g = Vec::with_capacity(o * n + o);
        for r in 0..o {
            for c in 0..n {
                g.push(dz[r] * h[c]);
            }
        }
        g.extend_from_slice(&dz);
        per_layer[i] = g;
        let mut dh = vec![0.0; n];
        for r in 0..o {
            for c in 0..n {
                dh[c] += w[r * n + c] * dz[r];
            }
        }
        if i == 0 {
            input_grad = dh;
        } else {
            dz = dh
                .iter()
                .zip(&pre[i - 1])
                .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
                .collect();
        }
    }
    Reference {
        loss,
        probs,
        param_grad: per_layer.concat(),
        input_grad,
    }
}

/// Modified entropy with logs clamped to [1e-12, 1 - 1e-12], returned negated.
pub fn modified_entropy(probs: &[f64], y: usize) -> f64 {
    let lg = |p: f64| p.clamp(CLAMP, 1.0 - CLAMP).ln();
    let mut total = 0.0;
    for (k, p) in probs.iter().enumerate() {
        total += if k == y {
            -(1.0 - p) * lg(*p)
        } else {
            -p * lg(1.0 - p)
        };
    }
    -total
}

/// `[l1, l2, max, mean, skewness, excess kurtosis, min |g|]` by two-pass moments.
pub fn grad_stats(g: &[f64]) -> [f64; 7] {
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (skew, kurt) = if var < 1e-24 {
        (0.0, 0.0)
    } else {
        let sd = var.sqrt();
        let z: Vec<f64> = g.iter().map(|v| (v - mean) / sd).collect();
        (
            z.iter().map(|v| v.powi(3)).sum::<f64>() / n,
            z.iter().map(|v| v.powi(4)).sum::<f64>() / n - 3.0,
        )
    };
    let mut sorted_abs: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    sorted_abs.sort_by(f64::total_cmp);
    [
        sorted_abs.iter().sum(),
        g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        g.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean,
        skew,
        kurt,
        sorted_abs[0],
    ]
}

pub fn mann_whitney(members: &[f64], nonmembers: &[f64]) -> f64 {
    let mut wins = 0.0;
    for a in members {
        for b in nonmembers {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (members.len() * nonmembers.len()) as f64
}

/// Nearest point of `{‖r - c‖_1 ≤ eps} ∩ [0,1]^d` to `y` by nested grid
/// search: a full grid over the box, then finer grids around the best point.
pub fn l1_box_grid_oracle(y: &[f64], c: &[f64], eps: f64) -> Vec<f64> {
    let d = y.len();
    let plan: &[(f64, usize)] = if d == 2 {
        &[(0.5, 1000), (0.01, 2000), (1e-4, 200)]
    } else {
        &[(0.5, 200), (0.025, 200), (1e-3, 200), (2e-5, 40)]
    };
    let mut best = c.to_vec();
    let mut centre = vec![0.5; d];
    for &(half, steps) in plan {
        let h = 2.0 * half / steps as f64;
        let mut best_d = f64::INFINITY;
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        loop {
            let mut ok = true;
            for k in 0..d {
                point[k] = centre[k] - half + h * idx[k] as f64;
                if !(0.0..=1.0).contains(&point[k]) {
                    ok = false;
                }
            }
            if ok {
                let l1: f64 = point.iter().zip(c).map(|(a, b)| (a - b).abs()).sum();
                if l1 <= eps {
                    let dist: f64 = point.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist < best_d {
                        best_d = dist;
                        best.copy_from_slice(&point);
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == d {
                    break;
                }
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        centre = best.clone();
    }
    best
}
