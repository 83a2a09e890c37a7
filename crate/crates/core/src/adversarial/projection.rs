use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The `p` of an ℓp ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    /// Maps a numeric `p` onto a supported norm.
    pub fn from_p(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Norm::L1)
        } else if p == 2.0 {
            Ok(Norm::L2)
        } else if p == f64::INFINITY {
            Ok(Norm::Linf)
        } else {
            Err(Error::Config(format!(
                "unsupported norm p = {p}; use 1, 2 or inf"
            )))
        }
    }

    pub fn of(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// ‖a - b‖_p
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.of(&diff)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "l_inf" | "infinity" => Ok(Norm::Linf),
            other => Err(Error::Config(format!("unsupported norm `{other}`"))),
        }
    }
}

/// Coordinate-wise bounds shared by every feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    pub lo: f64,
    pub hi: f64,
}

impl BoxBounds {
    pub const UNIT: BoxBounds = BoxBounds { lo: 0.0, hi: 1.0 };
    pub const UNBOUNDED: BoxBounds = BoxBounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().all(|x| *x >= self.lo && *x <= self.hi)
    }
}

/// Euclidean projection onto the ℓ1 ball of `radius` centred at the origin,
/// by sorting magnitudes and locating the soft threshold.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, u) in mags.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

fn clip(v: f64, bounds: BoxBounds) -> f64 {
    v.clamp(bounds.lo, bounds.hi)
}

/// Projects `candidate` onto `{r : ‖r - center‖_p ≤ epsilon} ∩ box`.
///
/// The result is the Euclidean-nearest feasible point for every norm. With an
/// inactive box the ℓ1 case reduces to [`project_l1_ball`].
pub fn project_lp_box(
    candidate: &[f64],
    center: &[f64],
    norm: Norm,
    epsilon: f64,
    bounds: BoxBounds,
) -> Result<Vec<f64>> {
    if candidate.len() != center.len() {
        return Err(Error::shape(center.len(), candidate.len()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    if !bounds.contains(center) {
        return Err(Error::InvalidInput(
            "projection center lies outside the box".into(),
        ));
    }
    if candidate.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "projection candidate is not finite".into(),
        ));
    }
    Ok(match norm {
        Norm::Linf => candidate
            .iter()
            .zip(center)
            .map(|(y, c)| y.clamp((c - epsilon).max(bounds.lo), (c + epsilon).min(bounds.hi)))
            .collect(),
        Norm::L1 => project_l1_box(candidate, center, epsilon, bounds),
        Norm::L2 => project_l2_box(candidate, center, epsilon, bounds),
    })
}

fn project_l1_box(candidate: &[f64], center: &[f64], epsilon: f64, bounds: BoxBounds) -> Vec<f64> {
    let clipped: Vec<f64> = candidate.iter().map(|y| clip(*y, bounds)).collect();
    if Norm::L1.distance(&clipped, center) <= epsilon {
        return clipped;
    }
    if bounds == BoxBounds::UNBOUNDED {
        let delta: Vec<f64> = candidate.iter().zip(center).map(|(y, c)| y - c).collect();
        return project_l1_ball(&delta, epsilon)
            .iter()
            .zip(center)
            .map(|(d, c)| c + d)
            .collect();
    }
    // For a multiplier λ the problem separates per coordinate:
    // r_i(λ) = clip(c_i + soft(y_i - c_i, λ)), exact because c lies in the box.
    // ‖r(λ) - c‖_1 is non-increasing in λ; keep the feasible end of the bracket.
    let at = |lambda: f64| -> Vec<f64> {
        candidate
            .iter()
            .zip(center)
            .map(|(y, c)| {
                let d = y - c;
                clip(c + d.signum() * (d.abs() - lambda).max(0.0), bounds)
            })
            .collect()
    };
    let mut lo = 0.0f64;
    let mut hi = candidate
        .iter()
        .zip(center)
        .fold(0.0f64, |m, (y, c)| m.max((y - c).abs()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if Norm::L1.distance(&at(mid), center) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

fn project_l2_box(candidate: &[f64], center: &[f64], epsilon: f64, bounds: BoxBounds) -> Vec<f64> {
    let clipped: Vec<f64> = candidate.iter().map(|y| clip(*y, bounds)).collect();
    if Norm::L2.distance(&clipped, center) <= epsilon {
        return clipped;
    }
    let delta: Vec<f64> = candidate.iter().zip(center).map(|(y, c)| y - c).collect();
    let len = Norm::L2.of(&delta);
    let scale = epsilon / len;
    let on_ball: Vec<f64> = center
        .iter()
        .zip(&delta)
        .map(|(c, d)| c + d * scale)
        .collect();
    if bounds.contains(&on_ball) {
        return on_ball;
    }
    // Both constraints active: r(t) = clip(c + t (y - c)) with t = 1 / (1 + λ),
    // ‖r(t) - c‖ non-decreasing in t. Keep the feasible end of the bracket.
    let at = |t: f64| -> Vec<f64> {
        center
            .iter()
            .zip(&delta)
            .map(|(c, d)| clip(c + t * d, bounds))
            .collect()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if Norm::L2.distance(&at(mid), center) <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}
