use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance below which skewness and kurtosis are reported as 0.
pub const DEGENERATE_VARIANCE: f64 = 1e-24;

/// Summary statistics of a flattened gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradStats {
    pub l1_norm: f64,
    pub l2_norm: f64,
    pub max_value: f64,
    pub mean: f64,
    pub skewness: f64,
    /// Excess kurtosis (population moments).
    pub kurtosis: f64,
    pub abs_min: f64,
}

impl GradStats {
    pub const LEN: usize = 7;

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.l1_norm,
            self.l2_norm,
            self.max_value,
            self.mean,
            self.skewness,
            self.kurtosis,
            self.abs_min,
        ]
    }
}

pub fn gradient_statistics(grad: &[f64]) -> Result<GradStats> {
    if grad.is_empty() {
        return Err(Error::Config(
            "gradient statistics of an empty vector".into(),
        ));
    }
    let n = grad.len() as f64;
    let mean = grad.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for g in grad {
        let d = g - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 < DEGENERATE_VARIANCE {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    Ok(GradStats {
        l1_norm: grad.iter().map(|g| g.abs()).sum(),
        l2_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        max_value: grad.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        skewness,
        kurtosis,
        abs_min: grad.iter().map(|g| g.abs()).fold(f64::INFINITY, f64::min),
    })
}
