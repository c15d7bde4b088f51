//! Distance densities and the empirical likelihood gate.
//!
//! Each class gets a Gaussian kernel density estimate `p` over the distances
//! of its validation samples to the class subspace. The likelihood of a new
//! distance `x` is the upper tail `L(x) = 1 − ∫_{−∞}^{x} p(u) du`, evaluated
//! in closed form as a mean of complementary error functions.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Gaussian KDE over one class's validation distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceDensity {
    support_points: Vec<f64>,
    bandwidth: f64,
}

impl DistanceDensity {
    pub fn support_points(&self) -> &[f64] {
        &self.support_points
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * self.support_points.len() as f64);
        self.support_points
            .iter()
            .map(|d| (-0.5 * ((x - d) / h).powi(2)).exp())
            .sum::<f64>()
            * norm
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.likelihood(x)
    }

    /// Upper-tail probability `1 − CDF(x)`, clamped to `[0, 1]`.
    pub fn likelihood(&self, x: f64) -> f64 {
        let scale = 1.0 / (self.bandwidth * std::f64::consts::SQRT_2);
        let tail: f64 = self
            .support_points
            .iter()
            .map(|d| 0.5 * erfc((x - d) * scale))
            .sum();
        (tail / self.support_points.len() as f64).clamp(0.0, 1.0)
    }
}

/// Fits a Gaussian KDE. Without an explicit bandwidth, Silverman's rule
/// `0.9 · min(σ̂, IQR/1.34) · n^(−1/5)` is used, floored at
/// `1e−6 · (max − min + 1e−12)`.
pub fn fit_kde(distances: &[f64], bandwidth: Option<f64>) -> Result<DistanceDensity> {
    if distances.len() < 2 {
        return Err(Error::InsufficientData {
            class: "(unlabeled)".into(),
            reason: format!("need at least 2 distances, got {}", distances.len()),
        });
    }
    if let Some(bad) = distances.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::InvalidInput(format!(
            "distances must be finite and nonnegative, found {bad}"
        )));
    }
    let bandwidth = match bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => silverman_bandwidth(distances),
    };
    Ok(DistanceDensity {
        support_points: distances.to_vec(),
        bandwidth,
    })
}

pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = variance.sqrt().min(iqr / 1.34);
    let rule = 0.9 * spread * n.powf(-0.2);
    let floor = 1e-6 * (sorted[sorted.len() - 1] - sorted[0] + 1e-12);
    rule.max(floor)
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Outcome of the out-of-class gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept(usize),
    Reject,
}

/// Accepts `nearest_class` when its likelihood at `nearest_distance` is at
/// least `alpha`; equality accepts.
pub fn decide(
    nearest_class: usize,
    nearest_distance: f64,
    densities: &[DistanceDensity],
    alpha: f64,
) -> Result<Decision> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let density = densities
        .get(nearest_class)
        .ok_or_else(|| Error::ModelIncomplete(nearest_class.to_string()))?;
    Ok(gate(density.likelihood(nearest_distance), nearest_class, alpha))
}

pub(crate) fn gate(likelihood: f64, class: usize, alpha: f64) -> Decision {
    if likelihood >= alpha {
        Decision::Accept(class)
    } else {
        Decision::Reject
    }
}
