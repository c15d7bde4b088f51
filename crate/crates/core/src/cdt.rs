//! 1-D cumulative distribution transform.
//!
//! The transform of a source density `p` with respect to a reference
//! density `r` is the monotone transport map `F_p⁻¹ ∘ F_r`, evaluated at
//! the reference grid points.

use crate::error::{Error, Result};

/// Below this total mass a signal is treated as empty and floored.
const MASS_FLOOR_PER_BIN: f64 = 1e-12;
const EPSILON_FLOOR: f64 = 1e-8;
/// CDF increments at or below this are treated as flat.
const FLAT_TOLERANCE: f64 = 1e-12;

/// Nonnegative samples on a uniform grid over `[a, b]`, normalized so that
/// `Σ values · Δ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    values: Vec<f64>,
    interval: (f64, f64),
}

impl Density {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.interval.1 - self.interval.0) / (self.values.len() - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let (a, _) = self.interval;
        let step = self.spacing();
        (0..self.values.len()).map(|i| a + i as f64 * step).collect()
    }

    /// Uniform density on `[a, b]` with `n` grid points.
    pub fn uniform(n: usize, interval: (f64, f64)) -> Result<Self> {
        normalize_density(&vec![1.0; n], interval)
    }

    /// Cumulative distribution at the grid points by trapezoidal
    /// accumulation, rescaled so the last value is exactly 1.
    pub fn cdf(&self) -> Vec<f64> {
        let step = self.spacing();
        let mut cdf = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc);
        }
        let total = acc;
        if total > 0.0 {
            cdf.iter_mut().for_each(|c| *c /= total);
        }
        cdf
    }
}

/// Monotone transport map sampled on the reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdtFunction {
    values: Vec<f64>,
    domain: (f64, f64),
}

impl CdtFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Interval of the reference density the map is defined on.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// Scales a nonnegative signal into a [`Density`] on `interval`.
///
/// Signals whose total mass is at or below `1e-12 × len` get a uniform
/// `1e-8` floor first, so an all-zero signal becomes the uniform density.
pub fn normalize_density(signal: &[f64], interval: (f64, f64)) -> Result<Density> {
    if signal.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "density needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidInput(format!(
            "invalid density interval [{a}, {b}]"
        )));
    }
    if let Some(bad) = signal.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "density samples must be finite and nonnegative, found {bad}"
        )));
    }

    let mut values = signal.to_vec();
    let mut total: f64 = values.iter().sum();
    if total <= MASS_FLOOR_PER_BIN * values.len() as f64 {
        values.iter_mut().for_each(|v| *v += EPSILON_FLOOR);
        total = values.iter().sum();
    }
    let step = (b - a) / (values.len() - 1) as f64;
    let scale = 1.0 / (total * step);
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(Density { values, interval })
}

/// Knots `(F, x)` of a strictly increasing CDF, suitable for inversion by
/// linear interpolation.
///
/// Flat runs in the interior collapse to their midpoint. The leading run at
/// `F = 0` collapses to its right end and the trailing run at `F = 1` to
/// its left end, i.e. to the edges of the support.
fn inverse_knots(density: &Density) -> Vec<(f64, f64)> {
    let cdf = density.cdf();
    let grid = density.grid();
    let n = cdf.len();

    let mut knots = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && cdf[j + 1] - cdf[i] <= FLAT_TOLERANCE {
            j += 1;
        }
        let x = if i == j {
            grid[i]
        } else if i == 0 {
            grid[j]
        } else if j == n - 1 {
            grid[i]
        } else {
            0.5 * (grid[i] + grid[j])
        };
        knots.push((cdf[i], x));
        i = j + 1;
    }
    knots
}

fn invert(knots: &[(f64, f64)], y: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if y <= first.0 {
        return first.1;
    }
    if y >= last.0 {
        return last.1;
    }
    // First knot with F > y; its predecessor has F <= y.
    let hi = knots.partition_point(|k| k.0 <= y);
    let (f0, x0) = knots[hi - 1];
    let (f1, x1) = knots[hi];
    x0 + (y - f0) / (f1 - f0) * (x1 - x0)
}

/// Transport map from `reference` onto `source`, evaluated on the
/// reference grid. Values are in the source's coordinates.
pub fn cdt_forward(source: &Density, reference: &Density) -> Result<CdtFunction> {
    if reference.values.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput(
            "reference density must be strictly positive".to_string(),
        ));
    }
    let knots = inverse_knots(source);
    let mut values: Vec<f64> = reference
        .cdf()
        .into_iter()
        .map(|y| invert(&knots, y))
        .collect();
    // Guard against round-off breaking monotonicity at shared knots.
    for k in 1..values.len() {
        if values[k] < values[k - 1] {
            values[k] = values[k - 1];
        }
    }
    Ok(CdtFunction {
        values,
        domain: reference.interval,
    })
}
