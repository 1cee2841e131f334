//! Summary statistics over run totals and reward curves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A percentile-bootstrap interval around the sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn overlaps(&self, other: &ConfidenceInterval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

/// Sample mean, summed in input order.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of the mean at confidence `level`.
///
/// The middle value is the plain sample mean. Rounding can put a resampled
/// percentile a hair on the wrong side of it, so the bounds are clamped to
/// keep `lower <= mean <= upper`.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    totals: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<ConfidenceInterval> {
    if totals.is_empty() {
        return Err(Error::EmptyInput("bootstrap sample"));
    }
    if resamples == 0 {
        return Err(Error::param("resamples", "must be positive"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("level", "must lie in (0, 1)"));
    }
    let n = totals.len();
    let m = mean(totals);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| totals[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        lower: quantile_sorted(&means, alpha).min(m),
        mean: m,
        upper: quantile_sorted(&means, 1.0 - alpha).max(m),
    })
}

/// Pointwise mean over runs followed by a trailing moving average whose
/// window is `min(window, t + 1)` at zero-based step `t`.
pub fn smooth_curve<S: AsRef<[f64]>>(runs: &[S], window: usize) -> Result<Vec<f64>> {
    let first = runs.first().ok_or(Error::EmptyInput("reward curves"))?;
    if window == 0 {
        return Err(Error::param("window", "must be positive"));
    }
    let len = first.as_ref().len();
    let mut pointwise = vec![0.0; len];
    for run in runs {
        let run = run.as_ref();
        if run.len() != len {
            return Err(Error::ShapeMismatch {
                expected: format!("{len} steps"),
                got: format!("{} steps", run.len()),
            });
        }
        for (p, r) in pointwise.iter_mut().zip(run) {
            *p += r;
        }
    }
    let n = runs.len() as f64;
    pointwise.iter_mut().for_each(|p| *p /= n);
    Ok((0..len)
        .map(|t| {
            let start = (t + 1).saturating_sub(window);
            mean(&pointwise[start..=t])
        })
        .collect())
}
