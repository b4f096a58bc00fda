//! Sample statistics and log-log rate fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Fraction of the smallest x-values left out of rate fits by default.
pub const DEFAULT_DROP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `count - 1`); zero for one sample.
    pub std: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::domain("cannot summarize an empty sample"));
        }
        let count = xs.len();
        let mean = xs.iter().copied().collect::<CompensatedSum>().value() / count as f64;
        let std = if count > 1 {
            let ss = xs.iter().map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value();
            (ss / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Summary {
            count,
            mean,
            std,
            se: std / (count as f64).sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// `|mean - target| <= k * se`.
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// `sqrt(mean((x_i - target)^2))`.
pub fn l2_error(xs: &[f64], target: f64) -> f64 {
    let ss = xs.iter().map(|x| (x - target) * (x - target)).collect::<CompensatedSum>().value();
    (ss / xs.len() as f64).sqrt()
}

/// Nearest-rank quantile: the smallest sample with at least `p * N` samples at or
/// below it.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Quantiles {
    pub fn of(xs: &[f64]) -> Self {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        Quantiles {
            q05: quantile(&s, 0.05),
            q25: quantile(&s, 0.25),
            q50: quantile(&s, 0.5),
            q75: quantile(&s, 0.75),
            q95: quantile(&s, 0.95),
        }
    }
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// Points actually used.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Number of smallest-x points left out.
    pub dropped: usize,
}

impl RateFit {
    /// Fits all points.
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::fit_dropping(xs, ys, 0.0)
    }

    /// Leaves out the `floor(drop_fraction * N)` smallest x-values, but never so
    /// many that fewer than three points remain.
    pub fn fit_dropping(xs: &[f64], ys: &[f64], drop_fraction: f64) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::invalid("fit", "x and y lengths differ"));
        }
        if xs.len() < 3 {
            return Err(Error::domain(format!(
                "a rate fit needs at least 3 points, got {}",
                xs.len()
            )));
        }
        if !(0.0..1.0).contains(&drop_fraction) {
            return Err(Error::invalid("drop_fraction", "must lie in [0, 1)"));
        }
        if let Some(bad) = xs.iter().chain(ys).find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain(format!("rate fits need positive values, got {bad}")));
        }
        let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let dropped = ((drop_fraction * pts.len() as f64).floor() as usize).min(pts.len() - 3);
        let pts = &pts[dropped..];

        let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let m = pts.len() as f64;
        let mx = lx.iter().sum::<f64>() / m;
        let my = ly.iter().sum::<f64>() / m;
        let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
        if sxx == 0.0 {
            return Err(Error::domain("rate fit needs at least two distinct x-values"));
        }
        let slope = sxy / sxx;
        let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
        Ok(RateFit {
            xs: pts.iter().map(|p| p.0).collect(),
            ys: pts.iter().map(|p| p.1).collect(),
            slope,
            intercept: my - slope * mx,
            r_squared,
            dropped,
        })
    }
}
