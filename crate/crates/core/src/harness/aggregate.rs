use crate::error::{Error, Result};

use super::train::{EvalRecord, RunLog};

/// Seed-aggregated, smoothed evaluation curve.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedCurve {
    pub steps: Vec<usize>,
    pub mean: Vec<f64>,
    /// Half the sample standard deviation across seeds (0 for one seed).
    pub half_std: Vec<f64>,
    pub seeds: usize,
}

impl AggregatedCurve {
    pub fn final_mean(&self) -> Option<f64> {
        self.mean.last().copied()
    }

    pub fn final_half_std(&self) -> Option<f64> {
        self.half_std.last().copied()
    }
}

/// Trailing moving average. Position `i` averages records
/// `max(0, i + 1 − window) ..= i`, so the first `window − 1` positions (or
/// every position, when the window exceeds the series) use all records seen
/// so far.
pub fn trailing_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let lo = (i + 1).saturating_sub(window);
        let sum: f64 = xs[lo..=i].iter().sum();
        out.push(sum / (i + 1 - lo) as f64);
    }
    out
}

/// Mean and half-std per evaluation step across seeds, then smoothed.
pub fn aggregate(logs: &[RunLog], window: usize) -> Result<AggregatedCurve> {
    let series: Vec<&[EvalRecord]> = logs.iter().map(|l| l.evals.as_slice()).collect();
    aggregate_series(&series, window)
}

/// [`aggregate`] over bare evaluation series.
pub fn aggregate_series(series: &[&[EvalRecord]], window: usize) -> Result<AggregatedCurve> {
    let first = series
        .first()
        .ok_or_else(|| Error::Contract("no runs to aggregate".into()))?;
    let steps: Vec<usize> = first.iter().map(|r| r.step).collect();
    for (i, s) in series.iter().enumerate() {
        if s.len() != steps.len() || s.iter().zip(&steps).any(|(r, &st)| r.step != st) {
            return Err(Error::Contract(format!(
                "run {i} does not share the evaluation schedule of run 0"
            )));
        }
    }
    let n = series.len();
    let mut means = Vec::with_capacity(steps.len());
    let mut halves = Vec::with_capacity(steps.len());
    for j in 0..steps.len() {
        let values: Vec<f64> = series.iter().map(|s| s[j].mean_return).collect();
        let (mean, std) = sample_mean_std(&values);
        means.push(mean);
        halves.push(0.5 * std);
    }
    Ok(AggregatedCurve {
        steps,
        mean: trailing_mean(&means, window),
        half_std: trailing_mean(&halves, window),
        seeds: n,
    })
}

/// Mean and `n − 1` standard deviation; the deviation is 0 below 2 samples.
pub fn sample_mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Contract(format!(
            "linear fit needs two or more paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("linear fit over a single x value".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
