//! Accuracy and calibration metrics.

use crate::error::{Error, Result};

/// Normalized squared error `|pred - truth|^2 / |truth|^2`.
pub fn nse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} truths", pred.len(), truth.len())));
    }
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DegenerateTruth);
    }
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(num / den)
}

/// Per-sample errors with their mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct MnseSummary {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MnseSummary {
    pub fn from_samples(per_sample: Vec<f64>) -> Self {
        let n = per_sample.len().max(1) as f64;
        let mean = per_sample.iter().sum::<f64>() / n;
        let var = per_sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { per_sample, mean, std: var.sqrt() }
    }
}

/// Mean normalized squared error over paired samples.
pub fn mnse(preds: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<MnseSummary> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::Shape("mnse needs equally many non-zero samples".into()));
    }
    let per = preds.iter().zip(truths).map(|(p, t)| nse(p, t)).collect::<Result<Vec<_>>>()?;
    Ok(MnseSummary::from_samples(per))
}

/// Percentage of `truth` inside `mean +- 2 std`.
pub fn coverage_2sigma(means: &[f64], stds: &[f64], truth: &[f64]) -> Result<f64> {
    let n = truth.len();
    if means.len() != n || stds.len() != n || n == 0 {
        return Err(Error::Shape("coverage operands differ in length".into()));
    }
    if stds.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("standard deviations must be positive".into()));
    }
    let inside = (0..n).filter(|&i| (truth[i] - means[i]).abs() <= 2.0 * stds[i]).count();
    Ok(100.0 * inside as f64 / n as f64)
}
