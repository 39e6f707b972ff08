//! Post-processing maps from shot counts to scalar estimates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measurement::{OutcomeDistribution, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorKind {
    EmpiricalMean,
    Cvar { gamma: f64 },
}

impl EstimatorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::EmpiricalMean => Ok(()),
            Self::Cvar { gamma } => check_gamma(gamma),
        }
    }

    pub fn apply(&self, s: &SampleSet) -> Result<f64> {
        match *self {
            Self::EmpiricalMean => Ok(mean_map(s)),
            Self::Cvar { gamma } => cvar_map(s, gamma),
        }
    }

    /// The same map on an exact distribution (the infinite-shot limit).
    pub fn apply_exact(&self, d: &OutcomeDistribution) -> Result<f64> {
        match *self {
            Self::EmpiricalMean => Ok(d.mean()),
            Self::Cvar { gamma } => cvar_exact(d, gamma),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("CVaR level must lie in (0, 1], got {gamma}")))
    }
}

/// `Σ_k λ_k n_k / N`.
pub fn mean_map(s: &SampleSet) -> f64 {
    s.iter().map(|(l, c)| l * c as f64).sum::<f64>() / s.shots() as f64
}

/// Labels in ascending order, paired with their counts (or masses).
fn ascending<T: Copy>(pairs: impl Iterator<Item = (f64, T)>) -> Vec<(f64, T)> {
    let mut v: Vec<(f64, T)> = pairs.collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Mean of the `⌈γN⌉` smallest outcomes, computed from counts: labels are walked
/// in ascending order and the boundary label contributes only the part of its
/// count still needed.
pub fn cvar_map(s: &SampleSet, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let n = s.shots();
    // ⌈γN⌉ with a guard against γN landing a hair above an integer
    let raw = gamma * n as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() <= 1e-9 * raw.max(1.0) { nearest } else { raw.ceil() };
    let k = (k as u64).clamp(1, n);
    let mut need = k;
    let mut total = 0.0;
    for (label, count) in ascending(s.iter()) {
        let take = count.min(need);
        total += label * take as f64;
        need -= take;
        if need == 0 {
            break;
        }
    }
    Ok(total / k as f64)
}

/// CVaR of an exact distribution: mean over the lowest `γ` probability mass.
pub fn cvar_exact(d: &OutcomeDistribution, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut need = gamma;
    let mut total = 0.0;
    let pairs = ascending(d.labels().iter().copied().zip(d.probabilities().iter().copied()));
    for (label, p) in pairs {
        let take = p.min(need);
        total += label * take;
        need -= take;
        if need <= 0.0 {
            break;
        }
    }
    Ok(total / gamma)
}

/// `Σ_i c_i ℓ̂_i`.
pub fn linear_combination(estimates: &[f64], coefficients: &[f64]) -> Result<f64> {
    if estimates.len() != coefficients.len() {
        return Err(Error::LengthMismatch { expected: coefficients.len(), actual: estimates.len() });
    }
    Ok(estimates.iter().zip(coefficients).map(|(e, c)| e * c).sum())
}

/// `(1/N_ℓ) Σ_i (y_i − ℓ̂_i)²`.
pub fn mse_map(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch { expected: targets.len(), actual: predictions.len() });
    }
    if predictions.is_empty() {
        return Err(invalid("MSE over an empty set"));
    }
    Ok(predictions.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / predictions.len() as f64)
}
