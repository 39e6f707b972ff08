//! Concentration measurements, the guideline checker, random-walk statistics
//! and PCA projections of training trajectories.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuitsim::{prepare_rx_layer, Angles, RotationConvention};
use crate::error::{invalid, Error, Result};
use crate::measurement::{sample, PovmSpec};
use crate::optimizers::{Method, ShotBudget, TrainingTrajectory};
use crate::rng::RngStream;

/// Draws parameter points `α`.
pub trait AlphaSampler: Sync {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Angles>;
}

/// Every angle independent and uniform in `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformAngles {
    pub num_qubits: usize,
    pub low: f64,
    pub high: f64,
}

impl UniformAngles {
    pub fn full_circle(num_qubits: usize) -> Self {
        Self { num_qubits, low: 0.0, high: std::f64::consts::TAU }
    }
}

impl AlphaSampler for UniformAngles {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Angles> {
        Angles::new((0..self.num_qubits).map(|_| rng.random_range(self.low..self.high)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum VarianceMode {
    ExactProbabilities,
    /// `p̂_k` from `shots` samples, with the sampling variance subtracted.
    ShotEstimated { shots: u64 },
}

/// Mean and variance of each outcome probability over random `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub mode: VarianceMode,
    pub draws: usize,
    pub labels: Vec<f64>,
    /// `μ̂_k = mean_α p_k(α)`.
    pub means: Vec<f64>,
    /// `Var_α[p_k]`, clamped at zero after bias correction.
    pub variances: Vec<f64>,
    /// Standard errors of the variance estimates.
    pub standard_errors: Vec<f64>,
    /// `max_k Var_α[p_k]`.
    pub beta_hat: f64,
    pub beta_index: usize,
    /// How the tail bound is obtained from the estimate.
    pub protocol: String,
}

impl ConcentrationReport {
    pub fn beta_standard_error(&self) -> f64 {
        self.standard_errors[self.beta_index]
    }
}

/// Sample mean, unbiased variance and the standard error of that variance,
/// the last from the spread of squared deviations.
fn moments(xs: &[f64]) -> (f64, f64, f64) {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / (r - 1.0);
    let m2 = sq.iter().sum::<f64>() / r;
    let spread = sq.iter().map(|s| (s - m2).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, var, (spread / r).sqrt())
}

pub fn estimate_outcome_variance(
    povm: &PovmSpec,
    sampler: &dyn AlphaSampler,
    draws: usize,
    mode: VarianceMode,
    conv: RotationConvention,
    stream: &RngStream,
) -> Result<ConcentrationReport> {
    if draws < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 parameter draws, got {draws}")));
    }
    if let VarianceMode::ShotEstimated { shots } = mode {
        if shots < 2 {
            return Err(invalid("shot-estimated variance needs at least 2 shots"));
        }
    }
    let k = povm.cardinality();
    let rows: Vec<Vec<f64>> = (0..draws as u64)
        .into_par_iter()
        .map(|r| {
            let s = stream.child(r);
            let alpha = sampler.draw(&mut s.rng())?;
            let dist = povm.distribution(&prepare_rx_layer(&alpha, conv))?;
            match mode {
                VarianceMode::ExactProbabilities => Ok(dist.probabilities().to_vec()),
                VarianceMode::ShotEstimated { shots } => {
                    let counts = sample(&dist, shots, &s.child(1))?;
                    Ok(counts.counts().iter().map(|&c| c as f64 / shots as f64).collect())
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut means = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    let mut standard_errors = Vec::with_capacity(k);
    for j in 0..k {
        let column: Vec<f64> = rows.iter().map(|row| row[j]).collect();
        let (mean, var, se) = moments(&column);
        let var = match mode {
            VarianceMode::ExactProbabilities => var,
            VarianceMode::ShotEstimated { shots } => {
                let bias = column.iter().map(|p| p * (1.0 - p)).sum::<f64>() / (draws as f64 * (shots as f64 - 1.0));
                var - bias
            }
        };
        means.push(mean);
        variances.push(var.max(0.0));
        standard_errors.push(se);
    }
    let beta_index = variances
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    Ok(ConcentrationReport {
        mode,
        draws,
        labels: povm.labels().to_vec(),
        beta_hat: variances[beta_index],
        beta_index,
        means,
        variances,
        standard_errors,
        protocol: "sample variance over parameter draws; tail mass follows by Chebyshev".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingClass {
    Exponential,
    NotExponential,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<(usize, f64)>,
    /// Least-squares slope of `log₂ β̂` against `n`.
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the fit, in `log₂` units.
    pub residual: f64,
    pub class: ScalingClass,
}

pub const EXPONENTIAL_SLOPE: f64 = -0.5;
pub const MAX_FIT_RESIDUAL: f64 = 0.5;

/// `(slope, intercept, r²)` of ordinary least squares.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

pub fn concentration_scaling_fit(table: &[(usize, f64)]) -> Result<ScalingFit> {
    let mut sizes: Vec<usize> = table.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 system sizes, got {}", sizes.len())));
    }
    if let Some((n, b)) = table.iter().find(|(_, b)| !(*b > 0.0 && b.is_finite())) {
        return Err(invalid(format!("β̂ at n = {n} is {b}; need a positive value for a log fit")));
    }
    let xs: Vec<f64> = table.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = table.iter().map(|p| p.1.log2()).collect();
    let (slope, intercept, _) = linear_fit(&xs, &ys);
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    let class = if residual > MAX_FIT_RESIDUAL {
        ScalingClass::Inconclusive
    } else if slope <= EXPONENTIAL_SLOPE {
        ScalingClass::Exponential
    } else {
        ScalingClass::NotExponential
    };
    Ok(ScalingFit { points: table.to_vec(), slope, intercept, residual, class })
}

/// Declared growth of a POVM family's outcome count with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum CardinalityLaw {
    Constant { outcomes: u64 },
    Polynomial { coefficient: f64, degree: u32 },
    Exponential { base: f64 },
}

impl CardinalityLaw {
    pub fn is_polynomial(self) -> bool {
        match self {
            Self::Constant { .. } | Self::Polynomial { .. } => true,
            Self::Exponential { base } => base <= 1.0,
        }
    }

    pub fn at(self, n: usize) -> f64 {
        match self {
            Self::Constant { outcomes } => outcomes as f64,
            Self::Polynomial { coefficient, degree } => coefficient * (n as f64).powi(degree as i32),
            Self::Exponential { base } => base.powf(n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmEvidence {
    pub name: String,
    pub cardinality: CardinalityLaw,
    /// Scaling fit over system sizes, if measured.
    pub concentration: Option<ScalingFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityEvidence {
    pub quantity: String,
    pub povms: Vec<PovmEvidence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConcentrationLimited,
    OutsideScope,
    Inconclusive,
    NotLimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmFinding {
    pub quantity: String,
    pub povm: String,
    pub polynomial_cardinality: bool,
    pub concentration: Option<ScalingClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineVerdict {
    /// Step 1: quantities the procedure estimates.
    pub inventory: Vec<String>,
    /// Steps 2 and 3, one entry per POVM.
    pub findings: Vec<PovmFinding>,
    pub overall: Verdict,
}

/// Run the three-step check: list the estimated quantities, check each POVM's
/// declared cardinality, then its concentration evidence.
pub fn guideline_check(procedure: &[QuantityEvidence]) -> GuidelineVerdict {
    let inventory = procedure.iter().map(|q| q.quantity.clone()).collect();
    let findings: Vec<PovmFinding> = procedure
        .iter()
        .flat_map(|q| {
            q.povms.iter().map(|p| PovmFinding {
                quantity: q.quantity.clone(),
                povm: p.name.clone(),
                polynomial_cardinality: p.cardinality.is_polynomial(),
                concentration: p.concentration.as_ref().map(|f| f.class),
            })
        })
        .collect();
    let overall = if findings.is_empty() {
        Verdict::Inconclusive
    } else if findings.iter().any(|f| !f.polynomial_cardinality) {
        Verdict::OutsideScope
    } else if findings.iter().any(|f| matches!(f.concentration, None | Some(ScalingClass::Inconclusive))) {
        Verdict::Inconclusive
    } else if findings.iter().all(|f| f.concentration == Some(ScalingClass::Exponential)) {
        Verdict::ConcentrationLimited
    } else {
        Verdict::NotLimited
    };
    GuidelineVerdict { inventory, findings, overall }
}

/// Inputs of the coin model, all taken from the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinModel {
    pub learning_rate: f64,
    pub shift_scale: f64,
    pub coefficients: Vec<f64>,
    pub shots: ShotBudget,
}

impl CoinModel {
    /// Variance of one update component when every `±1` outcome is a fair coin:
    /// `η²κ²·2Σc²/N`, which is `η²Σc²/(2N)` at `κ = 1/2`. Zero for exact
    /// gradients.
    pub fn step_variance(&self) -> f64 {
        match self.shots {
            ShotBudget::Infinite => 0.0,
            ShotBudget::Finite(n) => {
                let c2: f64 = self.coefficients.iter().map(|c| c * c).sum();
                2.0 * (self.learning_rate * self.shift_scale).powi(2) * c2 / n as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkReport {
    pub ensemble_size: usize,
    pub num_params: usize,
    pub steps: usize,
    /// `[t][k]`: ensemble mean of `Δθ_t[k]`.
    pub component_means: Vec<Vec<f64>>,
    /// `[t][k]`: ensemble variance of `Δθ_t[k]`.
    pub component_variances: Vec<Vec<f64>>,
    /// Per step, pooled over ensemble and components.
    pub pooled_means: Vec<f64>,
    pub pooled_variances: Vec<f64>,
    pub pooled_mean_standard_errors: Vec<f64>,
    pub predicted_variance: f64,
    /// Pooled variance of `θ_t − θ_0` for `t = 1..=steps`.
    pub cumulative_variances: Vec<f64>,
    pub cumulative_slope: f64,
    pub cumulative_intercept: f64,
    pub cumulative_r2: f64,
}

/// Pass/fail summary against the coin model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkCheck {
    pub mean_failures: usize,
    pub variance_failures: usize,
    pub worst_variance_ratio: f64,
    pub cumulative_r2: f64,
}

impl RandomWalkCheck {
    pub fn passed(&self, min_r2: f64) -> bool {
        self.mean_failures == 0 && self.variance_failures == 0 && self.cumulative_r2 > min_r2
    }
}

impl RandomWalkReport {
    /// Count steps whose pooled mean lies beyond `mean_sigmas` standard errors of
    /// zero, or whose pooled variance differs from the prediction by more than
    /// `variance_tol` relative.
    pub fn check(&self, mean_sigmas: f64, variance_tol: f64) -> RandomWalkCheck {
        let mean_failures = self
            .pooled_means
            .iter()
            .zip(&self.pooled_mean_standard_errors)
            .filter(|(m, se)| m.abs() > mean_sigmas * **se)
            .count();
        let ratios: Vec<f64> = self.pooled_variances.iter().map(|v| v / self.predicted_variance).collect();
        let variance_failures = ratios.iter().filter(|r| (*r - 1.0).abs() > variance_tol).count();
        let worst_variance_ratio = ratios.iter().copied().max_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs())).unwrap_or(f64::NAN);
        RandomWalkCheck { mean_failures, variance_failures, worst_variance_ratio, cumulative_r2: self.cumulative_r2 }
    }
}

pub const MIN_RANDOM_WALK_ENSEMBLE: usize = 30;

pub fn random_walk_statistics(ensemble: &[TrainingTrajectory], model: &CoinModel) -> Result<RandomWalkReport> {
    if ensemble.len() < MIN_RANDOM_WALK_ENSEMBLE {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_RANDOM_WALK_ENSEMBLE} trajectories, got {}",
            ensemble.len()
        )));
    }
    let first = &ensemble[0];
    let steps = first.steps();
    let num_params = first.thetas.first().map_or(0, Vec::len);
    if steps < 2 || num_params == 0 {
        return Err(Error::InsufficientData("need at least two updates per trajectory".into()));
    }
    let mut ids = std::collections::HashSet::new();
    for t in ensemble {
        let same: (Method, ShotBudget, usize) = (t.method, t.shots, t.steps());
        if same != (first.method, first.shots, steps) || t.thetas[0].len() != num_params || t.error.is_some() {
            return Err(invalid(format!("trajectory {} does not share the ensemble configuration", t.trajectory_id)));
        }
        if !ids.insert((t.master_seed, t.trajectory_id)) {
            return Err(invalid(format!("trajectory {} appears twice", t.trajectory_id)));
        }
    }
    if model.shots != first.shots {
        return Err(invalid("coin model shot budget differs from the ensemble"));
    }
    let predicted = model.step_variance();
    if predicted.is_nan() || predicted <= 0.0 {
        return Err(invalid("coin model predicts no shot noise; use a finite shot budget"));
    }

    let r = ensemble.len() as f64;
    let mut component_means = Vec::with_capacity(steps);
    let mut component_variances = Vec::with_capacity(steps);
    let mut pooled_means = Vec::with_capacity(steps);
    let mut pooled_variances = Vec::with_capacity(steps);
    let mut pooled_mean_standard_errors = Vec::with_capacity(steps);
    let mut cumulative_variances = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut means = Vec::with_capacity(num_params);
        let mut vars = Vec::with_capacity(num_params);
        for k in 0..num_params {
            let xs: Vec<f64> = ensemble.iter().map(|tr| tr.updates[t][k]).collect();
            let mean = xs.iter().sum::<f64>() / r;
            means.push(mean);
            vars.push(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0));
        }
        let pooled: Vec<f64> = ensemble.iter().flat_map(|tr| tr.updates[t].iter().copied()).collect();
        let (m, v, _) = moments(&pooled);
        pooled_means.push(m);
        pooled_variances.push(v);
        pooled_mean_standard_errors.push((v / pooled.len() as f64).sqrt());
        component_means.push(means);
        component_variances.push(vars);

        let displacement: Vec<f64> = ensemble
            .iter()
            .flat_map(|tr| tr.thetas[t + 1].iter().zip(&tr.thetas[0]).map(|(a, b)| a - b))
            .collect();
        cumulative_variances.push(moments(&displacement).1);
    }
    let xs: Vec<f64> = (1..=steps).map(|t| t as f64).collect();
    let (cumulative_slope, cumulative_intercept, cumulative_r2) = linear_fit(&xs, &cumulative_variances);
    Ok(RandomWalkReport {
        ensemble_size: ensemble.len(),
        num_params,
        steps,
        component_means,
        component_variances,
        pooled_means,
        pooled_variances,
        pooled_mean_standard_errors,
        predicted_variance: model.step_variance(),
        cumulative_variances,
        cumulative_slope,
        cumulative_intercept,
        cumulative_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `[row j][column i]` is the loss at `(xs[i], ys[j])`.
    pub losses: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub anchor: Vec<f64>,
    pub directions: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// The pooled data did not span two dimensions; the second direction is
    /// an arbitrary unit vector orthogonal to the first.
    pub rank_deficient: bool,
    /// Per trajectory, the `(a, b)` coordinates of every point.
    pub projections: Vec<Vec<(f64, f64)>>,
    /// RMS distance between points and their reconstruction in the plane.
    pub residual: f64,
    pub grid: Option<LossGrid>,
}

/// Flip `v` so its first coordinate with `|v_i| > tol` is positive.
fn orient(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-12) {
        if *x < 0.0 {
            v.iter_mut().for_each(|y| *y = -*y);
        }
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vector orthogonal to `d`, built from the basis vector least aligned with it.
fn orthogonal_to(d: &[f64]) -> Vec<f64> {
    let i = d
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i);
    let mut v: Vec<f64> = (0..d.len()).map(|j| if j == i { 1.0 } else { 0.0 }).collect();
    let p = dot(&v, d);
    v.iter_mut().zip(d).for_each(|(x, y)| *x -= p * y);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Relative size below which the second covariance eigenvalue counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Top-two principal directions of all points pooled. With `grid = Some((res,
/// loss))` the loss is also tabulated on a `res × res` grid covering the
/// projected points with a 10% margin.
pub fn pca_project<F>(trajectories: &[Vec<Vec<f64>>], grid: Option<(usize, F)>) -> Result<PcaProjection>
where
    F: Fn(&Angles) -> Result<f64> + Sync,
{
    let points: Vec<&Vec<f64>> = trajectories.iter().flatten().collect();
    let dim = points.first().map_or(0, |p| p.len());
    if dim < 2 {
        return Err(invalid("need at least 2 parameters for a planar projection"));
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(invalid("points have different dimensions"));
    }
    let count = points.len() as f64;
    let anchor: Vec<f64> = (0..dim).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / count).collect();
    let centered = DMatrix::from_fn(points.len(), dim, |i, k| points[i][k] - anchor[k]);
    let cov = centered.transpose() * &centered / count;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0));
    if l1 <= 0.0 {
        return Err(Error::InsufficientData("need at least 2 distinct parameter points".into()));
    }
    let column = |j: usize| -> Vec<f64> { eig.eigenvectors.column(j).iter().copied().collect() };
    let d1 = orient(column(order[0]));
    let rank_deficient = l2 <= RANK_TOL * l1;
    let d2 = if rank_deficient {
        orient(orthogonal_to(&d1))
    } else {
        // re-orthogonalise against d1 to keep the pair orthonormal to rounding
        let mut v = column(order[1]);
        let p = dot(&v, &d1);
        v.iter_mut().zip(&d1).for_each(|(x, y)| *x -= p * y);
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        orient(v)
    };

    let mut sq_err = 0.0;
    let projections: Vec<Vec<(f64, f64)>> = trajectories
        .iter()
        .map(|traj| {
            traj.iter()
                .map(|p| {
                    let c: Vec<f64> = p.iter().zip(&anchor).map(|(x, a)| x - a).collect();
                    let (a, b) = (dot(&c, &d1), dot(&c, &d2));
                    sq_err += c.iter().enumerate().map(|(k, x)| (x - a * d1[k] - b * d2[k]).powi(2)).sum::<f64>();
                    (a, b)
                })
                .collect()
        })
        .collect();
    let residual = (sq_err / count).sqrt();

    let grid = match grid {
        None => None,
        Some((res, loss)) => {
            if res < 2 {
                return Err(invalid("grid needs at least 2 points per axis"));
            }
            let all: Vec<(f64, f64)> = projections.iter().flatten().copied().collect();
            let axis = |f: &dyn Fn(&(f64, f64)) -> f64| -> Vec<f64> {
                let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
                let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
                let pad = 0.1 * (hi - lo).max(1e-3);
                let (lo, hi) = (lo - pad, hi + pad);
                (0..res).map(|i| lo + (hi - lo) * i as f64 / (res - 1) as f64).collect()
            };
            let xs = axis(&|p| p.0);
            let ys = axis(&|p| p.1);
            let losses = ys
                .par_iter()
                .map(|&b| {
                    xs.iter()
                        .map(|&a| {
                            let theta: Vec<f64> = (0..dim).map(|k| anchor[k] + a * d1[k] + b * d2[k]).collect();
                            loss(&Angles::new(theta)?)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Some(LossGrid { xs, ys, losses })
        }
    };
    Ok(PcaProjection { anchor, directions: [d1, d2], eigenvalues: [l1, l2], rank_deficient, projections, residual, grid })
}

/// `DVector` view used by callers that want nalgebra types.
pub fn direction_vectors(p: &PcaProjection) -> [DVector<f64>; 2] {
    [DVector::from_vec(p.directions[0].clone()), DVector::from_vec(p.directions[1].clone())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuitsim::{loss_exact, Observable};
    use crate::measurement::pauli_term_povm;

    type NoLoss = fn(&Angles) -> Result<f64>;

    fn global_z_povm(n: usize) -> PovmSpec {
        pauli_term_povm(&Observable::global_z(n).unwrap().terms()[0])
    }

    #[test]
    fn global_z_variance_small_n() {
        let rep = estimate_outcome_variance(
            &global_z_povm(4),
            &UniformAngles::full_circle(4),
            20_000,
            VarianceMode::ExactProbabilities,
            RotationConvention::HalfAngle,
            &RngStream::new(2, 0),
        )
        .unwrap();
        let expected = 2f64.powi(-4) / 4.0;
        assert!((rep.beta_hat - expected).abs() <= 3.0 * rep.beta_standard_error());
        assert!((rep.means[0] - 0.5).abs() < 0.01);
    }

    #[test]
    fn constant_povm_has_zero_variance() {
        let s = UniformAngles { num_qubits: 3, low: 0.0, high: 1e-300 };
        let rep = estimate_outcome_variance(
            &global_z_povm(3),
            &s,
            10,
            VarianceMode::ExactProbabilities,
            RotationConvention::HalfAngle,
            &RngStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(rep.beta_hat, 0.0);
    }

    #[test]
    fn too_few_draws() {
        let r = estimate_outcome_variance(
            &global_z_povm(3),
            &UniformAngles::full_circle(3),
            1,
            VarianceMode::ExactProbabilities,
            RotationConvention::HalfAngle,
            &RngStream::new(0, 0),
        );
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn fit_examples() {
        let exact: Vec<(usize, f64)> = [6, 8, 10, 12].iter().map(|&n| (n, 2f64.powi(-(n as i32)) / 4.0)).collect();
        let f = concentration_scaling_fit(&exact).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert_eq!(f.class, ScalingClass::Exponential);

        let flat = concentration_scaling_fit(&[(4, 0.1), (6, 0.1), (8, 0.1)]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert_eq!(flat.class, ScalingClass::NotExponential);

        let noise = [1.05, 0.95, 1.03, 0.97, 1.04];
        let noisy: Vec<(usize, f64)> = (0..5).map(|i| (4 + 2 * i, 2f64.powi(-(4 + 2 * i as i32)) * noise[i])).collect();
        assert_eq!(concentration_scaling_fit(&noisy).unwrap().class, ScalingClass::Exponential);

        assert!(concentration_scaling_fit(&exact[..2]).is_err());
        assert!(concentration_scaling_fit(&[(4, 0.1), (6, 0.0), (8, 0.1)]).is_err());
    }

    fn exp_fit() -> ScalingFit {
        concentration_scaling_fit(&[(6, 2f64.powi(-8)), (8, 2f64.powi(-10)), (10, 2f64.powi(-12))]).unwrap()
    }

    #[test]
    fn guideline_examples() {
        let gz = |fit: Option<ScalingFit>, law| QuantityEvidence {
            quantity: "loss".into(),
            povms: vec![PovmEvidence { name: "global Z".into(), cardinality: law, concentration: fit }],
        };
        let two = CardinalityLaw::Constant { outcomes: 2 };
        assert_eq!(guideline_check(&[gz(Some(exp_fit()), two)]).overall, Verdict::ConcentrationLimited);
        assert_eq!(guideline_check(&[gz(Some(exp_fit()), CardinalityLaw::Exponential { base: 2.0 })]).overall, Verdict::OutsideScope);
        assert_eq!(guideline_check(&[gz(None, two)]).overall, Verdict::Inconclusive);
        assert_eq!(guideline_check(&[]).overall, Verdict::Inconclusive);
        let flat = concentration_scaling_fit(&[(4, 0.1), (6, 0.1), (8, 0.1)]).unwrap();
        assert_eq!(guideline_check(&[gz(Some(flat), two)]).overall, Verdict::NotLimited);
        // same input, same verdict
        assert_eq!(guideline_check(&[gz(Some(exp_fit()), two)]), guideline_check(&[gz(Some(exp_fit()), two)]));
    }

    #[test]
    fn coin_model_prediction() {
        let m = CoinModel { learning_rate: 0.1, shift_scale: 0.5, coefficients: vec![1.0], shots: ShotBudget::Finite(150) };
        assert!((m.step_variance() - 0.01 / 300.0).abs() < 1e-18);
        let inf = CoinModel { shots: ShotBudget::Infinite, ..m };
        assert_eq!(inf.step_variance(), 0.0);
    }

    #[test]
    fn small_ensembles_rejected() {
        let m = CoinModel { learning_rate: 0.1, shift_scale: 0.5, coefficients: vec![1.0], shots: ShotBudget::Finite(150) };
        assert!(matches!(random_walk_statistics(&[], &m), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pca_on_a_line() {
        let traj = vec![(0..5).map(|i| vec![0.0, i as f64, 0.0]).collect::<Vec<_>>()];
        let p = pca_project::<NoLoss>(&traj, None).unwrap();
        assert!((p.directions[0][1] - 1.0).abs() < 1e-12);
        assert!(p.eigenvalues[1].abs() < 1e-12);
        assert!(p.rank_deficient);
        assert!(dot(&p.directions[0], &p.directions[1]).abs() < 1e-12);
        assert!((dot(&p.directions[1], &p.directions[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_planar_fixture() {
        let u = [0.6, 0.0, 0.8, 0.0];
        let v = [0.0, 1.0, 0.0, 0.0];
        let traj: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let (a, b) = ((i as f64 * 0.7).sin() * 3.0, (i as f64 * 1.3).cos());
                (0..4).map(|k| 0.5 + a * u[k] + b * v[k]).collect()
            })
            .collect();
        let p = pca_project::<NoLoss>(&[traj], None).unwrap();
        assert!(p.residual < 1e-10);
        assert!(p.eigenvalues[0] >= p.eigenvalues[1]);
        assert!(!p.rank_deficient);
        for d in &p.directions {
            assert!((dot(d, d) - 1.0).abs() < 1e-10);
            assert!(d.iter().find(|x| x.abs() > 1e-12).unwrap() > &0.0);
        }
        assert!(dot(&p.directions[0], &p.directions[1]).abs() < 1e-10);
    }

    #[test]
    fn pca_grid_values() {
        let obs = Observable::global_z(2).unwrap();
        let traj = vec![vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.3, 1.2]]];
        let loss = |t: &Angles| loss_exact(t, &obs, RotationConvention::HalfAngle);
        let p = pca_project(&traj, Some((5, loss))).unwrap();
        let g = p.grid.unwrap();
        assert_eq!(g.losses.len(), 5);
        let (a, b) = (g.xs[2], g.ys[3]);
        let theta: Vec<f64> = (0..2).map(|k| p.anchor[k] + a * p.directions[0][k] + b * p.directions[1][k]).collect();
        assert!((g.losses[3][2] - theta[0].cos() * theta[1].cos()).abs() < 1e-12);
    }

    #[test]
    fn pca_needs_distinct_points() {
        assert!(pca_project::<NoLoss>(&[vec![vec![1.0, 2.0]; 3]], None).is_err());
        assert!(pca_project::<NoLoss>(&[vec![vec![1.0], vec![2.0]]], None).is_err());
    }
}
