//! Finite-shot training loops on the RX-layer ansatz.
//!
//! All five methods share one gradient estimator, the two-point shift rule
//! `g_k = κ·[ℒ̂(θ + s·e_k) − ℒ̂(θ − s·e_k)]`, where every shifted loss draws fresh
//! shots from its own [`RngStream`]. They differ only in what is done with `g`:
//!
//! | method    | update                                               |
//! |-----------|------------------------------------------------------|
//! | `gd`      | `θ ← θ − η g`                                        |
//! | `qng`     | `θ ← θ − η g⁺(θ) g` with `g⁺` the metric pseudo-inverse |
//! | `cvar_gd` | `gd` with ℒ̂ the CVaR of eigenvalue samples           |
//! | `rps`     | `θ ← θ − η λ(d, N) g`                                |
//! | `nn_init` | `w ← w − η Jᵀ g`, `θ = net(w)`                       |
//!
//! Evaluation ids inside one step: `2k` and `2k+1` for the `±` shifts of
//! component `k`, [`LOSS_RECORD_EVAL`] for the recorded loss estimate and
//! [`QGT_EVAL`] for metric estimation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuitsim::{loss_exact, prepare_rx_layer, Angles, Observable, RotationConvention, ZMask};
use crate::error::{invalid, Error, Result};
use crate::estimators::{linear_combination, mean_map, EstimatorKind};
use crate::measurement::{
    cvar_eigenvalue_povm, parity_eigen_distribution, pauli_term_povm, sample, x_basis_povm, OutcomeDistribution,
};
use crate::rng::{RngStream, StepStreams, INIT_STEP};

pub const LOSS_RECORD_EVAL: u64 = u64::MAX - 1;
pub const QGT_EVAL: u64 = u64::MAX - 2;

/// Shots per loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShotBudget {
    Finite(u64),
    /// Exact expectations, no sampling.
    Infinite,
}

impl ShotBudget {
    pub fn finite(self) -> Option<u64> {
        match self {
            Self::Finite(n) => Some(n),
            Self::Infinite => None,
        }
    }
}

impl std::fmt::Display for ShotBudget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(n) => write!(f, "{n}"),
            Self::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for ShotBudget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(n) => s.serialize_u64(*n),
            Self::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for ShotBudget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Token(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Self::Finite(n)),
            Raw::Token(t) if t == "infinite" => Ok(Self::Infinite),
            Raw::Token(t) => Err(serde::de::Error::custom(format!("unknown shot token {t:?}"))),
        }
    }
}

/// ℒ̂(θ): either the exact loss or a finite-shot estimate built from POVM samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluator {
    observable: Observable,
    estimator: EstimatorKind,
    shots: ShotBudget,
    convention: RotationConvention,
    nested_cvar: Option<[f64; 4]>,
}

impl LossEvaluator {
    pub fn new(
        observable: Observable,
        estimator: EstimatorKind,
        shots: ShotBudget,
        convention: RotationConvention,
    ) -> Result<Self> {
        estimator.validate()?;
        if shots == ShotBudget::Finite(0) {
            return Err(invalid("shot budget must be at least 1"));
        }
        let nested_cvar = nested_cvar_coefficients(&observable);
        Ok(Self { observable, estimator, shots, convention, nested_cvar })
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn estimator(&self) -> EstimatorKind {
        self.estimator
    }

    pub fn shots(&self) -> ShotBudget {
        self.shots
    }

    pub fn convention(&self) -> RotationConvention {
        self.convention
    }

    fn eigen_distribution(&self, theta: &Angles) -> Result<OutcomeDistribution> {
        match self.nested_cvar {
            Some(c) => Ok(cvar_eigenvalue_povm(c, theta, self.convention)?.distribution),
            None => parity_eigen_distribution(&self.observable, &prepare_rx_layer(theta, self.convention)),
        }
    }

    /// Infinite-shot value of the estimator: `Tr[Hρ]` for the mean map, the
    /// CVaR of the exact eigenvalue distribution for the CVaR map.
    pub fn exact(&self, theta: &Angles) -> Result<f64> {
        match self.estimator {
            EstimatorKind::EmpiricalMean => loss_exact(theta, &self.observable, self.convention),
            EstimatorKind::Cvar { .. } => self.estimator.apply_exact(&self.eigen_distribution(theta)?),
        }
    }

    pub fn evaluate(&self, theta: &Angles, stream: &RngStream) -> Result<f64> {
        let shots = match self.shots {
            ShotBudget::Infinite => return self.exact(theta),
            ShotBudget::Finite(n) => n,
        };
        self.observable.check_within(theta.len())?;
        match self.estimator {
            EstimatorKind::EmpiricalMean => {
                let state = prepare_rx_layer(theta, self.convention);
                let estimates = self
                    .observable
                    .terms()
                    .iter()
                    .enumerate()
                    .map(|(i, term)| {
                        let dist = pauli_term_povm(term).distribution(&state)?;
                        Ok(mean_map(&sample(&dist, shots, &stream.child(i as u64))?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                linear_combination(&estimates, &self.observable.coefficients())
            }
            EstimatorKind::Cvar { .. } => {
                let dist = self.eigen_distribution(theta)?;
                self.estimator.apply(&sample(&dist, shots, stream)?)
            }
        }
    }
}

/// Coefficients if `obs` is exactly `Σ_j c_j Z^{⊗(n−j)}`, `j = 0..3`.
fn nested_cvar_coefficients(obs: &Observable) -> Option<[f64; 4]> {
    let t = obs.terms();
    if t.len() != 4 {
        return None;
    }
    let n = t[0].mask.span();
    if n < 4 {
        return None;
    }
    for (j, term) in t.iter().enumerate() {
        if term.mask != ZMask::prefix(n - j).ok()? {
            return None;
        }
    }
    Some([t[0].coefficient, t[1].coefficient, t[2].coefficient, t[3].coefficient])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    Qng,
    CvarGd,
    Rps,
    NnInit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::Qng => "qng",
            Self::CvarGd => "cvar_gd",
            Self::Rps => "rps",
            Self::NnInit => "nn_init",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QgtMode {
    #[default]
    Analytic,
    ShotEstimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QgtSettings {
    pub mode: QgtMode,
    /// Eigenvalues at or below this are treated as zero by the pseudo-inverse.
    pub tolerance: f64,
    /// Added to the diagonal before inversion.
    pub ridge: f64,
}

impl Default for QgtSettings {
    fn default() -> Self {
        Self { mode: QgtMode::Analytic, tolerance: 1e-8, ridge: 0.0 }
    }
}

/// Shape and initialisation of the parameter-generating network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub input_dim: usize,
    /// Hidden widths; `None` means one hidden layer of width `max(8, n)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    /// Hidden weights and biases are drawn from `U[−a, a]` with this `a`.
    pub hidden_init: f64,
    /// Output-layer range; `None` means `2/√(fan_in + 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_init: Option<f64>,
}

impl Default for MlpSettings {
    fn default() -> Self {
        Self { input_dim: 4, hidden: None, hidden_init: 1.0, output_init: None }
    }
}

impl MlpSettings {
    pub fn hidden_widths(&self, n: usize) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| vec![n.max(8)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    /// Parameter shift `s` in radians.
    pub shift: f64,
    /// Shift-rule prefactor `κ`.
    pub shift_scale: f64,
    pub steps: usize,
    /// CVaR level, used by `cvar_gd`.
    pub gamma: f64,
    pub qgt: QgtSettings,
    pub mlp: MlpSettings,
}

impl OptimizerConfig {
    /// Defaults with the shift rule matched to `conv`.
    pub fn new(method: Method, learning_rate: f64, steps: usize, conv: RotationConvention) -> Self {
        let (shift, shift_scale) = conv.exact_shift_rule();
        Self {
            method,
            learning_rate,
            shift,
            shift_scale,
            steps,
            gamma: 0.25,
            qgt: QgtSettings::default(),
            mlp: MlpSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.shift > 0.0 && self.shift <= PI) {
            return Err(invalid(format!("shift must lie in (0, π], got {}", self.shift)));
        }
        if !(self.shift_scale > 0.0 && self.shift_scale.is_finite()) {
            return Err(invalid(format!("shift scale must be positive, got {}", self.shift_scale)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(format!("CVaR level must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.qgt.tolerance >= 0.0 && self.qgt.ridge >= 0.0) {
            return Err(invalid("pseudo-inverse tolerance and ridge must be non-negative"));
        }
        if self.mlp.input_dim == 0 || self.mlp.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(invalid("network layers must have positive width"));
        }
        Ok(())
    }
}

/// Two-point shift-rule gradient. Component `k` uses evaluation ids `2k` (`+s`)
/// and `2k+1` (`−s`).
pub fn parameter_shift_gradient(
    theta: &Angles,
    evaluator: &LossEvaluator,
    shift: f64,
    scale: f64,
    streams: &StepStreams,
) -> Result<Vec<f64>> {
    if !(shift > 0.0 && shift <= PI) {
        return Err(invalid(format!("shift must lie in (0, π], got {shift}")));
    }
    if scale.is_nan() || scale <= 0.0 {
        return Err(invalid(format!("shift scale must be positive, got {scale}")));
    }
    (0..theta.len())
        .map(|k| {
            let plus = evaluator.evaluate(&theta.shifted(k, shift), &streams.stream(2 * k as u64))?;
            let minus = evaluator.evaluate(&theta.shifted(k, -shift), &streams.stream(2 * k as u64 + 1))?;
            Ok(scale * (plus - minus))
        })
        .collect()
}

fn descend(theta: &Angles, rate: f64, direction: &[f64]) -> Result<Angles> {
    Angles::new(theta.as_slice().iter().zip(direction).map(|(t, g)| t - rate * g).collect())
}

fn require(config: &OptimizerConfig, method: Method) -> Result<()> {
    if config.method == method {
        Ok(())
    } else {
        Err(invalid(format!("config is for {}, not {}", config.method.name(), method.name())))
    }
}

pub fn gd_step(theta: &Angles, config: &OptimizerConfig, evaluator: &LossEvaluator, streams: &StepStreams) -> Result<Angles> {
    let g = parameter_shift_gradient(theta, evaluator, config.shift, config.shift_scale, streams)?;
    descend(theta, config.learning_rate, &g)
}

/// Fubini–Study metric of the RX layer, `g_ij = Re G_ij` with
/// `G_ij = c·(⟨X_iX_j⟩ − ⟨X_i⟩⟨X_j⟩)`, `c` the convention prefactor.
///
/// On the product state `⟨X_iX_j⟩ = ⟨X_i⟩⟨X_j⟩` for `i ≠ j` and `X_i² = 1`, so the
/// metric is `c·diag(1 − ⟨X_i⟩²)`. The analytic mode uses exact expectations
/// (all zero for this ansatz, giving `c·𝟙`); the shot mode estimates each
/// `⟨X_i⟩` from `shots` X-basis samples.
pub fn qgt_rx_layer(
    theta: &Angles,
    conv: RotationConvention,
    mode: QgtMode,
    shots: ShotBudget,
    stream: &RngStream,
) -> Result<DMatrix<f64>> {
    let n = theta.len();
    let c = conv.metric_prefactor();
    let state = prepare_rx_layer(theta, conv);
    let x: Vec<f64> = match (mode, shots) {
        (QgtMode::ShotEstimated, ShotBudget::Finite(0)) => {
            return Err(invalid("shot-estimated metric needs at least one shot"))
        }
        (QgtMode::ShotEstimated, ShotBudget::Finite(n_shots)) => (0..n)
            .map(|q| {
                let d = x_basis_povm(q).distribution(&state)?;
                Ok(mean_map(&sample(&d, n_shots, &stream.child(q as u64))?))
            })
            .collect::<Result<_>>()?,
        _ => (0..n).map(|q| state.x_expectation(q)).collect::<Result<_>>()?,
    };
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { c * (1.0 - x[i] * x[i]) } else { 0.0 }))
}

/// Eigendecomposition-based pseudo-inverse of a symmetric matrix.
pub fn pseudo_inverse(matrix: &DMatrix<f64>, tolerance: f64, ridge: f64) -> Result<DMatrix<f64>> {
    if !matrix.is_square() {
        return Err(invalid(format!("matrix is {}×{}", matrix.nrows(), matrix.ncols())));
    }
    let scale = matrix.amax().max(1.0);
    let asym = (matrix - matrix.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::NonSymmetric(asym));
    }
    let n = matrix.nrows();
    let shifted = matrix + DMatrix::identity(n, n) * ridge;
    let eig = SymmetricEigen::new(shifted);
    let inv = eig.eigenvalues.map(|l| if l > tolerance { 1.0 / l } else { 0.0 });
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

pub fn qng_step(theta: &Angles, config: &OptimizerConfig, evaluator: &LossEvaluator, streams: &StepStreams) -> Result<Angles> {
    require(config, Method::Qng)?;
    let g = parameter_shift_gradient(theta, evaluator, config.shift, config.shift_scale, streams)?;
    let metric = qgt_rx_layer(theta, evaluator.convention(), config.qgt.mode, evaluator.shots(), &streams.stream(QGT_EVAL))?;
    let pinv = pseudo_inverse(&metric, config.qgt.tolerance, config.qgt.ridge)?;
    let natural = &pinv * DVector::from_column_slice(&g);
    descend(theta, config.learning_rate, natural.as_slice())
}

pub fn cvar_gd_step(theta: &Angles, config: &OptimizerConfig, evaluator: &LossEvaluator, streams: &StepStreams) -> Result<Angles> {
    require(config, Method::CvarGd)?;
    if !matches!(evaluator.estimator(), EstimatorKind::Cvar { .. }) {
        return Err(invalid("cvar_gd needs a CVaR loss evaluator"));
    }
    gd_step(theta, config, evaluator, streams)
}

/// `λ = dN / (2d² + Nd − 2)`.
pub fn rps_lambda(dimension: f64, shots: f64) -> f64 {
    dimension * shots / (2.0 * dimension * dimension + shots * dimension - 2.0)
}

pub fn rps_step(theta: &Angles, config: &OptimizerConfig, evaluator: &LossEvaluator, streams: &StepStreams) -> Result<Angles> {
    require(config, Method::Rps)?;
    let lambda = match evaluator.shots() {
        ShotBudget::Infinite => 1.0,
        ShotBudget::Finite(n) => rps_lambda(2f64.powi(theta.len() as i32), n as f64),
    };
    let g = parameter_shift_gradient(theta, evaluator, config.shift, config.shift_scale, streams)?;
    let scaled: Vec<f64> = g.iter().map(|x| lambda * x).collect();
    descend(theta, config.learning_rate, &scaled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// `θ = π·tanh(W_L h_{L−1} + b_L)`, `h_l = tanh(W_l h_{l−1} + b_l)`, `h_0` a fixed input.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
    input: DVector<f64>,
}

/// Gradients with the same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub layers: Vec<DenseLayer>,
}

impl MlpNetwork {
    pub fn new(layers: Vec<DenseLayer>, input: DVector<f64>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        let mut width = input.len();
        for (i, l) in layers.iter().enumerate() {
            if l.weights.ncols() != width || l.bias.len() != l.weights.nrows() {
                return Err(invalid(format!(
                    "layer {i}: weights {}×{}, bias {}, incoming width {width}",
                    l.weights.nrows(),
                    l.weights.ncols(),
                    l.bias.len()
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|w| !w.is_finite()) {
                return Err(invalid(format!("layer {i} has non-finite parameters")));
            }
            width = l.weights.nrows();
        }
        Ok(Self { layers, input })
    }

    /// Fixed all-ones input, weights uniform as described by `settings`.
    pub fn random(n: usize, settings: &MlpSettings, stream: &RngStream) -> Result<Self> {
        let mut rng = stream.rng();
        let mut widths = vec![settings.input_dim];
        widths.extend(settings.hidden_widths(n));
        widths.push(n);
        let depth = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let a = if i + 1 == depth {
                    settings.output_init.unwrap_or(2.0 / ((w[0] + 1) as f64).sqrt())
                } else {
                    settings.hidden_init
                };
                let mut draw = || if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
                let weights = DMatrix::from_fn(w[1], w[0], |_, _| draw());
                let bias = DVector::from_fn(w[1], |_, _| draw());
                DenseLayer { weights, bias }
            })
            .collect();
        Self::new(layers, DVector::from_element(settings.input_dim, 1.0))
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    /// Activations `h_0..h_{L−1}` and the output `tanh(z_L)`.
    fn forward_cached(&self) -> (Vec<DVector<f64>>, DVector<f64>) {
        let mut acts = vec![self.input.clone()];
        let last = self.layers.len() - 1;
        let mut out = DVector::zeros(0);
        for (i, l) in self.layers.iter().enumerate() {
            let z = &l.weights * acts.last().unwrap() + &l.bias;
            let h = z.map(f64::tanh);
            if i == last {
                out = h;
            } else {
                acts.push(h);
            }
        }
        (acts, out)
    }

    pub fn forward(&self) -> Result<Angles> {
        let (_, out) = self.forward_cached();
        Angles::new(out.iter().map(|t| PI * t).collect())
    }

    /// Reverse-mode `Jᵀ v` for the map weights → angles.
    pub fn vjp(&self, cotangent: &[f64]) -> Result<MlpGradient> {
        if cotangent.len() != self.output_dim() {
            return Err(Error::LengthMismatch { expected: self.output_dim(), actual: cotangent.len() });
        }
        let (acts, out) = self.forward_cached();
        // dθ/dz_L = π (1 − tanh²)
        let mut delta = DVector::from_fn(out.len(), |i, _| cotangent[i] * PI * (1.0 - out[i] * out[i]));
        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let h_in = &acts[l];
            grads.push(DenseLayer { weights: &delta * h_in.transpose(), bias: delta.clone() });
            if l > 0 {
                let back = layer.weights.transpose() * &delta;
                delta = DVector::from_fn(back.len(), |i, _| back[i] * (1.0 - h_in[i] * h_in[i]));
            }
        }
        grads.reverse();
        Ok(MlpGradient { layers: grads })
    }

    /// All weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let expected: usize = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        if params.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: params.len() });
        }
        let mut it = params.iter().copied();
        let layers = self
            .layers
            .iter()
            .map(|l| DenseLayer {
                weights: DMatrix::from_iterator(l.weights.nrows(), l.weights.ncols(), it.by_ref().take(l.weights.len())),
                bias: DVector::from_iterator(l.bias.len(), it.by_ref().take(l.bias.len())),
            })
            .collect();
        Self::new(layers, self.input.clone())
    }

    fn apply(&self, grad: &MlpGradient, rate: f64) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .zip(&grad.layers)
            .map(|(l, g)| DenseLayer { weights: &l.weights - &g.weights * rate, bias: &l.bias - &g.bias * rate })
            .collect();
        Self::new(layers, self.input.clone())
    }
}

impl MlpGradient {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

pub fn nn_forward(net: &MlpNetwork) -> Result<Angles> {
    net.forward()
}

/// `w ← w − η Jᵀ ĝ` with `ĝ` the shift-rule gradient at `θ = net(w)`.
pub fn nn_init_step(net: &MlpNetwork, config: &OptimizerConfig, evaluator: &LossEvaluator, streams: &StepStreams) -> Result<MlpNetwork> {
    require(config, Method::NnInit)?;
    let theta = net.forward()?;
    let g = parameter_shift_gradient(&theta, evaluator, config.shift, config.shift_scale, streams)?;
    net.apply(&net.vjp(&g)?, config.learning_rate)
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSpec {
    pub num_qubits: usize,
    pub evaluator: LossEvaluator,
    pub optimizer: OptimizerConfig,
    /// Initial angles are drawn uniformly from `[low, high)`.
    pub init_range: (f64, f64),
}

impl TrainingSpec {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.evaluator.observable().check_within(self.num_qubits)?;
        let (lo, hi) = self.init_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("bad initialisation range [{lo}, {hi})")));
        }
        if self.optimizer.method == Method::CvarGd && !matches!(self.evaluator.estimator(), EstimatorKind::Cvar { .. }) {
            return Err(invalid("cvar_gd needs a CVaR loss evaluator"));
        }
        Ok(())
    }

    pub fn initial_angles(&self, master_seed: u64, trajectory: u64) -> Result<Angles> {
        let mut rng = RngStream::derive(master_seed, trajectory, INIT_STEP, 0).rng();
        let (lo, hi) = self.init_range;
        Angles::new((0..self.num_qubits).map(|_| rng.random_range(lo..hi)).collect())
    }

    pub fn initial_network(&self, master_seed: u64, trajectory: u64) -> Result<MlpNetwork> {
        MlpNetwork::random(self.num_qubits, &self.optimizer.mlp, &RngStream::derive(master_seed, trajectory, INIT_STEP, 1))
    }
}

/// Ordered record of one run: `steps + 1` parameter points and `steps` updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrajectory {
    pub master_seed: u64,
    pub trajectory_id: u64,
    pub method: Method,
    pub shots: ShotBudget,
    pub thetas: Vec<Vec<f64>>,
    /// ℒ̂ at each recorded point (exact value when shots are infinite).
    pub loss_estimates: Vec<f64>,
    /// `Tr[Hρ(θ_t)]` at each recorded point.
    pub exact_losses: Vec<f64>,
    /// Infinite-shot value of the training objective (CVaR for `cvar_gd`).
    pub exact_objectives: Vec<f64>,
    /// `Δθ_t = θ_{t+1} − θ_t`.
    pub updates: Vec<Vec<f64>>,
    /// Set when a step failed; the records stop at the last good point.
    pub error: Option<String>,
}

impl TrainingTrajectory {
    pub fn steps(&self) -> usize {
        self.updates.len()
    }

    pub fn update_norm(&self, t: usize) -> f64 {
        self.updates[t].iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

enum Params {
    Angles(Angles),
    Network(MlpNetwork),
}

impl Params {
    fn angles(&self) -> Result<Angles> {
        match self {
            Self::Angles(a) => Ok(a.clone()),
            Self::Network(n) => n.forward(),
        }
    }
}

fn step(params: &Params, spec: &TrainingSpec, streams: &StepStreams) -> Result<Params> {
    let cfg = &spec.optimizer;
    let ev = &spec.evaluator;
    Ok(match (params, cfg.method) {
        (Params::Angles(t), Method::Gd) => Params::Angles(gd_step(t, cfg, ev, streams)?),
        (Params::Angles(t), Method::Qng) => Params::Angles(qng_step(t, cfg, ev, streams)?),
        (Params::Angles(t), Method::CvarGd) => Params::Angles(cvar_gd_step(t, cfg, ev, streams)?),
        (Params::Angles(t), Method::Rps) => Params::Angles(rps_step(t, cfg, ev, streams)?),
        (Params::Network(n), Method::NnInit) => Params::Network(nn_init_step(n, cfg, ev, streams)?),
        _ => unreachable!("parameter kind fixed by method"),
    })
}

/// Run `spec.optimizer.steps` steps from the seeded initial point.
///
/// Configuration errors are returned as `Err`; a failure inside a step ends
/// the run early with the partial trajectory and `error` set.
pub fn run_training(spec: &TrainingSpec, master_seed: u64, trajectory_id: u64) -> Result<TrainingTrajectory> {
    spec.validate()?;
    let mut params = match spec.optimizer.method {
        Method::NnInit => Params::Network(spec.initial_network(master_seed, trajectory_id)?),
        _ => Params::Angles(spec.initial_angles(master_seed, trajectory_id)?),
    };
    let mut traj = TrainingTrajectory {
        master_seed,
        trajectory_id,
        method: spec.optimizer.method,
        shots: spec.evaluator.shots(),
        thetas: Vec::new(),
        loss_estimates: Vec::new(),
        exact_losses: Vec::new(),
        exact_objectives: Vec::new(),
        updates: Vec::new(),
        error: None,
    };
    let record = |traj: &mut TrainingTrajectory, theta: &Angles, t: usize| -> Result<()> {
        let streams = StepStreams::new(master_seed, trajectory_id, t as u64);
        let estimate = spec.evaluator.evaluate(theta, &streams.stream(LOSS_RECORD_EVAL))?;
        let exact = loss_exact(theta, spec.evaluator.observable(), spec.evaluator.convention())?;
        let objective = spec.evaluator.exact(theta)?;
        traj.thetas.push(theta.as_slice().to_vec());
        traj.loss_estimates.push(estimate);
        traj.exact_losses.push(exact);
        traj.exact_objectives.push(objective);
        Ok(())
    };

    let mut theta = params.angles()?;
    record(&mut traj, &theta, 0)?;
    for t in 0..spec.optimizer.steps {
        let streams = StepStreams::new(master_seed, trajectory_id, t as u64);
        let next = step(&params, spec, &streams).and_then(|p| {
            let a = p.angles()?;
            Ok((p, a))
        });
        let (p, next_theta) = match next {
            Ok(v) => v,
            Err(e) => {
                traj.error = Some(format!("step {t}: {e}"));
                break;
            }
        };
        if let Err(e) = record(&mut traj, &next_theta, t + 1) {
            traj.error = Some(format!("step {t}: {e}"));
            break;
        }
        traj.updates.push(next_theta.as_slice().iter().zip(theta.as_slice()).map(|(a, b)| a - b).collect());
        params = p;
        theta = next_theta;
    }
    Ok(traj)
}

/// `count` independent trajectories with ids `0..count`, run in parallel.
pub fn run_ensemble(spec: &TrainingSpec, master_seed: u64, count: usize) -> Result<Vec<TrainingTrajectory>> {
    (0..count as u64).into_par_iter().map(|id| run_training(spec, master_seed, id)).collect()
}
