//! Executes an [`ExperimentConfig`] and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use plateau::circuitsim::{loss_exact, Angles, Observable};
use plateau::diagnostics::{
    concentration_scaling_fit, estimate_outcome_variance, guideline_check, pca_project, random_walk_statistics,
    CardinalityLaw, CoinModel, PcaProjection, PovmEvidence, QuantityEvidence, RandomWalkCheck, RandomWalkReport,
    ScalingFit, UniformAngles, VarianceMode, GuidelineVerdict, MIN_RANDOM_WALK_ENSEMBLE,
};
use plateau::estimators::EstimatorKind;
use plateau::hypotest::{
    indistinguishability_certificate, indistinguishable_family, many_sample_success_bound, one_norm,
    optimal_success_probability, parity_test_error, simulate_hypothesis_test, simulate_parity_test,
    DiscreteDistribution, HypothesisCertificate, DISTINGUISHABILITY_THRESHOLD,
};
use plateau::measurement::pauli_term_povm;
use plateau::optimizers::{run_ensemble, LossEvaluator, Method, OptimizerConfig, ShotBudget, TrainingSpec, TrainingTrajectory};
use plateau::rng::{hash64, RngStream};
use serde::{Deserialize, Serialize};

use crate::config::{ConcentrationSection, ExperimentConfig, HypotestSection, ShotToken, TrainingSection};
use crate::plots;

pub const TRAJECTORY_HEADER_VERSION: &str = "v1";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] plateau::Error),
    #[error("{0}")]
    Failed(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub plots: bool,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub id: String,
    pub method: Method,
    pub num_qubits: usize,
    pub shots_token: String,
    pub shots: ShotBudget,
    pub ensemble: usize,
    pub steps: usize,
    pub failed: usize,
    /// Ensemble medians of `Tr[Hρ]` at the first and last step.
    pub median_initial_loss: f64,
    pub median_final_loss: f64,
    /// Same for the training objective (CVaR for `cvar_gd`).
    pub median_initial_objective: f64,
    pub median_final_objective: f64,
    /// Trajectories whose exact objective fell at every step until it hit the ground energy.
    pub strictly_decreasing: usize,
    pub loss_curve: String,
    pub trajectory_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkEntry {
    pub cell: String,
    pub report: RandomWalkReport,
    /// 3 standard errors on the mean, 20% on the variance.
    pub check: RandomWalkCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaEntry {
    pub method: Method,
    pub num_qubits: usize,
    /// Cell ids of the projected trajectories, in order.
    pub cells: Vec<String>,
    pub projection: PcaProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRow {
    pub samples: u64,
    pub trials: u64,
    pub errors: u64,
    pub empirical_error: f64,
    pub analytic_error: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndistinguishableRow {
    pub support: u64,
    pub samples: u64,
    pub one_norm: f64,
    pub success_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRow {
    pub samples: u64,
    pub trials: u64,
    pub success_rate: f64,
    pub exact_single_sample: f64,
    pub bound: f64,
    pub sigma: f64,
    pub above_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypotestReport {
    pub certificates: Vec<HypothesisCertificate>,
    pub parity: Vec<ParityRow>,
    pub indistinguishable: Vec<IndistinguishableRow>,
    pub likelihood: Vec<LikelihoodRow>,
    pub threshold_annotation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub num_qubits: usize,
    pub mode: String,
    pub draws: usize,
    pub beta_hat: f64,
    pub standard_error: f64,
    pub mean_p_plus: f64,
    /// `Var[p₊] = 2⁻ⁿ/4` for the global-Z measurement over uniform angles.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationOutput {
    pub rows: Vec<ConcentrationRow>,
    pub fit: ScalingFit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_fit: Option<ScalingFit>,
    pub guideline: GuidelineVerdict,
    pub protocol: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cells: Vec<CellSummary>,
    pub random_walks: Vec<RandomWalkEntry>,
    pub pca: Vec<PcaEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotest: Option<HypotestReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<ConcentrationOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub name: String,
    pub seed: u64,
    pub config_snapshot: String,
    pub diagnostics: String,
    /// Layout version of the trajectory and loss-curve CSV headers.
    pub csv_header_version: String,
    /// Every data file written, relative to the run directory.
    pub files: Vec<String>,
    pub plots: Vec<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_unix_seconds: u64,
    pub elapsed_seconds: f64,
}

pub struct RunOutcome {
    pub record: RunRecord,
    pub diagnostics: Diagnostics,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const RECORD_FILE: &str = "run_record.json";

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

struct Writer<'a> {
    root: &'a Path,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn csv(&mut self, rel: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), RunError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(io_err(&path))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn text(&mut self, rel: &str, body: &str) -> Result<(), RunError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, body).map_err(io_err(&path))?;
        self.files.push(rel.to_string());
        Ok(())
    }
}

fn cell_id(method: Method, n: usize, token: ShotToken) -> String {
    format!("{}_n{n:02}_{}", method.name(), token.slug())
}

/// Master seed shared by every cell with the same system size, so methods and
/// shot regimes start from the same initial points.
pub fn cell_seed(seed: u64, n: usize) -> u64 {
    hash64(&[seed, n as u64])
}

pub fn training_spec(t: &TrainingSection, method: Method, n: usize, shots: ShotBudget) -> plateau::Result<TrainingSpec> {
    let estimator = match method {
        Method::CvarGd => EstimatorKind::Cvar { gamma: t.gamma },
        _ => EstimatorKind::EmpiricalMean,
    };
    let evaluator = LossEvaluator::new(t.observable.build(n)?, estimator, shots, t.convention)?;
    let mut optimizer = OptimizerConfig::new(method, t.learning_rate, t.steps, t.convention);
    optimizer.gamma = t.gamma;
    optimizer.qgt = t.qgt;
    optimizer.mlp = t.mlp.clone();
    Ok(TrainingSpec { num_qubits: n, evaluator, optimizer, init_range: (t.init[0], t.init[1]) })
}

fn trajectory_rows(t: &TrainingTrajectory) -> Vec<Vec<String>> {
    (0..t.thetas.len())
        .map(|s| {
            let mut row = vec![s.to_string()];
            row.extend(t.thetas[s].iter().map(|x| fmt(*x)));
            row.push(fmt(t.loss_estimates[s]));
            row.push(fmt(if s == 0 { 0.0 } else { t.update_norm(s - 1) }));
            row
        })
        .collect()
}

const FLOOR_TOL: f64 = 1e-12;

/// Strict decrease until `floor` is reached, then staying on it.
fn strictly_decreasing(values: &[f64], floor: f64) -> bool {
    values.windows(2).all(|w| if w[0] - floor <= FLOOR_TOL { w[1] - floor <= FLOOR_TOL } else { w[1] < w[0] })
}

fn run_cell(
    t: &TrainingSection,
    seed: u64,
    method: Method,
    n: usize,
    token: ShotToken,
    w: &mut Writer,
) -> Result<(CellSummary, Vec<TrainingTrajectory>), RunError> {
    let id = cell_id(method, n, token);
    let shots = token.resolve(n);
    let spec = training_spec(t, method, n, shots)?;
    let trajectories = run_ensemble(&spec, cell_seed(seed, n), t.ensemble)?;

    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((0..n).map(|k| format!("theta_{k}")))
        .chain(["loss_estimate".to_string(), "update_norm".to_string()])
        .collect();
    let mut trajectory_files = Vec::new();
    for tr in trajectories.iter().take(t.save_trajectories.unwrap_or(usize::MAX)) {
        let rel = format!("cells/{id}/trajectory_{:03}.csv", tr.trajectory_id);
        w.csv(&rel, &header, trajectory_rows(tr))?;
        trajectory_files.push(rel);
    }

    let ok: Vec<&TrainingTrajectory> = trajectories.iter().filter(|tr| tr.error.is_none()).collect();
    let failed = trajectories.len() - ok.len();
    let mut curve = Vec::with_capacity(t.steps + 1);
    for s in 0..=t.steps {
        let mut exact: Vec<f64> = ok.iter().map(|tr| tr.exact_losses[s]).collect();
        exact.sort_by(f64::total_cmp);
        let estimates: Vec<f64> = ok.iter().map(|tr| tr.loss_estimates[s]).collect();
        let objectives: Vec<f64> = ok.iter().map(|tr| tr.exact_objectives[s]).collect();
        let row = if exact.is_empty() {
            vec![s.to_string(), "NaN".into(), "NaN".into(), "NaN".into(), "NaN".into(), "NaN".into(), "NaN".into()]
        } else {
            vec![
                s.to_string(),
                fmt(median(&exact)),
                fmt(exact.iter().sum::<f64>() / exact.len() as f64),
                fmt(quantile(&exact, 0.25)),
                fmt(quantile(&exact, 0.75)),
                fmt(median(&estimates)),
                fmt(median(&objectives)),
            ]
        };
        curve.push(row);
    }
    let loss_curve = format!("cells/{id}/loss_curve.csv");
    let curve_header: Vec<String> =
        ["step", "median_loss", "mean_loss", "q25_loss", "q75_loss", "median_loss_estimate", "median_objective"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    w.csv(&loss_curve, &curve_header, curve)?;

    let floor = spec.evaluator.observable().ground_energy();
    let first = |f: fn(&TrainingTrajectory) -> &Vec<f64>, last: bool| -> Vec<f64> {
        ok.iter().map(|tr| if last { *f(tr).last().unwrap() } else { f(tr)[0] }).collect()
    };
    let summary = CellSummary {
        id,
        method,
        num_qubits: n,
        shots_token: token.to_string(),
        shots,
        ensemble: t.ensemble,
        steps: t.steps,
        failed,
        median_initial_loss: median(&first(|tr| &tr.exact_losses, false)),
        median_final_loss: median(&first(|tr| &tr.exact_losses, true)),
        median_initial_objective: median(&first(|tr| &tr.exact_objectives, false)),
        median_final_objective: median(&first(|tr| &tr.exact_objectives, true)),
        strictly_decreasing: ok.iter().filter(|tr| strictly_decreasing(&tr.exact_objectives, floor)).count(),
        loss_curve,
        trajectory_files,
    };
    Ok((summary, trajectories))
}

fn run_training_section(t: &TrainingSection, seed: u64, w: &mut Writer, diag: &mut Diagnostics) -> Result<(), RunError> {
    for &method in &t.methods {
        for &n in &t.system_sizes {
            let mut pca_inputs: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
            for &token in &t.shots {
                let (summary, trajectories) = run_cell(t, seed, method, n, token, w)?;
                if t.diagnostics.random_walk
                    && method == Method::Gd
                    && summary.shots != ShotBudget::Infinite
                    && trajectories.len() >= MIN_RANDOM_WALK_ENSEMBLE
                {
                    let (_, shift_scale) = t.convention.exact_shift_rule();
                    let model = CoinModel {
                        learning_rate: t.learning_rate,
                        shift_scale,
                        coefficients: t.observable.build(n)?.coefficients(),
                        shots: summary.shots,
                    };
                    let ok: Vec<TrainingTrajectory> = trajectories.iter().filter(|tr| tr.error.is_none()).cloned().collect();
                    let report = random_walk_statistics(&ok, &model)?;
                    let check = report.check(3.0, 0.2);
                    diag.random_walks.push(RandomWalkEntry { cell: summary.id.clone(), report, check });
                }
                if t.diagnostics.pca_grid.is_some() {
                    if let Some(tr) = trajectories.iter().find(|tr| tr.error.is_none()) {
                        pca_inputs.push((summary.id.clone(), tr.thetas.clone()));
                    }
                }
                diag.cells.push(summary);
            }
            if let Some(res) = t.diagnostics.pca_grid {
                let obs: Observable = t.observable.build(n)?;
                let conv = t.convention;
                let loss = move |a: &Angles| loss_exact(a, &obs, conv);
                let trajs: Vec<Vec<Vec<f64>>> = pca_inputs.iter().map(|p| p.1.clone()).collect();
                let projection = pca_project(&trajs, Some((res, loss)))?;
                diag.pca.push(PcaEntry { method, num_qubits: n, cells: pca_inputs.into_iter().map(|p| p.0).collect(), projection });
            }
        }
    }
    Ok(())
}

fn run_hypotest_section(h: &HypotestSection, seed: u64, w: &mut Writer) -> Result<HypotestReport, RunError> {
    let mut certificates = Vec::new();
    for &beta in &h.betas {
        for &m in &h.cardinalities {
            for &n in &h.certificate_shots {
                certificates.push(indistinguishability_certificate(beta, m, n)?);
            }
        }
    }
    if h.include_examples && !certificates.iter().any(|c| c.beta == 2f64.powi(-40) && c.cardinality == 2 && c.shots == 100) {
        certificates.push(indistinguishability_certificate(2f64.powi(-40), 2, 100)?);
    }
    w.csv(
        "hypotest/certificates.csv",
        &["beta", "cardinality", "shots", "delta", "epsilon", "vacuous"].map(String::from),
        certificates.iter().map(|c| {
            vec![fmt(c.beta), c.cardinality.to_string(), c.shots.to_string(), fmt(c.delta), fmt(c.epsilon), c.vacuous.to_string()]
        }),
    )?;

    let mut parity = Vec::new();
    for (i, &n) in h.parity_samples.iter().enumerate() {
        let stream = RngStream::new(seed, hash64(&[1, i as u64]));
        let out = simulate_parity_test(h.parity_support, n, h.parity_trials, &stream)?;
        let analytic = parity_test_error(n)?;
        parity.push(ParityRow {
            samples: n,
            trials: out.trials,
            errors: out.successes,
            empirical_error: out.success_rate,
            analytic_error: analytic,
            sigma: out.sigma_at(analytic),
        });
    }
    w.csv(
        "hypotest/parity_test.csv",
        &["samples", "trials", "errors", "empirical_error", "analytic_error", "sigma"].map(String::from),
        parity.iter().map(|r| {
            vec![r.samples.to_string(), r.trials.to_string(), r.errors.to_string(), fmt(r.empirical_error), fmt(r.analytic_error), fmt(r.sigma)]
        }),
    )?;

    let mut indistinguishable = Vec::new();
    for &m in &h.indistinguishable_supports {
        let (pa, pf) = indistinguishable_family(m)?;
        let d = one_norm(&pa, &pf)?;
        for &n in &h.indistinguishable_samples {
            indistinguishable.push(IndistinguishableRow { support: m, samples: n, one_norm: d, success_bound: many_sample_success_bound(&pa, &pf, n)? });
        }
    }
    w.csv(
        "hypotest/indistinguishable.csv",
        &["support", "samples", "one_norm", "success_bound"].map(String::from),
        indistinguishable.iter().map(|r| vec![r.support.to_string(), r.samples.to_string(), fmt(r.one_norm), fmt(r.success_bound)]),
    )?;

    let p = DiscreteDistribution::explicit(vec![0.75, 0.25])?;
    let q = DiscreteDistribution::explicit(vec![0.25, 0.75])?;
    let exact = optimal_success_probability(&p, &q)?;
    let mut likelihood = Vec::new();
    for n in 1..=3u64 {
        let out = simulate_hypothesis_test(&p, &q, n, h.likelihood_trials, &RngStream::new(seed, hash64(&[2, n])))?;
        likelihood.push(LikelihoodRow {
            samples: n,
            trials: out.trials,
            success_rate: out.success_rate,
            exact_single_sample: exact,
            bound: out.bound,
            sigma: out.sigma_at(if n == 1 { exact } else { out.bound.min(0.999) }),
            above_threshold: out.above_threshold(),
        });
    }
    w.csv(
        "hypotest/likelihood.csv",
        &["samples", "trials", "success_rate", "exact_single_sample", "bound", "sigma", "above_threshold"].map(String::from),
        likelihood.iter().map(|r| {
            vec![r.samples.to_string(), r.trials.to_string(), fmt(r.success_rate), fmt(r.exact_single_sample), fmt(r.bound), fmt(r.sigma), r.above_threshold.to_string()]
        }),
    )?;
    Ok(HypotestReport { certificates, parity, indistinguishable, likelihood, threshold_annotation: DISTINGUISHABILITY_THRESHOLD })
}

fn run_concentration_section(c: &ConcentrationSection, seed: u64, w: &mut Writer) -> Result<ConcentrationOutput, RunError> {
    let mut rows = Vec::new();
    let mut exact_table = Vec::new();
    let mut shot_table = Vec::new();
    let mut protocol = String::new();
    for &n in &c.system_sizes {
        let povm = pauli_term_povm(&Observable::global_z(n)?.terms()[0]);
        let sampler = UniformAngles::full_circle(n);
        let mut modes = vec![("exact", VarianceMode::ExactProbabilities)];
        if let Some(shots) = c.shot_check {
            modes.push(("shots", VarianceMode::ShotEstimated { shots }));
        }
        for (k, (name, mode)) in modes.into_iter().enumerate() {
            let stream = RngStream::new(seed, hash64(&[3, n as u64, k as u64]));
            let rep = estimate_outcome_variance(&povm, &sampler, c.draws, mode, c.convention, &stream)?;
            protocol = rep.protocol.clone();
            let row = ConcentrationRow {
                num_qubits: n,
                mode: name.to_string(),
                draws: c.draws,
                beta_hat: rep.beta_hat,
                standard_error: rep.beta_standard_error(),
                mean_p_plus: rep.means[0],
                reference: 2f64.powi(-(n as i32)) / 4.0,
            };
            if k == 0 {
                exact_table.push((n, rep.beta_hat));
            } else {
                shot_table.push((n, rep.beta_hat));
            }
            rows.push(row);
        }
    }
    let fit = concentration_scaling_fit(&exact_table)?;
    let shot_fit = if shot_table.is_empty() { None } else { concentration_scaling_fit(&shot_table).ok() };
    let guideline = guideline_check(&[QuantityEvidence {
        quantity: "global-Z loss".into(),
        povms: vec![PovmEvidence {
            name: "global Z parity".into(),
            cardinality: CardinalityLaw::Constant { outcomes: 2 },
            concentration: Some(fit.clone()),
        }],
    }]);
    w.csv(
        "concentration/concentration.csv",
        &["num_qubits", "mode", "draws", "beta_hat", "standard_error", "mean_p_plus", "reference"].map(String::from),
        rows.iter().map(|r| {
            vec![r.num_qubits.to_string(), r.mode.clone(), r.draws.to_string(), fmt(r.beta_hat), fmt(r.standard_error), fmt(r.mean_p_plus), fmt(r.reference)]
        }),
    )?;
    Ok(ConcentrationOutput { rows, fit, shot_fit, guideline, protocol })
}

fn execute(config: &ExperimentConfig, w: &mut Writer, diag: &mut Diagnostics) -> Result<(), RunError> {
    if let Some(t) = &config.training {
        run_training_section(t, config.seed, w, diag)?;
        let failed: usize = diag.cells.iter().map(|c| c.failed).sum();
        if failed > 0 {
            return Err(RunError::Failed(format!("{failed} trajectories stopped early")));
        }
    }
    if let Some(h) = &config.hypotest {
        diag.hypotest = Some(run_hypotest_section(h, config.seed, w)?);
    }
    if let Some(c) = &config.concentration {
        diag.concentration = Some(run_concentration_section(c, config.seed, w)?);
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body).map_err(io_err(path))
}

/// Run every cell of `config` into `opts.out_dir`.
///
/// Returns `Err` only when nothing could be written at all; a run that fails
/// partway still writes its record, with `status = "failed"`.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    config.validate().map_err(|e| RunError::Failed(e.to_string()))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let mut w = Writer { root: &opts.out_dir, files: Vec::new() };
    w.text(CONFIG_FILE, &config.to_toml())?;

    let mut diag = Diagnostics::default();
    let result = match opts.workers {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| RunError::Failed(format!("thread pool: {e}")))?;
            pool.install(|| execute(config, &mut w, &mut diag))
        }
        None => execute(config, &mut w, &mut diag),
    };
    write_json(&opts.out_dir.join(DIAGNOSTICS_FILE), &diag)?;

    let mut plot_files = Vec::new();
    let mut error = result.err().map(|e| e.to_string());
    let plottable = !diag.cells.is_empty() || diag.concentration.is_some();
    if error.is_none() && opts.plots && plottable {
        match plots::emit_plots(&opts.out_dir) {
            Ok(p) => plot_files = p,
            Err(e) => error = Some(format!("plotting: {e}")),
        }
    }
    let record = RunRecord {
        tool: "plateau".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        name: config.name.clone(),
        seed: config.seed,
        config_snapshot: CONFIG_FILE.into(),
        diagnostics: DIAGNOSTICS_FILE.into(),
        csv_header_version: TRAJECTORY_HEADER_VERSION.into(),
        files: w.files,
        plots: plot_files,
        status: if error.is_none() { "ok".into() } else { "failed".into() },
        error,
        started_unix_seconds: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    };
    write_json(&opts.out_dir.join(RECORD_FILE), &record)?;
    Ok(RunOutcome { record, diagnostics: diag })
}

pub fn load_diagnostics(run_dir: &Path) -> Result<Diagnostics, RunError> {
    let path = run_dir.join(DIAGNOSTICS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.25), 1.0);
    }

    #[test]
    fn strict_decrease() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0], -1.0));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0], -1.0));
        assert!(strictly_decreasing(&[0.0, -1.0, -1.0], -1.0));
        assert!(!strictly_decreasing(&[0.0, -1.0, -0.5], -1.0));
    }

    #[test]
    fn cell_ids() {
        assert_eq!(cell_id(Method::CvarGd, 9, ShotToken::PerQubit(10)), "cvar_gd_n09_10n");
        assert_eq!(cell_id(Method::Gd, 15, ShotToken::Infinite), "gd_n15_inf");
    }
}
