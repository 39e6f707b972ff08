//! Experiment configuration: TOML parsing, presets and validation.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};

use plateau::circuitsim::{Observable, RotationConvention};
use plateau::optimizers::{Method, MlpSettings, QgtSettings, ShotBudget};
use serde::{Deserialize, Serialize};

/// Shots per evaluation as written in a config: a count, `"infinite"`,
/// `"2^n"` or `"<k>n"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotToken {
    Count(u64),
    Infinite,
    PowerOfTwo,
    PerQubit(u64),
}

impl ShotToken {
    pub fn resolve(self, n: usize) -> ShotBudget {
        match self {
            Self::Count(c) => ShotBudget::Finite(c),
            Self::Infinite => ShotBudget::Infinite,
            Self::PowerOfTwo => ShotBudget::Finite(1u64 << n),
            Self::PerQubit(k) => ShotBudget::Finite(k * n as u64),
        }
    }

    /// Name used in file and directory names.
    pub fn slug(self) -> String {
        match self {
            Self::Count(c) => c.to_string(),
            Self::Infinite => "inf".into(),
            Self::PowerOfTwo => "2pown".into(),
            Self::PerQubit(k) => format!("{k}n"),
        }
    }
}

impl fmt::Display for ShotToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Count(c) => write!(f, "{c}"),
            Self::Infinite => f.write_str("infinite"),
            Self::PowerOfTwo => f.write_str("2^n"),
            Self::PerQubit(k) => write!(f, "{k}n"),
        }
    }
}

impl std::str::FromStr for ShotToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        if t == "infinite" {
            return Ok(Self::Infinite);
        }
        if t == "2^n" {
            return Ok(Self::PowerOfTwo);
        }
        if let Some(k) = t.strip_suffix('n') {
            return k.parse().map(Self::PerQubit).map_err(|_| format!("bad shot token {s:?}"));
        }
        t.parse().map(Self::Count).map_err(|_| format!("bad shot token {s:?}; expected a count, \"infinite\", \"2^n\" or \"<k>n\""))
    }
}

impl Serialize for ShotToken {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Count(c) => s.serialize_u64(*c),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for ShotToken {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Token(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(c) => Ok(Self::Count(c)),
            Raw::Token(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ObservableSpec {
    GlobalZ,
    CvarHamiltonian { coefficients: [f64; 4] },
    ZzChain,
}

impl ObservableSpec {
    pub fn build(&self, n: usize) -> plateau::Result<Observable> {
        match self {
            Self::GlobalZ => Observable::global_z(n),
            Self::CvarHamiltonian { coefficients } => Observable::cvar_hamiltonian(n, *coefficients),
            Self::ZzChain => Observable::zz_chain(n),
        }
    }
}

pub const DEFAULT_CVAR_COEFFICIENTS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

fn default_true() -> bool {
    true
}

fn default_init() -> [f64; 2] {
    [0.0, TAU]
}

fn default_gamma() -> f64 {
    0.25
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingDiagnostics {
    /// Random-walk statistics for every `gd` cell with at least 30 trajectories.
    #[serde(default)]
    pub random_walk: bool,
    /// Grid resolution of the PCA loss cut; omitted means no PCA.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub system_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub shots: Vec<ShotToken>,
    pub ensemble: usize,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub convention: RotationConvention,
    #[serde(default = "ObservableSpec::global")]
    pub observable: ObservableSpec,
    /// CVaR level for `cvar_gd`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Initial angles are uniform in `[init[0], init[1])`.
    #[serde(default = "default_init")]
    pub init: [f64; 2],
    #[serde(default)]
    pub qgt: QgtSettings,
    #[serde(default)]
    pub mlp: MlpSettings,
    /// Trajectory CSVs written per cell; omitted means all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_trajectories: Option<usize>,
    #[serde(default)]
    pub diagnostics: TrainingDiagnostics,
}

impl ObservableSpec {
    fn global() -> Self {
        Self::GlobalZ
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypotestSection {
    /// `β` values for the certificate table.
    pub betas: Vec<f64>,
    pub cardinalities: Vec<u64>,
    pub certificate_shots: Vec<u64>,
    /// Sample counts for the parity-test Monte Carlo.
    pub parity_samples: Vec<u64>,
    pub parity_support: u64,
    pub parity_trials: u64,
    /// Support sizes of the indistinguishable family.
    pub indistinguishable_supports: Vec<u64>,
    pub indistinguishable_samples: Vec<u64>,
    /// Trials for the single-sample likelihood test on `(¾, ¼)` vs `(¼, ¾)`.
    pub likelihood_trials: u64,
    #[serde(default = "default_true")]
    pub include_examples: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationSection {
    pub system_sizes: Vec<usize>,
    pub draws: usize,
    /// Also estimate from this many shots per draw, with bias correction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_check: Option<u64>,
    #[serde(default)]
    pub convention: RotationConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotest: Option<HypotestSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<ConcentrationSection>,
}

/// A preset reference, optionally overriding the seed, name and output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetRef {
    preset: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

pub const PRESETS: [&str; 8] = ["fig3", "fig4-gd", "fig4-qng", "fig4-cvar", "fig4-nn", "fig4-rps", "hypotest-demo", "concentration-scan"];

pub const DEFAULT_SEED: u64 = 20_240_601;

fn fig4(method: Method) -> TrainingSection {
    TrainingSection {
        system_sizes: vec![9, 11, 13, 15, 17],
        methods: vec![method],
        shots: vec![ShotToken::PerQubit(10), ShotToken::PowerOfTwo, ShotToken::Infinite],
        ensemble: 50,
        steps: 300,
        // the network's weight-to-angle Jacobian has squared norm ~π²·(width + 1),
        // so the descent condition in weight space needs a smaller step
        learning_rate: if method == Method::NnInit { 0.01 } else { 0.1 },
        convention: RotationConvention::HalfAngle,
        observable: match method {
            Method::CvarGd => ObservableSpec::CvarHamiltonian { coefficients: DEFAULT_CVAR_COEFFICIENTS },
            _ => ObservableSpec::GlobalZ,
        },
        gamma: 0.25,
        init: default_init(),
        qgt: QgtSettings::default(),
        mlp: MlpSettings::default(),
        save_trajectories: Some(5),
        diagnostics: TrainingDiagnostics::default(),
    }
}

/// Built-in configurations.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = |training, hypotest, concentration| ExperimentConfig {
        name: name.to_string(),
        seed: DEFAULT_SEED,
        output_dir: None,
        training,
        hypotest,
        concentration,
    };
    Some(match name {
        "fig3" => base(
            Some(TrainingSection {
                system_sizes: vec![15],
                methods: vec![Method::Gd],
                shots: vec![ShotToken::Count(150), ShotToken::Count(1 << 15), ShotToken::Infinite],
                ensemble: 100,
                save_trajectories: Some(10),
                diagnostics: TrainingDiagnostics { random_walk: true, pca_grid: Some(41) },
                ..fig4(Method::Gd)
            }),
            None,
            None,
        ),
        "fig4-gd" => base(Some(fig4(Method::Gd)), None, None),
        "fig4-qng" => base(Some(fig4(Method::Qng)), None, None),
        "fig4-cvar" => base(Some(fig4(Method::CvarGd)), None, None),
        "fig4-nn" => base(Some(fig4(Method::NnInit)), None, None),
        "fig4-rps" => base(Some(fig4(Method::Rps)), None, None),
        "hypotest-demo" => base(
            None,
            Some(HypotestSection {
                betas: vec![2f64.powi(-60), 2f64.powi(-40), 2f64.powi(-20), 2f64.powi(-10), 1.0],
                cardinalities: vec![2, 16],
                certificate_shots: vec![1, 100, 10_000],
                parity_samples: vec![1, 2, 3, 4, 6, 8],
                parity_support: 1 << 20,
                parity_trials: 100_000,
                indistinguishable_supports: vec![1 << 8, 1 << 16, 1 << 32],
                indistinguishable_samples: vec![1, 100, 10_000],
                likelihood_trials: 10_000,
                include_examples: true,
            }),
            None,
        ),
        "concentration-scan" => base(
            None,
            None,
            Some(ConcentrationSection {
                system_sizes: vec![6, 8, 10, 12],
                draws: 10_000,
                shot_check: Some(1000),
                convention: RotationConvention::HalfAngle,
            }),
        ),
        _ => return None,
    })
}

/// One validation problem, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
    /// 1-based line in the source file, when the field could be located.
    pub line: Option<usize>,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("unknown preset {0:?}; known presets: {known}", known = PRESETS.join(", "))]
    UnknownPreset(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
}

impl ExperimentConfig {
    pub fn from_preset(name: &str) -> Result<Self, ConfigError> {
        preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Parse and validate. Errors carry the source line where possible.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let config = if table.contains_key("preset") {
            let r: PresetRef = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            let mut c = Self::from_preset(&r.preset)?;
            if let Some(s) = r.seed {
                c.seed = s;
            }
            if let Some(n) = r.name {
                c.name = n;
            }
            c.output_dir = r.output_dir;
            c
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        let mut issues = config.issues();
        if issues.is_empty() {
            Ok(config)
        } else {
            for i in &mut issues {
                i.line = locate(text, &i.path);
            }
            Err(ConfigError::Invalid(issues))
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// Normalised TOML text of the fully resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |path: &str, message: String| out.push(ConfigIssue { path: path.into(), message, line: None });
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bad("name", "must be a non-empty file-name-safe string".into());
        }
        if self.training.is_none() && self.hypotest.is_none() && self.concentration.is_none() {
            bad("", "needs at least one of [training], [hypotest], [concentration]".into());
        }
        if let Some(t) = &self.training {
            if t.system_sizes.is_empty() {
                bad("training.system_sizes", "must not be empty".into());
            }
            for &n in &t.system_sizes {
                if !(1..=62).contains(&n) {
                    bad("training.system_sizes", format!("{n} qubits is outside 1..=62"));
                }
                if let Err(e) = t.observable.build(n) {
                    bad("training.observable", format!("n = {n}: {e}"));
                }
                if t.shots.contains(&ShotToken::PowerOfTwo) && n > 40 {
                    bad("training.shots", format!("2^n shots at n = {n} would overflow the sampler"));
                }
            }
            if t.methods.is_empty() {
                bad("training.methods", "must not be empty".into());
            }
            if t.shots.is_empty() {
                bad("training.shots", "must not be empty".into());
            }
            if t.shots.iter().any(|s| matches!(s, ShotToken::Count(0) | ShotToken::PerQubit(0))) {
                bad("training.shots", "shot counts must be at least 1".into());
            }
            if t.ensemble == 0 {
                bad("training.ensemble", "must be at least 1".into());
            }
            if t.steps == 0 {
                bad("training.steps", "must be at least 1".into());
            }
            if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
                bad("training.learning_rate", format!("must be positive, got {}", t.learning_rate));
            }
            if !(t.gamma > 0.0 && t.gamma <= 1.0) {
                bad("training.gamma", format!("must lie in (0, 1], got {}", t.gamma));
            }
            if !(t.init[0].is_finite() && t.init[1].is_finite() && t.init[0] < t.init[1]) {
                bad("training.init", format!("needs low < high, got {:?}", t.init));
            }
            if !(t.qgt.tolerance >= 0.0 && t.qgt.ridge >= 0.0) {
                bad("training.qgt", "tolerance and ridge must be non-negative".into());
            }
            if t.mlp.input_dim == 0 || t.mlp.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
                bad("training.mlp", "layer widths must be positive".into());
            }
            if t.methods.contains(&Method::CvarGd) && !matches!(t.observable, ObservableSpec::CvarHamiltonian { .. }) && t.observable != ObservableSpec::GlobalZ {
                bad("training.observable", "cvar_gd supports global_z and cvar_hamiltonian".into());
            }
            if t.diagnostics.pca_grid.is_some_and(|g| g < 2) {
                bad("training.diagnostics.pca_grid", "needs at least 2 points per axis".into());
            }
        }
        if let Some(h) = &self.hypotest {
            if h.betas.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
                bad("hypotest.betas", "every β must lie in (0, 1]".into());
            }
            if h.cardinalities.iter().any(|c| *c < 2) {
                bad("hypotest.cardinalities", "must be at least 2".into());
            }
            if h.certificate_shots.contains(&0) || h.parity_samples.contains(&0) || h.indistinguishable_samples.contains(&0) {
                bad("hypotest", "sample counts must be at least 1".into());
            }
            if h.parity_support < 2 || !h.parity_support.is_multiple_of(2) {
                bad("hypotest.parity_support", "must be even and at least 2".into());
            }
            if h.indistinguishable_supports.iter().any(|m| *m < 2 || !m.is_multiple_of(2)) {
                bad("hypotest.indistinguishable_supports", "must be even and at least 2".into());
            }
            if h.parity_trials == 0 || h.likelihood_trials == 0 {
                bad("hypotest", "trial counts must be at least 1".into());
            }
        }
        if let Some(c) = &self.concentration {
            if c.system_sizes.len() < 3 {
                bad("concentration.system_sizes", "needs at least 3 sizes for a scaling fit".into());
            }
            if c.system_sizes.iter().any(|n| !(1..=62).contains(n)) {
                bad("concentration.system_sizes", "sizes must lie in 1..=62".into());
            }
            if c.draws < 2 {
                bad("concentration.draws", "must be at least 2".into());
            }
            if c.shot_check.is_some_and(|s| s < 2) {
                bad("concentration.shot_check", "must be at least 2".into());
            }
        }
        out
    }
}

/// Line of `key = …` inside the `[section]` named by a dotted path.
fn locate(text: &str, path: &str) -> Option<usize> {
    let (section, key) = match path.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", path),
    };
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == path {
                section_line = Some(i + 1);
            }
            continue;
        }
        let lhs = line.split('=').next().unwrap_or("").trim();
        if current == section && lhs == key {
            return Some(i + 1);
        }
    }
    section_line
}
