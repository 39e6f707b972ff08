//! Binary hypothesis testing between finite discrete distributions.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Success probability conventionally taken as "distinguishable". Only used
/// to annotate reports.
pub const DISTINGUISHABILITY_THRESHOLD: f64 = 0.51;

const NORM_TOL: f64 = 1e-10;

/// A distribution over outcomes `1..=M`.
///
/// The parity family stores one probability for odd outcomes and one for even
/// outcomes, so `M` can be exponentially large.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DiscreteDistribution {
    Explicit { probabilities: Vec<f64> },
    Parity { support: u64, odd: f64, even: f64 },
}

impl DiscreteDistribution {
    pub fn explicit(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(invalid("empty support"));
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self::Explicit { probabilities })
    }

    pub fn parity(support: u64, odd: f64, even: f64) -> Result<Self> {
        if support < 2 || !support.is_multiple_of(2) {
            return Err(invalid(format!("parity family needs an even support size, got {support}")));
        }
        if !(odd.is_finite() && even.is_finite() && odd >= 0.0 && even >= 0.0) {
            return Err(invalid("parity probabilities must be finite and non-negative"));
        }
        let total = (support / 2) as f64 * (odd + even);
        if (total - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("parity probabilities sum to {total}")));
        }
        Ok(Self::Parity { support, odd, even })
    }

    pub fn support_size(&self) -> u64 {
        match self {
            Self::Explicit { probabilities } => probabilities.len() as u64,
            Self::Parity { support, .. } => *support,
        }
    }

    /// Probability of outcome `s ∈ 1..=M`.
    pub fn probability(&self, s: u64) -> f64 {
        match self {
            Self::Explicit { probabilities } => {
                if s == 0 {
                    0.0
                } else {
                    probabilities.get(s as usize - 1).copied().unwrap_or(0.0)
                }
            }
            Self::Parity { support, odd, even } => match s {
                0 => 0.0,
                s if s > *support => 0.0,
                s if s % 2 == 1 => *odd,
                _ => *even,
            },
        }
    }

    /// Total mass on odd outcomes.
    pub fn odd_mass(&self) -> f64 {
        match self {
            Self::Explicit { probabilities } => probabilities.iter().step_by(2).sum(),
            Self::Parity { support, odd, .. } => (support / 2) as f64 * odd,
        }
    }

    /// One outcome in `1..=M`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Self::Explicit { probabilities } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in probabilities.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i as u64 + 1;
                    }
                }
                // rounding left u above the total; take the last outcome with mass
                probabilities.iter().rposition(|p| *p > 0.0).unwrap_or(0) as u64 + 1
            }
            Self::Parity { support, .. } => {
                let half = support / 2;
                let k = rng.random_range(0..half);
                if rng.random::<f64>() < self.odd_mass() {
                    2 * k + 1
                } else {
                    2 * k + 2
                }
            }
        }
    }
}

fn same_support(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.support_size() == q.support_size() {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected: p.support_size() as usize, actual: q.support_size() as usize })
    }
}

/// `Σ_s |p(s) − p′(s)|`.
pub fn one_norm(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    same_support(p, q)?;
    use DiscreteDistribution::*;
    Ok(match (p, q) {
        (Explicit { probabilities: a }, Explicit { probabilities: b }) => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        (Parity { support, odd: o1, even: e1 }, Parity { odd: o2, even: e2, .. }) => {
            (support / 2) as f64 * ((o1 - o2).abs() + (e1 - e2).abs())
        }
        (Explicit { probabilities }, parity @ Parity { .. }) | (parity @ Parity { .. }, Explicit { probabilities }) => {
            probabilities.iter().enumerate().map(|(i, x)| (x - parity.probability(i as u64 + 1)).abs()).sum()
        }
    })
}

/// Best single-sample success probability, `1/2 + ‖P − P′‖₁/4`.
pub fn optimal_success_probability(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    Ok(0.5 + one_norm(p, q)? / 4.0)
}

/// Upper bound on the success of any test using `n` samples, `min(1, 1/2 + n‖P − P′‖₁/4)`.
pub fn many_sample_success_bound(p: &DiscreteDistribution, q: &DiscreteDistribution, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    Ok((0.5 + n as f64 * one_norm(p, q)? / 4.0).min(1.0))
}

pub const PRODUCT_MAX_FACTORS: usize = 3;
pub const PRODUCT_MAX_SUPPORT: usize = 4;

/// Exact 1-norm between two product distributions, by enumeration, and the
/// bound `Σ_i ‖P_i − P′_i‖₁`.
pub fn product_one_norm_check(pairs: &[(DiscreteDistribution, DiscreteDistribution)]) -> Result<(f64, f64)> {
    if pairs.is_empty() || pairs.len() > PRODUCT_MAX_FACTORS {
        return Err(Error::Regime(format!("need 1..={PRODUCT_MAX_FACTORS} factors, got {}", pairs.len())));
    }
    let mut bound = 0.0;
    let mut sizes = Vec::with_capacity(pairs.len());
    for (p, q) in pairs {
        let m = p.support_size() as usize;
        if m > PRODUCT_MAX_SUPPORT {
            return Err(Error::Regime(format!("factor support {m} exceeds {PRODUCT_MAX_SUPPORT}")));
        }
        bound += one_norm(p, q)?;
        sizes.push(m);
    }
    let total: usize = sizes.iter().product();
    let mut exact = 0.0;
    for mut idx in 0..total {
        let (mut a, mut b) = (1.0, 1.0);
        for ((p, q), m) in pairs.iter().zip(&sizes) {
            let s = (idx % m) as u64 + 1;
            idx /= m;
            a *= p.probability(s);
            b *= q.probability(s);
        }
        exact += (a - b).abs();
    }
    Ok((exact, bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Theoretical value the rate is compared against.
    pub bound: f64,
}

impl TestOutcome {
    fn new(trials: u64, successes: u64, bound: f64) -> Self {
        Self { trials, successes, success_rate: successes as f64 / trials as f64, bound }
    }

    /// Binomial standard deviation of the rate at success probability `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn above_threshold(&self) -> bool {
        self.success_rate >= DISTINGUISHABILITY_THRESHOLD
    }
}

fn log_likelihood(p: &DiscreteDistribution, samples: &[u64]) -> f64 {
    samples.iter().map(|&s| p.probability(s).ln()).sum()
}

/// Monte-Carlo likelihood-ratio test. Each trial picks the true hypothesis with
/// a fair coin, draws `n` samples from it and decides `P′` only if its
/// likelihood is strictly larger; ties go to `P`.
pub fn simulate_hypothesis_test(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    n: u64,
    trials: u64,
    stream: &RngStream,
) -> Result<TestOutcome> {
    let bound = many_sample_success_bound(p, q, n)?;
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let successes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.child(t).rng();
            let alternative: bool = rng.random();
            let truth = if alternative { q } else { p };
            let samples: Vec<u64> = (0..n).map(|_| truth.draw(&mut rng)).collect();
            let decide_alt = log_likelihood(q, &samples) > log_likelihood(p, &samples);
            u64::from(decide_alt == alternative)
        })
        .sum();
    Ok(TestOutcome::new(trials, successes, bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCertificate {
    pub beta: f64,
    pub cardinality: u64,
    pub shots: u64,
    /// Parameter mass where the advantage bound may fail, `|M|√β`.
    pub delta: f64,
    /// Advantage bound, `N|M|β^{1/4}/4`.
    pub epsilon: f64,
    pub vacuous: bool,
}

pub fn indistinguishability_certificate(beta: f64, cardinality: u64, shots: u64) -> Result<HypothesisCertificate> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!("β must lie in (0, 1], got {beta}")));
    }
    if cardinality < 2 {
        return Err(invalid(format!("POVM cardinality must be at least 2, got {cardinality}")));
    }
    if shots == 0 {
        return Err(invalid("need at least one shot"));
    }
    let m = cardinality as f64;
    let delta = m * beta.sqrt();
    let epsilon = shots as f64 * m * beta.sqrt().sqrt() / 4.0;
    Ok(HypothesisCertificate { beta, cardinality, shots, delta, epsilon, vacuous: epsilon >= 0.5 || delta >= 1.0 })
}

fn even_support(m: u64) -> Result<()> {
    if m >= 2 && m.is_multiple_of(2) {
        Ok(())
    } else {
        Err(invalid(format!("support size must be even and at least 2, got {m}")))
    }
}

/// `P_α`: mass `2/M` on every odd outcome. `P_fixed`: uniform.
pub fn counterexample_family(m: u64) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
    even_support(m)?;
    let u = 1.0 / m as f64;
    Ok((DiscreteDistribution::parity(m, 2.0 * u, 0.0)?, DiscreteDistribution::parity(m, u, u)?))
}

/// `P_α`: `1/M + 1/M²` on odd outcomes, `1/M − 1/M²` on even ones. `P_fixed`: uniform.
pub fn indistinguishable_family(m: u64) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
    even_support(m)?;
    let u = 1.0 / m as f64;
    Ok((DiscreteDistribution::parity(m, u + u * u, u - u * u)?, DiscreteDistribution::parity(m, u, u)?))
}

/// Error of the test that picks `P_α` iff every sample is odd, with equal priors:
/// it only errs when `P_fixed` produces `n` odd samples, so `½·2⁻ⁿ`.
pub fn parity_test_error(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    Ok(0.5f64.powi(n.min(i32::MAX as u64) as i32 + 1))
}

/// Monte-Carlo run of the parity test on [`counterexample_family`]. The
/// reported `bound` is the analytic error, and `successes` counts errors.
pub fn simulate_parity_test(m: u64, n: u64, trials: u64, stream: &RngStream) -> Result<TestOutcome> {
    let expected = parity_test_error(n)?;
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let (p_alpha, p_fixed) = counterexample_family(m)?;
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.child(t).rng();
            let fixed_true: bool = rng.random();
            let truth = if fixed_true { &p_fixed } else { &p_alpha };
            let all_odd = (0..n).all(|_| truth.draw(&mut rng) % 2 == 1);
            let decide_fixed = !all_odd;
            u64::from(decide_fixed != fixed_true)
        })
        .sum();
    Ok(TestOutcome::new(trials, errors, expected))
}
