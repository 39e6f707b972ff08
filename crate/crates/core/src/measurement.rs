//! Finite-outcome measurements, their exact outcome distributions, and seeded
//! shot sampling.
//!
//! Shots are always drawn as multinomial counts over the POVM's labels, never
//! one shot at a time, so a `2^n`-shot estimate costs `O(|M|)` binomial draws.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::circuitsim::{prepare_rx_layer, Angles, Observable, PauliZTerm, ProductRxState, RotationConvention, ZMask};
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

const NORMALIZATION_TOL: f64 = 1e-10;

/// Two labels closer than this (relative to their magnitude) are treated as one eigenvalue.
pub const LABEL_MERGE_TOL: f64 = 1e-12;

/// Largest observable handled by [`parity_eigen_distribution`].
pub const MAX_EIGEN_TERMS: usize = 12;

/// How outcome probabilities are obtained from a prepared state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityRule {
    /// Two-outcome measurement of a Z-parity operator.
    ZParity(ZMask),
    /// Single-qubit X-basis measurement.
    XBasis(usize),
    /// Eigenbasis of the four-term nested global-Z Hamiltonian.
    CvarEigen { coefficients: [f64; 4] },
    /// Eigenbasis of an arbitrary Z-parity observable.
    ParityEigen(Observable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmSpec {
    labels: Vec<f64>,
    rule: ProbabilityRule,
}

impl PovmSpec {
    pub fn new(labels: Vec<f64>, rule: ProbabilityRule) -> Result<Self> {
        if labels.len() < 2 {
            return Err(invalid("a POVM needs at least two outcomes"));
        }
        for (i, a) in labels.iter().enumerate() {
            if !a.is_finite() {
                return Err(invalid("POVM labels must be finite"));
            }
            if labels[..i].iter().any(|b| same_label(*a, *b)) {
                return Err(invalid(format!("duplicate POVM label {a}")));
            }
        }
        Ok(Self { labels, rule })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn rule(&self) -> &ProbabilityRule {
        &self.rule
    }

    /// `|M|`, the number of POVM elements.
    pub fn cardinality(&self) -> usize {
        self.labels.len()
    }

    /// Exact outcome distribution on `state`. Labels of the result follow `self.labels()`.
    pub fn distribution(&self, state: &ProductRxState) -> Result<OutcomeDistribution> {
        let probs = match &self.rule {
            ProbabilityRule::ZParity(mask) => {
                let p = (1.0 + state.z_parity_expectation(*mask)?) / 2.0;
                vec![p, 1.0 - p]
            }
            ProbabilityRule::XBasis(q) => {
                let p = (1.0 + state.x_expectation(*q)?) / 2.0;
                vec![p, 1.0 - p]
            }
            ProbabilityRule::CvarEigen { coefficients } => {
                let (labels, probs) = cvar_pattern_distribution(*coefficients, state)?;
                align(&self.labels, &labels, &probs)?
            }
            ProbabilityRule::ParityEigen(obs) => {
                let d = parity_eigen_distribution(obs, state)?;
                align(&self.labels, d.labels(), d.probabilities())?
            }
        };
        OutcomeDistribution::new(self.labels.clone(), probs)
    }
}

fn same_label(a: f64, b: f64) -> bool {
    (a - b).abs() <= LABEL_MERGE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Re-express `(labels, probs)` on the label order of `target`.
fn align(target: &[f64], labels: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; target.len()];
    for (l, p) in labels.iter().zip(probs) {
        let k = target
            .iter()
            .position(|t| same_label(*t, *l))
            .ok_or_else(|| invalid(format!("outcome {l} is not a label of this POVM")))?;
        out[k] += p;
    }
    Ok(out)
}

/// Exact probability vector aligned with a label list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    labels: Vec<f64>,
    probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    /// Validates non-negativity and normalization (within 1e−10). Round-off
    /// negatives down to −1e−12 are clamped to zero.
    pub fn new(labels: Vec<f64>, mut probabilities: Vec<f64>) -> Result<Self> {
        if labels.len() != probabilities.len() {
            return Err(Error::LengthMismatch { expected: labels.len(), actual: probabilities.len() });
        }
        if probabilities.is_empty() {
            return Err(invalid("empty distribution"));
        }
        for p in probabilities.iter_mut() {
            if !p.is_finite() || *p < -1e-12 || *p > 1.0 + 1e-12 {
                return Err(invalid(format!("probability {p} outside [0, 1]")));
            }
            *p = p.clamp(0.0, 1.0);
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self { labels, probabilities })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `Σ_k λ_k p_k`.
    pub fn mean(&self) -> f64 {
        self.labels.iter().zip(&self.probabilities).map(|(l, p)| l * p).sum()
    }

    pub fn probability_of(&self, label: f64) -> f64 {
        self.labels
            .iter()
            .zip(&self.probabilities)
            .filter(|(l, _)| same_label(**l, label))
            .map(|(_, p)| p)
            .sum()
    }
}

/// Shot counts per label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    #[serde(skip)]
    labels: Vec<LabelBits>,
    counts: Vec<u64>,
    shots: u64,
}

// f64 labels stored by bit pattern so SampleSet can be Eq.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LabelBits(u64);

impl SampleSet {
    pub fn new(labels: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if labels.len() != counts.len() {
            return Err(Error::LengthMismatch { expected: labels.len(), actual: counts.len() });
        }
        let shots: u64 = counts.iter().sum();
        if shots == 0 {
            return Err(invalid("a sample set needs at least one shot"));
        }
        Ok(Self { labels: labels.into_iter().map(|l| LabelBits(l.to_bits())).collect(), counts, shots })
    }

    pub fn labels(&self) -> Vec<f64> {
        self.labels.iter().map(|b| f64::from_bits(b.0)).collect()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    /// `(label, count)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.labels.iter().map(|b| f64::from_bits(b.0)).zip(self.counts.iter().copied())
    }
}

/// Two-outcome POVM `{(1 ± Z_mask)/2}` with labels `(+1, −1)`.
pub fn pauli_term_povm(term: &PauliZTerm) -> PovmSpec {
    PovmSpec { labels: vec![1.0, -1.0], rule: ProbabilityRule::ZParity(term.mask) }
}

/// X-basis measurement of one qubit, labels `(+1, −1)`.
pub fn x_basis_povm(qubit: usize) -> PovmSpec {
    PovmSpec { labels: vec![1.0, -1.0], rule: ProbabilityRule::XBasis(qubit) }
}

/// Eigenvalue POVM of the four-term nested Hamiltonian, with its distribution on `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvarPovm {
    pub povm: PovmSpec,
    pub distribution: OutcomeDistribution,
    /// One message per merged group of coinciding eigenvalues.
    pub warnings: Vec<String>,
}

/// Sign patterns `(s₁,s₂,s₃,s₄)` of the parities of the prefix masks of length
/// `n, n−1, n−2, n−3`, with eigenvalue `Σ c_j s_j`. `s₄` depends on qubits
/// `0..n−3`; `s₃ = s₄·z_{n−3}`, `s₂ = s₃·z_{n−2}`, `s₁ = s₂·z_{n−1}`.
/// Returns the 16 unmerged (label, probability) pairs.
fn cvar_pattern_distribution(coefficients: [f64; 4], state: &ProductRxState) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = state.num_qubits();
    if n < 4 {
        return Err(invalid(format!("CVaR eigenvalue POVM needs n >= 4, got {n}")));
    }
    if let Some(c) = coefficients.iter().find(|c| !c.is_finite()) {
        return Err(invalid(format!("non-finite coefficient {c}")));
    }
    let head = ZMask::prefix(n - 3)?;
    let p_even = ((1.0 + state.z_parity_expectation(head)?) / 2.0).clamp(0.0, 1.0);
    let tail: Vec<f64> = (n - 3..n).map(|q| state.prob_one(q)).collect();

    let mut labels = Vec::with_capacity(16);
    let mut probs = Vec::with_capacity(16);
    for pattern in 0u32..16 {
        // bit 0: s4 = -1, bits 1..3: flips on qubits n-3, n-2, n-1
        let s4_odd = pattern & 1 == 1;
        let mut p = if s4_odd { 1.0 - p_even } else { p_even };
        let mut s = if s4_odd { -1.0 } else { 1.0 };
        let mut signs = [0.0; 4];
        signs[3] = s;
        for (j, &q1) in tail.iter().enumerate() {
            let flipped = pattern >> (j + 1) & 1 == 1;
            p *= if flipped { q1 } else { 1.0 - q1 };
            if flipped {
                s = -s;
            }
            signs[2 - j] = s;
        }
        labels.push(coefficients.iter().zip(&signs).map(|(c, s)| c * s).sum());
        probs.push(p);
    }
    Ok((labels, probs))
}

/// Sort ascending and merge coinciding labels, summing their probabilities.
fn merge_labels(labels: Vec<f64>, probs: Vec<f64>) -> (Vec<f64>, Vec<f64>, Vec<String>) {
    let mut pairs: Vec<(f64, f64)> = labels.into_iter().zip(probs).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out_l: Vec<f64> = Vec::new();
    let mut out_p: Vec<f64> = Vec::new();
    let mut merged_counts: Vec<usize> = Vec::new();
    for (l, p) in pairs {
        match out_l.last() {
            Some(&last) if same_label(last, l) => {
                *out_p.last_mut().unwrap() += p;
                *merged_counts.last_mut().unwrap() += 1;
            }
            _ => {
                out_l.push(l);
                out_p.push(p);
                merged_counts.push(1);
            }
        }
    }
    let warnings = out_l
        .iter()
        .zip(&merged_counts)
        .filter(|(_, &m)| m > 1)
        .map(|(l, m)| format!("{m} eigenvalue patterns coincide at {l}; merged into one label"))
        .collect();
    (out_l, out_p, warnings)
}

/// Eigenvalue POVM of `Σ_j c_j Z^{⊗(n−j)}` (`j = 0..3`) on the RX-layer state for `θ`.
/// Labels are sorted ascending; degenerate coefficients merge labels with a warning.
pub fn cvar_eigenvalue_povm(coefficients: [f64; 4], theta: &Angles, conv: RotationConvention) -> Result<CvarPovm> {
    let state = prepare_rx_layer(theta, conv);
    let (labels, probs) = cvar_pattern_distribution(coefficients, &state)?;
    let (labels, probs, warnings) = merge_labels(labels, probs);
    let povm = PovmSpec::new(labels.clone(), ProbabilityRule::CvarEigen { coefficients })?;
    let distribution = OutcomeDistribution::new(labels, probs)?;
    Ok(CvarPovm { povm, distribution, warnings })
}

/// Exact eigenvalue distribution of an arbitrary Z-parity observable with at
/// most [`MAX_EIGEN_TERMS`] terms.
///
/// The joint law of the term parities `s ∈ {±1}^T` is recovered from its
/// Fourier coefficients: `P(s) = 2^{−T} Σ_{S⊆[T]} Π_{j∈S} s_j · ⟨Z_{⊕_{j∈S} mask_j}⟩`,
/// where the product of parity operators is the parity of the XOR of masks.
pub fn parity_eigen_distribution(obs: &Observable, state: &ProductRxState) -> Result<OutcomeDistribution> {
    let terms = obs.terms();
    let t = terms.len();
    if t > MAX_EIGEN_TERMS {
        return Err(Error::Regime(format!("{t} terms exceeds eigen-POVM limit {MAX_EIGEN_TERMS}")));
    }
    obs.check_within(state.num_qubits())?;
    let subsets = 1usize << t;
    let mut character = vec![0.0; subsets];
    for (subset, slot) in character.iter_mut().enumerate() {
        let mask = (0..t)
            .filter(|j| subset >> j & 1 == 1)
            .fold(0u64, |m, j| m ^ terms[j].mask.0);
        *slot = state.z_parity_expectation(ZMask(mask))?;
    }
    let mut labels = Vec::with_capacity(subsets);
    let mut probs = Vec::with_capacity(subsets);
    for pattern in 0..subsets {
        // bit j of `pattern` set ⇔ s_j = −1
        let p: f64 = character
            .iter()
            .enumerate()
            .map(|(subset, &chi)| if (subset & pattern).count_ones() % 2 == 0 { chi } else { -chi })
            .sum::<f64>()
            / subsets as f64;
        let value: f64 = terms
            .iter()
            .enumerate()
            .map(|(j, term)| if pattern >> j & 1 == 1 { -term.coefficient } else { term.coefficient })
            .sum();
        labels.push(value);
        probs.push(p.max(0.0));
    }
    // drop impossible parity patterns (linearly dependent masks)
    let (labels, probs): (Vec<f64>, Vec<f64>) =
        labels.into_iter().zip(probs).filter(|(_, p)| *p > 1e-15).unzip();
    let (labels, mut probs, _) = merge_labels(labels, probs);
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    OutcomeDistribution::new(labels, probs)
}

/// Eigenvalue POVM for a Z-parity observable on `θ` via [`parity_eigen_distribution`].
pub fn parity_eigen_povm(obs: &Observable, theta: &Angles, conv: RotationConvention) -> Result<(PovmSpec, OutcomeDistribution)> {
    let state = prepare_rx_layer(theta, conv);
    let d = parity_eigen_distribution(obs, &state)?;
    let labels = d.labels().to_vec();
    if labels.len() == 1 {
        return Err(Error::Regime("observable has a single eigenvalue on this state".into()));
    }
    Ok((PovmSpec::new(labels, ProbabilityRule::ParityEigen(obs.clone()))?, d))
}

/// Multinomial counts for `shots` repetitions, drawn as a chain of conditional
/// binomials over the labels in order.
pub fn sample(dist: &OutcomeDistribution, shots: u64, stream: &RngStream) -> Result<SampleSet> {
    if shots == 0 {
        return Err(invalid("shot count must be at least 1"));
    }
    let mut rng = stream.rng();
    let probs = dist.probabilities();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass = 1.0f64;
    let last = probs.len() - 1;
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == last {
            counts[k] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = if q <= 0.0 {
            0
        } else if q >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, q).map_err(|e| invalid(e.to_string()))?.sample(&mut rng)
        };
        counts[k] = c;
        remaining -= c;
        mass -= p;
    }
    SampleSet::new(dist.labels().to_vec(), counts)
}

/// `counts / N`.
pub fn empirical_distribution(s: &SampleSet) -> OutcomeDistribution {
    let n = s.shots() as f64;
    let probs: Vec<f64> = s.counts().iter().map(|&c| c as f64 / n).collect();
    OutcomeDistribution::new(s.labels(), probs).expect("counts always normalize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuitsim::DenseState;
    use std::f64::consts::PI;

    const C: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

    fn term(mask: ZMask) -> PauliZTerm {
        PauliZTerm { coefficient: 1.0, mask }
    }

    #[test]
    fn pauli_povm_examples() {
        let n = 5;
        let global = pauli_term_povm(&term(ZMask::prefix(n).unwrap()));
        assert_eq!(global.cardinality(), 2);
        let s0 = prepare_rx_layer(&Angles::zeros(n), RotationConvention::HalfAngle);
        assert_eq!(global.distribution(&s0).unwrap().probabilities(), &[1.0, 0.0]);

        let half = prepare_rx_layer(&Angles::new(vec![PI / 2.0; n]).unwrap(), RotationConvention::HalfAngle);
        let d = global.distribution(&half).unwrap();
        assert!((d.probabilities()[0] - 0.5).abs() < 1e-15);

        let zz = pauli_term_povm(&term(ZMask::prefix(2).unwrap()));
        let s = prepare_rx_layer(&Angles::new(vec![PI / 3.0; 2]).unwrap(), RotationConvention::HalfAngle);
        assert!((zz.distribution(&s).unwrap().probabilities()[0] - 0.625).abs() < 1e-14);
    }

    #[test]
    fn cvar_povm_at_zero() {
        let c = cvar_eigenvalue_povm(C, &Angles::zeros(6), RotationConvention::HalfAngle).unwrap();
        assert_eq!(c.povm.cardinality(), 16);
        assert!(c.warnings.is_empty());
        assert_eq!(c.distribution.probability_of(1.875), 1.0);
        let labels = c.povm.labels();
        assert!(labels.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cvar_povm_uniform_at_half_pi() {
        let theta = Angles::new(vec![PI / 2.0; 4]).unwrap();
        let c = cvar_eigenvalue_povm(C, &theta, RotationConvention::HalfAngle).unwrap();
        // brute force over 2^4 bitstrings, each bit 1 with probability 1/2
        let h = Observable::cvar_hamiltonian(4, C).unwrap();
        for b in 0u64..16 {
            let v = h.eigenvalue(b);
            assert!((c.distribution.probability_of(v) - 1.0 / 16.0).abs() < 1e-14, "label {v}");
        }
    }

    #[test]
    fn cvar_povm_matches_dense() {
        let theta = Angles::new(vec![0.3, 2.1, -0.7, 1.9, 0.2, 2.8]).unwrap();
        let conv = RotationConvention::HalfAngle;
        let c = cvar_eigenvalue_povm(C, &theta, conv).unwrap();
        let dense = DenseState::rx_layer(&theta, conv).unwrap();
        let h = Observable::cvar_hamiltonian(6, C).unwrap();
        let mut want = vec![0.0; c.povm.cardinality()];
        for b in 0..64usize {
            let v = h.eigenvalue(b as u64);
            let k = c.povm.labels().iter().position(|l| (l - v).abs() < 1e-12).unwrap();
            want[k] += dense.probability(b);
        }
        for (got, want) in c.distribution.probabilities().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_coefficients_merge() {
        let c = cvar_eigenvalue_povm([1.0, 1.0, 0.0, 0.0], &Angles::new(vec![1.0; 5]).unwrap(), RotationConvention::HalfAngle).unwrap();
        assert!(c.povm.cardinality() < 16);
        assert!(!c.warnings.is_empty());
        let total: f64 = c.distribution.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_routes_agree() {
        let theta = Angles::new(vec![0.9, 2.3, -1.1, 0.4, 3.0, 1.3, -2.2]).unwrap();
        let conv = RotationConvention::HalfAngle;
        let via_marginal = cvar_eigenvalue_povm(C, &theta, conv).unwrap().distribution;
        let h = Observable::cvar_hamiltonian(7, C).unwrap();
        let via_fourier = parity_eigen_distribution(&h, &prepare_rx_layer(&theta, conv)).unwrap();
        assert_eq!(via_marginal.len(), via_fourier.len());
        for (a, b) in via_marginal.labels().iter().zip(via_fourier.labels()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in via_marginal.probabilities().iter().zip(via_fourier.probabilities()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_route_handles_dependent_masks() {
        // Z0Z1, Z1Z2, Z0Z2: third parity is the product of the first two.
        let obs = Observable::new(vec![
            term(ZMask(0b011)),
            term(ZMask(0b110)),
            PauliZTerm { coefficient: 0.3, mask: ZMask(0b101) },
        ])
        .unwrap();
        let theta = Angles::new(vec![0.4, 1.7, 2.9]).unwrap();
        let conv = RotationConvention::HalfAngle;
        let d = parity_eigen_distribution(&obs, &prepare_rx_layer(&theta, conv)).unwrap();
        let dense = DenseState::rx_layer(&theta, conv).unwrap();
        assert!((d.mean() - dense.observable_expectation(&obs)).abs() < 1e-12);
        for b in 0..8usize {
            assert!(d.probability_of(obs.eigenvalue(b as u64)) > 0.0);
        }
    }

    #[test]
    fn sampling_examples() {
        let d = OutcomeDistribution::new(vec![1.0, -1.0], vec![1.0, 0.0]).unwrap();
        let s = sample(&d, 100, &RngStream::new(1, 2)).unwrap();
        assert_eq!(s.counts(), &[100, 0]);

        let d = OutcomeDistribution::new(vec![1.0, -1.0], vec![0.5, 0.5]).unwrap();
        let n = 1_000_000u64;
        let s = sample(&d, n, &RngStream::new(1, 3)).unwrap();
        let dev = (s.counts()[0] as f64 - n as f64 / 2.0).abs();
        assert!(dev <= 3.0 * (n as f64 / 4.0).sqrt(), "deviation {dev}");

        let again = sample(&d, n, &RngStream::new(1, 3)).unwrap();
        assert_eq!(s, again);
        assert!(sample(&d, 0, &RngStream::new(1, 3)).is_err());
    }

    #[test]
    fn empirical_examples() {
        let s = SampleSet::new(vec![1.0, -1.0], vec![3, 1]).unwrap();
        assert_eq!(empirical_distribution(&s).probabilities(), &[0.75, 0.25]);
    }

    #[test]
    fn empirical_converges() {
        let d = OutcomeDistribution::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let l1 = |n: u64, seed: u64| -> f64 {
            let e = empirical_distribution(&sample(&d, n, &RngStream::new(seed, 0)).unwrap());
            e.probabilities().iter().zip(d.probabilities()).map(|(a, b)| (a - b).abs()).sum()
        };
        let small: f64 = (0..20).map(|s| l1(1_000, s)).sum::<f64>() / 20.0;
        let large: f64 = (0..20).map(|s| l1(1_000_000, s)).sum::<f64>() / 20.0;
        assert!(large < small / 10.0, "{large} vs {small}");
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(OutcomeDistribution::new(vec![1.0, -1.0], vec![0.7, 0.7]).is_err());
        assert!(OutcomeDistribution::new(vec![1.0, -1.0], vec![1.1, -0.1]).is_err());
        assert!(OutcomeDistribution::new(vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(PovmSpec::new(vec![1.0], ProbabilityRule::XBasis(0)).is_err());
        assert!(PovmSpec::new(vec![1.0, 1.0], ProbabilityRule::XBasis(0)).is_err());
    }
}
