//! Exact simulation of a single layer of RX rotations acting on `|0…0⟩`.
//!
//! The fast path keeps the state as a product of single-qubit amplitude pairs
//! ([`ProductRxState`]); every expectation used by the optimizers is a product
//! of per-qubit factors. [`DenseState`] is a full `2^n` amplitude vector built by
//! applying the same gates one at a time. It exists to cross-check the product
//! path and is capped at [`DENSE_QUBIT_LIMIT`] qubits.
//!
//! Qubit `i` corresponds to bit `i` of a basis-state index (little endian).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DENSE_QUBIT_LIMIT: usize = 24;

/// Largest register addressable by a [`ZMask`].
pub const MASK_QUBIT_LIMIT: usize = 64;

/// One rotation angle per qubit, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Angles(Vec<f64>);

impl Angles {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("angle vector must hold at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("angle {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Copy with `delta` added to component `k`.
    pub fn shifted(&self, k: usize, delta: f64) -> Self {
        let mut v = self.0.clone();
        v[k] += delta;
        Self(v)
    }
}

impl TryFrom<Vec<f64>> for Angles {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Angles> for Vec<f64> {
    fn from(a: Angles) -> Self {
        a.0
    }
}

/// How a parameter `θ` maps onto the gate `exp(-i φ X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationConvention {
    /// `exp(-i θ X / 2)`, the usual `RX(θ)`.
    #[default]
    HalfAngle,
    /// `exp(-i θ X)`.
    FullAngle,
}

impl RotationConvention {
    /// The `φ` in `exp(-i φ X)`.
    #[inline]
    pub fn gate_angle(self, theta: f64) -> f64 {
        match self {
            Self::HalfAngle => 0.5 * theta,
            Self::FullAngle => theta,
        }
    }

    /// Prefactor of the RX-layer quantum geometric tensor: `(dφ/dθ)²`.
    pub fn metric_prefactor(self) -> f64 {
        match self {
            Self::HalfAngle => 0.25,
            Self::FullAngle => 1.0,
        }
    }

    /// Shift `s` and scale `κ` for which `κ·[L(θ+s) − L(θ−s)]` is the exact derivative.
    pub fn exact_shift_rule(self) -> (f64, f64) {
        match self {
            Self::HalfAngle => (std::f64::consts::FRAC_PI_2, 0.5),
            Self::FullAngle => (std::f64::consts::FRAC_PI_4, 1.0),
        }
    }
}

/// Set of qubits carrying a Pauli-Z factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ZMask(pub u64);

impl ZMask {
    pub fn from_qubits(qubits: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &q in qubits {
            if q >= MASK_QUBIT_LIMIT {
                return Err(invalid(format!("qubit {q} exceeds mask limit {MASK_QUBIT_LIMIT}")));
            }
            bits |= 1 << q;
        }
        Ok(Self(bits))
    }

    /// Z on qubits `0..m`.
    pub fn prefix(m: usize) -> Result<Self> {
        if m > MASK_QUBIT_LIMIT {
            return Err(invalid(format!("prefix length {m} exceeds mask limit")));
        }
        Ok(Self(if m == 64 { u64::MAX } else { (1u64 << m) - 1 }))
    }

    pub fn contains(self, q: usize) -> bool {
        q < MASK_QUBIT_LIMIT && self.0 >> q & 1 == 1
    }

    pub fn weight(self) -> u32 {
        self.0.count_ones()
    }

    pub fn qubits(self) -> impl Iterator<Item = usize> {
        (0..MASK_QUBIT_LIMIT).filter(move |&q| self.contains(q))
    }

    /// Highest qubit index + 1, or 0 for the empty mask.
    pub fn span(self) -> usize {
        MASK_QUBIT_LIMIT - self.0.leading_zeros() as usize
    }

    pub fn check_within(self, n: usize) -> Result<()> {
        if self.span() > n {
            Err(invalid(format!("mask {:#x} reaches qubit {} but register has {n}", self.0, self.span() - 1)))
        } else {
            Ok(())
        }
    }

    /// `(-1)^{popcount(basis & mask)}`.
    #[inline]
    pub fn parity_sign(self, basis: u64) -> f64 {
        if (basis & self.0).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliZTerm {
    pub coefficient: f64,
    pub mask: ZMask,
}

/// Weighted sum of Z-parity operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    terms: Vec<PauliZTerm>,
}

impl Observable {
    pub fn new(terms: Vec<PauliZTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(invalid("observable needs at least one term"));
        }
        if let Some(t) = terms.iter().find(|t| !t.coefficient.is_finite()) {
            return Err(invalid(format!("non-finite coefficient {}", t.coefficient)));
        }
        Ok(Self { terms })
    }

    /// `Z ⊗ Z ⊗ … ⊗ Z` on all `n` qubits.
    pub fn global_z(n: usize) -> Result<Self> {
        Self::new(vec![PauliZTerm { coefficient: 1.0, mask: ZMask::prefix(n)? }])
    }

    /// `Σ_j c_j · Z^{⊗(n−j)} ⊗ 1^{⊗j}` for `j = 0..3`: four nested global-Z terms
    /// with 16 distinct eigenvalues for generic coefficients.
    pub fn cvar_hamiltonian(n: usize, coefficients: [f64; 4]) -> Result<Self> {
        if n < 4 {
            return Err(invalid(format!("CVaR Hamiltonian needs n >= 4, got {n}")));
        }
        let terms = coefficients
            .iter()
            .enumerate()
            .map(|(j, &c)| Ok(PauliZTerm { coefficient: c, mask: ZMask::prefix(n - j)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    /// `Σ_i Z_i Z_{i+1}` on an open chain.
    pub fn zz_chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("ZZ chain needs at least two qubits"));
        }
        let terms = (0..n - 1)
            .map(|i| Ok(PauliZTerm { coefficient: 1.0, mask: ZMask::from_qubits(&[i, i + 1])? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    pub fn terms(&self) -> &[PauliZTerm] {
        &self.terms
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    pub fn sum_abs_coefficients(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }

    pub fn sum_sq_coefficients(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient * t.coefficient).sum()
    }

    pub fn check_within(&self, n: usize) -> Result<()> {
        self.terms.iter().try_for_each(|t| t.mask.check_within(n))
    }

    /// Eigenvalue on computational basis state `basis`.
    pub fn eigenvalue(&self, basis: u64) -> f64 {
        self.terms.iter().map(|t| t.coefficient * t.mask.parity_sign(basis)).sum()
    }

    /// Smallest eigenvalue, by enumerating the qubits the terms touch.
    pub fn ground_energy(&self) -> f64 {
        let span = self.terms.iter().map(|t| t.mask.span()).max().unwrap_or(0);
        (0..1u64 << span).map(|b| self.eigenvalue(b)).fold(f64::INFINITY, f64::min)
    }
}

/// Per-qubit amplitudes `(a_i, b_i)` of `⊗_i (a_i|0⟩ + b_i|1⟩)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductRxState {
    qubits: Vec<(Complex64, Complex64)>,
    convention: RotationConvention,
}

/// Apply one RX layer to `|0…0⟩`.
pub fn prepare_rx_layer(theta: &Angles, conv: RotationConvention) -> ProductRxState {
    let qubits = theta
        .as_slice()
        .iter()
        .map(|&t| {
            let (s, c) = conv.gate_angle(t).sin_cos();
            (Complex64::new(c, 0.0), Complex64::new(0.0, -s))
        })
        .collect();
    ProductRxState { qubits, convention: conv }
}

impl ProductRxState {
    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn convention(&self) -> RotationConvention {
        self.convention
    }

    pub fn amplitudes(&self, qubit: usize) -> (Complex64, Complex64) {
        self.qubits[qubit]
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits() {
            Err(invalid(format!("qubit {qubit} out of range for {} qubits", self.num_qubits())))
        } else {
            Ok(())
        }
    }

    /// Probability of reading `1` on `qubit`.
    pub fn prob_one(&self, qubit: usize) -> f64 {
        self.qubits[qubit].1.norm_sqr()
    }

    pub fn z_expectation(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let (a, b) = self.qubits[qubit];
        Ok(a.norm_sqr() - b.norm_sqr())
    }

    pub fn x_expectation(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let (a, b) = self.qubits[qubit];
        Ok(2.0 * (a.conj() * b).re)
    }

    /// `⟨Π_{i∈mask} Z_i⟩ = Π_{i∈mask} ⟨Z_i⟩`.
    pub fn z_parity_expectation(&self, mask: ZMask) -> Result<f64> {
        mask.check_within(self.num_qubits())?;
        Ok(mask
            .qubits()
            .map(|q| {
                let (a, b) = self.qubits[q];
                a.norm_sqr() - b.norm_sqr()
            })
            .product::<f64>()
            .clamp(-1.0, 1.0))
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.qubits
            .iter()
            .map(|(a, b)| (a.norm_sqr() + b.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Kronecker product of the per-qubit pairs.
    pub fn to_dense(&self) -> Result<DenseState> {
        let n = self.num_qubits();
        if n > DENSE_QUBIT_LIMIT {
            return Err(Error::ResourceGuard { qubits: n, limit: DENSE_QUBIT_LIMIT });
        }
        let mut amps = vec![Complex64::new(1.0, 0.0)];
        for &(a, b) in &self.qubits {
            // qubit i is bit i: the new qubit doubles the vector as the high half
            let mut next = Vec::with_capacity(amps.len() * 2);
            next.extend(amps.iter().map(|x| x * a));
            next.extend(amps.iter().map(|x| x * b));
            amps = next;
        }
        Ok(DenseState { num_qubits: n, amplitudes: amps })
    }
}

/// `⟨Z_mask⟩` on `U(θ)|0⟩`.
pub fn z_parity_expectation(state: &ProductRxState, mask: ZMask) -> Result<f64> {
    state.z_parity_expectation(mask)
}

pub fn x_expectation(state: &ProductRxState, qubit: usize) -> Result<f64> {
    state.x_expectation(qubit)
}

/// `Tr[H ρ(θ)]` for a Z-parity observable.
pub fn loss_exact(theta: &Angles, obs: &Observable, conv: RotationConvention) -> Result<f64> {
    obs.check_within(theta.len())?;
    let state = prepare_rx_layer(theta, conv);
    obs.terms()
        .iter()
        .map(|t| Ok(t.coefficient * state.z_parity_expectation(t.mask)?))
        .sum()
}

/// Probability of the all-zero outcome of `U†(x′) U(x) |0⟩`.
pub fn fidelity_kernel_probability(x: &Angles, x2: &Angles, conv: RotationConvention) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::LengthMismatch { expected: x.len(), actual: x2.len() });
    }
    // RX gates on one qubit commute, so U†(x′)U(x) is an RX layer on x − x′.
    Ok(x.as_slice()
        .iter()
        .zip(x2.as_slice())
        .map(|(a, b)| conv.gate_angle(a - b).cos().powi(2))
        .product::<f64>()
        .clamp(0.0, 1.0))
}

/// Full amplitude vector. Only used as an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl DenseState {
    pub fn zero(n: usize) -> Result<Self> {
        if n > DENSE_QUBIT_LIMIT {
            return Err(Error::ResourceGuard { qubits: n, limit: DENSE_QUBIT_LIMIT });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits: n, amplitudes })
    }

    /// `|0…0⟩` followed by one RX gate per qubit, applied as 2×2 matrices.
    pub fn rx_layer(theta: &Angles, conv: RotationConvention) -> Result<Self> {
        let mut s = Self::zero(theta.len())?;
        for (q, &t) in theta.as_slice().iter().enumerate() {
            s.apply_rx(q, t, conv);
        }
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn apply_rx(&mut self, qubit: usize, theta: f64, conv: RotationConvention) {
        let (s, c) = conv.gate_angle(theta).sin_cos();
        let diag = Complex64::new(c, 0.0);
        let off = Complex64::new(0.0, -s);
        let bit = 1usize << qubit;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | bit];
                self.amplitudes[i] = diag * a0 + off * a1;
                self.amplitudes[i | bit] = off * a0 + diag * a1;
            }
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probability(&self, basis: usize) -> f64 {
        self.amplitudes[basis].norm_sqr()
    }

    /// `⟨ψ|Z_mask|ψ⟩` by applying the diagonal operator to every amplitude.
    pub fn z_parity_expectation(&self, mask: ZMask) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| mask.parity_sign(i as u64) * a.norm_sqr())
            .sum()
    }

    /// `⟨ψ|X_q|ψ⟩ = Σ_i conj(ψ_i) ψ_{i⊕2^q}`.
    pub fn x_expectation(&self, qubit: usize) -> f64 {
        let bit = 1usize << qubit;
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| (a.conj() * self.amplitudes[i ^ bit]).re)
            .sum()
    }

    pub fn observable_expectation(&self, obs: &Observable) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| obs.eigenvalue(i as u64) * a.norm_sqr())
            .sum()
    }

    pub fn inner(&self, other: &DenseState) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }
}
