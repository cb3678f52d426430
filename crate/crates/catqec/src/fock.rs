//! Truncated-Fock-space linear algebra: states, operators, expectation
//! values, and Wigner functions.
//!
//! Everything in this module is dense, double-precision, and immutable after
//! construction. The truncation dimension is explicit in every constructor;
//! freshly constructed physical states must keep their population out of the
//! top two Fock levels (the "tail"), which is what the leakage threshold
//! guards.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Complex double — the only scalar type used in the simulator.
pub type C64 = Complex64;

/// Default ceiling on the population of the top two Fock levels for freshly
/// constructed states.
pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 1e-9;

/// Errors from state/operator constructors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FockError {
    /// The requested amplitude cannot be represented in the truncated space.
    #[error("amplitude |alpha|^2 = {nbar:.3} exceeds truncation-safe bound dim/4 = {bound:.3}")]
    AmplitudeTooLarge { nbar: f64, bound: f64 },
    /// Population of the top two Fock levels exceeds the leakage threshold.
    #[error("truncation leakage {tail:.3e} exceeds threshold {threshold:.3e} (dim = {dim})")]
    TruncationLeakage { tail: f64, threshold: f64, dim: usize },
    /// Operands live in different truncated spaces.
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    /// A constructor was handed a dimension too small to be meaningful.
    #[error("dimension {0} is too small (need at least 2)")]
    InvalidDim(usize),
    /// A state constructor was handed an (effectively) zero vector.
    #[error("cannot normalize a zero-norm state")]
    ZeroNorm,
}

/// Photon-number parity, the cat code's error syndrome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// +1 for even, −1 for odd.
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    /// The opposite parity.
    pub fn flipped(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    /// Parity of an integer jump/photon count.
    pub fn of_count(count: u32) -> Parity {
        if count % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// A pure state over the truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    /// Build from raw amplitudes, normalizing to unit norm.
    pub fn from_amplitudes(amps: DVector<C64>) -> Result<Self, FockError> {
        if amps.len() < 2 {
            return Err(FockError::InvalidDim(amps.len()));
        }
        let norm = amps.norm();
        if norm < 1e-150 {
            return Err(FockError::ZeroNorm);
        }
        Ok(Self { amps: amps / C64::from(norm) })
    }

    /// Fock basis state |n⟩.
    pub fn fock(n: usize, dim: usize) -> Result<Self, FockError> {
        if dim < 2 {
            return Err(FockError::InvalidDim(dim));
        }
        if n >= dim {
            return Err(FockError::DimMismatch { left: n + 1, right: dim });
        }
        let mut amps = DVector::zeros(dim);
        amps[n] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    /// Consume and return the raw amplitude vector.
    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amps
    }

    /// ⟨self|other⟩ (conjugate-linear in `self`).
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Population of the top two Fock levels.
    pub fn tail_mass(&self) -> f64 {
        let n = self.amps.len();
        self.amps.rows(n - 2, 2).norm_squared()
    }

    /// Renormalize in place (constructors already normalize; this is for
    /// callers that mutate amplitudes through [`StateVector::map`]).
    pub fn normalize(&mut self) {
        let norm = self.amps.norm();
        if norm > 1e-150 {
            self.amps /= C64::from(norm);
        }
    }

    /// Apply an elementwise transform to the amplitudes (e.g. a diagonal
    /// phase) without renormalizing.
    pub fn map(&self, f: impl Fn(usize, C64) -> C64) -> StateVector {
        let amps = DVector::from_iterator(
            self.amps.len(),
            self.amps.iter().enumerate().map(|(n, &c)| f(n, c)),
        );
        StateVector { amps }
    }

    /// Promote to a density matrix |ψ⟩⟨ψ|.
    pub fn to_density(&self) -> DensityMatrix {
        let n = self.amps.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityMatrix { m }
    }
}

/// A mixed state over the truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Build from a raw matrix. Hermiticity is enforced within 1e-12 and the
    /// trace within 1e-10; positivity is the integrator's responsibility.
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self, FockError> {
        if m.nrows() < 2 || m.nrows() != m.ncols() {
            return Err(FockError::InvalidDim(m.nrows()));
        }
        let herm_err = (&m - m.adjoint()).norm();
        if herm_err > 1e-12 * m.nrows() as f64 {
            return Err(FockError::ZeroNorm);
        }
        Ok(Self { m })
    }

    /// Internal constructor for evolution code that maintains the invariants
    /// itself.
    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Tr(ρ²), 1 for pure states.
    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    /// Hermitize and rescale to unit trace (used after long integrations to
    /// shed accumulated round-off).
    pub fn renormalize(&mut self) {
        let herm = (&self.m + self.m.adjoint()) * C64::from(0.5);
        let tr = herm.trace().re;
        self.m = herm / C64::from(tr);
    }

    /// Trace distance ½·Tr|ρ−σ|, computed from the eigenvalues of the
    /// Hermitian difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.m - &other.m;
        let evals = hermitian_eigenvalues(&diff);
        0.5 * evals.iter().map(|l| l.abs()).sum::<f64>()
    }

    /// ⟨ψ|ρ|ψ⟩ — fidelity against a pure reference.
    pub fn fidelity_pure(&self, psi: &StateVector) -> f64 {
        let v = &self.m * psi.amplitudes();
        psi.amplitudes().dotc(&v).re
    }
}

/// A dense operator on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    m: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self, FockError> {
        if m.nrows() < 2 || m.nrows() != m.ncols() {
            return Err(FockError::InvalidDim(m.nrows()));
        }
        Ok(Self { m })
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Operator {
        Operator { m: self.m.adjoint() }
    }

    /// Apply to a pure state without renormalizing (the result of e.g. â on a
    /// unit vector is not unit norm).
    pub fn apply_raw(&self, psi: &StateVector) -> DVector<C64> {
        &self.m * psi.amplitudes()
    }

    /// Apply to a pure state and renormalize.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector, FockError> {
        StateVector::from_amplitudes(self.apply_raw(psi))
    }

    /// Matrix product self·other.
    pub fn compose(&self, other: &Operator) -> Operator {
        Operator { m: &self.m * &other.m }
    }

    /// self + other.
    pub fn add(&self, other: &Operator) -> Operator {
        Operator { m: &self.m + &other.m }
    }

    /// Scale by a complex constant.
    pub fn scale(&self, c: C64) -> Operator {
        Operator { m: &self.m * c }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.m.norm()
    }
}

/// Anything that yields expectation values: pure or mixed states.
pub trait QuantumState {
    fn dim(&self) -> usize;
    /// ⟨Ô⟩ in this state.
    fn expect(&self, op: &Operator) -> C64;
}

impl QuantumState for StateVector {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn expect(&self, op: &Operator) -> C64 {
        self.amplitudes().dotc(&(op.matrix() * self.amplitudes()))
    }
}

impl QuantumState for DensityMatrix {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn expect(&self, op: &Operator) -> C64 {
        (self.matrix() * op.matrix()).trace()
    }
}

/// ⟨ψ|Ô|ψ⟩ or Tr(ρÔ).
pub fn expectation<S: QuantumState>(op: &Operator, state: &S) -> Result<C64, FockError> {
    if op.dim() != state.dim() {
        return Err(FockError::DimMismatch { left: op.dim(), right: state.dim() });
    }
    Ok(state.expect(op))
}

/// The annihilation operator â with â|n⟩ = √n|n−1⟩.
pub fn annihilation(dim: usize) -> Operator {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    Operator { m }
}

/// The creation operator â†.
pub fn creation(dim: usize) -> Operator {
    annihilation(dim).dagger()
}

/// The number operator n̂ = â†â.
pub fn number(dim: usize) -> Operator {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = C64::from(n as f64);
    }
    Operator { m }
}

/// The photon-number parity operator P̂ = e^{iπn̂}, diagonal (−1)ⁿ.
pub fn parity_op(dim: usize) -> Operator {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = C64::from(if n % 2 == 0 { 1.0 } else { -1.0 });
    }
    Operator { m }
}

/// The identity operator.
pub fn identity(dim: usize) -> Operator {
    Operator { m: DMatrix::identity(dim, dim) }
}

/// The bundle (â, â†, n̂, P̂) used throughout the codebase.
pub fn ladder_ops(dim: usize) -> (Operator, Operator, Operator, Operator) {
    (annihilation(dim), creation(dim), number(dim), parity_op(dim))
}

fn check_truncation(alpha: C64, dim: usize) -> Result<(), FockError> {
    if dim < 2 {
        return Err(FockError::InvalidDim(dim));
    }
    let nbar = alpha.norm_sqr();
    let bound = dim as f64 / 4.0;
    if nbar > bound {
        return Err(FockError::AmplitudeTooLarge { nbar, bound });
    }
    Ok(())
}

/// Raw coherent-state amplitudes cₙ = e^{−|α|²/2} αⁿ/√(n!), built by forward
/// recursion so no factorial ever overflows.
fn coherent_amplitudes(alpha: C64, dim: usize) -> DVector<C64> {
    let mut amps = DVector::zeros(dim);
    let mut c = C64::from((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..dim {
        amps[n] = c;
        c *= alpha / C64::from(((n + 1) as f64).sqrt());
    }
    amps
}

/// Coherent state |α⟩ on the truncated space, with the default leakage
/// threshold.
pub fn coherent_state(alpha: C64, dim: usize) -> Result<StateVector, FockError> {
    coherent_state_tol(alpha, dim, DEFAULT_LEAKAGE_THRESHOLD)
}

/// Coherent state with an explicit leakage threshold.
pub fn coherent_state_tol(
    alpha: C64,
    dim: usize,
    threshold: f64,
) -> Result<StateVector, FockError> {
    check_truncation(alpha, dim)?;
    let amps = coherent_amplitudes(alpha, dim);
    let state = StateVector::from_amplitudes(amps)?;
    let tail = state.tail_mass();
    if tail > threshold {
        return Err(FockError::TruncationLeakage { tail, threshold, dim });
    }
    Ok(state)
}

/// Two-component cat state N±(|α⟩ ± |−α⟩) with the default leakage threshold.
pub fn cat_state(alpha: C64, parity: Parity, dim: usize) -> Result<StateVector, FockError> {
    cat_state_tol(alpha, parity, dim, DEFAULT_LEAKAGE_THRESHOLD)
}

/// Cat state with an explicit leakage threshold.
pub fn cat_state_tol(
    alpha: C64,
    parity: Parity,
    dim: usize,
    threshold: f64,
) -> Result<StateVector, FockError> {
    check_truncation(alpha, dim)?;
    let plus = coherent_amplitudes(alpha, dim);
    let minus = coherent_amplitudes(-alpha, dim);
    let amps = match parity {
        Parity::Even => plus + minus,
        Parity::Odd => plus - minus,
    };
    let state = StateVector::from_amplitudes(amps)?;
    let tail = state.tail_mass();
    if tail > threshold {
        return Err(FockError::TruncationLeakage { tail, threshold, dim });
    }
    Ok(state)
}

/// Matrix exponential by scaling-and-squaring with a machine-precision
/// Taylor kernel. Adequate for the small dense generators used here.
pub(crate) fn expm(m: &DMatrix<C64>) -> DMatrix<C64> {
    let dim = m.nrows();
    // Scale so the 1-norm of the argument is at most 1/2.
    let one_norm = (0..dim)
        .map(|j| m.column(j).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if one_norm > 0.5 {
        (one_norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / C64::from((2.0f64).powi(s as i32));
    // Taylor series: with argument norm ≤ 1/2, 24 terms are beyond machine
    // precision (0.5^24/24! ≪ 1e-16).
    let mut result = DMatrix::identity(dim, dim);
    let mut term = DMatrix::<C64>::identity(dim, dim);
    for k in 1..=24 {
        term = (&term * &scaled) / C64::from(k as f64);
        result += &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Displacement operator D̂_α = exp(αâ† − α*â).
pub fn displacement(alpha: C64, dim: usize) -> Result<Operator, FockError> {
    check_truncation(alpha, dim)?;
    let a = annihilation(dim);
    let gen = creation(dim).scale(alpha).add(&a.scale(-alpha.conj()));
    Ok(Operator { m: expm(gen.matrix()) })
}

/// Wigner function W(α) = (2/π)⟨D̂_α P̂ D̂_α†⟩ evaluated pointwise on a grid.
pub fn wigner<S: QuantumState>(state: &S, grid: &[C64]) -> Result<Vec<f64>, FockError> {
    let dim = state.dim();
    let par = parity_op(dim);
    grid.iter()
        .map(|&alpha| {
            let d = displacement(alpha, dim)?;
            let displaced_parity = d.compose(&par).compose(&d.dagger());
            Ok(2.0 / std::f64::consts::PI * state.expect(&displaced_parity).re)
        })
        .collect()
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations.
///
/// nalgebra's symmetric eigensolver is real-only, and the matrices we need
/// spectra for are small (≤ 40×40), so a hand-rolled Jacobi sweep is both
/// simple and accurate to machine precision.
pub(crate) fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut a = (m + m.adjoint()) * C64::from(0.5);
    let n = a.nrows();
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm() < 1e-300 {
                    continue;
                }
                // Unitary 2×2 rotation that zeroes a[(p,q)]: diagonalize the
                // Hermitian block [[app, apq], [apq*, aqq]].
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = apq / C64::from(apq.norm());
                let theta = 0.5 * (2.0 * apq.norm()).atan2(app - aqq);
                let (c, s) = (theta.cos(), theta.sin());
                let sp = phase * C64::from(s);
                // Columns: v_p' = c v_p + s e^{iφ} v_q ; v_q' = −s e^{−iφ} v_p + c v_q
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * C64::from(c) + aiq * sp;
                    a[(i, q)] = aiq * C64::from(c) - aip * sp.conj();
                }
                for i in 0..n {
                    let api = a[(p, i)];
                    let aqi = a[(q, i)];
                    a[(p, i)] = api * C64::from(c) + aqi * sp.conj();
                    a[(q, i)] = aqi * C64::from(c) - api * sp;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)].re).collect()
}
