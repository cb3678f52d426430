//! Open-system time evolution: Lindblad master-equation integration and
//! Monte-Carlo jump-trajectory unraveling for single-photon loss, thermal
//! excitation, and Kerr.
//!
//! Everything propagates in the rotating frame of the storage resonator, so
//! the bare frequencies in [`SystemParams`] are carried for completeness but
//! never enter a generator. The one Kerr sign convention used project-wide is
//! H_K = −(K/2)â†²â², i.e. diagonal phases −(K/2)n(n−1)t, and the commutation
//! test below pins it.

use crate::fock::{
    annihilation, creation, DensityMatrix, FockError, Operator, StateVector, C64,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 2π, for converting linear-frequency table values to angular frequencies.
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Errors from the evolution routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("negative evolution time {0}")]
    NegativeTime(f64),
    #[error("collapse rate {0} is negative")]
    NegativeRate(f64),
    #[error("operator dimension {got} does not match model dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("integrator trace drift {drift:.3e} exceeds tolerance {tol:.3e}")]
    TraceDrift { drift: f64, tol: f64 },
    #[error("trajectory population reached the truncation edge (tail mass {tail:.3e})")]
    TruncationReached { tail: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Every Hamiltonian and coherence constant of the hardware model, in
/// microseconds and angular rad/µs.
///
/// The defaults are the device values used throughout: dispersive shifts and
/// Kerrs from the Hamiltonian table, coherences and thermal populations from
/// the coherence table. `gamma_up` is tied to the ancilla T1 and thermal
/// population by detailed balance, Γ↑ = n_th/((1−n_th)·T1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Storage–ancilla dispersive shift (rad/µs).
    pub chi_sa: f64,
    /// Readout–ancilla dispersive shift (rad/µs).
    pub chi_ra: f64,
    /// Storage–readout cross-Kerr (rad/µs).
    pub chi_sr: f64,
    /// Storage self-Kerr (rad/µs).
    pub k_s: f64,
    /// Readout self-Kerr (rad/µs).
    pub k_r: f64,
    /// Ancilla anharmonicity (rad/µs).
    pub k_a: f64,
    /// Bare storage frequency (rad/µs); rotating frame removes it.
    pub omega_s: f64,
    /// Bare ancilla frequency (rad/µs); carried for completeness.
    pub omega_a: f64,
    /// Bare readout frequency (rad/µs); carried for completeness.
    pub omega_r: f64,
    /// Storage thermal population.
    pub n_th_s: f64,
    /// Ancilla thermal population.
    pub n_th_a: f64,
    /// Ancilla relaxation time (µs).
    pub t1: f64,
    /// Ancilla Ramsey coherence time (µs).
    pub t2: f64,
    /// Storage single-photon lifetime (µs).
    pub tau_s: f64,
    /// Storage Ramsey coherence time (µs).
    pub t2_s: f64,
    /// Ancilla thermal excitation rate (1/µs).
    pub gamma_up: f64,
    /// Readout assignment fidelity for |g⟩.
    pub m_gg: f64,
    /// Readout assignment fidelity for |e⟩.
    pub m_ee: f64,
    /// Readout integration time (µs).
    pub tau_meas: f64,
    /// Feedback latency (µs).
    pub t_fb: f64,
    /// Parity-measurement demolition probability.
    pub p_d: f64,
    /// Mean readout photon number during measurement.
    pub n_readout: f64,
    /// Parity-map fidelity by photon-number band: n̄ < 1, 1 ≤ n̄ < 2.5, n̄ ≥ 2.5.
    pub parity_fidelity_bands: [f64; 3],
    /// Process infidelity of each encode/decode optimal-control pulse.
    pub p_pulse: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        let n_th_a = 0.04;
        let t1 = 35.0;
        SystemParams {
            chi_sa: TWO_PI * 1.97,
            chi_ra: TWO_PI * 1.0,
            chi_sr: TWO_PI * 0.002,
            k_s: TWO_PI * 0.0045,
            k_r: TWO_PI * 0.0005,
            k_a: TWO_PI * 297.0,
            omega_s: TWO_PI * 8.3056e3,
            omega_a: TWO_PI * 6.2815e3,
            omega_r: TWO_PI * 9.3149e3,
            n_th_s: 0.02,
            n_th_a,
            t1,
            t2: 13.0,
            tau_s: 250.0,
            t2_s: 330.0,
            gamma_up: n_th_a / ((1.0 - n_th_a) * t1),
            m_gg: 0.993,
            m_ee: 0.993,
            tau_meas: 0.4,
            t_fb: 0.332,
            p_d: 0.001,
            n_readout: 70.0,
            parity_fidelity_bands: [0.985, 0.981, 0.977],
            p_pulse: 0.04,
        }
    }
}

impl SystemParams {
    /// Storage decay rate κ_s = 1/τ_s (1/µs).
    pub fn kappa_s(&self) -> f64 {
        1.0 / self.tau_s
    }

    /// Duration of one parity-mapping Ramsey sequence, π/χ_sa (µs).
    pub fn parity_map_time(&self) -> f64 {
        std::f64::consts::PI / self.chi_sa
    }

    /// Readout-plus-feedback latency τ_meas + T_FB (µs).
    pub fn readout_latency(&self) -> f64 {
        self.tau_meas + self.t_fb
    }

    /// A noiseless variant: every decoherence rate, readout error, thermal
    /// occupation, and pulse infidelity zeroed, and the self-Kerr switched
    /// off, while keeping the real timing constants. Useful as a control in
    /// tests and sweeps.
    pub fn ideal() -> Self {
        SystemParams {
            chi_sr: 0.0,
            k_s: 0.0,
            n_th_s: 0.0,
            n_th_a: 0.0,
            t1: f64::INFINITY,
            t2: f64::INFINITY,
            tau_s: f64::INFINITY,
            t2_s: f64::INFINITY,
            gamma_up: 0.0,
            m_gg: 1.0,
            m_ee: 1.0,
            p_d: 0.0,
            parity_fidelity_bands: [1.0; 3],
            p_pulse: 0.0,
            ..SystemParams::default()
        }
    }

    /// Validate physicality of every field.
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let times = [
            ("t1", self.t1),
            ("t2", self.t2),
            ("tau_s", self.tau_s),
            ("t2_s", self.t2_s),
            ("tau_meas", self.tau_meas),
            ("t_fb", self.t_fb),
        ];
        for (name, t) in times {
            if !(t > 0.0) {
                return Err(DynamicsError::InvalidParam(format!("{name} must be > 0, got {t}")));
            }
        }
        if self.t2 > 2.0 * self.t1 {
            return Err(DynamicsError::InvalidParam(format!(
                "t2 = {} exceeds 2*t1 = {}",
                self.t2,
                2.0 * self.t1
            )));
        }
        if self.t2_s > 2.0 * self.tau_s {
            return Err(DynamicsError::InvalidParam(format!(
                "t2_s = {} exceeds 2*tau_s = {}",
                self.t2_s,
                2.0 * self.tau_s
            )));
        }
        let probs = [
            ("m_gg", self.m_gg),
            ("m_ee", self.m_ee),
            ("p_d", self.p_d),
            ("n_th_s", self.n_th_s),
            ("n_th_a", self.n_th_a),
            ("p_pulse", self.p_pulse),
            ("parity_fidelity_bands[0]", self.parity_fidelity_bands[0]),
            ("parity_fidelity_bands[1]", self.parity_fidelity_bands[1]),
            ("parity_fidelity_bands[2]", self.parity_fidelity_bands[2]),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(DynamicsError::InvalidParam(format!(
                    "{name} must be in [0,1], got {p}"
                )));
            }
        }
        if self.gamma_up < 0.0 {
            return Err(DynamicsError::InvalidParam(format!(
                "gamma_up must be >= 0, got {}",
                self.gamma_up
            )));
        }
        Ok(())
    }
}

/// A Lindblad generator: Hamiltonian plus weighted collapse channels.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    hamiltonian: Operator,
    collapse: Vec<(Operator, f64)>,
}

impl LindbladModel {
    /// Build from a Hamiltonian (rad/µs) and (operator, rate 1/µs) channels.
    pub fn new(
        hamiltonian: Operator,
        collapse: Vec<(Operator, f64)>,
    ) -> Result<Self, DynamicsError> {
        let dim = hamiltonian.dim();
        for (op, rate) in &collapse {
            if op.dim() != dim {
                return Err(DynamicsError::DimMismatch { expected: dim, got: op.dim() });
            }
            if *rate < 0.0 {
                return Err(DynamicsError::NegativeRate(*rate));
            }
        }
        Ok(Self { hamiltonian, collapse })
    }

    /// Pure single-photon loss at rate κ with no Hamiltonian.
    pub fn pure_loss(kappa: f64, dim: usize) -> Result<Self, DynamicsError> {
        Self::new(
            Operator::from_matrix_unchecked(DMatrix::zeros(dim, dim)),
            vec![(annihilation(dim), kappa)],
        )
    }

    /// The storage-resonator model: Kerr Hamiltonian plus loss and thermal
    /// gain channels at the rates implied by `params`.
    pub fn storage(params: &SystemParams, dim: usize) -> Result<Self, DynamicsError> {
        let kappa = params.kappa_s();
        Self::new(
            storage_hamiltonian(params.k_s, dim),
            vec![
                (annihilation(dim), kappa * (1.0 + params.n_th_s)),
                (creation(dim), kappa * params.n_th_s),
            ],
        )
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[(Operator, f64)] {
        &self.collapse
    }

    /// Integrator step bound: resolve both the fastest collapse rate and the
    /// fastest Hamiltonian phase to 1%.
    fn max_step(&self) -> f64 {
        let mut dt = f64::INFINITY;
        for (_, rate) in &self.collapse {
            if *rate > 0.0 {
                dt = dt.min(0.01 / rate);
            }
        }
        let dim = self.hamiltonian.dim();
        let hnorm = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| self.hamiltonian.matrix()[(i, j)].norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        if hnorm > 0.0 {
            dt = dt.min(0.01 * TWO_PI / hnorm);
        }
        if dt.is_infinite() {
            dt = 1.0;
        }
        dt
    }
}

/// The storage Kerr generator in the rotating frame: the diagonal operator
/// whose flow e^{−iGt} equals [`kerr_unitary`]`(k_s, t)`.
///
/// The project-wide Kerr phase convention is pinned by `kerr_unitary` and its
/// commutation test (â·U_K = U_K·e^{−iK t n̂}·â, so a jump at time u leaves a
/// phase-space rotation of angle K·u to undo). The overall sign relative to
/// writing the Hamiltonian as −(K/2)â†²â² is a global convention with no
/// observable consequence; what matters is that the integrators and the
/// decoder agree, which this constructor guarantees.
pub fn storage_hamiltonian(k_s: f64, dim: usize) -> Operator {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = C64::from((k_s / 2.0) * (n as f64) * (n as f64 - 1.0));
    }
    Operator::from_matrix_unchecked(m)
}

/// The Kerr evolution unitary e^{−i(K/2)t n̂(n̂−1)} (diagonal).
pub fn kerr_unitary(k: f64, t: f64, dim: usize) -> Operator {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        let phase = -(k / 2.0) * t * (n as f64) * (n as f64 - 1.0);
        m[(n, n)] = C64::new(0.0, phase).exp();
    }
    Operator::from_matrix_unchecked(m)
}

/// The frame-rotation unitary e^{iθn̂} (diagonal).
pub fn rotation_unitary(theta: f64, dim: usize) -> Operator {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = C64::new(0.0, theta * n as f64).exp();
    }
    Operator::from_matrix_unchecked(m)
}

fn lindblad_rhs(
    rho: &DMatrix<C64>,
    h: &DMatrix<C64>,
    channels: &[(DMatrix<C64>, DMatrix<C64>, f64)], // (L, L†L, rate)
) -> DMatrix<C64> {
    let i = C64::new(0.0, 1.0);
    let mut drho = (h * rho - rho * h) * (-i);
    for (l, ldl, rate) in channels {
        let jump = l * rho * l.adjoint();
        let anti = ldl * rho + rho * ldl;
        drho += (jump - anti * C64::from(0.5)) * C64::from(*rate);
    }
    drho
}

/// Integrate the Lindblad master equation for time `t` with fixed-step RK4.
///
/// Trace is monitored and a drift beyond 1e-8 is an integrator error; the
/// output is not renormalized.
pub fn evolve_master(
    rho: &DensityMatrix,
    model: &LindbladModel,
    t: f64,
) -> Result<DensityMatrix, DynamicsError> {
    if t < 0.0 {
        return Err(DynamicsError::NegativeTime(t));
    }
    if rho.dim() != model.dim() {
        return Err(DynamicsError::DimMismatch { expected: model.dim(), got: rho.dim() });
    }
    if t == 0.0 {
        return Ok(rho.clone());
    }
    let channels: Vec<(DMatrix<C64>, DMatrix<C64>, f64)> = model
        .collapse
        .iter()
        .map(|(l, rate)| {
            let lm = l.matrix().clone();
            let ldl = l.matrix().adjoint() * l.matrix();
            (lm, ldl, *rate)
        })
        .collect();
    let h = model.hamiltonian.matrix();
    let steps = (t / model.max_step()).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut state = rho.matrix().clone();
    for _ in 0..steps {
        let k1 = lindblad_rhs(&state, h, &channels);
        let k2 = lindblad_rhs(&(&state + &k1 * C64::from(dt / 2.0)), h, &channels);
        let k3 = lindblad_rhs(&(&state + &k2 * C64::from(dt / 2.0)), h, &channels);
        let k4 = lindblad_rhs(&(&state + &k3 * C64::from(dt)), h, &channels);
        state += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(dt / 6.0);
    }
    let drift = (state.trace().re - rho.matrix().trace().re).abs();
    if drift > 1e-8 {
        return Err(DynamicsError::TraceDrift { drift, tol: 1e-8 });
    }
    Ok(DensityMatrix::from_matrix_unchecked(state))
}

/// One quantum trajectory: final state, jump history, and the RNG identity
/// that reproduces it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryResult {
    #[serde(skip)]
    pub final_state: Option<StateVector>,
    /// (time µs, collapse-channel index), strictly increasing times.
    pub jump_events: Vec<(f64, usize)>,
    /// Master seed of the ensemble this trajectory belongs to.
    pub rng_seed: u64,
    /// Per-trajectory stream index within the master seed.
    pub stream: u64,
}

/// The dedicated RNG for one trajectory: one ChaCha stream per
/// (master seed, trajectory index) pair.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// How the ensemble draws each trajectory's first jump threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpSampling {
    /// Independent uniform thresholds (the textbook unraveling).
    Independent,
    /// Stratify the first threshold over the ensemble: trajectory i draws
    /// uniformly inside the i-th of n equal slices of (0,1), in a seeded
    /// random slice order. Unbiased for ensemble means, with variance on the
    /// jump-count split reduced well below the iid multinomial level.
    StratifiedFirstJump,
}

struct RK4Workspace {
    k1: DVector<C64>,
    k2: DVector<C64>,
    k3: DVector<C64>,
    k4: DVector<C64>,
    tmp: DVector<C64>,
}

impl RK4Workspace {
    fn new(dim: usize) -> Self {
        Self {
            k1: DVector::zeros(dim),
            k2: DVector::zeros(dim),
            k3: DVector::zeros(dim),
            k4: DVector::zeros(dim),
            tmp: DVector::zeros(dim),
        }
    }
}

/// dψ/dt = −i H_eff ψ with H_eff = H − (i/2)Σ r L†L.
fn rk4_step(
    psi: &DVector<C64>,
    h_eff: &DMatrix<C64>,
    dt: f64,
    ws: &mut RK4Workspace,
) -> DVector<C64> {
    let mi = C64::new(0.0, -1.0);
    h_eff.mul_to(psi, &mut ws.k1);
    ws.k1 *= mi;
    ws.tmp.copy_from(psi);
    ws.tmp.axpy(C64::from(dt / 2.0), &ws.k1, C64::from(1.0));
    h_eff.mul_to(&ws.tmp, &mut ws.k2);
    ws.k2 *= mi;
    ws.tmp.copy_from(psi);
    ws.tmp.axpy(C64::from(dt / 2.0), &ws.k2, C64::from(1.0));
    h_eff.mul_to(&ws.tmp, &mut ws.k3);
    ws.k3 *= mi;
    ws.tmp.copy_from(psi);
    ws.tmp.axpy(C64::from(dt), &ws.k3, C64::from(1.0));
    h_eff.mul_to(&ws.tmp, &mut ws.k4);
    ws.k4 *= mi;
    let mut out = psi.clone();
    out.axpy(C64::from(dt / 6.0), &ws.k1, C64::from(1.0));
    out.axpy(C64::from(dt / 3.0), &ws.k2, C64::from(1.0));
    out.axpy(C64::from(dt / 3.0), &ws.k3, C64::from(1.0));
    out.axpy(C64::from(dt / 6.0), &ws.k4, C64::from(1.0));
    out
}

fn evolve_trajectory_impl(
    psi: &StateVector,
    model: &LindbladModel,
    t: f64,
    rng: &mut ChaCha12Rng,
    first_threshold: Option<f64>,
    master_seed: u64,
    stream: u64,
) -> Result<TrajectoryResult, DynamicsError> {
    if t < 0.0 {
        return Err(DynamicsError::NegativeTime(t));
    }
    if psi.dim() != model.dim() {
        return Err(DynamicsError::DimMismatch { expected: model.dim(), got: psi.dim() });
    }
    let dim = model.dim();
    let i = C64::new(0.0, 1.0);
    let mut h_eff = model.hamiltonian.matrix().clone();
    let mut jump_ops: Vec<(DMatrix<C64>, f64)> = Vec::new();
    for (l, rate) in &model.collapse {
        let ldl = l.matrix().adjoint() * l.matrix();
        h_eff -= ldl * (i * C64::from(0.5 * rate));
        jump_ops.push((l.matrix().clone(), *rate));
    }
    let dt_max = model.max_step();
    let mut ws = RK4Workspace::new(dim);

    let mut state = psi.amplitudes().clone();
    let mut now = 0.0;
    let mut threshold = first_threshold
        .unwrap_or_else(|| rng.random::<f64>())
        .clamp(f64::MIN_POSITIVE, 1.0 - 1e-16);
    let mut jumps: Vec<(f64, usize)> = Vec::new();

    while now < t - 1e-12 {
        let dt = dt_max.min(t - now);
        let next = rk4_step(&state, &h_eff, dt, &mut ws);
        if next.norm_squared() > threshold {
            // No jump inside this step.
            state = next;
            now += dt;
            continue;
        }
        // Bisect the crossing time within [0, dt] from the step start.
        let (mut lo, mut hi) = (0.0f64, dt);
        let mut at_hi = next;
        for _ in 0..60 {
            if hi - lo < 1e-12 * dt_max {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let probe = rk4_step(&state, &h_eff, mid, &mut ws);
            if probe.norm_squared() > threshold {
                lo = mid;
            } else {
                hi = mid;
                at_hi = probe;
            }
        }
        let t_jump = now + hi;
        // Select the channel with probability ∝ rate·‖Lψ‖².
        let weights: Vec<f64> = jump_ops
            .iter()
            .map(|(l, rate)| rate * (l * &at_hi).norm_squared())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut channel = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if pick < *w {
                channel = k;
                break;
            }
            pick -= w;
        }
        state = &jump_ops[channel].0 * &at_hi;
        let norm = state.norm();
        if norm < 1e-150 {
            return Err(DynamicsError::InvalidParam(
                "collapse annihilated the state; rates and truncation are inconsistent".into(),
            ));
        }
        state /= C64::from(norm);
        jumps.push((t_jump, channel));
        now = t_jump;
        threshold = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - 1e-16);
    }

    let final_state = StateVector::from_amplitudes(state)?;
    let tail = final_state.tail_mass();
    if tail > 1e-6 {
        return Err(DynamicsError::TruncationReached { tail });
    }
    Ok(TrajectoryResult {
        final_state: Some(final_state),
        jump_events: jumps,
        rng_seed: master_seed,
        stream,
    })
}

/// Evolve one segment with an externally owned RNG, for stateful callers
/// that advance a trajectory piecewise.
pub(crate) fn evolve_trajectory_with_rng(
    psi: &StateVector,
    model: &LindbladModel,
    t: f64,
    rng: &mut ChaCha12Rng,
) -> Result<TrajectoryResult, DynamicsError> {
    evolve_trajectory_impl(psi, model, t, rng, None, 0, 0)
}

/// Evolve a single trajectory, deterministically reproducible from
/// (master seed, trajectory index).
pub fn evolve_trajectory(
    psi: &StateVector,
    model: &LindbladModel,
    t: f64,
    master_seed: u64,
    index: u64,
) -> Result<TrajectoryResult, DynamicsError> {
    let mut rng = trajectory_rng(master_seed, index);
    evolve_trajectory_impl(psi, model, t, &mut rng, None, master_seed, index)
}

/// An averaged trajectory ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// Ensemble-mean density matrix (fixed-order reduction; bit-identical
    /// across thread counts).
    pub mean: DensityMatrix,
    pub trajectories: Vec<TrajectoryResult>,
}

/// Run `n` trajectories in parallel and average them.
pub fn trajectory_ensemble(
    psi: &StateVector,
    model: &LindbladModel,
    t: f64,
    n: usize,
    master_seed: u64,
    sampling: JumpSampling,
) -> Result<EnsembleResult, DynamicsError> {
    use rayon::prelude::*;
    let first_thresholds: Vec<Option<f64>> = match sampling {
        JumpSampling::Independent => vec![None; n],
        JumpSampling::StratifiedFirstJump => {
            // A seeded random permutation assigns each trajectory one slice of
            // (0,1); the in-slice offset is drawn from the trajectory's own
            // stream inside the worker.
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = trajectory_rng(master_seed, u64::MAX);
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            perm.into_iter().map(Some).map(|p| p.map(|p| p as f64)).collect()
        }
    };
    let results: Vec<TrajectoryResult> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let mut rng = trajectory_rng(master_seed, idx as u64);
            let first = first_thresholds[idx].map(|slice| {
                (slice + rng.random::<f64>()) / n as f64
            });
            evolve_trajectory_impl(psi, model, t, &mut rng, first, master_seed, idx as u64)
        })
        .collect::<Result<_, _>>()?;
    let dim = psi.dim();
    let mut mean = DMatrix::<C64>::zeros(dim, dim);
    for traj in &results {
        let amps = traj.final_state.as_ref().expect("ensemble keeps states").amplitudes();
        // Accumulate |ψ⟩⟨ψ| / n in a fixed order.
        for c in 0..dim {
            let w = amps[c].conj() / C64::from(n as f64);
            for r in 0..dim {
                mean[(r, c)] += amps[r] * w;
            }
        }
    }
    Ok(EnsembleResult {
        mean: DensityMatrix::from_matrix_unchecked(mean),
        trajectories: results,
    })
}

/// Poisson photon-jump statistics over an interval: the pmf of the number of
/// loss events in time `t` starting from mean photon number `nbar0`, with
/// mean λ = n̄₀(1−e^{−κt}).
pub fn jump_count_pmf(nbar0: f64, kappa: f64, t: f64) -> Result<Vec<f64>, DynamicsError> {
    if nbar0 < 0.0 {
        return Err(DynamicsError::InvalidParam(format!("nbar0 must be >= 0, got {nbar0}")));
    }
    let lambda = nbar0 * (1.0 - (-kappa * t).exp());
    let len = (lambda + 10.0 * lambda.sqrt() + 12.0).ceil() as usize;
    let mut pmf = Vec::with_capacity(len);
    let mut p = (-lambda).exp();
    for k in 0..len {
        pmf.push(p);
        p *= lambda / (k as f64 + 1.0);
    }
    Ok(pmf)
}

/// Small-λ double-jump probability p_2ε(t_M) = (n̄κt_M)²/2 · e^{−n̄κt_M},
/// the linearized form used by the loss budget.
pub fn p_2eps(nbar: f64, kappa: f64, t_m: f64) -> f64 {
    let x = nbar * kappa * t_m;
    0.5 * x * x * (-x).exp()
}
