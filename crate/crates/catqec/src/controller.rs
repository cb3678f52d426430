//! Discrete-event model of the real-time feedback controller: an ancilla
//! with finite coherence, parity measurements with infidelity and
//! back-action, the adaptive monitoring state machine, ancilla reset, and
//! the full encode → monitor → decode → correct cycle.
//!
//! Two interchangeable plants stand in for the storage mode. The
//! [`PhenomenologicalPlant`] tracks a [`CodewordState`] and samples jump,
//! thermal, and dephasing events from their known statistics; the
//! [`FullHilbertPlant`] integrates quantum trajectories of the truncated
//! Fock-space model and decodes with an explicit basis projection. Their
//! record statistics agree, which is one of the cross-checks in the test
//! suite.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cat::{
    encode_ideal, decode_ideal, CatCodeParams, CatError, CodewordState, LogicalQubit,
    DECODE_SIGMA,
};
use crate::dynamics::{
    evolve_trajectory_with_rng, DynamicsError, LindbladModel, SystemParams,
};
use crate::fock::{annihilation, FockError, Operator, Parity, StateVector, C64};

/// Errors from the controller layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Cat(#[from] CatError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl From<FockError> for ControllerError {
    fn from(e: FockError) -> Self {
        ControllerError::Cat(CatError::Fock(e))
    }
}

/// A single readout outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    G,
    E,
}

/// True two-level state of the ancilla transmon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncillaState {
    G,
    E,
}

impl AncillaState {
    fn flipped(self) -> AncillaState {
        match self {
            AncillaState::G => AncillaState::E,
            AncillaState::E => AncillaState::G,
        }
    }
}

/// Static error model of the ancilla and its readout chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncillaModel {
    /// Ancilla relaxation time (µs).
    pub t1: f64,
    /// Ancilla Ramsey coherence time (µs).
    pub t2: f64,
    /// Ancilla thermal excitation rate (1/µs).
    pub gamma_up: f64,
    /// Readout assignment fidelity for |g⟩.
    pub m_gg: f64,
    /// Readout assignment fidelity for |e⟩.
    pub m_ee: f64,
    /// Duration of one parity-mapping Ramsey sequence, π/χ_sa (µs).
    pub parity_map_time: f64,
    /// Readout integration time (µs).
    pub tau_meas: f64,
    /// Feedback latency (µs).
    pub t_fb: f64,
    /// Parity-measurement demolition probability.
    pub p_demolition: f64,
    /// Deterministic storage deflection per readout, n̄_ro·χ_sr·τ_meas (rad);
    /// compensated by the controller.
    pub theta_m: f64,
    /// Shot-to-shot spread of the deflection, √n̄_ro·χ_sr·τ_meas (rad).
    pub theta_sigma: f64,
    /// Parity-map fidelity by photon-number band: n̄ < 1, 1 ≤ n̄ < 2.5,
    /// n̄ ≥ 2.5.
    pub band_fidelities: [f64; 3],
}

impl AncillaModel {
    pub fn from_params(p: &SystemParams) -> Self {
        AncillaModel {
            t1: p.t1,
            t2: p.t2,
            gamma_up: p.gamma_up,
            m_gg: p.m_gg,
            m_ee: p.m_ee,
            parity_map_time: p.parity_map_time(),
            tau_meas: p.tau_meas,
            t_fb: p.t_fb,
            p_demolition: p.p_d,
            theta_m: p.n_readout * p.chi_sr * p.tau_meas,
            theta_sigma: p.n_readout.sqrt() * p.chi_sr * p.tau_meas,
            band_fidelities: p.parity_fidelity_bands,
        }
    }

    /// Overall probability that a parity measurement reports the syndrome
    /// faithfully, by photon-number band.
    pub fn parity_fidelity(&self, nbar: f64) -> f64 {
        if nbar < 1.0 {
            self.band_fidelities[0]
        } else if nbar < 2.5 {
            self.band_fidelities[1]
        } else {
            self.band_fidelities[2]
        }
    }

    /// The band fidelity split asymmetrically over the two outcomes:
    /// (P(read g | syndrome g), P(read e | syndrome e)). The g branch ends
    /// with the ancilla in its ground state while the e branch must survive
    /// T1 decay for the readout duration, so the map infidelity is
    /// apportioned by the readout assignment fidelities and that decay
    /// factor; the two branch fidelities average back to
    /// [`Self::parity_fidelity`].
    pub fn meter_probs(&self, nbar: f64) -> (f64, f64) {
        let decay = (-self.tau_meas / self.t1).exp();
        let denom = self.m_gg + self.m_ee * decay;
        let f_map = 2.0 * self.parity_fidelity(nbar) / denom;
        (f_map * self.m_gg, f_map * self.m_ee * decay)
    }

    /// Forward-propagation probability: ancilla decay during the parity map
    /// dephases the storage, p = π/(χ_sa·2T1).
    pub fn p_forward(&self) -> f64 {
        self.parity_map_time / (2.0 * self.t1)
    }
}

/// The adaptive parity-mapping assignment, flipped by the controller on
/// every indicated error so the believed parity always reads g.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityProtocol {
    pub maps_even_to_g: bool,
}

impl ParityProtocol {
    pub fn new() -> Self {
        ParityProtocol { maps_even_to_g: true }
    }

    pub fn flip(&mut self) {
        self.maps_even_to_g = !self.maps_even_to_g;
    }
}

impl Default for ParityProtocol {
    fn default() -> Self {
        Self::new()
    }
}

/// The controller's record of one monitoring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// 0 = no error indicated, 1 = error indicated.
    pub bits: Vec<u8>,
    /// Absolute time of each measurement (µs).
    pub step_times: Vec<f64>,
    /// Protocol assignment in force at each step.
    pub protocol_signs: Vec<bool>,
    /// Number of indicated errors (= number of 1 bits).
    pub error_count: u32,
    /// Cumulative time the ancilla dwelt in e before being reset (µs).
    pub time_in_e: f64,
}

impl MeasurementRecord {
    /// Check the internal invariants: equal lengths, error count = number of
    /// 1 bits, and the protocol flipping exactly at the 1s.
    pub fn validate(&self) -> Result<(), ControllerError> {
        let n = self.bits.len();
        if self.step_times.len() != n || self.protocol_signs.len() != n {
            return Err(ControllerError::InvalidConfig(format!(
                "record length mismatch: {} bits, {} times, {} signs",
                n,
                self.step_times.len(),
                self.protocol_signs.len()
            )));
        }
        let ones: u32 = self.bits.iter().map(|&b| u32::from(b)).sum();
        if ones != self.error_count {
            return Err(ControllerError::InvalidConfig(format!(
                "error_count {} != number of 1 bits {}",
                self.error_count, ones
            )));
        }
        for k in 1..n {
            let flipped = self.protocol_signs[k] != self.protocol_signs[k - 1];
            if flipped != (self.bits[k - 1] == 1) {
                return Err(ControllerError::InvalidConfig(format!(
                    "protocol sign at step {k} inconsistent with bit {}",
                    self.bits[k - 1]
                )));
            }
        }
        Ok(())
    }

    /// The record as a string of 0s and 1s.
    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }
}

/// What the controller monitors: the storage mode, as seen through parity
/// measurements and back-action events.
pub trait Plant {
    /// Current photon-number parity.
    fn parity(&self) -> Parity;
    /// Current mean photon number (for fidelity-band lookup).
    fn nbar(&self) -> f64;
    /// Time since encoding (µs).
    fn elapsed(&self) -> f64;
    /// Free evolution for `dt`, sampling loss and thermal events.
    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng) -> Result<(), ControllerError>;
    /// A dephasing event: phase-space rotation by an unknown angle.
    fn apply_dephasing(&mut self, rng: &mut ChaCha12Rng);
    /// A measurement-induced photon loss.
    fn apply_demolition(&mut self, rng: &mut ChaCha12Rng);
    /// A known phase-space rotation by −θ (the controller compensates +θ
    /// for the deterministic part at decode).
    fn apply_rotation(&mut self, theta: f64);
}

fn sample_poisson(rng: &mut ChaCha12Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive finite rate").sample(rng) as u32
}

fn sample_normal(rng: &mut ChaCha12Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("positive finite spread").sample(rng)
}

fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Storage model that tracks codeword bookkeeping and samples events from
/// their known statistics instead of integrating the Hilbert space.
#[derive(Debug, Clone)]
pub struct PhenomenologicalPlant {
    pub(crate) state: CodewordState,
    /// Set when the logical phase has been scrambled (unknown rotation,
    /// thermal excitation): decode returns the fully mixed outcome.
    pub(crate) dephased: bool,
    kappa_s: f64,
    k_s: f64,
    n_th_s: f64,
}

impl PhenomenologicalPlant {
    pub fn new(nbar0: f64, params: &SystemParams) -> Self {
        PhenomenologicalPlant {
            state: CodewordState::fresh(C64::from(nbar0.sqrt())),
            dephased: false,
            kappa_s: params.kappa_s(),
            k_s: params.k_s,
            n_th_s: params.n_th_s,
        }
    }

    pub fn is_dephased(&self) -> bool {
        self.dephased
    }

    pub fn codeword(&self) -> &CodewordState {
        &self.state
    }
}

impl Plant for PhenomenologicalPlant {
    fn parity(&self) -> Parity {
        self.state.parity
    }

    fn nbar(&self) -> f64 {
        self.state.amplitude(self.kappa_s).norm_sqr()
    }

    fn elapsed(&self) -> f64 {
        self.state.elapsed
    }

    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng) -> Result<(), ControllerError> {
        let t0 = self.state.elapsed;
        let nbar = self.nbar();
        let window = 1.0 - (-self.kappa_s * dt).exp();
        // Photon losses: Poisson count, jump times with density ∝ e^{−κu}.
        let n_loss = sample_poisson(rng, nbar * window);
        if n_loss > 0 {
            let mut times: Vec<f64> = (0..n_loss)
                .map(|_| {
                    if self.kappa_s > 0.0 {
                        -(1.0 - rng.random::<f64>() * window).ln() / self.kappa_s
                    } else {
                        rng.random::<f64>() * dt
                    }
                })
                .collect();
            times.sort_by(f64::total_cmp);
            for u in times {
                self.state = crate::cat::apply_logical_jump(&self.state, t0 + u)?;
                self.state.add_frame_angle(self.k_s * (t0 + u));
            }
        }
        // Thermal excitations: each flips parity and scrambles the phase.
        let n_gain = sample_poisson(rng, self.n_th_s * nbar * window);
        if n_gain > 0 {
            for _ in 0..n_gain {
                self.state.parity = self.state.parity.flipped();
                self.state.error_count += 1;
            }
            self.dephased = true;
        }
        self.state.advance(t0 + dt - self.state.elapsed);
        Ok(())
    }

    fn apply_dephasing(&mut self, _rng: &mut ChaCha12Rng) {
        self.dephased = true;
    }

    fn apply_demolition(&mut self, _rng: &mut ChaCha12Rng) {
        let t = self.state.elapsed;
        self.state = crate::cat::apply_logical_jump(&self.state, t)
            .expect("demolition at the current time is always valid");
        self.state.add_frame_angle(self.k_s * t);
    }

    fn apply_rotation(&mut self, theta: f64) {
        self.state.add_frame_angle(theta);
    }
}

/// Storage model that integrates quantum trajectories of the truncated
/// Fock-space Lindbladian (Kerr Hamiltonian, photon loss, thermal gain).
pub struct FullHilbertPlant {
    pub(crate) psi: StateVector,
    model: LindbladModel,
    lower: Operator,
    elapsed: f64,
    parity: Parity,
    pub(crate) jump_count: u32,
    nbar0: f64,
    kappa_s: f64,
}

impl FullHilbertPlant {
    /// Wrap an encoded (even-parity) state.
    pub fn new(
        psi: StateVector,
        params: &SystemParams,
        dim: usize,
    ) -> Result<Self, ControllerError> {
        let model = LindbladModel::storage(params, dim)?;
        Ok(FullHilbertPlant {
            nbar0: psi
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(n, a)| n as f64 * a.norm_sqr())
                .sum(),
            psi,
            model,
            lower: annihilation(dim),
            elapsed: 0.0,
            parity: Parity::Even,
            jump_count: 0,
            kappa_s: params.kappa_s(),
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.psi
    }
}

impl Plant for FullHilbertPlant {
    fn parity(&self) -> Parity {
        self.parity
    }

    fn nbar(&self) -> f64 {
        self.nbar0 * (-self.kappa_s * self.elapsed).exp()
    }

    fn elapsed(&self) -> f64 {
        self.elapsed
    }

    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng) -> Result<(), ControllerError> {
        let res = evolve_trajectory_with_rng(&self.psi, &self.model, dt, rng)?;
        for _ in &res.jump_events {
            self.parity = self.parity.flipped();
            self.jump_count += 1;
        }
        self.psi = res.final_state.expect("trajectory keeps its final state");
        self.elapsed += dt;
        Ok(())
    }

    fn apply_dephasing(&mut self, rng: &mut ChaCha12Rng) {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        self.apply_rotation(theta);
    }

    fn apply_demolition(&mut self, _rng: &mut ChaCha12Rng) {
        let lowered = self.lower.matrix() * self.psi.amplitudes();
        if let Ok(psi) = StateVector::from_amplitudes(lowered) {
            self.psi = psi;
            self.parity = self.parity.flipped();
            self.jump_count += 1;
        }
    }

    fn apply_rotation(&mut self, theta: f64) {
        self.psi = self
            .psi
            .map(|n, a| a * C64::new(0.0, -theta * n as f64).exp());
    }
}

/// One parity measurement: Ramsey mapping, readout, and the sampled
/// back-action. Returns the reported outcome; the ancilla ends projected in
/// the reported state.
pub fn parity_measure<P: Plant>(
    plant: &mut P,
    ancilla: &AncillaModel,
    state: &mut AncillaState,
    protocol: &ParityProtocol,
    rng: &mut ChaCha12Rng,
) -> Outcome {
    // The Ramsey sequence maps the syndrome onto the ancilla; an ancilla
    // that entered excited has the mapping inverted.
    let even = plant.parity() == Parity::Even;
    let mut says_g = even == protocol.maps_even_to_g;
    if *state == AncillaState::E {
        says_g = !says_g;
    }
    // Ancilla decay mid-map forwards a random phase kick to the storage.
    if rng.random::<f64>() < ancilla.p_forward() {
        plant.apply_dephasing(rng);
    }
    // Map + readout infidelity, apportioned asymmetrically.
    let (p_g, p_e) = ancilla.meter_probs(plant.nbar());
    let outcome = if says_g {
        if rng.random::<f64>() < p_g {
            Outcome::G
        } else {
            Outcome::E
        }
    } else if rng.random::<f64>() < p_e {
        Outcome::E
    } else {
        Outcome::G
    };
    // Readout back-action on the storage: demolition and cross-Kerr
    // deflection (deterministic part compensated at decode, spread not).
    if rng.random::<f64>() < ancilla.p_demolition {
        plant.apply_demolition(rng);
    }
    plant.apply_rotation(ancilla.theta_m + sample_normal(rng, ancilla.theta_sigma));
    // The projective readout leaves the ancilla in the reported state.
    *state = match outcome {
        Outcome::G => AncillaState::G,
        Outcome::E => AncillaState::E,
    };
    outcome
}

/// Measure-and-π-pulse loop until the readout reports g. Returns the number
/// of π pulses applied. With `believed_e` the controller fires one
/// unconditional π pulse before verifying, as after an indicated error.
pub fn ancilla_reset(
    ancilla: &AncillaModel,
    state: &mut AncillaState,
    believed_e: bool,
    rng: &mut ChaCha12Rng,
) -> u32 {
    let mut pulses = 0;
    if believed_e {
        *state = state.flipped();
        pulses += 1;
    }
    for _ in 0..100 {
        let read_g = match state {
            AncillaState::G => rng.random::<f64>() < ancilla.m_gg,
            AncillaState::E => !(rng.random::<f64>() < ancilla.m_ee),
        };
        // Thermal re-excitation during the readout window.
        if *state == AncillaState::G
            && rng.random::<f64>() < ancilla.gamma_up * ancilla.tau_meas
        {
            *state = AncillaState::E;
        }
        if read_g {
            break;
        }
        *state = state.flipped();
        pulses += 1;
    }
    pulses
}

/// Run the adaptive monitoring state machine over the given wait schedule.
/// Per step: wait `t_k` (the storage evolves; the ancilla may thermally
/// excite, which inverts the next mapping and dephases the storage), measure
/// parity, and on an indicated error flip the protocol and reset the
/// ancilla, with an ancilla decay during readout+feedback dephasing the
/// storage.
pub fn adaptive_monitor<P: Plant>(
    plant: &mut P,
    ancilla: &AncillaModel,
    schedule: &[f64],
    rng: &mut ChaCha12Rng,
) -> Result<MeasurementRecord, ControllerError> {
    let mut protocol = ParityProtocol::new();
    let mut state = AncillaState::G;
    let mut bits = Vec::with_capacity(schedule.len());
    let mut step_times = Vec::with_capacity(schedule.len());
    let mut protocol_signs = Vec::with_capacity(schedule.len());
    let mut error_count = 0u32;
    let mut time_in_e = 0.0;

    for &t_k in schedule {
        if !(t_k > 0.0) {
            return Err(ControllerError::InvalidConfig(format!(
                "wait times must be > 0, got {t_k}"
            )));
        }
        // Thermal excitation over the full step (wait + map + readout).
        let t_m = t_k + ancilla.parity_map_time + ancilla.tau_meas + ancilla.t_fb;
        if state == AncillaState::G && rng.random::<f64>() < ancilla.gamma_up * t_m {
            state = AncillaState::E;
            plant.apply_dephasing(rng);
        }
        plant.advance(t_k, rng)?;
        let outcome = parity_measure(plant, ancilla, &mut state, &protocol, rng);
        protocol_signs.push(protocol.maps_even_to_g);
        step_times.push(plant.elapsed());
        match outcome {
            Outcome::G => bits.push(0),
            Outcome::E => {
                bits.push(1);
                error_count += 1;
                protocol.flip();
                time_in_e += ancilla.tau_meas + ancilla.t_fb;
                ancilla_reset(ancilla, &mut state, true, rng);
                // Ancilla decay while it sat in e (readout + feedback)
                // imprints a random phase on the storage.
                let p_decay = 1.0 - (-(ancilla.tau_meas + ancilla.t_fb) / ancilla.t1).exp();
                if rng.random::<f64>() < p_decay {
                    plant.apply_dephasing(rng);
                }
            }
        }
    }

    Ok(MeasurementRecord { bits, step_times, protocol_signs, error_count, time_in_e })
}

/// Which storage model backs the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    Phenomenological,
    FullHilbert { dim: usize },
}

/// Configuration of one QEC cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    /// Initial mean photon number.
    pub nbar0: f64,
    /// Wait times t_k between measurements (µs); may be empty.
    pub schedule: Vec<f64>,
}

impl CycleConfig {
    pub fn new(nbar0: f64, schedule: Vec<f64>) -> Self {
        CycleConfig { nbar0, schedule }
    }

    pub fn total_time(&self) -> f64 {
        self.schedule.iter().sum()
    }
}

/// The logical result of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CycleOutcome {
    Pure(LogicalQubit),
    /// The fully mixed state: the cycle lost the logical information.
    Mixed,
}

impl CycleOutcome {
    pub fn bloch(&self) -> (f64, f64, f64) {
        match self {
            CycleOutcome::Pure(q) => q.bloch(),
            CycleOutcome::Mixed => (0.0, 0.0, 0.0),
        }
    }

    /// State fidelity ⟨q|ρ|q⟩ against a pure target.
    pub fn fidelity_to(&self, target: &LogicalQubit) -> f64 {
        match self {
            CycleOutcome::Pure(q) => q.fidelity(target),
            CycleOutcome::Mixed => 0.5,
        }
    }

    pub fn is_mixed(&self) -> bool {
        matches!(self, CycleOutcome::Mixed)
    }
}

/// The controller's Kerr-frame estimate from a record: each indicated error
/// in step j is attributed to the midpoint of that step's wait, plus the
/// deterministic readout deflection per measurement.
fn controller_frame_estimate(
    bits: &[u8],
    schedule: &[f64],
    k_s: f64,
    theta_m: f64,
) -> f64 {
    let mut acc = schedule.len() as f64 * theta_m;
    let mut t0 = 0.0;
    for (&bit, &t_k) in bits.iter().zip(schedule) {
        if bit == 1 {
            acc += k_s * (t0 + 0.5 * t_k);
        }
        t0 += t_k;
    }
    acc
}

/// One full QEC cycle: encode the qubit, monitor adaptively, decode in the
/// believed parity with the Kerr-frame estimate, and apply the software
/// Z-correction −(error_count mod 4)·π/2.
pub fn run_qec_cycle(
    q: &LogicalQubit,
    config: &CycleConfig,
    kind: PlantKind,
    params: &SystemParams,
    rng: &mut ChaCha12Rng,
) -> Result<(CycleOutcome, MeasurementRecord), ControllerError> {
    if !(config.nbar0 > 0.0) {
        return Err(ControllerError::InvalidConfig(format!(
            "nbar0 must be > 0, got {}",
            config.nbar0
        )));
    }
    let ancilla = AncillaModel::from_params(params);
    // A 4% process infidelity corresponds to depolarizing with p = 0.04/0.75.
    let p_depol = params.p_pulse / 0.75;
    let encode_failed = rng.random::<f64>() < p_depol;

    match kind {
        PlantKind::Phenomenological => {
            let mut plant = PhenomenologicalPlant::new(config.nbar0, params);
            let record = adaptive_monitor(&mut plant, &ancilla, &config.schedule, rng)?;
            let believed_parity = Parity::of_count(record.error_count);
            let frame_est = controller_frame_estimate(
                &record.bits,
                &config.schedule,
                params.k_s,
                ancilla.theta_m,
            );
            let outcome = if encode_failed || plant.dephased {
                CycleOutcome::Mixed
            } else if believed_parity != plant.state.parity {
                // Wrong-parity decode pulse: complete incoherent mixture.
                CycleOutcome::Mixed
            } else {
                let residual = wrap_angle(plant.state.frame_angle - frame_est);
                let p_scramble =
                    1.0 - (-residual * residual / (2.0 * DECODE_SIGMA * DECODE_SIGMA)).exp();
                if rng.random::<f64>() < p_scramble || rng.random::<f64>() < p_depol {
                    CycleOutcome::Mixed
                } else {
                    let delta = (i64::from(plant.state.error_count)
                        - i64::from(record.error_count))
                    .rem_euclid(4);
                    CycleOutcome::Pure(
                        q.rotate_z(delta as f64 * std::f64::consts::FRAC_PI_2),
                    )
                }
            };
            Ok((outcome, record))
        }
        PlantKind::FullHilbert { dim } => {
            let cat_params = CatCodeParams::new(config.nbar0, params, dim)?;
            let psi = encode_ideal(q, &cat_params)?;
            let mut plant = FullHilbertPlant::new(psi, params, dim)?;
            let record = adaptive_monitor(&mut plant, &ancilla, &config.schedule, rng)?;
            let believed_parity = Parity::of_count(record.error_count);
            let believed = CodewordState {
                alpha0: cat_params.alpha0(),
                elapsed: plant.elapsed,
                parity: believed_parity,
                error_count: record.error_count,
                frame_angle: controller_frame_estimate(
                    &record.bits,
                    &config.schedule,
                    params.k_s,
                    ancilla.theta_m,
                ),
                jump_times: Vec::new(),
            };
            let outcome = if encode_failed {
                CycleOutcome::Mixed
            } else {
                match decode_ideal(&plant.psi, &believed, &cat_params) {
                    Err(CatError::LeakageExceeded { .. }) => CycleOutcome::Mixed,
                    Err(e) => return Err(e.into()),
                    Ok(decoded) => {
                        if rng.random::<f64>() < decoded.leakage
                            || rng.random::<f64>() < p_depol
                        {
                            CycleOutcome::Mixed
                        } else {
                            let correction = -(f64::from(record.error_count % 4))
                                * std::f64::consts::FRAC_PI_2;
                            CycleOutcome::Pure(decoded.qubit.rotate_z(correction))
                        }
                    }
                }
            };
            Ok((outcome, record))
        }
    }
}

/// Storage without monitoring: encode, wait `t_hold`, and decode assuming no
/// jumps happened. The baseline the corrected cycle is measured against.
pub fn run_unmonitored_hold(
    q: &LogicalQubit,
    nbar0: f64,
    t_hold: f64,
    params: &SystemParams,
    rng: &mut ChaCha12Rng,
) -> Result<CycleOutcome, ControllerError> {
    if !(nbar0 > 0.0) || !(t_hold >= 0.0) {
        return Err(ControllerError::InvalidConfig(format!(
            "need nbar0 > 0 and t_hold >= 0, got {nbar0}, {t_hold}"
        )));
    }
    let p_depol = params.p_pulse / 0.75;
    let encode_failed = rng.random::<f64>() < p_depol;
    let mut plant = PhenomenologicalPlant::new(nbar0, params);
    plant.advance(t_hold, rng)?;
    // The decoder believes the codeword is fresh: even parity, no jumps,
    // only the deterministic frame (echoed away, hence zero here).
    let outcome = if encode_failed || plant.dephased {
        CycleOutcome::Mixed
    } else if plant.state.parity != Parity::Even {
        CycleOutcome::Mixed
    } else {
        let residual = wrap_angle(plant.state.frame_angle);
        let p_scramble =
            1.0 - (-residual * residual / (2.0 * DECODE_SIGMA * DECODE_SIGMA)).exp();
        if rng.random::<f64>() < p_scramble || rng.random::<f64>() < p_depol {
            CycleOutcome::Mixed
        } else {
            let delta = i64::from(plant.state.error_count).rem_euclid(4);
            CycleOutcome::Pure(q.rotate_z(delta as f64 * std::f64::consts::FRAC_PI_2))
        }
    };
    Ok(outcome)
}

/// Tabulate measurement-record frequencies over many monitoring runs,
/// keyed by bit string. Deterministic for a given master seed regardless of
/// thread count.
pub fn record_frequencies(
    nbar0: f64,
    schedule: &[f64],
    params: &SystemParams,
    kind: PlantKind,
    shots: usize,
    master_seed: u64,
) -> Result<BTreeMap<String, f64>, ControllerError> {
    if shots == 0 {
        return Err(ControllerError::InvalidConfig("shots must be > 0".into()));
    }
    let ancilla = AncillaModel::from_params(params);
    let records: Result<Vec<String>, ControllerError> = (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
            rng.set_stream(i as u64);
            let record = match kind {
                PlantKind::Phenomenological => {
                    let mut plant = PhenomenologicalPlant::new(nbar0, params);
                    adaptive_monitor(&mut plant, &ancilla, schedule, &mut rng)?
                }
                PlantKind::FullHilbert { dim } => {
                    let cat_params = CatCodeParams::new(nbar0, params, dim)?;
                    let psi = encode_ideal(&LogicalQubit::zero(), &cat_params)?;
                    let mut plant = FullHilbertPlant::new(psi, params, dim)?;
                    adaptive_monitor(&mut plant, &ancilla, schedule, &mut rng)?
                }
            };
            Ok(record.bit_string())
        })
        .collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for key in records? {
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / shots as f64))
        .collect())
}
