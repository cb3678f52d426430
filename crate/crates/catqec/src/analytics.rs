//! Closed-form protocol analysis: per-step parity-measurement fidelities,
//! cadence optimisation (step count, equal-rate schedules, fidelity gain,
//! break-even), the per-channel photon-loss budget, and Bayesian confidence
//! calculus over measurement records with post-selection.
//!
//! Everything in this module is deterministic and cheap; the Monte-Carlo
//! counterparts live in [`crate::controller`]. Two forward models of the
//! measurement record coexist on purpose:
//!
//! - [`bayes_records`] is the controller's real-time belief model: one pooled
//!   event rate per step (photon jumps plus ancilla excitations), at most one
//!   event per step, and two mapping fidelities. It is the model a feedback
//!   processor can actually evaluate between measurements.
//! - [`record_statistics`] is the exact forward enumeration of the simulated
//!   phenomenological plant (Poisson losses, thermal flips, demolition
//!   carry-over, asymmetric meter). It is the analytic twin of
//!   [`crate::controller::record_frequencies`] and agrees with it to Monte
//!   Carlo accuracy.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cat::{basis_overlaps, DECODE_SIGMA};
use crate::controller::AncillaModel;
use crate::dynamics::SystemParams;

/// Reference lifetime of the trivial Fock-state encoding (µs), the
/// denominator of every per-channel gain in [`LossBudget`].
pub const TAU_F01: f64 = 290.0;

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("invalid step fidelities: require 0 <= f1 <= f0 <= 1, got f0={f0}, f1={f1}")]
    InvalidFidelities { f0: f64, f1: f64 },
    #[error("no root: the step fidelity f0={f0} is too small for a cadence optimum")]
    NoRoot { f0: f64 },
    #[error("{0}")]
    InvalidParam(String),
}

/// Success probabilities of one parity-measurement step: `f0` with no photon
/// jump in the preceding wait, `f1` with exactly one jump (the extra decay
/// while the indicated error is processed costs `e^{-latency/T1}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFidelities {
    pub f0: f64,
    pub f1: f64,
}

impl StepFidelities {
    pub fn new(f0: f64, f1: f64) -> Result<Self, AnalyticsError> {
        if !(0.0..=1.0).contains(&f0) || !(0.0..=f0).contains(&f1) {
            return Err(AnalyticsError::InvalidFidelities { f0, f1 });
        }
        Ok(StepFidelities { f0, f1 })
    }
}

/// Which ancilla coherence number sets the Ramsey dephasing in
/// [`step_fidelities_with`]: the measured `T2`, or the pure-dephasing time
/// `Tφ = 1/(1/T2 - 1/(2 T1))` with the relaxation contribution removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DephasingTime {
    T2,
    TPhi,
}

fn ramsey_coherence(params: &SystemParams, dephasing: DephasingTime) -> f64 {
    let t = match dephasing {
        DephasingTime::T2 => params.t2,
        DephasingTime::TPhi => 1.0 / (1.0 / params.t2 - 1.0 / (2.0 * params.t1)),
    };
    (-std::f64::consts::PI / (params.chi_sa * t)).exp()
}

/// Full per-step success probabilities, including the readout assignment
/// fidelities: `f0 = e^{-π/(χ_sa T2)}·M_gg` and
/// `f1 = e^{-π/(χ_sa T2)}·M_ee·e^{-(τ_meas+T_FB)/T1}`.
pub fn step_fidelities(params: &SystemParams) -> StepFidelities {
    step_fidelities_with(params, DephasingTime::T2, true)
}

/// Coherence-limited step fidelities, without the readout assignment factors.
/// Assignment errors are heralded and repairable by the record-confidence
/// model rather than lost outright, so this is the pair that enters the
/// achievable-gain and cadence formulas ([`gain`], [`optimize_cadence`]).
pub fn coherence_fidelities(params: &SystemParams) -> StepFidelities {
    step_fidelities_with(params, DephasingTime::T2, false)
}

/// Step fidelities with an explicit dephasing-time convention and an explicit
/// choice of whether the readout assignment fidelities are folded in.
pub fn step_fidelities_with(
    params: &SystemParams,
    dephasing: DephasingTime,
    include_readout: bool,
) -> StepFidelities {
    let ramsey = ramsey_coherence(params, dephasing);
    let latency_decay = (-(params.tau_meas + params.t_fb) / params.t1).exp();
    let (m_gg, m_ee) = if include_readout {
        (params.m_gg, params.m_ee)
    } else {
        (1.0, 1.0)
    };
    StepFidelities { f0: ramsey * m_gg, f1: ramsey * m_ee * latency_decay }
}

/// Solve `log(f0) + log(1 + 1/r) - 1/(1+r) = 0` for the cadence parameter
/// `r` by bracketed bisection on `[1e-3, 1e9]`.
///
/// `r` balances the parity-measurement infidelity against the double-jump
/// probability per step; `1/(2r²) ≈ 1 - f0` in the high-fidelity limit.
pub fn solve_r(f0: f64) -> Result<f64, AnalyticsError> {
    if !(f0 > 0.5) || f0 >= 1.0 {
        return Err(AnalyticsError::NoRoot { f0 });
    }
    let g = |r: f64| f0.ln() + (1.0 + 1.0 / r).ln() - 1.0 / (1.0 + r);
    let (mut lo, mut hi) = (1e-3, 1e9);
    if g(lo) <= 0.0 {
        return Err(AnalyticsError::NoRoot { f0 });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(lo) * g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// High-fidelity approximation of [`solve_r`]: `r ≈ 1/√(2(1-f0))`, from
/// matching the measurement infidelity with the double-jump probability.
pub fn r_double_jump_approx(f0: f64) -> f64 {
    1.0 / (2.0 * (1.0 - f0)).sqrt()
}

/// Lifetime gain of the monitored cat over the uncorrected cat for a given
/// pair of step fidelities: `G = 1/(1 - (f1/f0)·r/(1+r))`.
///
/// Perfect steps (`f0 = f1 = 1`) return `+∞`.
pub fn gain_from(fid: StepFidelities) -> Result<f64, AnalyticsError> {
    if fid.f0 >= 1.0 && fid.f1 >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let r = solve_r(fid.f0)?;
    Ok(1.0 / (1.0 - (fid.f1 / fid.f0) * r / (1.0 + r)))
}

/// Lifetime gain with the coherence-limited fidelities of `params`.
pub fn gain(params: &SystemParams) -> Result<f64, AnalyticsError> {
    gain_from(coherence_fidelities(params))
}

/// Gain over the Fock-state encoding: `2G/(3n̄₀)`. Break-even is a ratio
/// above 1.
pub fn break_even_ratio(params: &SystemParams, nbar0: f64) -> Result<f64, AnalyticsError> {
    Ok(2.0 * gain(params)? / (3.0 * nbar0))
}

/// Expected number of photon jumps over a total time `t` starting from
/// `nbar0`: `Λ = n̄₀(1 - e^{-t/τ_s})`.
pub fn expected_jumps(nbar0: f64, t_total: f64, tau_s: f64) -> f64 {
    nbar0 * (1.0 - (-t_total / tau_s).exp())
}

/// Monitored-evolution fidelity `F_T = Π_k (f0 + f1 λ_k) e^{-λ_k}` for an
/// equal-rate schedule, where `λ = Λ/S` jumps are expected per step.
pub fn f_t_equal_lambda(s: usize, nbar0: f64, t_total: f64, fid: StepFidelities, tau_s: f64) -> f64 {
    let total = expected_jumps(nbar0, t_total, tau_s);
    let lam = total / s as f64;
    (fid.f0 + fid.f1 * lam).powi(s as i32) * (-total).exp()
}

/// `F_T` for an arbitrary wait schedule, with per-step jump expectations
/// `λ_k = n̄(T_{k-1})(1 - e^{-t_k/τ_s})` from the decayed photon number.
pub fn step_fidelity_product(nbar0: f64, t_k: &[f64], fid: StepFidelities, tau_s: f64) -> f64 {
    let mut elapsed = 0.0;
    let mut f = 1.0;
    for &t in t_k {
        let nbar = nbar0 * (-elapsed / tau_s).exp();
        let lam = nbar * (1.0 - (-t / tau_s).exp());
        f *= (fid.f0 + fid.f1 * lam) * (-lam).exp();
        elapsed += t;
    }
    f
}

/// Wait schedule with a constant expected number of jumps per step. The wait
/// times stretch as the cat decays: `t_k = -τ_s ln(1 - λ/n̄(T_{k-1}))` with
/// `λ = Λ/S`.
pub fn equal_lambda_schedule(
    nbar0: f64,
    t_total: f64,
    s: usize,
    tau_s: f64,
) -> Result<Vec<f64>, AnalyticsError> {
    if !(nbar0 > 0.0) || !(t_total > 0.0) || s == 0 {
        return Err(AnalyticsError::InvalidParam(format!(
            "equal-lambda schedule needs nbar0 > 0, t_total > 0, s >= 1; \
             got nbar0={nbar0}, t_total={t_total}, s={s}"
        )));
    }
    let lam = expected_jumps(nbar0, t_total, tau_s) / s as f64;
    let mut schedule = Vec::with_capacity(s);
    let mut elapsed = 0.0;
    for _ in 0..s {
        let nbar = nbar0 * (-elapsed / tau_s).exp();
        let x = 1.0 - lam / nbar;
        if x <= 0.0 {
            return Err(AnalyticsError::InvalidParam(format!(
                "per-step jump expectation {lam} exceeds the photon number {nbar}"
            )));
        }
        let t = -tau_s * x.ln();
        schedule.push(t);
        elapsed += t;
    }
    Ok(schedule)
}

/// Continuous optimum of the step count: `S* = r(f0)·(f1/f0)·Λ`.
pub fn s_opt_continuous(
    nbar0: f64,
    t_total: f64,
    fid: StepFidelities,
    tau_s: f64,
) -> Result<f64, AnalyticsError> {
    let r = solve_r(fid.f0)?;
    Ok(r * (fid.f1 / fid.f0) * expected_jumps(nbar0, t_total, tau_s))
}

/// Integer step count maximising `F_T`: the better of the floor and ceiling
/// of the continuous optimum (ties resolve toward fewer steps). Matches a
/// brute-force scan of `F_T` over `S ∈ [1, 50]` up to exact ties.
pub fn optimal_steps(
    nbar0: f64,
    t_total: f64,
    fid: StepFidelities,
    tau_s: f64,
) -> Result<usize, AnalyticsError> {
    let s_cont = s_opt_continuous(nbar0, t_total, fid, tau_s)?;
    let lo = (s_cont.floor() as usize).max(1);
    let hi = (s_cont.ceil() as usize).max(1);
    let f_lo = f_t_equal_lambda(lo, nbar0, t_total, fid, tau_s);
    let f_hi = f_t_equal_lambda(hi, nbar0, t_total, fid, tau_s);
    Ok(if f_hi > f_lo { hi } else { lo })
}

/// Expected jumps per step at the optimal cadence: `λ* = f0/(r·f1)`.
pub fn lambda_opt(fid: StepFidelities) -> Result<f64, AnalyticsError> {
    Ok(fid.f0 / (solve_r(fid.f0)? * fid.f1))
}

/// 64-point Gauss-Hermite rule for weight `e^{-x²}`, built once from the
/// symmetric tridiagonal Jacobi matrix of the Hermite recurrence.
fn gauss_hermite_64() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 64;
        let mut jac = DMatrix::<f64>::zeros(N, N);
        for k in 1..N {
            let b = (k as f64 / 2.0).sqrt();
            jac[(k - 1, k)] = b;
            jac[(k, k - 1)] = b;
        }
        let eig = jac.symmetric_eigen();
        let mu0 = std::f64::consts::PI.sqrt();
        let mut rule: Vec<(f64, f64)> = (0..N)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let weight = mu0 * eig.eigenvectors[(0, i)].powi(2);
                (node, weight)
            })
            .collect();
        rule.sort_by(|a, b| a.0.total_cmp(&b.0));
        rule
    })
}

/// Mean decode fidelity retained after one photon jump whose Kerr correction
/// angle is uncertain over a window of `w` radians.
///
/// The jump time is known only to within its wait window, so the corrected
/// frame carries a residual angle modelled as a Gaussian with the matching
/// variance, `σ_j = w/√12`. Averaging the Gaussian decode sensitivity
/// `e^{-θ²/(2σ_d²)}` (σ_d = [`DECODE_SIGMA`]) over that angle by
/// Gauss-Hermite quadrature gives the retention; analytically it equals
/// `1/√(1 + σ_j²/σ_d²)`.
pub fn kerr_jump_retention(w: f64) -> f64 {
    let sigma_j = w.abs() / 12.0_f64.sqrt();
    let scale = 2.0_f64.sqrt() * sigma_j;
    let inv_mu0 = 1.0 / std::f64::consts::PI.sqrt();
    gauss_hermite_64()
        .iter()
        .map(|&(x, wgt)| {
            let theta = scale * x;
            wgt * (-theta * theta / (2.0 * DECODE_SIGMA * DECODE_SIGMA)).exp()
        })
        .sum::<f64>()
        * inv_mu0
}

/// Kerr-dephasing fidelity `F_KD` of a wait schedule: per step, a jump is
/// expected with rate λ_k and costs `1 - E(K_s t_k)` of decode fidelity,
/// where `E` is [`kerr_jump_retention`].
pub fn f_kd(nbar0: f64, t_k: &[f64], k_s: f64, tau_s: f64) -> f64 {
    let mut elapsed = 0.0;
    let mut loss = 0.0;
    for &t in t_k {
        let nbar = nbar0 * (-elapsed / tau_s).exp();
        let lam = nbar * (1.0 - (-t / tau_s).exp());
        loss += lam * (1.0 - kerr_jump_retention(k_s * t));
        elapsed += t;
    }
    (-loss).exp()
}

/// Encode/decode fidelity floor `F_ED`: two logical pulses at `1 - p_pulse`
/// each, and the parity-blended squared overlap of the shrunken basis cats
/// (the cats are no longer orthogonal once `|α|` has decayed).
pub fn f_ed(t_total: f64, nbar0: f64, params: &SystemParams) -> f64 {
    let total = expected_jumps(nbar0, t_total, params.tau_s);
    let p_even = 0.5 * (1.0 + (-2.0 * total).exp());
    let alpha = (nbar0 * (-t_total / params.tau_s).exp()).sqrt();
    let (ov_even, ov_odd) = basis_overlaps(alpha);
    let blend = p_even * ov_even + (1.0 - p_even) * ov_odd;
    (1.0 - params.p_pulse).powi(2) * (1.0 - blend)
}

/// A monitoring cadence and its predicted process fidelity, broken into the
/// four multiplicative components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadenceSolution {
    /// Number of parity-measurement steps.
    pub s: usize,
    /// Wait times t_k (µs); sums to the total monitoring time.
    pub t_k: Vec<f64>,
    /// Mean expected photon jumps per step, Λ/S. For optimiser output the
    /// per-step expectations are all equal to this.
    pub lambda_per_step: f64,
    /// Predicted process fidelity, the product of the four components.
    pub predicted_f: f64,
    /// Ancilla-excitation survival `e^{-T·Γ↑}`.
    pub f_gamma_up: f64,
    /// Encode/decode floor.
    pub f_ed: f64,
    /// Monitored-evolution component `Π (f0 + f1 λ_k) e^{-λ_k}`.
    pub f_t: f64,
    /// Kerr-dephasing component.
    pub f_kd: f64,
}

/// Predicted process fidelity of an explicit wait schedule, as the product
/// `F = F_Γ↑ · F_ED · F_T · F_KD`. An empty schedule is the bare
/// encode/decode round trip.
pub fn total_fidelity(
    t_total: f64,
    nbar0: f64,
    t_k: &[f64],
    params: &SystemParams,
) -> Result<CadenceSolution, AnalyticsError> {
    let sum: f64 = t_k.iter().sum();
    if (sum - t_total).abs() > 1e-6 * t_total.max(1.0) {
        return Err(AnalyticsError::InvalidParam(format!(
            "schedule sums to {sum}, expected the total time {t_total}"
        )));
    }
    if t_k.iter().any(|&t| !(t > 0.0)) && !t_k.is_empty() {
        return Err(AnalyticsError::InvalidParam(
            "wait times must be positive".into(),
        ));
    }
    let s = t_k.len();
    let fid = coherence_fidelities(params);
    let f_gamma_up = (-t_total * params.gamma_up).exp();
    let f_ed = f_ed(t_total, nbar0, params);
    let f_t = step_fidelity_product(nbar0, t_k, fid, params.tau_s);
    let f_kd = f_kd(nbar0, t_k, params.k_s, params.tau_s);
    let lambda_per_step = if s == 0 {
        0.0
    } else {
        expected_jumps(nbar0, t_total, params.tau_s) / s as f64
    };
    Ok(CadenceSolution {
        s,
        t_k: t_k.to_vec(),
        lambda_per_step,
        predicted_f: f_gamma_up * f_ed * f_t * f_kd,
        f_gamma_up,
        f_ed,
        f_t,
        f_kd,
    })
}

/// Best monitoring cadence for a total time `t_total`: scans the step count
/// over equal-rate schedules and keeps the highest predicted fidelity.
/// The scan extends past the `F_T`-only optimum because shorter waits also
/// shrink the Kerr angle uncertainty.
pub fn optimize_cadence(
    t_total: f64,
    nbar0: f64,
    params: &SystemParams,
) -> Result<CadenceSolution, AnalyticsError> {
    if !(t_total > 0.0) || !(nbar0 > 0.0) {
        return Err(AnalyticsError::InvalidParam(format!(
            "optimize_cadence needs t_total > 0 and nbar0 > 0, got {t_total}, {nbar0}"
        )));
    }
    let fid = coherence_fidelities(params);
    // Fails fast when no cadence can win (f0 <= 0.5 admits no optimum).
    solve_r(fid.f0)?;
    let mut best: Option<CadenceSolution> = None;
    for s in 1..=50 {
        let schedule = equal_lambda_schedule(nbar0, t_total, s, params.tau_s)?;
        let sol = total_fidelity(t_total, nbar0, &schedule, params)?;
        if best.as_ref().is_none_or(|b| sol.predicted_f > b.predicted_f) {
            best = Some(sol);
        }
    }
    Ok(best.expect("the scan covers at least S = 1"))
}

/// Bayesian confidence attached to one measurement record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordConfidence {
    /// Record as a bit string, '1' marking an indicated error.
    pub bits: String,
    /// Probability of observing this record.
    pub probability: f64,
    /// Probability that the record is faithful — every indicated error was a
    /// real event in that very step and no event went unseen.
    pub conditional_success: f64,
}

/// Belief-model forward table over all `2^S` records of an `S`-step monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTable {
    pub steps: usize,
    /// All records in lexicographic bit order.
    pub records: Vec<RecordConfidence>,
    /// Single-step posterior p⁻(0ε|g): confidence in a clean step.
    pub q_g: f64,
    /// Single-step posterior p⁻(1ε|e): confidence in an indicated error.
    pub q_e: f64,
}

impl ConfidenceTable {
    pub fn get(&self, bits: &str) -> Option<&RecordConfidence> {
        self.records.iter().find(|r| r.bits == bits)
    }

    /// Record probability aggregated by indicated error count; index `k`
    /// holds p(kε).
    pub fn jump_probabilities(&self) -> Vec<f64> {
        let mut by_count = vec![0.0; self.steps + 1];
        for r in &self.records {
            let count = r.bits.bytes().filter(|&b| b == b'1').count();
            by_count[count] += r.probability;
        }
        by_count
    }

    /// Records sorted by descending probability (ties by bit string), each
    /// paired with the cumulative probability up to and including it.
    pub fn ranked(&self) -> Vec<(&RecordConfidence, f64)> {
        let mut order: Vec<&RecordConfidence> = self.records.iter().collect();
        order.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then_with(|| a.bits.cmp(&b.bits))
        });
        let mut cum = 0.0;
        order
            .into_iter()
            .map(|r| {
                cum += r.probability;
                (r, cum)
            })
            .collect()
    }

    /// Probability mass of the records that survive [`record_accepted`].
    pub fn acceptance_fraction(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| record_accepted(&r.bits))
            .map(|r| r.probability)
            .sum()
    }

    /// CSV with one row per record: bits, probability, conditional success.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bits,probability,conditional_success\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.12e},{:.12e}\n",
                r.bits, r.probability, r.conditional_success
            ));
        }
        out
    }
}

/// Forward Bayesian model over protocol-aware outcome sequences.
///
/// Hidden dynamics per step `j`: one pooled event (photon jump during the
/// wait, or an ancilla excitation from step 2 on) occurs with probability
/// `1 - e^{-λ_j}`, `λ_j = n̄₀ e^{-(j-1)t_w/τ_s}(1 - e^{-t_w/τ_s}) + Γ↑ t_w`.
/// An event flips the tracked parity. The outcome letter reports whether the
/// measured parity disagrees with the controller's belief — faithfully with
/// probability `f_g` (expected-g) or `f_e` (expected-e) — and the controller
/// re-centres its belief on every indicated error, so a misread letter
/// inverts the meaning of every later letter.
pub fn bayes_records(
    nbar0: f64,
    t_w: f64,
    s: usize,
    f_g: f64,
    f_e: f64,
    params: &SystemParams,
) -> Result<ConfidenceTable, AnalyticsError> {
    if !(nbar0 > 0.0) || !(t_w > 0.0) {
        return Err(AnalyticsError::InvalidParam(format!(
            "bayes_records needs nbar0 > 0 and t_w > 0, got {nbar0}, {t_w}"
        )));
    }
    if !(1..=20).contains(&s) {
        return Err(AnalyticsError::InvalidParam(format!(
            "bayes_records supports 1..=20 steps, got {s}"
        )));
    }
    if !(0.0..=1.0).contains(&f_g) || !(0.0..=1.0).contains(&f_e) {
        return Err(AnalyticsError::InvalidParam(format!(
            "mapping fidelities must sit in [0, 1], got f_g={f_g}, f_e={f_e}"
        )));
    }
    let event_p: Vec<f64> = (1..=s)
        .map(|j| {
            let decay = (-((j - 1) as f64) * t_w / params.tau_s).exp();
            let mut lam = nbar0 * decay * (1.0 - (-t_w / params.tau_s).exp());
            if j >= 2 {
                lam += params.gamma_up * t_w;
            }
            1.0 - (-lam).exp()
        })
        .collect();

    // Per-letter emission given the parity offset d (belief xor truth) after
    // the step's event draw: expected-e iff d == 1.
    let emit = |expected_e: bool, letter_e: bool| -> f64 {
        match (expected_e, letter_e) {
            (false, false) => f_g,
            (false, true) => 1.0 - f_g,
            (true, true) => f_e,
            (true, false) => 1.0 - f_e,
        }
    };

    let mut records = Vec::with_capacity(1 << s);
    for code in 0u32..(1 << s) {
        let bits: String = (0..s)
            .map(|j| if code >> (s - 1 - j) & 1 == 1 { '1' } else { '0' })
            .collect();
        // Forward pass over the desync bit d; the event branch is summed out.
        let mut v = [1.0, 0.0];
        let mut faithful = 1.0;
        for (j, &pi) in event_p.iter().enumerate() {
            let letter_e = code >> (s - 1 - j) & 1 == 1;
            let mut nv = [0.0, 0.0];
            for (d, &p) in v.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (event, pe) in [(1, pi), (0, 1.0 - pi)] {
                    let d_after = d ^ event;
                    let w = p * pe * emit(d_after == 1, letter_e);
                    nv[d_after ^ usize::from(letter_e)] += w;
                }
            }
            v = nv;
            faithful *= if letter_e { pi * f_e } else { (1.0 - pi) * f_g };
        }
        let probability = v[0] + v[1];
        records.push(RecordConfidence {
            bits,
            probability,
            conditional_success: if probability > 0.0 { faithful / probability } else { 0.0 },
        });
    }

    let pi1 = event_p[0];
    let q_g = f_g * (1.0 - pi1) / (f_g * (1.0 - pi1) + (1.0 - f_e) * pi1);
    let q_e = f_e * pi1 / (f_e * pi1 + (1.0 - f_g) * (1.0 - pi1));
    Ok(ConfidenceTable { steps: s, records, q_g, q_e })
}

/// Post-selection filter: a record is kept when every indicated error is
/// confirmed by a subsequent clean step — no "11" substring and no trailing
/// '1'.
pub fn record_accepted(bits: &str) -> bool {
    debug_assert!(bits.bytes().all(|b| b == b'0' || b == b'1'));
    !bits.contains("11") && !bits.ends_with('1')
}

/// Apply [`record_accepted`] to a batch; returns the accepted subset and the
/// acceptance fraction (0 for an empty batch).
pub fn postselect<'a>(records: &'a [String]) -> (Vec<&'a str>, f64) {
    let accepted: Vec<&str> = records
        .iter()
        .map(String::as_str)
        .filter(|r| record_accepted(r))
        .collect();
    let fraction = if records.is_empty() {
        0.0
    } else {
        accepted.len() as f64 / records.len() as f64
    };
    (accepted, fraction)
}

/// Exact record distribution of the phenomenological plant under
/// [`crate::controller::adaptive_monitor`], by forward enumeration.
///
/// Per step this combines, exactly as the sampler draws them: Poisson photon
/// losses and thermal flips over the wait (their odd-count probability),
/// the demolition kick of the previous readout, an ancilla excitation over
/// the full step (inverting that step's letter), and the asymmetric meter at
/// the decayed photon number. The only approximation is the ancilla reset
/// residual (the ~5×10⁻⁴ chance the verify loop exits excited), far below
/// Monte-Carlo resolution at 10⁵ shots.
pub fn record_statistics(
    nbar0: f64,
    schedule: &[f64],
    params: &SystemParams,
) -> Result<BTreeMap<String, f64>, AnalyticsError> {
    if !(nbar0 > 0.0) {
        return Err(AnalyticsError::InvalidParam(format!(
            "record_statistics needs nbar0 > 0, got {nbar0}"
        )));
    }
    if schedule.is_empty() || schedule.len() > 20 {
        return Err(AnalyticsError::InvalidParam(format!(
            "record_statistics supports 1..=20 steps, got {}",
            schedule.len()
        )));
    }
    if schedule.iter().any(|&t| !(t > 0.0)) {
        return Err(AnalyticsError::InvalidParam(
            "wait times must be positive".into(),
        ));
    }
    let ancilla = AncillaModel::from_params(params);
    let kappa = params.kappa_s();
    let s = schedule.len();

    struct StepModel {
        p_flip: f64,
        p_exc: f64,
        p_g: f64,
        p_e: f64,
    }
    let mut elapsed = 0.0;
    let steps: Vec<StepModel> = schedule
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let nbar = nbar0 * (-kappa * elapsed).exp();
            let window = 1.0 - (-kappa * t).exp();
            let lam = nbar * window * (1.0 + params.n_th_s);
            let carry = if k >= 1 { 1.0 - 2.0 * params.p_d } else { 1.0 };
            let p_flip = 0.5 * (1.0 - (-2.0 * lam).exp() * carry);
            let t_m = t + ancilla.parity_map_time + ancilla.tau_meas + ancilla.t_fb;
            elapsed += t;
            let (p_g, p_e) = ancilla.meter_probs(nbar0 * (-kappa * elapsed).exp());
            StepModel { p_flip, p_exc: params.gamma_up * t_m, p_g, p_e }
        })
        .collect();

    let mut out = BTreeMap::new();
    for code in 0u32..(1 << s) {
        let mut v = [1.0, 0.0];
        for (j, m) in steps.iter().enumerate() {
            let letter_e = code >> (s - 1 - j) & 1 == 1;
            let mut nv = [0.0, 0.0];
            for (d, &p) in v.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (flip, pf) in [(1, m.p_flip), (0, 1.0 - m.p_flip)] {
                    for (exc, px) in [(1, m.p_exc), (0, 1.0 - m.p_exc)] {
                        let d_after = d ^ flip;
                        let says_e = (d_after ^ exc) == 1;
                        let p_letter = match (says_e, letter_e) {
                            (true, true) => m.p_e,
                            (true, false) => 1.0 - m.p_e,
                            (false, true) => 1.0 - m.p_g,
                            (false, false) => m.p_g,
                        };
                        nv[d_after ^ usize::from(letter_e)] += p * pf * px * p_letter;
                    }
                }
            }
            v = nv;
        }
        let bits: String = (0..s)
            .map(|j| if code >> (s - 1 - j) & 1 == 1 { '1' } else { '0' })
            .collect();
        out.insert(bits, v[0] + v[1]);
    }
    Ok(out)
}

/// Which monitoring regime a budget row describes: `Fast` when the cadence is
/// instrument-limited (the wait is within the mapping+readout+feedback
/// overhead), `Optimized` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonitoringRegime {
    Fast,
    Optimized,
}

/// Per-channel multiplicative lifetime gains at a measurement interval `t_M`,
/// each `G_x = t_M / (p_x · τ_f01)` against the Fock-encoding reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub t_m: f64,
    pub nbar: f64,
    pub regime: MonitoringRegime,
    /// Double jumps within one interval (uncorrectable).
    pub g_2eps: f64,
    /// Storage thermal excitations (uncorrectable); independent of t_M.
    pub g_up_s: f64,
    /// Readout: missing-jump filter when fast, errant-syndrome dephasing
    /// when optimized.
    pub g_readout: f64,
    /// Ancilla preparation: double excitations when fast, per-excitation
    /// dephasing when optimized.
    pub g_up_a: f64,
    /// Kerr phase uncertainty of the corrected jump.
    pub g_kerr: f64,
    /// Forward propagation of ancilla decay through the dispersive coupling.
    pub g_fp: f64,
    pub tau_f01: f64,
}

impl LossBudget {
    pub fn csv_header() -> &'static str {
        "t_m,nbar,regime,g_2eps,g_up_s,g_readout,g_up_a,g_kerr,g_fp,tau_f01"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.t_m,
            self.nbar,
            match self.regime {
                MonitoringRegime::Fast => "fast",
                MonitoringRegime::Optimized => "optimized",
            },
            self.g_2eps,
            self.g_up_s,
            self.g_readout,
            self.g_up_a,
            self.g_kerr,
            self.g_fp,
            self.tau_f01
        )
    }
}

/// Consistency estimate of the Fock-encoding lifetime from the storage
/// numbers: `3/(1/τ_s + 2/T2_s)` (photon loss plus twice the dephasing rate,
/// harmonically averaged over the three Bloch axes). Lands within 5% of
/// [`TAU_F01`] for the reference parameter set.
pub fn fock_lifetime_estimate(params: &SystemParams) -> f64 {
    3.0 / (1.0 / params.tau_s + 2.0 / params.t2_s)
}

/// Per-channel loss budget at mean photon number `nbar` and measurement
/// interval `t_m`.
pub fn loss_budget(
    params: &SystemParams,
    nbar: f64,
    t_m: f64,
) -> Result<LossBudget, AnalyticsError> {
    if !(t_m > 0.0) || !(nbar > 0.0) {
        return Err(AnalyticsError::InvalidParam(format!(
            "loss_budget needs t_m > 0 and nbar > 0, got t_m={t_m}, nbar={nbar}"
        )));
    }
    let overhead = params.parity_map_time() + params.tau_meas + params.t_fb;
    let regime = if t_m <= 2.0 * overhead {
        MonitoringRegime::Fast
    } else {
        MonitoringRegime::Optimized
    };

    // Double jumps: Poisson with the linear-rate expectation n̄ t_M/τ_s.
    let lam_lin = nbar * t_m / params.tau_s;
    let p_2eps = 0.5 * lam_lin * lam_lin * (-lam_lin).exp();
    let g_2eps = t_m / (p_2eps * TAU_F01);

    let g_up_s = params.tau_s / (params.n_th_s * nbar * TAU_F01);

    let g_readout = match regime {
        // A missed jump survives until the next interval confirms it.
        MonitoringRegime::Fast => {
            let t_jump = params.tau_s / nbar;
            t_jump * t_jump / (2.0 * t_m * TAU_F01)
        }
        // An errant syndrome dephases the qubit outright.
        MonitoringRegime::Optimized => {
            let ramsey = (-std::f64::consts::PI / (params.chi_sa * params.t2)).exp();
            let p_phi = 0.5 * (1.0 - ramsey);
            t_m / (p_phi * TAU_F01)
        }
    };

    let g_up_a = match regime {
        MonitoringRegime::Fast => {
            let p_up = params.gamma_up * t_m;
            t_m / (p_up * p_up * TAU_F01)
        }
        MonitoringRegime::Optimized => 1.0 / (params.gamma_up * TAU_F01),
    };

    // Exactly one jump, times the Kerr-angle retention shortfall.
    let lam = expected_jumps(nbar, t_m, params.tau_s);
    let p_kerr = lam * (-lam).exp() * (1.0 - kerr_jump_retention(params.k_s * t_m));
    let g_kerr = t_m / (p_kerr * TAU_F01);

    let p_fp = std::f64::consts::PI / (params.chi_sa * 2.0 * params.t1)
        + (nbar * t_m / params.tau_s) * params.tau_meas / params.t1
        + t_m * params.gamma_up;
    let g_fp = t_m / (p_fp * TAU_F01);

    Ok(LossBudget {
        t_m,
        nbar,
        regime,
        g_2eps,
        g_up_s,
        g_readout,
        g_up_a,
        g_kerr,
        g_fp,
        tau_f01: TAU_F01,
    })
}
