//! Experiment orchestration: the lifetime sweep behind each storage-scheme
//! comparison, plus the table/CSV producers the command-line tool exposes.
//!
//! Everything randomized is driven by one master seed and a per-shot stream
//! index, so archives are bit-identical across replays and thread counts.

pub mod config;

pub use config::{ConfigError, ExperimentConfig, MonitorSpec};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    bayes_records, loss_budget, optimize_cadence, record_accepted, AnalyticsError,
    CadenceSolution, ConfidenceTable, LossBudget,
};
use crate::cat::{CatError, LogicalQubit};
use crate::controller::{run_qec_cycle, run_unmonitored_hold, ControllerError, CycleConfig};
use crate::dynamics::SystemParams;
use crate::fock::{cat_state, coherent_state, wigner, FockError, Parity, StateVector, C64};
use crate::tomo::{
    amplitude_damping_channel, chi_from_cardinals, fit_decay, BlochVector, CardinalOutcomes,
    DecayFit, DecayModel, TomoError,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Cat(#[from] CatError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    InvalidArg(String),
}

/// The five storage schemes of the lifetime comparison.
pub const SCHEME_TRANSMON: &str = "transmon";
pub const SCHEME_FOCK: &str = "fock";
pub const SCHEME_UNCORRECTED: &str = "uncorrected-cat";
pub const SCHEME_CORRECTED: &str = "corrected-cat";
pub const SCHEME_POSTSELECTED: &str = "postselected-cat";

/// One sweep time of one scheme: the tomographic images of the six cardinal
/// inputs and the process fidelity they reconstruct to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub time: f64,
    /// Process fidelity against the identity, from the six-cardinal χ.
    pub fidelity: f64,
    /// Standard error of `fidelity` from the per-shot scatter (0 for the
    /// closed-form reference schemes).
    pub sigma_f: f64,
    /// Mean output Bloch vector per cardinal input, in the order
    /// +x, −x, +y, −y, +z, −z.
    pub cardinals: Vec<(String, BlochVector)>,
    /// Fraction of shots the record filter kept (post-selected scheme only).
    pub acceptance: Option<f64>,
    /// The wait-time schedule used (monitored schemes only).
    pub schedule: Option<Vec<f64>>,
}

/// A full fidelity-decay curve with its fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeCurve {
    pub scheme: String,
    pub points: Vec<TimePoint>,
    /// `F = 1/4 + A e^{−t/τ}` fit (needs ≥ 4 sweep times).
    pub fit_single: Option<DecayFit>,
    /// Jump-accumulation fit, only meaningful for the uncorrected cat.
    pub fit_cat: Option<DecayFit>,
}

impl SchemeCurve {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.time).collect()
    }

    pub fn fidelities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.fidelity).collect()
    }

    /// Decay curve as CSV rows `t,fidelity,sigma_f`.
    pub fn decay_csv(&self) -> String {
        let mut out = String::from("t,fidelity,sigma_f\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.12e},{:.12e}\n", p.time, p.fidelity, p.sigma_f));
        }
        out
    }
}

/// Everything a lifetime-sweep run produced, replayable from its own config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub schemes: Vec<SchemeCurve>,
}

impl RunArchive {
    pub fn scheme(&self, name: &str) -> Option<&SchemeCurve> {
        self.schemes.iter().find(|s| s.scheme == name)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Write `archive.json` plus one `<scheme>.decay.csv` per curve; returns
    /// the paths written.
    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let archive_path = dir.join("archive.json");
        std::fs::write(&archive_path, self.to_json()?)?;
        written.push(archive_path);
        for curve in &self.schemes {
            let path = dir.join(format!("{}.decay.csv", curve.scheme));
            std::fs::write(&path, curve.decay_csv())?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Spread of the output Bloch lengths across the six cardinals: the largest
/// deviation from their mean. Near zero for a depolarizing channel.
pub fn bloch_length_anisotropy(cardinals: &[(String, BlochVector)]) -> f64 {
    let lengths: Vec<f64> = cardinals.iter().map(|(_, b)| b.length()).collect();
    let mean = lengths.iter().sum::<f64>() / lengths.len().max(1) as f64;
    lengths
        .iter()
        .map(|l| (l - mean).abs())
        .fold(0.0, f64::max)
}

fn outcomes_from(cardinals: &[(String, BlochVector)]) -> CardinalOutcomes {
    CardinalOutcomes::six(
        cardinals[0].1,
        cardinals[1].1,
        cardinals[2].1,
        cardinals[3].1,
        cardinals[4].1,
        cardinals[5].1,
    )
}

fn fidelity_of(cardinals: &[(String, BlochVector)]) -> f64 {
    chi_from_cardinals(&outcomes_from(cardinals)).process_fidelity()
}

/// T1 relaxation toward the ground state plus the extra pure dephasing that
/// brings the transverse decay to the measured T2.
fn reference_cardinals(
    t: f64,
    t1: f64,
    t2: f64,
) -> Result<Vec<(String, BlochVector)>, HarnessError> {
    let channel = amplitude_damping_channel(t, t1, 0.0)?;
    let extra_rate = (1.0 / t2 - 1.0 / (2.0 * t1)).max(0.0);
    let factor = (-t * extra_rate).exp();
    Ok(LogicalQubit::cardinals()
        .iter()
        .map(|(label, q)| {
            let (x, y, z) = q.bloch();
            let out = channel
                .apply_bloch(&BlochVector::new(x, y, z))
                .with_transverse_scale(factor);
            (label.to_string(), out)
        })
        .collect())
}

fn analytic_scheme_curve(
    scheme: &str,
    times: &[f64],
    t1: f64,
    t2: f64,
) -> Result<SchemeCurve, HarnessError> {
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        let cardinals = reference_cardinals(t, t1, t2)?;
        points.push(TimePoint {
            time: t,
            fidelity: fidelity_of(&cardinals),
            sigma_f: 0.0,
            cardinals,
            acceptance: None,
            schedule: None,
        });
    }
    Ok(SchemeCurve {
        scheme: scheme.to_string(),
        points,
        fit_single: None,
        fit_cat: None,
    })
}

/// Per-cardinal running sums for one time point: mean and scatter of the
/// output Bloch vectors, for all shots and for the record-filtered subset.
#[derive(Debug, Clone, Copy, Default)]
struct BlochTally {
    sum: [f64; 3],
    sumsq: [f64; 3],
    n: u64,
    acc_sum: [f64; 3],
    acc_sumsq: [f64; 3],
    acc_n: u64,
}

impl BlochTally {
    fn add(&mut self, b: (f64, f64, f64), accepted: bool) {
        let comps = [b.0, b.1, b.2];
        for (k, c) in comps.iter().enumerate() {
            self.sum[k] += c;
            self.sumsq[k] += c * c;
        }
        self.n += 1;
        if accepted {
            for (k, c) in comps.iter().enumerate() {
                self.acc_sum[k] += c;
                self.acc_sumsq[k] += c * c;
            }
            self.acc_n += 1;
        }
    }

    fn mean(&self) -> BlochVector {
        let n = (self.n as f64).max(1.0);
        BlochVector::new(self.sum[0] / n, self.sum[1] / n, self.sum[2] / n)
    }

    fn accepted_mean(&self) -> BlochVector {
        let n = (self.acc_n as f64).max(1.0);
        BlochVector::new(self.acc_sum[0] / n, self.acc_sum[1] / n, self.acc_sum[2] / n)
    }

    /// Variance of the mean of component `k`.
    fn mean_variance(&self, k: usize, accepted: bool) -> f64 {
        let (sum, sumsq, n) = if accepted {
            (self.acc_sum[k], self.acc_sumsq[k], self.acc_n as f64)
        } else {
            (self.sum[k], self.sumsq[k], self.n as f64)
        };
        if n < 2.0 {
            return 0.0;
        }
        let var = (sumsq - sum * sum / n) / (n - 1.0);
        var.max(0.0) / n
    }
}

/// Standard error of the reconstructed X₀₀ from the own-axis scatter:
/// X₀₀ = 1/4 + (1/8)Σ_k (r_k(+k) − r_k(−k)).
fn sigma_f_from(tallies: &[BlochTally; 6], accepted: bool) -> f64 {
    let mut var = 0.0;
    for (idx, tally) in tallies.iter().enumerate() {
        let axis = idx / 2;
        var += tally.mean_variance(axis, accepted) / 64.0;
    }
    var.sqrt()
}

/// Monte Carlo sweep of a monitored (or unmonitored) cat scheme. Returns the
/// plain curve and, when `with_postselection`, the record-filtered curve
/// built from the same shots.
fn mc_scheme_points(
    config: &ExperimentConfig,
    seed: u64,
    scheme_base: u64,
    monitored: bool,
    with_postselection: bool,
) -> Result<(Vec<TimePoint>, Vec<TimePoint>), HarnessError> {
    let params = &config.params;
    let cardinals = LogicalQubit::cardinals();
    let shots = config.shots as u64;
    let mut points = Vec::with_capacity(config.times.len());
    let mut ps_points = Vec::with_capacity(config.times.len());

    for (t_idx, &t) in config.times.iter().enumerate() {
        let schedule = if monitored {
            Some(config.monitor.resolve(t, config.nbar0, params)?)
        } else {
            None
        };
        let cycle = schedule
            .as_ref()
            .map(|t_k| CycleConfig::new(config.nbar0, t_k.clone()));

        let mut tallies = [BlochTally::default(); 6];
        for (c_idx, (_, q)) in cardinals.iter().enumerate() {
            let stream0 = scheme_base + ((t_idx * 6 + c_idx) as u64) * shots;
            let shot_results: Result<Vec<(f64, f64, f64, bool)>, ControllerError> = (0
                ..config.shots)
                .into_par_iter()
                .map(|shot| {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    rng.set_stream(stream0 + shot as u64);
                    match &cycle {
                        Some(cycle) => {
                            let (outcome, record) =
                                run_qec_cycle(q, cycle, config.plant, params, &mut rng)?;
                            let (x, y, z) = outcome.bloch();
                            Ok((x, y, z, record_accepted(&record.bit_string())))
                        }
                        None => {
                            let outcome = run_unmonitored_hold(
                                q,
                                config.nbar0,
                                t,
                                params,
                                &mut rng,
                            )?;
                            let (x, y, z) = outcome.bloch();
                            Ok((x, y, z, true))
                        }
                    }
                })
                .collect();
            // Fixed-order reduction keeps the sums bit-identical no matter
            // how the shots were scheduled across threads.
            for (x, y, z, accepted) in shot_results? {
                tallies[c_idx].add((x, y, z), accepted);
            }
        }

        let mean_cards: Vec<(String, BlochVector)> = cardinals
            .iter()
            .zip(&tallies)
            .map(|((label, _), tally)| (label.to_string(), tally.mean()))
            .collect();
        points.push(TimePoint {
            time: t,
            fidelity: fidelity_of(&mean_cards),
            sigma_f: sigma_f_from(&tallies, false),
            cardinals: mean_cards,
            acceptance: None,
            schedule: schedule.clone(),
        });

        if with_postselection {
            let acc_cards: Vec<(String, BlochVector)> = cardinals
                .iter()
                .zip(&tallies)
                .map(|((label, _), tally)| (label.to_string(), tally.accepted_mean()))
                .collect();
            let kept: u64 = tallies.iter().map(|t| t.acc_n).sum();
            let total: u64 = tallies.iter().map(|t| t.n).sum();
            ps_points.push(TimePoint {
                time: t,
                fidelity: fidelity_of(&acc_cards),
                sigma_f: sigma_f_from(&tallies, true),
                cardinals: acc_cards,
                acceptance: Some(kept as f64 / total.max(1) as f64),
                schedule,
            });
        }
    }
    Ok((points, ps_points))
}

fn attach_fits(curve: &mut SchemeCurve, nbar0: Option<f64>) -> Result<(), HarnessError> {
    if curve.points.len() < 4 {
        return Ok(());
    }
    let times = curve.times();
    let fids = curve.fidelities();
    curve.fit_single = Some(fit_decay(&times, &fids, DecayModel::SingleExponential)?);
    if let Some(nbar0) = nbar0 {
        curve.fit_cat = Some(fit_decay(&times, &fids, DecayModel::UncorrectedCat { nbar0 })?);
    }
    Ok(())
}

/// The full storage-scheme comparison: closed-form transmon and Fock
/// references, Monte Carlo uncorrected and corrected cats, and the
/// record-filtered corrected cat — all on one sweep grid, one seed.
pub fn cmd_run_qec(config: &ExperimentConfig) -> Result<RunArchive, HarnessError> {
    config.validate()?;
    let seed = config.require_seed()?;
    let params = &config.params;

    let mut transmon = analytic_scheme_curve(SCHEME_TRANSMON, &config.times, params.t1, params.t2)?;
    attach_fits(&mut transmon, None)?;
    let mut fock = analytic_scheme_curve(SCHEME_FOCK, &config.times, params.tau_s, params.t2_s)?;
    attach_fits(&mut fock, None)?;

    let (unc_points, _) = mc_scheme_points(config, seed, 1 << 40, false, false)?;
    let mut uncorrected = SchemeCurve {
        scheme: SCHEME_UNCORRECTED.to_string(),
        points: unc_points,
        fit_single: None,
        fit_cat: None,
    };
    attach_fits(&mut uncorrected, Some(config.nbar0))?;

    let (cc_points, ps_points) = mc_scheme_points(config, seed, 2 << 40, true, true)?;
    let mut corrected = SchemeCurve {
        scheme: SCHEME_CORRECTED.to_string(),
        points: cc_points,
        fit_single: None,
        fit_cat: None,
    };
    attach_fits(&mut corrected, None)?;
    let mut postselected = SchemeCurve {
        scheme: SCHEME_POSTSELECTED.to_string(),
        points: ps_points,
        fit_single: None,
        fit_cat: None,
    };
    attach_fits(&mut postselected, None)?;

    Ok(RunArchive {
        version: crate::VERSION.to_string(),
        seed,
        config: config.clone(),
        schemes: vec![transmon, fock, uncorrected, corrected, postselected],
    })
}

/// Cadence optimisation over a grid of total times.
pub fn cmd_optimize(
    times: &[f64],
    nbar0: f64,
    params: &SystemParams,
) -> Result<Vec<CadenceSolution>, HarnessError> {
    if times.is_empty() {
        return Err(HarnessError::InvalidArg(
            "optimize needs a non-empty list of total times".into(),
        ));
    }
    times
        .iter()
        .map(|&t| optimize_cadence(t, nbar0, params).map_err(HarnessError::from))
        .collect()
}

/// CSV rows for a list of cadence solutions.
pub fn cadence_csv(solutions: &[CadenceSolution]) -> String {
    let mut out = String::from(
        "t_total,s,t_w_mean,lambda_per_step,f_total,f_t,f_kd,f_gamma_up,f_ed,schedule\n",
    );
    for sol in solutions {
        let t_total: f64 = sol.t_k.iter().sum();
        let schedule = sol
            .t_k
            .iter()
            .map(|t| format!("{t:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{:.6},{},{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{}\n",
            t_total,
            sol.s,
            t_total / sol.s as f64,
            sol.lambda_per_step,
            sol.predicted_f,
            sol.f_t,
            sol.f_kd,
            sol.f_gamma_up,
            sol.f_ed,
            schedule
        ));
    }
    out
}

/// The record-confidence table for an `S`-step monitor.
pub fn cmd_bayes(
    s: usize,
    t_w: f64,
    f_g: f64,
    f_e: f64,
    nbar0: f64,
    params: &SystemParams,
) -> Result<ConfidenceTable, HarnessError> {
    Ok(bayes_records(nbar0, t_w, s, f_g, f_e, params)?)
}

/// Per-channel lifetime-gain budget at each measurement interval.
pub fn cmd_budget(
    t_ms: &[f64],
    nbar: f64,
    params: &SystemParams,
) -> Result<Vec<LossBudget>, HarnessError> {
    if t_ms.is_empty() {
        return Err(HarnessError::InvalidArg(
            "budget needs a non-empty list of measurement intervals".into(),
        ));
    }
    t_ms.iter()
        .map(|&t_m| loss_budget(params, nbar, t_m).map_err(HarnessError::from))
        .collect()
}

pub fn budget_csv(rows: &[LossBudget]) -> String {
    let mut out = String::from(LossBudget::csv_header());
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_row());
        out.push('\n');
    }
    out
}

/// States the Wigner command can render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WignerState {
    Vacuum,
    Fock(usize),
    Coherent(C64),
    EvenCat(f64),
    OddCat(f64),
}

impl WignerState {
    /// Parse `vacuum`, `fock:<n>`, `coherent:<re>[,<im>]`,
    /// `even-cat:<nbar>`, or `odd-cat:<nbar>`.
    pub fn parse(spec: &str) -> Result<Self, HarnessError> {
        let bad = |reason: &str| {
            HarnessError::InvalidArg(format!("state `{spec}`: {reason}"))
        };
        if spec == "vacuum" {
            return Ok(WignerState::Vacuum);
        }
        if let Some(n) = spec.strip_prefix("fock:") {
            return n
                .parse()
                .map(WignerState::Fock)
                .map_err(|_| bad("photon number must be a non-negative integer"));
        }
        if let Some(alpha) = spec.strip_prefix("coherent:") {
            let mut parts = alpha.split(',').map(str::trim);
            let re: f64 = parts
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|_| bad("amplitude must be `re` or `re,im`"))?;
            let im: f64 = match parts.next() {
                Some(s) => s.parse().map_err(|_| bad("amplitude must be `re` or `re,im`"))?,
                None => 0.0,
            };
            return Ok(WignerState::Coherent(C64::new(re, im)));
        }
        if let Some(nbar) = spec.strip_prefix("even-cat:") {
            let nbar: f64 = nbar.parse().map_err(|_| bad("mean photon number"))?;
            return Ok(WignerState::EvenCat(nbar));
        }
        if let Some(nbar) = spec.strip_prefix("odd-cat:") {
            let nbar: f64 = nbar.parse().map_err(|_| bad("mean photon number"))?;
            return Ok(WignerState::OddCat(nbar));
        }
        Err(bad(
            "expected vacuum, fock:<n>, coherent:<re>[,<im>], even-cat:<nbar>, or odd-cat:<nbar>",
        ))
    }

    pub fn build(&self, dim: usize) -> Result<StateVector, HarnessError> {
        Ok(match self {
            WignerState::Vacuum => StateVector::fock(0, dim)?,
            WignerState::Fock(n) => StateVector::fock(*n, dim)?,
            WignerState::Coherent(alpha) => coherent_state(*alpha, dim)?,
            WignerState::EvenCat(nbar) => {
                cat_state(C64::from(nbar.sqrt()), Parity::Even, dim)?
            }
            WignerState::OddCat(nbar) => cat_state(C64::from(nbar.sqrt()), Parity::Odd, dim)?,
        })
    }
}

/// Wigner function on a square grid, as CSV rows `re_beta,im_beta,w`. The
/// grid must stay inside the truncation's validity disk: a displacement that
/// leaks past the Fock cutoff is an error, not a silent wrap.
pub fn cmd_wigner(
    spec: &str,
    half_width: f64,
    points_per_axis: usize,
    dim: usize,
) -> Result<String, HarnessError> {
    if !(half_width > 0.0) || points_per_axis == 0 {
        return Err(HarnessError::InvalidArg(format!(
            "need half_width > 0 and at least one grid point, got {half_width}, {points_per_axis}"
        )));
    }
    let state = WignerState::parse(spec)?.build(dim)?;
    let axis: Vec<f64> = if points_per_axis == 1 {
        vec![0.0]
    } else {
        (0..points_per_axis)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (points_per_axis - 1) as f64)
            .collect()
    };
    let grid: Vec<C64> = axis
        .iter()
        .flat_map(|&im| axis.iter().map(move |&re| C64::new(re, im)))
        .collect();
    let values = wigner(&state, &grid)?;
    let mut out = String::from("re_beta,im_beta,w\n");
    for (beta, w) in grid.iter().zip(values) {
        out.push_str(&format!("{:.6},{:.6},{:.12e}\n", beta.re, beta.im, w));
    }
    Ok(out)
}

/// Fit a decay model to a `t,fidelity[,sigma]` CSV document (header row
/// optional; the sigma column is ignored — the fit is unweighted).
pub fn cmd_fit_decay(csv_text: &str, model: DecayModel) -> Result<DecayFit, HarnessError> {
    let mut times = Vec::new();
    let mut fids = Vec::new();
    for (idx, line) in csv_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(HarnessError::InvalidArg(format!(
                "line {}: expected `t,fidelity[,sigma]`, got `{line}`",
                idx + 1
            )));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(t), Ok(f)) => {
                times.push(t);
                fids.push(f);
            }
            _ if idx == 0 => continue, // header row
            _ => {
                return Err(HarnessError::InvalidArg(format!(
                    "line {}: non-numeric data `{line}`",
                    idx + 1
                )));
            }
        }
    }
    Ok(fit_decay(&times, &fids, model)?)
}
