//! Flat `key = value` experiment configuration.
//!
//! The format is deliberately minimal: one assignment per line, `#` starts a
//! comment, and every key must be known — an unrecognised or repeated key is
//! a hard error naming the offender, so a typo can never silently fall back
//! to a default. System parameters are addressed as `system.<field>`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analytics::{equal_lambda_schedule, optimize_cadence};
use crate::controller::PlantKind;
use crate::dynamics::SystemParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` was already set")]
    DuplicateKey { line: usize, key: String },
    #[error("key `{key}`: invalid value `{value}` ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

/// How the monitoring schedule is chosen at each sweep time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MonitorSpec {
    /// Full cadence optimisation at every total time.
    Optimal,
    /// A fixed number of equal-jump-probability steps.
    Steps(usize),
    /// An explicit wait-time list; its sum must equal the requested time.
    Schedule(Vec<f64>),
}

impl MonitorSpec {
    /// The wait times t_k for a cycle of total length `t_total`.
    pub fn resolve(
        &self,
        t_total: f64,
        nbar0: f64,
        params: &SystemParams,
    ) -> Result<Vec<f64>, ConfigError> {
        match self {
            MonitorSpec::Optimal => optimize_cadence(t_total, nbar0, params)
                .map(|sol| sol.t_k)
                .map_err(|e| ConfigError::Invalid {
                    key: "monitor".into(),
                    reason: e.to_string(),
                }),
            MonitorSpec::Steps(s) => {
                equal_lambda_schedule(nbar0, t_total, *s, params.tau_s).map_err(|e| {
                    ConfigError::Invalid { key: "monitor".into(), reason: e.to_string() }
                })
            }
            MonitorSpec::Schedule(t_k) => {
                let sum: f64 = t_k.iter().sum();
                if (sum - t_total).abs() > 1e-6 * t_total.max(1.0) {
                    return Err(ConfigError::Invalid {
                        key: "monitor".into(),
                        reason: format!(
                            "explicit schedule sums to {sum} but the sweep time is {t_total}"
                        ),
                    });
                }
                Ok(t_k.clone())
            }
        }
    }
}

/// Everything one lifetime-sweep run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    /// Initial mean photon number of the cat.
    pub nbar0: f64,
    /// Monte Carlo shots per (time point, cardinal state).
    pub shots: usize,
    /// Master seed; archived commands refuse to run without one.
    pub seed: Option<u64>,
    pub plant: PlantKind,
    pub monitor: MonitorSpec,
    /// Sweep times (µs), strictly increasing.
    pub times: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: SystemParams::default(),
            nbar0: 2.0,
            shots: 10_000,
            seed: None,
            plant: PlantKind::Phenomenological,
            monitor: MonitorSpec::Optimal,
            times: vec![
                2.0, 5.0, 10.0, 15.0, 25.0, 40.0, 60.0, 80.0, 100.0, 140.0, 190.0, 250.0,
            ],
            output_dir: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num::<f64>(key, s))
        .collect()
}

fn set_system_field(
    params: &mut SystemParams,
    field: &str,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    if field == "parity_fidelity_bands" {
        let bands = parse_list(key, value)?;
        if bands.len() != 3 {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: "expected exactly 3 comma-separated fidelities".into(),
            });
        }
        params.parity_fidelity_bands = [bands[0], bands[1], bands[2]];
        return Ok(());
    }
    let slot: &mut f64 = match field {
        "chi_sa" => &mut params.chi_sa,
        "chi_ra" => &mut params.chi_ra,
        "chi_sr" => &mut params.chi_sr,
        "k_s" => &mut params.k_s,
        "k_r" => &mut params.k_r,
        "k_a" => &mut params.k_a,
        "omega_s" => &mut params.omega_s,
        "omega_a" => &mut params.omega_a,
        "omega_r" => &mut params.omega_r,
        "n_th_s" => &mut params.n_th_s,
        "n_th_a" => &mut params.n_th_a,
        "t1" => &mut params.t1,
        "t2" => &mut params.t2,
        "tau_s" => &mut params.tau_s,
        "t2_s" => &mut params.t2_s,
        "gamma_up" => &mut params.gamma_up,
        "m_gg" => &mut params.m_gg,
        "m_ee" => &mut params.m_ee,
        "tau_meas" => &mut params.tau_meas,
        "t_fb" => &mut params.t_fb,
        "p_d" => &mut params.p_d,
        "n_readout" => &mut params.n_readout,
        "p_pulse" => &mut params.p_pulse,
        _ => {
            return Err(ConfigError::UnknownKey { line: 0, key: key.to_string() });
        }
    };
    *slot = parse_num(key, value)?;
    Ok(())
}

fn parse_plant(key: &str, value: &str) -> Result<PlantKind, ConfigError> {
    if value == "phenomenological" {
        return Ok(PlantKind::Phenomenological);
    }
    if let Some(dim) = value.strip_prefix("full:") {
        return Ok(PlantKind::FullHilbert { dim: parse_num(key, dim)? });
    }
    Err(ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: "expected `phenomenological` or `full:<dim>`".into(),
    })
}

fn parse_monitor(key: &str, value: &str) -> Result<MonitorSpec, ConfigError> {
    if value == "optimal" {
        return Ok(MonitorSpec::Optimal);
    }
    if let Some(s) = value.strip_prefix("steps:") {
        return Ok(MonitorSpec::Steps(parse_num(key, s)?));
    }
    if let Some(list) = value.strip_prefix("schedule:") {
        return Ok(MonitorSpec::Schedule(parse_list(key, list)?));
    }
    Err(ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: "expected `optimal`, `steps:<S>`, or `schedule:<t1,t2,...>`".into(),
    })
}

impl ExperimentConfig {
    /// Parse a flat key-value document on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Malformed { line, text: body.to_string() });
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
            seen.push(key.to_string());
            if let Some(field) = key.strip_prefix("system.") {
                set_system_field(&mut config.params, field, key, value)
                    .map_err(|e| match e {
                        ConfigError::UnknownKey { key, .. } => {
                            ConfigError::UnknownKey { line, key }
                        }
                        other => other,
                    })?;
                continue;
            }
            match key {
                "nbar0" => config.nbar0 = parse_num(key, value)?,
                "shots" => config.shots = parse_num(key, value)?,
                "seed" => config.seed = Some(parse_num(key, value)?),
                "plant" => config.plant = parse_plant(key, value)?,
                "monitor" => config.monitor = parse_monitor(key, value)?,
                "times" => config.times = parse_list(key, value)?,
                "output_dir" => config.output_dir = Some(PathBuf::from(value)),
                _ => {
                    return Err(ConfigError::UnknownKey { line, key: key.to_string() });
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| ConfigError::Invalid { key: key.into(), reason };
        self.params
            .validate()
            .map_err(|e| bad("system", e.to_string()))?;
        if self.shots == 0 {
            return Err(bad("shots", "must be at least 1".into()));
        }
        if !(self.nbar0 > 0.0) {
            return Err(bad("nbar0", format!("must be > 0, got {}", self.nbar0)));
        }
        if self.times.is_empty() {
            return Err(bad("times", "must list at least one sweep time".into()));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(bad(
                    "times",
                    format!("must be strictly increasing, got {} after {}", w[1], w[0]),
                ));
            }
        }
        if !(self.times[0] > 0.0) {
            return Err(bad("times", format!("must be positive, got {}", self.times[0])));
        }
        if let MonitorSpec::Steps(0) = self.monitor {
            return Err(bad("monitor", "steps must be at least 1".into()));
        }
        Ok(())
    }

    /// The seed, or an error in archive mode: reproducibility is opt-out
    /// only by not archiving.
    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| ConfigError::Invalid {
            key: "seed".into(),
            reason: "archived runs need an explicit seed (set `seed = <n>` or pass --seed)"
                .into(),
        })
    }

    /// Where outputs go: explicit config, else the `CATQEC_OUTPUT_DIR`
    /// environment variable, else the working directory.
    pub fn resolve_output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var("CATQEC_OUTPUT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from(".")
    }
}
