//! Command-line front end: lifetime sweeps, cadence optimisation, record
//! confidence tables, loss budgets, Wigner grids, and decay fits.
//!
//! Every command exits 0 on success; on failure it prints a one-line JSON
//! object `{"error": ...}` to stderr and exits nonzero.

use std::io::Read;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use catqec::harness::{
    budget_csv, cadence_csv, cmd_budget, cmd_bayes, cmd_fit_decay, cmd_optimize, cmd_run_qec,
    cmd_wigner, ExperimentConfig, HarnessError,
};
use catqec::tomo::DecayModel;

#[derive(Parser)]
#[command(
    name = "catqec",
    version = catqec::VERSION,
    about = "Cat-code quantum error correction: simulation and analysis"
)]
struct Cli {
    /// Worker threads for shot-level parallelism (default: all cores).
    /// Results are independent of this setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the five-scheme lifetime sweep and archive curves, fits, and
    /// Bloch data.
    RunQec {
        #[command(flatten)]
        config: ConfigArgs,

        /// Shots per (time point, cardinal), overriding the config.
        #[arg(long)]
        shots: Option<usize>,

        /// Output directory (default: config, then $CATQEC_OUTPUT_DIR,
        /// then the working directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Optimise the monitoring cadence over a grid of total times.
    Optimize {
        #[command(flatten)]
        config: ConfigArgs,

        /// Comma-separated total monitoring times (µs).
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,

        /// Initial mean photon number (default: from config).
        #[arg(long)]
        nbar0: Option<f64>,
    },

    /// Tabulate record probabilities and conditional confidence.
    Bayes {
        #[command(flatten)]
        config: ConfigArgs,

        /// Number of monitoring steps.
        #[arg(long)]
        steps: usize,

        /// Wait time between measurements (µs).
        #[arg(long)]
        t_w: f64,

        /// Mapping fidelity for an expected no-error step.
        #[arg(long, default_value_t = 0.983)]
        f_g: f64,

        /// Mapping fidelity for an expected error step.
        #[arg(long, default_value_t = 0.971)]
        f_e: f64,

        /// Initial mean photon number (default: from config).
        #[arg(long)]
        nbar0: Option<f64>,
    },

    /// Per-channel lifetime-gain budget at each measurement interval.
    Budget {
        #[command(flatten)]
        config: ConfigArgs,

        /// Comma-separated measurement intervals t_M (µs).
        #[arg(long, value_delimiter = ',', required = true)]
        t_m: Vec<f64>,

        /// Mean photon number (default: from config).
        #[arg(long)]
        nbar: Option<f64>,
    },

    /// Evaluate a Wigner function on a square grid.
    Wigner {
        /// State: vacuum, fock:<n>, coherent:<re>[,<im>], even-cat:<nbar>,
        /// or odd-cat:<nbar>.
        #[arg(long)]
        state: String,

        /// Grid half-width in phase space.
        #[arg(long, default_value_t = 2.0)]
        half_width: f64,

        /// Grid points per axis.
        #[arg(long, default_value_t = 41)]
        points: usize,

        /// Fock-space truncation.
        #[arg(long, default_value_t = 40)]
        dim: usize,
    },

    /// Fit a decay model to a t,fidelity CSV curve.
    Tomo {
        /// Input CSV path, or `-` for stdin.
        #[arg(long)]
        input: PathBuf,

        /// Decay model: `single` or `cat`.
        #[arg(long, default_value = "single")]
        model: String,

        /// Initial mean photon number (required by the cat model).
        #[arg(long)]
        nbar0: Option<f64>,
    },
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::RunQec { config, shots, out } => {
            let mut config_resolved = config.load()?;
            if let Some(shots) = shots {
                config_resolved.shots = shots;
            }
            if let Some(out) = out {
                config_resolved.output_dir = Some(out);
            }
            let archive = cmd_run_qec(&config_resolved)?;
            let dir = config_resolved.resolve_output_dir();
            let written = archive.write_files(&dir)?;
            for curve in &archive.schemes {
                let tau = curve
                    .fit_single
                    .as_ref()
                    .map(|f| format!("{:.1}", f.tau))
                    .unwrap_or_else(|| "-".into());
                println!("{:<18} tau = {:>8} us", curve.scheme, tau);
            }
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Optimize { config, times, nbar0 } => {
            let config = config.load()?;
            let nbar0 = nbar0.unwrap_or(config.nbar0);
            let solutions = cmd_optimize(&times, nbar0, &config.params)?;
            print!("{}", cadence_csv(&solutions));
        }
        Command::Bayes { config, steps, t_w, f_g, f_e, nbar0 } => {
            let config = config.load()?;
            let nbar0 = nbar0.unwrap_or(config.nbar0);
            let table = cmd_bayes(steps, t_w, f_g, f_e, nbar0, &config.params)?;
            print!("{}", table.to_csv());
        }
        Command::Budget { config, t_m, nbar } => {
            let config = config.load()?;
            let nbar = nbar.unwrap_or(config.nbar0);
            let rows = cmd_budget(&t_m, nbar, &config.params)?;
            print!("{}", budget_csv(&rows));
            for row in &rows {
                if row.g_fp <= 1.0 {
                    eprintln!(
                        "warning: forward propagation is below break-even at t_M = {} us \
                         (G_fp = {:.3})",
                        row.t_m, row.g_fp
                    );
                }
            }
        }
        Command::Wigner { state, half_width, points, dim } => {
            print!("{}", cmd_wigner(&state, half_width, points, dim)?);
        }
        Command::Tomo { input, model, nbar0 } => {
            let text = if input.as_os_str() == "-" {
                let mut buf = String::new();
                std::io::stdin().read_to_string(&mut buf)?;
                buf
            } else {
                std::fs::read_to_string(&input)?
            };
            let model = match model.as_str() {
                "single" => DecayModel::SingleExponential,
                "cat" => {
                    let nbar0 = nbar0.ok_or_else(|| {
                        HarnessError::InvalidArg("the cat model needs --nbar0".into())
                    })?;
                    DecayModel::UncorrectedCat { nbar0 }
                }
                other => {
                    return Err(HarnessError::InvalidArg(format!(
                        "unknown model `{other}` (expected `single` or `cat`)"
                    )));
                }
            };
            let fit = cmd_fit_decay(&text, model)?;
            println!("{}", serde_json::to_string_pretty(&fit).map_err(HarnessError::from)?);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure: the global pool can only be set once, which is
        // fine for a short-lived CLI process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if let Err(e) = run(cli.command) {
        eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
        std::process::exit(1);
    }
}
