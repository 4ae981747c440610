//! `pura` — experiment runner for 2D proactive uplink resource
//! allocation. Sweeps (y, τ₀) over the chosen policies, writes the
//! metrics as CSV (stdout or --out), and prints a per-policy summary to
//! stderr.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pura_cli::{report_summary, run_sweep, write_sweep_csv, CliError, Mode, SweepSpec};
use pura_core::model::SchedulerConfig;
use pura_core::sim::Policy;

#[derive(Parser, Debug)]
#[command(
    name = "pura",
    version,
    about = "Sweep uplink-latency metrics of proactive resource allocation over (y, tau0)"
)]
struct Args {
    /// Config file with key=value lines (sigma, y, beta, delta, tau0, T,
    /// v, lambda, n_max, tau_max); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// SR period in subframes.
    #[arg(long)]
    sigma: Option<u32>,

    /// Threshold values y to sweep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    y: Option<Vec<u32>>,

    /// Ring time-width values tau0 to sweep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    tau0: Option<Vec<f64>>,

    /// Disturbance spread horizon T in subframes.
    #[arg(long = "T")]
    t_spread: Option<f64>,

    /// Disturbance speed in meters per subframe.
    #[arg(long)]
    v: Option<f64>,

    /// Device density in devices per square meter.
    #[arg(long)]
    lambda: Option<f64>,

    /// Monte Carlo episodes per simulated grid point.
    #[arg(long, default_value_t = 200)]
    episodes: u64,

    /// Master random seed for simulated rows.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Policies to sweep, comma-separated: standard, one_d, two_d_pura.
    #[arg(long, value_delimiter = ',', default_value = "two_d_pura")]
    policy: Vec<String>,

    /// Evaluation mode: analytic, simulate, or both.
    #[arg(long, default_value = "analytic")]
    mode: String,

    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Evaluate sweep points one at a time instead of in parallel.
    #[arg(long)]
    serial: bool,
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<(), CliError> {
    let mut config = SchedulerConfig::default();
    if let Some(path) = &args.config {
        config = config.with_config_file(path)?;
    }
    if let Some(sigma) = args.sigma {
        config.sigma = sigma;
    }
    if let Some(t) = args.t_spread {
        config.t_spread = t;
    }
    if let Some(v) = args.v {
        config.v = v;
    }
    if let Some(lambda) = args.lambda {
        config.lambda = lambda;
    }
    // single-value grid defaults come from the config; --y/--tau0 both
    // override it and define the sweep axes
    let y_values = args.y.unwrap_or_else(|| vec![config.y]);
    let tau0_values = args.tau0.unwrap_or_else(|| vec![config.tau0]);
    let policies = args
        .policy
        .iter()
        .map(|s| s.parse::<Policy>())
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SweepSpec {
        y_values,
        tau0_values,
        policies,
        mode: args.mode.parse::<Mode>()?,
        episodes: args.episodes,
        seed: args.seed,
        out: args.out,
    };

    let rows = run_sweep(&spec, &config, !args.serial)?;
    match &spec.out {
        Some(path) => {
            let file = File::create(path)?;
            write_sweep_csv(&rows, file)?;
        }
        None => {
            let stdout = io::stdout();
            write_sweep_csv(&rows, stdout.lock())?;
        }
    }
    let mut stderr = io::stderr().lock();
    write!(stderr, "{}", report_summary(&rows, &config))?;
    Ok(())
}
