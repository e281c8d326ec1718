//! Batch command-line front end: run one mode or a paired three-mode
//! comparison over a seed range, then emit `samples.csv` and `summary.csv`.

use crate::config::{parse_config_file, validate, ConfigError, RunConfig};
use crate::metrics::{aggregate, emit_samples_csv, emit_summary_csv, Aggregate};
use crate::sim::{run, Mode, RunResult, SimError};
use clap::Parser;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "obss-sim",
    about = "Uplink Wi-Fi simulator for overlapping BSSs: no spatial reuse, PSR, and coordinated beamforming",
    version
)]
struct Args {
    /// Channel-access regime: no-sr, psr, or cbf.
    #[arg(long, conflicts_with = "compare")]
    mode: Option<String>,

    /// Config file (key = value); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// First master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: u64,

    /// Override run.duration_s from the config.
    #[arg(long = "duration-s")]
    duration_s: Option<f64>,

    /// Output directory for samples.csv and summary.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Run all three modes with paired seeds and emit a joint summary.
    #[arg(long, default_value_t = false)]
    compare: bool,
}

pub fn main() -> i32 {
    let args = Args::parse();
    match execute(args) {
        Ok(()) => EXIT_OK,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(CliError::Invariant(msg)) => {
            eprintln!("internal error: {msg}");
            EXIT_INVARIANT
        }
        Err(CliError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            1
        }
    }
}

enum CliError {
    Config(ConfigError),
    Usage(String),
    Invariant(String),
    Io(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Config(c),
            SimError::Invariant(msg) => CliError::Invariant(msg),
        }
    }
}

fn execute(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = args.duration_s {
        cfg.duration_s = d;
        validate(&cfg)?;
    }
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let modes: Vec<Mode> = if args.compare {
        Mode::ALL.to_vec()
    } else {
        let mode = args
            .mode
            .as_deref()
            .ok_or_else(|| CliError::Usage("pass --mode or --compare".into()))?;
        vec![mode.parse().map_err(CliError::Usage)?]
    };

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Io(e.to_string()))?;

    let mut all_results: Vec<RunResult> = Vec::new();
    let mut aggregates: Vec<Aggregate> = Vec::new();
    for &mode in &modes {
        let mut results = Vec::new();
        for seed in args.seed..args.seed + args.seeds {
            results.push(run(&cfg, mode, seed)?);
        }
        let agg = aggregate(&results).map_err(|e| CliError::Invariant(e.to_string()))?;
        print_aggregate(&agg);
        aggregates.push(agg);
        all_results.extend(results);
    }

    let samples_path = args.out.join("samples.csv");
    std::fs::write(&samples_path, emit_samples_csv(&all_results))
        .map_err(|e| CliError::Io(e.to_string()))?;
    let summary_path = args.out.join("summary.csv");
    std::fs::write(&summary_path, emit_summary_csv(&aggregates))
        .map_err(|e| CliError::Io(e.to_string()))?;
    println!("wrote {} and {}", samples_path.display(), summary_path.display());
    Ok(())
}

fn print_aggregate(agg: &Aggregate) {
    for stat in &agg.stats {
        let throughput = agg
            .mean_throughput_mbps
            .get(&stat.class)
            .copied()
            .unwrap_or(0.0);
        println!(
            "{:5} {:9}  n={:<8} median={:.3} ms  p95={:.3} ms  p99={:.3} ms  p99.99={:.3} ms  drop={:.5}  thpt={:.3} Mb/s",
            agg.mode.to_string(),
            stat.class.to_string(),
            stat.n_samples,
            stat.median_s * 1e3,
            stat.p95_s * 1e3,
            stat.p99_s * 1e3,
            stat.p9999_s * 1e3,
            stat.drop_rate,
            throughput
        );
    }
}
