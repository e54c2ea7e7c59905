use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use twophase::RBinning;

mod commands;
mod output;
mod params;

/// Conditional return distributions, tail fits and surrogate experiments for
/// minute-level index data.
#[derive(Parser)]
#[command(name = "twophase", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a series against its calendar and write it back normalized,
    /// with a segment index.
    Ingest {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Fit the power-law tail of absolute one-step increments.
    FitTail {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        series: SeriesArgs,
        #[command(flatten)]
        surrogate: SurrogateArgs,
        #[command(flatten)]
        tail: TailArgs,
    },
    /// Classify p(Z|r) at each scale and report the bifurcation range.
    Scan {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        series: SeriesArgs,
        #[command(flatten)]
        surrogate: SurrogateArgs,
        #[command(flatten)]
        detect: DetectArgs,
    },
    /// Generate one surrogate series and scan it.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        surrogate: SurrogateArgs,
        #[command(flatten)]
        detect: DetectArgs,
    },
    /// Scan surrogates over a grid of exponents and seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        detect: DetectArgs,
    },
    /// Rescale return distributions at several scales and measure how well
    /// they superpose.
    Collapse {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        series: SeriesArgs,
        #[command(flatten)]
        surrogate: SurrogateArgs,
        /// Scales as MIN:MAX:COUNT or a comma list [default: 5,10,20,50]
        #[arg(long)]
        scales: Option<String>,
    },
}

#[derive(Args, Clone)]
pub struct RunArgs {
    /// Output directory; replaced as a whole if it holds an earlier run.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file of parameters (or a manifest from an earlier run); flags
    /// take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Clone)]
pub struct SeriesArgs {
    /// CSV file with header `timestamp,value`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `hk-1994-1997`, `continuous`, or a .json/.csv session table
    /// [default: continuous].
    #[arg(long)]
    pub calendar: Option<String>,
    /// Segment start dates, comma separated (YYYY-MM-DD).
    #[arg(long, value_delimiter = ',')]
    pub boundaries: Option<Vec<NaiveDate>>,
    /// Label of the segment to analyse ("1", "2", ...).
    #[arg(long)]
    pub segment: Option<String>,
    /// Keep increments that span a session gap or a missing minute.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub cross_sessions: Option<bool>,
}

#[derive(Args, Clone)]
pub struct SurrogateArgs {
    /// CCDF exponent of surrogate magnitudes (used when no --input is given).
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub imin: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Clone)]
pub struct SweepArgs {
    /// Exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub zeta: Option<Vec<f64>>,
    #[arg(long)]
    pub imin: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Args, Clone)]
pub struct DetectArgs {
    /// Scales as MIN:MAX:COUNT or a comma list [default: 2:30:29].
    #[arg(long)]
    pub scales: Option<String>,
    /// Window stride [default: the scale, i.e. disjoint windows].
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub r_bins: Option<usize>,
    #[arg(long)]
    pub r_binning: Option<RBinning>,
    #[arg(long)]
    pub min_samples: Option<usize>,
    #[arg(long)]
    pub max_z_bins: Option<usize>,
    /// Taps of the binomial smoothing kernel (1 = none).
    #[arg(long)]
    pub smoothing: Option<usize>,
    /// Minimum peak prominence as a fraction of the histogram maximum.
    #[arg(long)]
    pub prominence: Option<f64>,
    /// Consecutive bimodal r-bins required.
    #[arg(long)]
    pub persist: Option<usize>,
}

#[derive(Args, Clone)]
pub struct TailArgs {
    #[arg(long)]
    pub min_tail: Option<usize>,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    #[arg(long)]
    pub log_bin_ratio: Option<f64>,
    #[arg(long)]
    pub min_ls_bins: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<twophase::Error>()) {
        Some(e) if e.is_statistical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = match &cli.command {
        Command::Ingest { run, .. }
        | Command::FitTail { run, .. }
        | Command::Scan { run, .. }
        | Command::Simulate { run, .. }
        | Command::Sweep { run, .. }
        | Command::Collapse { run, .. } => run.jobs,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n.max(1));
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| commands::run(cli.command)),
        Err(e) => Err(e.into()),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
