use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ampcc::asc::AscConfig;
use ampcc::bench::{run_experiment, Experiment, ExperimentConfig, Kind};
use ampcc::model::SystemConfig;

#[derive(Parser)]
#[command(name = "ampcc", version, about = "Compressed coding workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scalar state evolution: fixed points, transfer curves, thresholds.
    Se(Common),
    /// Coupled state evolution over a chain of sections.
    CoupleSe(Common),
    /// Area-theorem rates.
    Rate(Common),
    /// Channel mutual information and the derivative identity check.
    Mi(Common),
    /// Monte Carlo BER of the uncoupled link.
    Ber(Common),
    /// Monte Carlo BER of the coupled system.
    Asc(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); a manifest from an earlier run also works.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; falls back to AMPCC_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated SNR points in dB.
    #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
}

fn defaults(kind: Kind) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    match kind {
        Kind::CoupleSe | Kind::Asc => c.asc = Some(AscConfig::new(10, 3, 4096, 2048, 16.0)),
        _ => c.system = Some(SystemConfig::new(8192, 4096, 6.0)),
    }
    c
}

fn run(kind: Kind, a: Common) -> ampcc::Result<()> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => defaults(kind),
    };
    if let Some(s) = a.seed {
        config.set_seed(s);
    }
    if let Some(list) = a.snr_db {
        config.sweep = list;
    }
    let threads = match a.threads {
        Some(t) => Some(t),
        None => match std::env::var("AMPCC_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| ampcc::Error::Config(format!("AMPCC_THREADS={v} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| ampcc::Error::Config(format!("thread pool: {e}")))?;
    let exp = Experiment {
        kind,
        config,
        out: a.out,
    };
    let files = pool.install(|| run_experiment(&exp))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.cmd {
        Cmd::Se(a) => (Kind::Se, a),
        Cmd::CoupleSe(a) => (Kind::CoupleSe, a),
        Cmd::Rate(a) => (Kind::Rate, a),
        Cmd::Mi(a) => (Kind::Mi, a),
        Cmd::Ber(a) => (Kind::Ber, a),
        Cmd::Asc(a) => (Kind::Asc, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ampcc {}: {e}", kind.name());
            ExitCode::FAILURE
        }
    }
}
