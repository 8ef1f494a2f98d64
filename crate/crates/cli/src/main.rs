use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use qcs_core::channel::ArrayGeometry;
use qcs_core::harness::{
    complex_noise, draw_channel, emit_csv, run_experiment, stream_rng, summarize, write_csv, write_summary_csv,
    Algorithm, ExperimentConfig,
};
use qcs_core::operator::MeasurementOperator;
use qcs_core::quantizer::{quantize, stepsize_table, PowerEstimate, Resolution};
use qcs_core::training::{build_training, TrainingKind};
use qcs_core::{Complex64, Result};

#[derive(Parser)]
#[command(name = "qcs", version, about = "Few-bit broadband mmWave MIMO channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo channel-estimation experiment and write per-trial CSV rows.
    Estimate(EstimateArgs),
    /// Time the FFT operator against an explicit matrix-vector product.
    BenchOperator(BenchArgs),
    /// Monte-Carlo quantizer NMSE for 1..8 bits against the stepsize table.
    Table1(Table1Args),
    /// Write one channel realization (H and X taps) as CSV.
    DumpChannel(DumpArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// TOML experiment file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Bit depths, e.g. `1,2,4,inf`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    bits: Option<Vec<Resolution>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    np: Option<Vec<usize>>,
    /// zc, golay, qpsk or gauss.
    #[arg(long)]
    train: Option<TrainingKind>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    algo: Option<Vec<Algorithm>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-coordinate means here.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Compute mutual-information and achievable-rate bounds.
    #[arg(long)]
    rate: bool,
    /// Leave the wall-time column empty (byte-reproducible output).
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Transmit UPA as `ELEVxAZIM`.
    #[arg(long, default_value = "4x4")]
    tx: String,
    #[arg(long, default_value = "4x4")]
    rx: String,
    #[arg(long, default_value_t = 2)]
    taps: usize,
    #[arg(long, default_value_t = 512)]
    np: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Skip the dense product (for sizes where A does not fit in memory).
    #[arg(long)]
    fast_only: bool,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long, default_value_t = 10_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_upa(s: &str) -> Result<ArrayGeometry> {
    let bad = || qcs_core::Error::Config(format!("expected ELEVxAZIM, got {s:?}"));
    let (e, a) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    ArrayGeometry::new(e.trim().parse().map_err(|_| bad())?, a.trim().parse().map_err(|_| bad())?)
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_ref())?;
    if let Some(v) = args.snr_db {
        cfg.sweep.snr_db = v;
    }
    if let Some(v) = args.bits {
        cfg.sweep.bits = v;
    }
    if let Some(v) = args.np {
        cfg.training.np = v;
    }
    if let Some(v) = args.train {
        cfg.training.kind = v;
    }
    if let Some(v) = args.algo {
        cfg.algorithms.list = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.out {
        cfg.output.path = Some(v);
    }
    if args.rate {
        cfg.rate.enabled = true;
    }
    if args.no_timing {
        cfg.output.timing = false;
    }
    let start = Instant::now();
    let rows = run_experiment(&cfg)?;
    log::info!("{} rows in {:.1} s", rows.len(), start.elapsed().as_secs_f64());
    match &cfg.output.path {
        Some(p) => emit_csv(&rows, p)?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    if let Some(p) = args.summary {
        let file = std::fs::File::create(p)?;
        write_summary_csv(&summarize(&rows), std::io::BufWriter::new(file))?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let tx = parse_upa(&args.tx)?;
    let rx = parse_upa(&args.rx)?;
    let mut rng = stream_rng(0, &[]);
    let t = build_training(TrainingKind::ShiftedZc, args.np, tx.len(), args.taps, 1.0, &mut rng)?;
    let op = MeasurementOperator::new(t, tx, rx)?;
    let x = complex_noise(&mut rng, op.n_x(), 1.0);
    let reps = args.reps.max(1);

    let start = Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        sink += op.apply(&x)?[0].re;
    }
    let fast = start.elapsed().as_secs_f64() / reps as f64;
    println!("N_x={} N_y={} fast apply: {:.3} ms", op.n_x(), op.n_y(), fast * 1e3);
    if !args.fast_only {
        let build = Instant::now();
        let a = op.materialize()?;
        let xv = nalgebra::DVector::from_column_slice(&x);
        println!("materialize A: {:.1} ms", build.elapsed().as_secs_f64() * 1e3);
        let start = Instant::now();
        for _ in 0..reps {
            sink += (&a * &xv)[0].re;
        }
        let dense = start.elapsed().as_secs_f64() / reps as f64;
        println!("dense apply: {:.3} ms (fast/dense = {:.4})", dense * 1e3, fast / dense);
    }
    log::trace!("{sink}");
    Ok(())
}

fn table1(args: Table1Args) -> Result<()> {
    let mut rng = stream_rng(args.seed, &[]);
    let x: Vec<Complex64> = complex_noise(&mut rng, args.samples, 1.0);
    let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    println!("bits,stepsize,nmse_table,nmse_measured,sqnr_db");
    for b in 1..=8 {
        let spec = stepsize_table(Resolution::Bits(b))?;
        let y = quantize(&x, &spec, &PowerEstimate::circular(1.0))?;
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).norm_sqr()).sum();
        println!("{b},{},{},{:.6},{}", spec.stepsize.unwrap(), spec.nmse, err / energy, spec.sqnr_db);
    }
    Ok(())
}

fn dump(args: DumpArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_ref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let chan = draw_channel(&cfg, args.trial)?;
    match args.out {
        Some(p) => chan.write_csv(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => {
            let mut out = std::io::stdout().lock();
            chan.write_csv(&mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QCS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::BenchOperator(a) => bench(a),
        Command::Table1(a) => table1(a),
        Command::DumpChannel(a) => dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
