//! `bench run`: sweeps submission rate × prescription size over the
//! simulated pipeline and reports mean and p95 acknowledgement latency.

use carelink_core::bench::{check_monotonicity, run_experiment, summarize, Arrivals, ExperimentSpec, Format};
use carelink_core::link::LinkConfig;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bench", version, about = "Latency grid over the simulated clinic-to-pharmacy pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the grid and write one row per (rate, medicines) cell.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Submission rates, prescriptions per second.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    rates: Vec<f64>,
    /// Medicines per prescription.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    medicines: Vec<usize>,
    /// Simulated window per replication, seconds.
    #[arg(long, default_value_t = 30.0)]
    window: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Poisson arrivals instead of fixed intervals.
    #[arg(long)]
    poisson: bool,
    /// TOML file whose [link] section configures the air link.
    #[arg(long, value_name = "CONFIG FILE")]
    link: Option<PathBuf>,
    /// Exit with status 2 if mean latency is not monotone across the grid.
    #[arg(long)]
    check: bool,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Completed submissions required per cell.
    #[arg(long, default_value_t = 200)]
    min_samples: usize,
    #[arg(long, default_value_t = 20.0)]
    base_service_ms: f64,
    #[arg(long, default_value_t = 5.0)]
    per_medicine_ms: f64,
}

fn spec(args: &RunArgs) -> Result<ExperimentSpec, String> {
    let link = match &args.link {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
            LinkConfig::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => LinkConfig::default(),
    };
    Ok(ExperimentSpec {
        rates: args.rates.clone(),
        medicine_counts: args.medicines.clone(),
        window_s: args.window,
        link,
        base_service_ms: args.base_service_ms,
        per_medicine_cost_ms: args.per_medicine_ms,
        seed: args.seed,
        arrivals: if args.poisson { Arrivals::Poisson } else { Arrivals::Fixed },
        min_samples: args.min_samples,
    })
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let spec = spec(&args)?;
    let samples = run_experiment(&spec).map_err(|e| e.to_string())?;
    let report = summarize(&samples, args.format).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => std::fs::write(path, &report).map_err(|e| format!("writing {}: {e}", path.display()))?,
        None => print!("{report}"),
    }
    for s in samples.iter().filter(|s| s.failed + s.in_flight > 0) {
        eprintln!(
            "note: rate {} medicines {}: {} submitted, {} failed, {} still in flight at window end",
            s.rate, s.medicines, s.submitted, s.failed, s.in_flight
        );
    }
    if args.check {
        let m = check_monotonicity(&samples);
        let verdict = if m.passed() { "ok" } else { "FAILED" };
        eprintln!("monotonicity {verdict}: {} of {} adjacent pairs decrease ({} allowed)", m.violations, m.pairs, m.allowed);
        if !m.passed() {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // usage errors exit 1 so that 2 stays reserved for a failed check
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let Command::Run(args) = cli.command;
    match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
