use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clmm_backtest::calibration::{
    calibrate_mu_variance, calibrate_on_curve, fee_curve, linear_grid,
};
use clmm_backtest::io::report::{
    read_report, summary_table, write_backtest_outputs, write_calibration_outputs,
};
use clmm_backtest::io::{load_prices, PriceSeries};
use clmm_backtest::{
    run_backtest, ConfigError, DataError, Error, PriceMode, ProfileParams, Result, RunConfig,
    Strategy,
};

#[derive(Parser)]
#[command(author, version, about = "Concentrated-liquidity pool backtester")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a price series against a liquidity configuration
    Backtest(BacktestArgs),
    /// Fit the normal profile variance to an observed fee total
    Calibrate(CalibrateArgs),
    /// Print a summary table for a saved report.json
    Report(ReportArgs),
}

#[derive(Args)]
struct Inputs {
    /// Run configuration (flat key = value file)
    #[arg(long)]
    config: PathBuf,
    /// Price CSV: `price` or `timestamp,price` rows
    #[arg(long)]
    prices: PathBuf,
    /// Directory for output files
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Reject prices outside the partition
    #[arg(long, conflicts_with = "clamp_prices")]
    strict_prices: bool,
    /// Assign prices outside the partition to the end buckets
    #[arg(long)]
    clamp_prices: bool,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Seed for the random strategy (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Observed fee total in token B
    #[arg(long)]
    target_fee: f64,
    /// Profile mean on the standardized axis
    #[arg(long, allow_hyphen_values = true, required_unless_present = "mu_grid")]
    mu: Option<f64>,
    /// Coarse search over mu instead of a fixed value, as lo:hi:steps
    #[arg(long, allow_hyphen_values = true, conflicts_with = "mu")]
    mu_grid: Option<String>,
    /// Variance grid as lo:hi:steps
    #[arg(long, default_value = "0.01:3:300")]
    grid: String,
    /// Half-width of the standardized axis (defaults to the config's, else 3)
    #[arg(long)]
    bound: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to report.json
    report: PathBuf,
    /// Observed fee total, adds fact and error rows
    #[arg(long)]
    fact_fee: Option<f64>,
    /// Observed volume, adds fact and error rows
    #[arg(long)]
    fact_volume: Option<f64>,
}

fn parse_grid(key: &str, text: &str) -> Result<Vec<f64>> {
    let invalid = || {
        Error::from(ConfigError::InvalidValue {
            key: key.into(),
            value: text.into(),
        })
    };
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        return Err(invalid());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| invalid())?;
    let hi: f64 = hi.trim().parse().map_err(|_| invalid())?;
    let steps: usize = steps.trim().parse().map_err(|_| invalid())?;
    if steps == 0 || !(lo.is_finite() && hi.is_finite()) || (steps > 1 && hi <= lo) {
        return Err(invalid());
    }
    Ok(linear_grid(lo, hi, steps))
}

fn load_inputs(inputs: &Inputs) -> Result<(RunConfig, PriceSeries)> {
    let text = std::fs::read_to_string(&inputs.config).map_err(|e| DataError::Io {
        path: inputs.config.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut config = RunConfig::parse(&text)?;
    if inputs.strict_prices {
        config.price_mode = PriceMode::Strict;
    }
    if inputs.clamp_prices {
        config.price_mode = PriceMode::Clamp;
    }
    let series = load_prices(&inputs.prices)?;
    Ok((config, series))
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn backtest(args: &BacktestArgs) -> Result<()> {
    let (mut config, series) = load_inputs(&args.inputs)?;
    if let (Some(seed), Strategy::Random { seed: s }) = (args.seed, &mut config.strategy) {
        *s = seed;
    }
    let report = run_backtest(&config, &series)?;
    let written = write_backtest_outputs(&report, &args.inputs.out_dir)?;
    print!("{}", summary_table(&report, None, None));
    print_written(&written);
    Ok(())
}

fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let (config, series) = load_inputs(&args.inputs)?;
    let grid = parse_grid("grid", &args.grid)?;
    let bound = args.bound.unwrap_or(match &config.strategy {
        Strategy::Normal(p) => p.bound,
        _ => ProfileParams::DEFAULT_BOUND,
    });
    let out_dir: &Path = &args.inputs.out_dir;

    let outcome = match (&args.mu_grid, args.mu) {
        (Some(mu_grid), _) => {
            let mus = parse_grid("mu_grid", mu_grid)?;
            let fit = calibrate_mu_variance(&config, &series, &mus, bound, args.target_fee, &grid);
            // the written curve belongs to the selected mu, or the first candidate
            let mu = fit.as_ref().map(|r| r.mu).unwrap_or(mus[0]);
            let curve = fee_curve(&config, &series, mu, bound, &grid)?;
            (curve, fit)
        }
        (None, Some(mu)) => {
            let curve = fee_curve(&config, &series, mu, bound, &grid)?;
            let fit = calibrate_on_curve(&config, &series, &curve, args.target_fee);
            (curve, fit)
        }
        (None, None) => unreachable!("clap requires --mu or --mu-grid"),
    };
    let (curve, fit) = outcome;
    let written = write_calibration_outputs(&curve, fit.as_ref().ok(), out_dir)?;
    print_written(&written);
    let fit = fit?;
    println!(
        "mu={} variance={} model_fee={} target_fee={} relative_error={:.3e}",
        fit.mu, fit.variance, fit.model_fee, fit.target_fee, fit.relative_error
    );
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let report = read_report(&args.report)?;
    print!("{}", summary_table(&report, args.fact_fee, args.fact_volume));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Backtest(a) => backtest(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ").replace('"', "'");
            eprintln!("error code={} message=\"{}\"", e.code(), message);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
