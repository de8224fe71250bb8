use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use sefdi::attack::{self, StateShift};
use sefdi::bad_data::{self, DetectorConfig};
use sefdi::estimator::{self, AcOptions, WeightMatrix};
use sefdi::grid::{self, Case};
use sefdi::harness::{self, MonteCarloAttack, MonteCarloConfig, Report, ReportFormat, Scenario};
use sefdi::measurement::{self, StateVector};
use sefdi::{Error, Result};

#[derive(Parser)]
#[command(name = "sefdi", version, about = "Power system state estimation under false data injection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Dc,
    Ac,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    NormThreshold,
    ChiSquare,
    Lnr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Machine,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    None,
    Stealth,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the state from the readings stored in a case file.
    Estimate {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, value_enum, default_value = "dc")]
        mode: ModeArg,
        /// Gauss-Newton iteration limit (AC only).
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
    },
    /// Build the stealth attack a = Hc and apply it to the case readings.
    Attack {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        shift: Vec<f64>,
    },
    /// Estimate from the given readings and run a bad-data detector.
    Detect {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        z: Vec<f64>,
        #[arg(long, value_enum, default_value = "chi-square")]
        method: Method,
        /// Norm threshold τ, chi-square α or LNR cutoff, depending on the method.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Scenario files.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Monte Carlo detection experiment on the DC model.
    Montecarlo {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_enum, default_value = "none")]
        attack: AttackArg,
        #[arg(long, default_value_t = 0.01)]
        magnitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = bad_data::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Table => ReportFormat::Table,
        Format::Machine => ReportFormat::Machine,
    }
}

fn joined(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{}", harness::sig6(x))).collect::<Vec<_>>().join(" ")
}

fn case_values(case: &Case) -> Result<DVector<f64>> {
    case.values
        .as_ref()
        .map(|v| DVector::from_column_slice(v))
        .ok_or_else(|| Error::InvalidParameter("case file carries no meter values".into()))
}

fn estimate(path: &Path, mode: ModeArg, max_iter: usize) -> Result<()> {
    let case = grid::load_case(path)?;
    let z = case_values(&case)?;
    let w = WeightMatrix::from_config(&case.measurements)?;
    let est = match mode {
        ModeArg::Dc => {
            let h = measurement::dc_jacobian(&case.network, &case.measurements)?;
            estimator::estimate_dc(&h, &z, &w)?
        }
        ModeArg::Ac => {
            let adm = grid::build_admittance(&case.network);
            let options = AcOptions { max_iter, ..AcOptions::default() };
            estimator::estimate_ac(&case.network, &adm, &z, &case.measurements, &options, &w)?
        }
    };
    let state = match mode {
        ModeArg::Dc => StateVector::from_dc_free(&case.network, est.state.as_slice())?,
        ModeArg::Ac => StateVector::from_ac_free(&case.network, est.state.as_slice())?,
    };
    println!("angles: {}", joined(state.angles.iter().copied()));
    if let Some(v) = &state.magnitudes {
        println!("magnitudes: {}", joined(v.iter().copied()));
    }
    println!("squared_error: {}", harness::sig6(est.squared_error_raw));
    println!("objective: {}", harness::sig6(est.objective_weighted));
    if mode == ModeArg::Ac {
        println!("iterations: {}", est.iterations);
    }
    Ok(())
}

fn attack_cmd(path: &Path, shift: Vec<f64>) -> Result<()> {
    let case = grid::load_case(path)?;
    let z = case_values(&case)?;
    let h = measurement::dc_jacobian(&case.network, &case.measurements)?;
    let a = attack::craft_stealth_attack(&h, &StateShift(DVector::from_vec(shift)))?;
    let za = attack::apply_attack(&z, &a)?;
    println!("a: {}", joined(a.0.iter().copied()));
    println!("z_a: {}", joined(za.iter().copied()));
    Ok(())
}

fn detect(path: &Path, z: Vec<f64>, method: Method, threshold: Option<f64>) -> Result<()> {
    let case = grid::load_case(path)?;
    let m = case.measurements.len();
    if z.len() != m {
        return Err(Error::LengthMismatch { expected: m, actual: z.len() });
    }
    let z = DVector::from_vec(z);
    let w = WeightMatrix::from_config(&case.measurements)?;
    let h = measurement::dc_jacobian(&case.network, &case.measurements)?;
    let est = estimator::estimate_dc(&h, &z, &w)?;
    let config = match method {
        Method::NormThreshold => DetectorConfig::NormThreshold {
            tau: threshold.ok_or_else(|| Error::InvalidParameter("norm-threshold needs --threshold".into()))?,
        },
        Method::ChiSquare => DetectorConfig::ChiSquare { alpha: threshold.unwrap_or(bad_data::DEFAULT_ALPHA) },
        Method::Lnr => DetectorConfig::Lnr { lnr_threshold: threshold.unwrap_or(bad_data::DEFAULT_LNR_THRESHOLD) },
    };
    let r = bad_data::run_detector(&config, &h, &z, &w, &est)?;
    println!("state: {}", joined(est.state.iter().copied()));
    println!("method: {}", r.method);
    println!("statistic: {}", harness::sig6(r.statistic));
    println!("threshold: {}", harness::sig6(r.threshold_used));
    println!("verdict: {}", if r.detected { "Detected" } else { "Not Detected" });
    if let Some(i) = r.suspect_meter {
        println!("suspect_meter: {}{}", i + 1, if r.ambiguous { " (tie)" } else { "" });
    }
    if !r.critical_meters.is_empty() {
        let list: Vec<String> = r.critical_meters.iter().map(|i| (i + 1).to_string()).collect();
        println!("critical_meters: {}", list.join(" "));
    }
    Ok(())
}

fn scenarios(files: &[PathBuf], format: Format) -> Result<()> {
    let reports =
        files.iter().map(|f| Scenario::load(f).and_then(|s| harness::run_scenario(&s))).collect::<Result<Vec<_>>>()?;
    print!("{}", harness::emit_report(Report::Scenarios(&reports), report_format(format)));
    Ok(())
}

fn montecarlo(
    path: &Path,
    trials: usize,
    attack: AttackArg,
    magnitude: f64,
    seed: u64,
    alpha: f64,
    format: Format,
) -> Result<()> {
    let case = grid::load_case(path)?;
    let config = MonteCarloConfig {
        trials,
        noise_seed_base: seed,
        attack: match attack {
            AttackArg::None => MonteCarloAttack::None,
            AttackArg::Stealth => MonteCarloAttack::Stealth { magnitude },
        },
        detector: DetectorConfig::ChiSquare { alpha },
        ..MonteCarloConfig::default()
    };
    let stats = harness::run_monte_carlo(&case, &config)?;
    print!("{}", harness::emit_report(Report::MonteCarlo(&stats), report_format(format)));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate { case, mode, max_iter } => estimate(&case, mode, max_iter),
        Command::Attack { case, shift } => attack_cmd(&case, shift),
        Command::Detect { case, z, method, threshold } => detect(&case, z, method, threshold),
        Command::Scenario { action: ScenarioAction::Run { files, format } } => scenarios(&files, format),
        Command::Montecarlo { case, trials, attack, magnitude, seed, alpha, format } => {
            montecarlo(&case, trials, attack, magnitude, seed, alpha, format)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
