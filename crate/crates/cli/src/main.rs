use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyperwalk::experiment::{error_json, exit_code_for, run, Command, ExperimentConfig, ExperimentReport, Status};
use hyperwalk::Error;
use serde_json::{Map, Value};

#[derive(Parser, Debug)]
#[command(name = "hyperwalk", version, about = "Random walks on hyperbolic groups: Green metric, boundary dynamics and limit theorems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Truncated Green kernel table and quasi-isometry fit.
    Green(Flags),
    /// Hilbert metric on Martin kernels against the Green metric.
    Hilbert(Flags),
    /// Stationary measure, spectral decay, Poisson equation, variance, martingale checks.
    Boundary(Flags),
    /// Monte Carlo drift with confidence interval and positivity check.
    Drift(Flags),
    /// Normalized displacement samples and a KS normality test.
    Clt(Flags),
    /// Law of the iterated logarithm envelope over several seeds.
    Lil(Flags),
    /// Growth exponent of E d(Z_n, e) on the lamplighter group.
    Lamplighter(Flags),
    /// Four-point hyperbolicity constant of a ball.
    Delta(Flags),
    /// Golden-value checks of every module.
    Selftest(Flags),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Flags {
    /// Group: free:k, freeprod:n1,n2,... or zwrz.
    #[arg(long)]
    group: Option<String>,
    /// Step distribution: uniform-generators or word:weight,...
    #[arg(long)]
    measure: Option<String>,
    /// word or green.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Cylinder depth m.
    #[arg(long)]
    depth: Option<usize>,
    /// Green series truncation N.
    #[arg(long)]
    truncation: Option<usize>,
    /// Ball radius R.
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of LIL seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Steps per martingale trajectory.
    #[arg(long)]
    steps: Option<usize>,
    /// Sample paths for the empirical stationary measure.
    #[arg(long)]
    rays: Option<usize>,
    /// Poisson residual target.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    support_cap: Option<usize>,
    /// Comma-separated n values for the growth exponent.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for report.json and CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Cmd {
    fn split(&self) -> (Command, &Flags) {
        match self {
            Cmd::Green(f) => (Command::Green, f),
            Cmd::Hilbert(f) => (Command::Hilbert, f),
            Cmd::Boundary(f) => (Command::Boundary, f),
            Cmd::Drift(f) => (Command::Drift, f),
            Cmd::Clt(f) => (Command::Clt, f),
            Cmd::Lil(f) => (Command::Lil, f),
            Cmd::Lamplighter(f) => (Command::Lamplighter, f),
            Cmd::Delta(f) => (Command::Delta, f),
            Cmd::Selftest(f) => (Command::Selftest, f),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Domain(format!("{}: {e}", path.display()))
}

fn build_config(command: Command, flags: &Flags) -> Result<ExperimentConfig, Error> {
    let mut overlay = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Error::Parse { position: 0, message: "config must be a JSON object".into() }),
                Err(e) => {
                    return Err(Error::Parse {
                        position: e.column(),
                        message: format!("config: {e}"),
                    })
                }
            }
        }
        None => Map::new(),
    };
    let mut set = |k: &str, v: Value| {
        overlay.insert(k.to_string(), v);
    };
    if let Some(v) = &flags.group {
        set("group", v.clone().into());
    }
    if let Some(v) = &flags.measure {
        set("measure", v.clone().into());
    }
    if let Some(v) = &flags.metric {
        set("metric", v.clone().into());
    }
    if let Some(v) = flags.n {
        set("n", v.into());
    }
    if let Some(v) = flags.trajectories {
        set("trajectories", v.into());
    }
    if let Some(v) = flags.depth {
        set("depth", v.into());
    }
    if let Some(v) = flags.truncation {
        set("truncation", v.into());
    }
    if let Some(v) = flags.radius {
        set("radius", v.into());
    }
    if let Some(v) = flags.seed {
        set("seed", v.into());
    }
    if let Some(v) = flags.seeds {
        set("seeds", v.into());
    }
    if let Some(v) = flags.steps {
        set("steps", v.into());
    }
    if let Some(v) = flags.rays {
        set("rays", v.into());
    }
    if let Some(v) = flags.tolerance {
        set("tolerance", v.into());
    }
    if let Some(v) = flags.support_cap {
        set("support_cap", v.into());
    }
    if let Some(v) = &flags.grid {
        set("grid", v.clone().into());
    }
    if let Some(m) = overlay.get("metric").and_then(Value::as_str) {
        hyperwalk::lab::MetricKind::parse(m)?;
    }
    let config = ExperimentConfig::from_json_overlay(command, &Value::Object(overlay).to_string())?;
    // Fail early, with positions, on malformed group and measure strings.
    config.step_distribution()?;
    Ok(config)
}

fn emit(report: &ExperimentReport, flags: &Flags) -> Result<(), Error> {
    let json = report.to_json();
    match &flags.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            let path = dir.join("report.json");
            std::fs::write(&path, &json).map_err(|e| io_error(&path, e))?;
            if flags.format == Format::Csv {
                for t in &report.tables {
                    let path = dir.join(&t.name);
                    std::fs::write(&path, &t.csv).map_err(|e| io_error(&path, e))?;
                }
            }
        }
        None => match flags.format {
            Format::Json => print!("{json}"),
            Format::Csv => {
                for t in &report.tables {
                    println!("# {}", t.name);
                    print!("{}", t.csv);
                }
            }
        },
    }
    for f in &report.findings {
        let tag = match f.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        eprintln!("{tag} {}: {}", f.check, f.value);
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", error_json(e));
    ExitCode::from(exit_code_for(e) as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = Error::Parse {
                position: 0,
                message: e.to_string().lines().next().unwrap_or("invalid arguments").to_string(),
            };
            return fail(&err);
        }
    };
    let (command, flags) = cli.command.split();
    if let Some(t) = flags.threads {
        if t == 0 {
            return fail(&Error::Domain("--threads must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(&Error::Domain(format!("thread pool: {e}")));
        }
    }
    let config = match build_config(command, flags) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let report = match run(command, &config) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Err(e) = emit(&report, flags) {
        return fail(&e);
    }
    ExitCode::from(report.exit_code() as u8)
}
