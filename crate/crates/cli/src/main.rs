//! Command-line front end: `simulate`, `sweep`, `compare`, `check` and
//! `import`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use brachio_core::config::ScenarioFile;
use brachio_core::trace::{self, ColumnMapping, Trace};
use brachio_core::{check, scenario, Error, Policy, RobotParams, ScenarioConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_SIMULATION: u8 = 2;
const EXIT_TOLERANCE: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "brachio", version, about = "Single-rod brachiation robot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, print its summary and write the trace.
    Simulate(SimulateArgs),
    /// Run a scenario over a parameter grid.
    Sweep(SweepArgs),
    /// Compare two traces channel by channel.
    Compare(CompareArgs),
    /// Run the invariant suites.
    Check(CheckArgs),
    /// Convert a foreign CSV into a trace using a column mapping.
    Import(ImportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file, or the name of a bundled one
    /// (reference-limit-case, reference-continuous).
    #[arg(long)]
    config: String,
    /// Override the policy (limit-case, continuous, open-loop).
    #[arg(long)]
    policy: Option<Policy>,
    /// Trace output path; overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the output sample period (s).
    #[arg(long)]
    sample_period: Option<f64>,
    /// Also write the jump log of a limit-case run.
    #[arg(long)]
    jumps: Option<PathBuf>,
    /// Deterministic run. Simulations never draw random numbers, so this is
    /// always the case; the flag is accepted for scripting.
    #[arg(long)]
    seedless: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    policy: Option<Policy>,
    /// Grid axis as `name=v1,v2,...`; repeat for more axes.
    #[arg(long = "grid", required = true)]
    grid: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two trace files: reference first.
    #[arg(long = "trace", num_args = 1, required = true)]
    traces: Vec<PathBuf>,
    /// Comma-separated channels.
    #[arg(long, value_delimiter = ',', default_value = "theta,gamma,dtheta,dgamma")]
    channels: Vec<String>,
    /// Largest accepted RMSE per channel.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct CheckArgs {
    /// Scenario file, bundled name or bare parameter table whose robot
    /// parameters are checked. Defaults to the nominal robot.
    #[arg(long)]
    params: Option<String>,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter { .. } | Error::Config(_) | Error::NonControllableStart
    )
}

fn load_scenario(config: &str, policy: Option<Policy>) -> Result<(ScenarioConfig, Option<PathBuf>), Error> {
    let mut file = ScenarioFile::load(config)?;
    if let Some(p) = policy {
        file.policy = p;
    }
    file.into_scenario()
}

fn simulate(args: SimulateArgs) -> ExitCode {
    let (mut config, path) = match load_scenario(&args.config, args.policy) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Some(sp) = args.sample_period {
        config.sample_period = sp;
        if let Err(e) = config.validate() {
            return fail(EXIT_CONFIG, e);
        }
    }
    let output = match scenario::run(&config) {
        Ok(o) => o,
        Err(e) if is_config_error(&e) => return fail(EXIT_CONFIG, e),
        Err(e) => return fail(EXIT_SIMULATION, e),
    };
    print!("{}", output.summary.report());
    if let Some(out) = args.out.or(path) {
        if let Err(e) = Trace::from_samples(&output.trajectory).write_file(&out) {
            return fail(EXIT_SIMULATION, e);
        }
        println!("trace          = {}", out.display());
    }
    if let Some(jumps) = args.jumps {
        let written = std::fs::File::create(&jumps)
            .map_err(Error::from)
            .and_then(|f| trace::write_jumps(&output.jumps, std::io::BufWriter::new(f)));
        if let Err(e) = written {
            return fail(EXIT_SIMULATION, e);
        }
    }
    ExitCode::SUCCESS
}

fn parse_axis(spec: &str) -> Result<(String, Vec<f64>), String> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| format!("grid axis `{spec}` must look like name=v1,v2"))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad value `{v}` in axis `{name}`")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(format!("axis `{name}` has no values"));
    }
    Ok((name.trim().to_string(), values))
}

fn sweep(args: SweepArgs) -> ExitCode {
    let (config, _) = match load_scenario(&args.config, args.policy) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let axes = match args.grid.iter().map(|g| parse_axis(g)).collect::<Result<Vec<_>, _>>() {
        Ok(a) => a,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let points = match scenario::sweep(&config, &axes) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let names: Vec<&str> = axes.iter().map(|(n, _)| n.as_str()).collect();
    println!("{},t_pi_cross,swing_periods,t_terminal,delta_e,work,efficiency,status", names.join(","));
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
    for point in points {
        let values: Vec<String> = point.assignments.iter().map(|(_, v)| format!("{v}")).collect();
        match point.result {
            Ok(s) => println!(
                "{},{},{},{},{},{},{},ok",
                values.join(","),
                opt(s.t_pi_cross),
                s.swing_periods,
                opt(s.t_terminal),
                s.delta_e,
                s.work,
                opt(s.efficiency)
            ),
            Err(e) => println!("{},,,,,,,\"{}\"", values.join(","), e.replace('"', "'")),
        }
    }
    ExitCode::SUCCESS
}

fn compare(args: CompareArgs) -> ExitCode {
    if args.traces.len() != 2 {
        return fail(EXIT_CONFIG, "compare needs exactly two --trace arguments");
    }
    let read = |p: &Path| Trace::read_file(p);
    let (a, b) = match (read(&args.traces[0]), read(&args.traces[1])) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail(EXIT_CONFIG, e),
    };
    let channels: Vec<&str> = args.channels.iter().map(String::as_str).collect();
    let cmp = match trace::compare(&a, &b, &channels) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    print!("{}", cmp.report());
    if cmp.within(args.tol) {
        println!("result         = within tolerance {:e}", args.tol);
        ExitCode::SUCCESS
    } else {
        println!("result         = tolerance {:e} exceeded", args.tol);
        ExitCode::from(EXIT_TOLERANCE)
    }
}

/// Robot parameters for `check`, taken without validation so that
/// deliberately broken values reach the suites.
fn check_params(source: &str) -> Result<RobotParams, Error> {
    if let Ok(file) = ScenarioFile::load(source) {
        return Ok(file.params);
    }
    let text = std::fs::read_to_string(source).map_err(|e| Error::Config(format!("cannot read `{source}`: {e}")))?;
    match toml::from_str::<RobotParams>(&text) {
        Ok(p) => Ok(p),
        Err(_) => ScenarioFile::parse(&text).map(|f| f.params),
    }
}

fn run_check(args: CheckArgs) -> ExitCode {
    let params = match args.params.as_deref().map(check_params) {
        None => RobotParams::nominal(),
        Some(Ok(p)) => p,
        Some(Err(e)) => return fail(EXIT_CONFIG, e),
    };
    let results = check::run_all(&params);
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        fail(EXIT_CHECK, format!("failed suites: {}", failed.join(", ")))
    }
}

fn import(args: ImportArgs) -> ExitCode {
    let mapping = match std::fs::read_to_string(&args.mapping)
        .map_err(Error::from)
        .and_then(|t| ColumnMapping::parse(&t))
    {
        Ok(m) => m,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let trace = match std::fs::File::open(&args.input)
        .map_err(Error::from)
        .and_then(|f| trace::import(std::io::BufReader::new(f), &mapping))
    {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    match trace.write_file(&args.out) {
        Ok(()) => {
            println!("imported {} rows into {}", trace.rows.len(), args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_SIMULATION, e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
        Command::Check(a) => run_check(a),
        Command::Import(a) => import(a),
    }
}
