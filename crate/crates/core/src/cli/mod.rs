//! The `nrules` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 a batch saw at
//! least one paradox violation.

mod emit;
mod scenario_file;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use emit::{
    canonical_number, emit_events, emit_histogram_csv, emit_summary_csv, emit_summary_json,
    event_json, summary_json, Format,
};
pub use scenario_file::{
    parse_scenario_file, parse_scenario_str, render_scenario, validate_scenario_str, ParseError,
};

use crate::montecarlo::{run_batch_with, run_trial_with, TrialOptions};
use crate::scenarios::{build, Ordering, ScenarioSpec, Version};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_PARADOX: i32 = 3;

/// Environment variable capping the number of batch worker threads.
pub const THREADS_ENV: &str = "NRULES_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "nrules",
    version,
    about = "Stochastic state-reduction trials for cat-in-a-box scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trial and write its event log.
    Run(RunArgs),
    /// Run many trials and write a summary plus a hit-time histogram.
    Batch(BatchArgs),
    /// Parse and check a scenario file.
    Validate {
        /// Scenario file
        path: PathBuf,
    },
    /// Print the built-in configurations.
    ListScenarios,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in configuration, e.g. `cat1` or `cat2-natural/internal-first`
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time step in seconds [default: t_half / 1000]
    #[arg(long)]
    dt: Option<f64>,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop phantom components as soon as they appear
    #[arg(long)]
    prune: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// `csv` writes a metric,value table, `jsonl` a single JSON object
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Histogram output [default: <out stem>.hist.csv next to --out]
    #[arg(long)]
    hist: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Resolves a `--builtin` name: a version, or `cat2-natural/<ordering>`.
pub fn builtin_spec(name: &str) -> Option<ScenarioSpec> {
    if let Some(ordering) = name.strip_prefix("cat2-natural/") {
        return ordering.parse::<Ordering>().ok().map(ScenarioSpec::natural);
    }
    name.parse::<Version>().ok().map(ScenarioSpec::builtin)
}

fn load(source: &Source) -> Result<ScenarioSpec, Failure> {
    if let Some(path) = &source.scenario {
        return parse_scenario_file(path).map_err(|e| {
            if e.is_io() {
                Failure::Runtime(e.to_string())
            } else {
                Failure::Usage(format!("{}: {e}", path.display()))
            }
        });
    }
    let name = source.builtin.as_deref().unwrap_or_default();
    builtin_spec(name).ok_or_else(|| Failure::Usage(format!("unknown built-in scenario {name:?}")))
}

fn step(spec: &ScenarioSpec, dt: Option<f64>) -> Result<f64, Failure> {
    match dt {
        Some(dt) if dt > 0.0 && dt.is_finite() => Ok(dt),
        Some(dt) => Err(Failure::Usage(format!("--dt {dt} must be positive"))),
        None => spec.default_dt().map_err(|e| Failure::Usage(e.to_string())),
    }
}

fn open(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                Failure::Runtime(format!("{}: {e}", p.display()))
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn histogram_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "summary".into());
    out.with_file_name(format!("{stem}.hist.csv"))
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer"))
        })?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(Failure::runtime)
}

fn options(common: &Common) -> TrialOptions {
    TrialOptions {
        prune: common.prune,
        ..Default::default()
    }
}

fn cmd_run(args: &RunArgs) -> Result<i32, Failure> {
    let spec = load(&args.common.source)?;
    let dt = step(&spec, args.common.dt)?;
    let scenario = build(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let tr = run_trial_with(&scenario, args.common.seed, dt, options(&args.common))
        .map_err(Failure::runtime)?;
    let mut out = open(args.common.out.as_deref())?;
    emit_events(&tr, args.format.into(), &mut out)?;
    out.flush()?;
    Ok(EXIT_OK)
}

fn cmd_batch(args: &BatchArgs) -> Result<i32, Failure> {
    let spec = load(&args.common.source)?;
    let dt = step(&spec, args.common.dt)?;
    let scenario = build(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let pool = thread_pool()?;
    let summary = pool
        .install(|| {
            run_batch_with(
                &scenario,
                args.trials,
                args.common.seed,
                dt,
                options(&args.common),
            )
        })
        .map_err(Failure::runtime)?;
    let mut out = open(args.common.out.as_deref())?;
    match Format::from(args.format) {
        Format::Csv => emit_summary_csv(&summary, &mut out)?,
        Format::Jsonl => emit_summary_json(&summary, &mut out)?,
    }
    out.flush()?;
    let hist = args
        .hist
        .clone()
        .or_else(|| args.common.out.as_deref().map(histogram_path));
    if let Some(path) = hist {
        let mut h = open(Some(&path))?;
        emit_histogram_csv(&summary, &mut h)?;
        h.flush()?;
    }
    if summary.paradox_violations > 0 {
        eprintln!(
            "{} of {} trials violated the no-paradox check",
            summary.paradox_violations, summary.n_trials
        );
        return Ok(EXIT_PARADOX);
    }
    Ok(EXIT_OK)
}

fn cmd_validate(path: &Path) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let spec = parse_scenario_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let scenario = build(&spec).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut line = format!("ok: {} ({})", spec.name, spec.version);
    for flag in &scenario.flags {
        line.push_str(&format!(" [{}]", flag.as_str()));
    }
    println!("{line}");
    Ok(EXIT_OK)
}

fn cmd_list() -> Result<i32, Failure> {
    let mut out = io::stdout().lock();
    for v in Version::ALL {
        writeln!(out, "{:<20} {}", v.as_str(), v.description())?;
    }
    Ok(EXIT_OK)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Validate { path } => cmd_validate(path),
        Command::ListScenarios => cmd_list(),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
