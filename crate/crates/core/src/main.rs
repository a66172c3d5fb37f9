use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lde_core::error::{Error, Result};
use lde_core::scenario::{self, Axis, RunOptions, Scenario};
use lde_core::validate::validate;

#[derive(Parser)]
#[command(name = "lde", version, about = "Hybrid transceiver design and evaluation for decentralized estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write its result rows.
    Run(RunArgs),
    /// Run a scenario once per combination of extra axis values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Outer axis override, e.g. `--over n_nodes=10,20`; repeatable.
        #[arg(long = "over", value_name = "AXIS=V1,V2,..", required = true)]
        over: Vec<String>,
    },
    /// Run the invariant suite; exits nonzero if any check fails.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the centralized estimation floor for each grid point.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write rows and the resolved scenario as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Record wall-clock time per row (makes output run-dependent).
    #[arg(long)]
    timing: bool,
}

fn load(path: &Path, seed: Option<u64>, trials: Option<usize>) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    let mut s = Scenario::from_toml(&text)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(trials) = trials {
        s.trials = trials;
    }
    s.validate()?;
    Ok(s)
}

fn parse_override(text: &str) -> Result<(Axis, Vec<f64>)> {
    let (axis, values) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{text}` is not AXIS=V1,V2,..")))?;
    let axis: Axis = axis.trim().parse()?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad value `{v}` for {axis}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((axis, values))
}

fn execute(scenarios: &[Scenario], args: &RunArgs) -> Result<usize> {
    let options = RunOptions { timing: args.timing };
    let mut rows = Vec::new();
    for s in scenarios {
        rows.extend(scenario::run_scenario(s, options)?);
    }
    scenario::write_csv(&rows, BufWriter::new(File::create(&args.out)?))?;
    if let Some(path) = &args.json {
        fs::write(path, scenario::to_json(scenarios, &rows)?)?;
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} rows written to {}, {failed} failed", rows.len(), args.out.display());
    Ok(failed)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let s = load(&args.config, args.seed, args.trials)?;
            execute(&[s], &args)?;
        }
        Command::Sweep { run: args, over } => {
            let s = load(&args.config, args.seed, args.trials)?;
            let overrides = over.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>>>()?;
            let scenarios = scenario::expand_overrides(&s, &overrides)?;
            execute(&scenarios, &args)?;
        }
        Command::Validate { seed } => {
            let report = validate(seed);
            print!("{}", report.render());
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Benchmark { config, seed } => {
            let s = load(&config, seed, None)?;
            for (point, value) in scenario::benchmark_points(&s)? {
                match point {
                    Some((axis, v)) => println!("{axis}={v}\t{value:.10}"),
                    None => println!("{value:.10}"),
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
