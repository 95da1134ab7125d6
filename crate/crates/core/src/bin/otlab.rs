use clap::{Args, Parser, Subcommand};
use otlab::cones::{self, ConePair};
use otlab::convex2d::Sector;
use otlab::lab::{self, LabError, Run, RunOptions, Scenario, Status, Summary};
use otlab::sdot::TransportPlan;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "otlab", version, about = "Boundary regularity lab for 2D semi-discrete optimal transport")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Replace the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving reports, CSV payloads and plans.
    #[arg(long, global = true, default_value = "otlab-out")]
    out_dir: PathBuf,
    /// Scenarios run concurrently by `suite`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Relative χ increase tolerated between consecutive radii.
    #[arg(long, global = true)]
    slack: Option<f64>,
    /// Only report failures.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: a TOML file or the name of a built-in scenario.
    Run { config: String },
    /// Run every `*.toml` scenario of a directory, or `builtin` for the library.
    Suite { dir: String },
    /// Classify a pair of tangent cones given as `lo,hi` in degrees.
    Classify {
        #[arg(long, allow_hyphen_values = true)]
        source: String,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
    },
    /// Homogeneity degrees and section exponents.
    Exponents {
        #[arg(long, default_value_t = 2.0)]
        n: f64,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        #[arg(long, default_value_t = 0.0)]
        l: f64,
        #[arg(long, default_value_t = 0.0)]
        k: f64,
    },
    /// Rerun one diagnostic on a stored plan.
    Replay {
        plan: PathBuf,
        diagnostic: String,
        /// Scenario file; defaults to `scenario.toml` next to the plan.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

enum Failure {
    Fail,
    Error(LabError),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Fail) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_options(g: &Global) -> RunOptions {
    RunOptions {
        seed: g.seed,
        slack: g.slack,
    }
}

fn load(config: &str) -> Result<Scenario, LabError> {
    let path = Path::new(config);
    if !path.exists() {
        if let Some(s) = lab::builtin_named(config)? {
            return Ok(s);
        }
    }
    lab::read_scenario(path)
}

fn print_run(run: &Run, quiet: bool) {
    let r = &run.report;
    if !quiet || r.status == Status::Fail {
        println!("{} {} ({})", r.status, r.scenario, r.scenario_hash);
    }
    if let Some(e) = &r.error {
        println!("  error: {e}");
    }
    for c in &r.checks {
        if quiet && c.passed {
            continue;
        }
        let mark = if c.passed { "pass" } else { "FAIL" };
        match c.base_point {
            Some(b) => println!("  {mark} [bp{b}] {}: {}", c.name, c.detail),
            None => println!("  {mark} {}: {}", c.name, c.detail),
        }
    }
}

fn parse_sector(spec: &str) -> Result<Sector, LabError> {
    let bad = || LabError::Usage(format!("cone '{spec}' must be 'lo,hi' in degrees"));
    let (lo, hi) = spec.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Sector::from_degrees(lo, hi).map_err(|e| LabError::Usage(format!("cone '{spec}': {e}")))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { config } => {
            let s = load(config)?;
            let run = lab::run(&s, &run_options(g))?;
            let dir = lab::write_run(&run, &g.out_dir)?;
            print_run(&run, g.quiet);
            if !g.quiet {
                println!("  wrote {}", dir.display());
            }
            if run.report.status == Status::Fail {
                return Err(Failure::Fail);
            }
        }
        Command::Suite { dir } => {
            let scenarios = if dir == "builtin" && !Path::new(dir).exists() {
                lab::builtin()?
            } else {
                lab::read_scenario_dir(Path::new(dir))?
            };
            let jobs = g
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let runs = lab::suite(&scenarios, &run_options(g), jobs)?;
            for run in &runs {
                lab::write_run(run, &g.out_dir)?;
                print_run(run, g.quiet);
            }
            let summary = Summary::of(&runs);
            lab::write_summary(&summary, &g.out_dir)?;
            println!("{}: {} passed, {} failed", summary.status, summary.passed, summary.failed);
            if summary.status == Status::Fail {
                return Err(Failure::Fail);
            }
        }
        Command::Classify { source, target } => {
            let pair = ConePair::new(parse_sector(source)?, parse_sector(target)?).map_err(LabError::from)?;
            let c = cones::classify(&pair);
            println!("verdict: {}", c.verdict);
            println!("family_dimension: {}", c.family_dimension);
            match c.witness {
                Some(w) => println!("q: [[{:.16e}, {:.16e}], [{:.16e}, {:.16e}]]", w.q.a, w.q.b, w.q.b, w.q.c),
                None => println!("q: none"),
            }
        }
        Command::Exponents { n, m, l, k } => {
            let t = cones::exponents(*n, *m, *l, *k).map_err(LabError::from)?;
            println!("{}", serde_json::to_string_pretty(&t).expect("table serializes"));
        }
        Command::Replay {
            plan,
            diagnostic,
            scenario,
        } => {
            let scenario_path = match scenario {
                Some(p) => p.clone(),
                None => plan.with_file_name("scenario.toml"),
            };
            let s = lab::read_scenario(&scenario_path)?;
            let p = TransportPlan::load(plan).map_err(LabError::from)?;
            let report = lab::replay(&p, &s, Some(diagnostic))?;
            let dir = g.out_dir.join(format!("{}-replay", s.name));
            lab::write_csvs(&report, &dir)?;
            for o in &report.outputs {
                match &o.error {
                    Some(e) => println!("{} [bp{}] error: {e}", o.diagnostic, o.base_point),
                    None if !g.quiet => println!("{}", dir.join(o.file_name()).display()),
                    None => {}
                }
            }
            if report.outputs.iter().any(|o| o.error.is_some()) {
                return Err(Failure::Fail);
            }
        }
    }
    Ok(())
}
