//! Batch driver: one subcommand per registered scenario, field-dump
//! utilities, and a sweep runner fanning independent configurations out to
//! a worker pool.
//!
//! Exit codes: 0 all checks passed, 1 threshold failure, 2 usage/config
//! error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use critflow::config::ExperimentConfig;
use critflow::error::Error;
use critflow::io::{load_field, CsvTable};
use critflow::scenarios::{run_scenario, write_report, ReportBundle, SCENARIOS};

#[derive(Parser)]
#[command(
    name = "critflow",
    about = "Stationary Navier-Stokes laboratory: capacitary norms, resolvent/semigroup scans, stability experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable): --set grid.n=64
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for the report bundle.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary roundtrip on a manufactured band-limited solution.
    Manufactured(RunArgs),
    /// Mollified critically-singular force solve with norm reports.
    SingularForce(RunArgs),
    /// Ball capacity, dilation scaling, and trace-inequality constants.
    CapacitySuite(RunArgs),
    /// Sector decay and smoothing exponents of the perturbed resolvent.
    ResolventScan(RunArgs),
    /// Dunford contour semigroup against the exponential-integrator oracle.
    SemigroupSuite(RunArgs),
    /// Perturbation evolution and weighted decay functionals.
    StabilitySweep(RunArgs),
    /// Field-dump utilities.
    Field {
        #[command(subcommand)]
        command: FieldCommand,
    },
    /// Run one scenario across a swept key, one worker per value.
    Sweep {
        /// Scenario name (see subcommands).
        scenario: String,
        /// Swept key, e.g. stability.epsilon
        #[arg(long)]
        key: String,
        /// Comma-separated values for the swept key.
        #[arg(long)]
        values: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Subcommand)]
enum FieldCommand {
    /// Print header and sample statistics of a VFLD1 dump.
    Info { path: PathBuf },
    /// Compare two dumps; exit 1 when they differ beyond --tol.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for assignment in &args.overrides {
        cfg.apply_override(assignment)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(bundle: &ReportBundle) {
    for row in &bundle.summary {
        println!(
            "[{}] {}: {} ({})",
            if row.pass { "PASS" } else { "FAIL" },
            row.check,
            row.value,
            row.threshold
        );
    }
}

fn run_one(name: &str, args: &RunArgs) -> ExitCode {
    let cfg = match load_config(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_scenario(name, &cfg) {
        Ok(bundle) => {
            print_summary(&bundle);
            if let Err(e) = write_report(&bundle, &args.out) {
                eprintln!("write error: {e}");
                return ExitCode::from(1);
            }
            if bundle.all_passed() {
                println!("{name}: all checks passed");
                ExitCode::SUCCESS
            } else {
                eprintln!("{name}: threshold failure");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{name} failed: {e}");
            let code = e.exit_code();
            // Preserve what we know under failed/.
            let mut bundle = ReportBundle {
                scenario: name.to_string(),
                manifest: cfg.effective(),
                tables: vec![{
                    let mut t = CsvTable::new("error", "message");
                    t.push(format!("\"{e}\""));
                    t
                }],
                fields: Vec::new(),
                summary: Vec::new(),
            };
            bundle
                .manifest
                .push(("scenario".to_string(), name.to_string()));
            let _ = critflow::scenarios::write_failed(&bundle, &args.out);
            ExitCode::from(code as u8)
        }
    }
}

fn field_info(path: &PathBuf) -> ExitCode {
    match load_field(path) {
        Ok(field) => {
            let grid = field.grid();
            let mut mins = f64::INFINITY;
            let mut maxs = f64::NEG_INFINITY;
            for v in field.data() {
                mins = mins.min(*v);
                maxs = maxs.max(*v);
            }
            println!("magic:   VFLD1");
            println!("dim:     3");
            println!("n:       {}", grid.n());
            println!("length:  {}", grid.length());
            println!("rank:    {}", field.rank());
            println!("min:     {mins}");
            println!("max:     {maxs}");
            println!("mean|.|: {}", field.mean_abs());
            println!("l2:      {}", field.l2_norm());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            ExitCode::from(2)
        }
    }
}

fn field_diff(a: &PathBuf, b: &PathBuf, tol: f64) -> ExitCode {
    let fa = match load_field(a) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("cannot read {}: {e}", a.display());
            return ExitCode::from(2);
        }
    };
    let fb = match load_field(b) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("cannot read {}: {e}", b.display());
            return ExitCode::from(2);
        }
    };
    if !fa.grid().same_as(fb.grid()) || fa.rank() != fb.rank() {
        eprintln!("incompatible headers");
        return ExitCode::from(1);
    }
    let max_diff = fa.max_diff(&fb);
    println!("max|a-b|: {max_diff}");
    if max_diff <= tol {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run_sweep(scenario: &str, key: &str, values: &str, args: &RunArgs) -> ExitCode {
    if !SCENARIOS.contains(&scenario) {
        eprintln!("unknown scenario '{scenario}' (expected one of {SCENARIOS:?})");
        return ExitCode::from(2);
    }
    let parts: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
    if parts.is_empty() {
        eprintln!("sweep needs at least one value");
        return ExitCode::from(2);
    }
    let outcomes: Vec<u8> = parts
        .par_iter()
        .map(|value| {
            let mut sub = args.clone();
            sub.overrides.push(format!("{key}={value}"));
            let safe = value.replace(['.', '/'], "_");
            sub.out = args
                .out
                .join(format!("{scenario}-{}-{safe}", key.replace('.', "_")));
            println!("sweep {key} = {value} -> {}", sub.out.display());
            match run_one(scenario, &sub) {
                code if code == ExitCode::SUCCESS => 0,
                _ => 1,
            }
        })
        .collect();
    if outcomes.iter().all(|c| *c == 0) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CRITFLOW_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Manufactured(args) => run_one("manufactured", &args),
        Command::SingularForce(args) => run_one("singular-force", &args),
        Command::CapacitySuite(args) => run_one("capacity-suite", &args),
        Command::ResolventScan(args) => run_one("resolvent-scan", &args),
        Command::SemigroupSuite(args) => run_one("semigroup-suite", &args),
        Command::StabilitySweep(args) => run_one("stability-sweep", &args),
        Command::Field { command } => match command {
            FieldCommand::Info { path } => field_info(&path),
            FieldCommand::Diff { a, b, tol } => field_diff(&a, &b, tol),
        },
        Command::Sweep {
            scenario,
            key,
            values,
            run,
        } => run_sweep(&scenario, &key, &values, &run),
    }
}
