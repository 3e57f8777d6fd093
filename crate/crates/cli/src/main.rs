use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use freqmarket_core::config::{self, RunSpec};
use freqmarket_core::output::{self, write_artifacts};
use freqmarket_core::parallel::{configure_threads, ExecPolicy};
use freqmarket_core::scenario::ScheduleDocument;
use freqmarket_core::sweep::{self, jobs, param_grid, parse_param, run_sweep};
use freqmarket_core::verify::{run_verify, Level};
use freqmarket_core::{simulate, Error, Mode};

#[derive(Parser)]
#[command(name = "freqmarket", version, about = "Market and grid-frequency co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write trajectory.csv, summary.json, manifest.json.
    Run(RunArgs),
    /// Run a configuration over seeds and parameter values.
    Sweep(SweepArgs),
    /// Run the built-in acceptance checks.
    Verify(VerifyArgs),
    /// Print the disturbance schedule of a configuration as JSON.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Override `simulation.mode`.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Number of seeds, counting up from --first-seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    first_seed: u64,
    /// `key=v1,v2,...`; repeat for a cartesian grid.
    #[arg(long = "param")]
    params: Vec<String>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, default_value = "sweep_out")]
    out: PathBuf,
    /// Run jobs one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
    level: LevelArg,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ScheduleArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process exit status for a failed command.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::ConfigInvalid(_) | Error::Parse(_) => 2,
        Error::Diverged { .. } => 3,
        Error::InfeasibleDemand { .. } => 4,
        _ => 1,
    }
}

fn kind(err: &Error) -> &'static str {
    match err.root() {
        Error::ConfigInvalid(_) => "config_invalid",
        Error::Parse(_) => "config_parse",
        Error::Diverged { .. } => "diverged",
        Error::InfeasibleDemand { .. } => "infeasible",
        Error::Io(_) => "io",
        _ => "error",
    }
}

/// One JSON object per line on stderr.
fn report_error(err: &Error) {
    let mut diag = json!({
        "level": "error",
        "kind": kind(err),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    });
    match err.root() {
        Error::ConfigInvalid(errs) => diag["errors"] = json!(errs),
        Error::Diverged { step, t } => diag["at"] = json!({ "step": step, "t": t }),
        Error::InfeasibleDemand { demand, min_output, max_output, shortfall } => {
            diag["demand"] = json!({
                "requested": demand,
                "min_output": min_output,
                "max_output": max_output,
                "shortfall": shortfall,
            })
        }
        _ => {}
    }
    eprintln!("{diag}");
}

fn load(path: &Path) -> freqmarket_core::Result<RunSpec> {
    config::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn policy(sequential: bool) -> ExecPolicy {
    if sequential {
        ExecPolicy::Sequential
    } else {
        ExecPolicy::Parallel
    }
}

fn run(args: RunArgs) -> freqmarket_core::Result<ExitCode> {
    let started = output::unix_now();
    let mut spec = load(&args.config)?;
    if let Some(mode) = args.mode {
        spec = spec.with_mode(mode);
    }
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    let out = simulate(&spec.config, &spec.schedule)?;
    let manifest = write_artifacts(&args.out, &spec, &out, started)?;
    let summary = freqmarket_core::metrics::summarize(&out.trajectory);
    println!(
        "{} [{}] {} samples, peak |omega| {:.4} Hz, violations {}, wrote {}",
        manifest.scenario_id,
        manifest.mode,
        summary.samples,
        summary.peak_abs_omega,
        summary.total_violations,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> freqmarket_core::Result<ExitCode> {
    let mut base = load(&args.config)?;
    if let Some(mode) = args.mode {
        base = base.with_mode(mode);
    }
    let axes = args.params.iter().map(|p| parse_param(p)).collect::<freqmarket_core::Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let js = jobs(&seeds, &param_grid(&axes));
    // Reject bad parameter values before any run starts.
    for job in &js {
        sweep::job_spec(&base, job)?;
    }

    let root = args.out.clone();
    let report = run_sweep(&base, &js, policy(args.sequential), |job, spec, out| {
        write_artifacts(&root.join(job.label()), spec, out, output::unix_now()).map(|_| ())
    });
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("sweep.json"), serde_json::to_vec_pretty(&report)?)?;

    for f in &report.failures {
        eprintln!(
            "{}",
            json!({ "level": "error", "kind": "run_failed", "run": f.job.label(), "message": f.error })
        );
    }
    let agg = &report.aggregate;
    println!(
        "{} runs, {} failed, min profit {}, unsettled {}, wrote {}",
        agg.runs,
        agg.failed,
        agg.min_profit.map_or("n/a".into(), |p| format!("{p:.4}")),
        agg.unsettled_runs,
        args.out.join("sweep.json").display()
    );
    Ok(if agg.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn verify(args: VerifyArgs) -> freqmarket_core::Result<ExitCode> {
    let level = match args.level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let report = run_verify(level, policy(args.sequential));
    for c in &report.criteria {
        println!("{}", c.line());
    }
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn schedule(args: ScheduleArgs) -> freqmarket_core::Result<ExitCode> {
    let spec = load(&args.config)?;
    let doc = ScheduleDocument::new(&spec.config.scenario_id, spec.config.dt_physics, &spec.schedule);
    let text = serde_json::to_string_pretty(&doc)?;
    match args.out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::Schedule(a) => schedule(a),
    };
    result.unwrap_or_else(|e| {
        report_error(&e);
        ExitCode::from(exit_code(&e))
    })
}
