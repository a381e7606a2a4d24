use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use neckpinch::barrier::{find_b0, verify_supersolution, BarrierParams, CertGrid};
use neckpinch::mz::{classify, ClassifyConfig};
use neckpinch::runner::{analyze_persisted, parse_config, read_mz_csv, run_pipeline, selftest, Pipeline, RunOptions, RunStatus};
use neckpinch::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "neckpinch", version, about = "Rotationally symmetric Ricci flow neckpinch laboratory")]
struct Cli {
    /// Worker threads for the analysis stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and analyze a configured run.
    Run(RunArgs),
    /// Re-run the analysis on the snapshots persisted in the output directory.
    Analyze(RunArgs),
    /// Orthonormality, recurrence and exact-solution checks.
    Selftest,
    /// Standalone super-solution certification and B₀ search.
    Barrier(BarrierArgs),
    /// Classify an x, y, ζ trajectory read from CSV (columns tau, x, y, zeta).
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from the last persisted snapshot.
    #[arg(long)]
    resume: bool,
    /// Export every N-th snapshot.
    #[arg(long)]
    stride: Option<usize>,
    /// Reject unknown configuration keys.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct BarrierArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 3.0)]
    l: f64,
    #[arg(long, default_value_t = 50.0)]
    tau_min: f64,
    #[arg(long, default_value_t = 500.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 120)]
    tau_points: usize,
    #[arg(long, default_value_t = 400)]
    u_points: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Terminal window length in τ.
    #[arg(long, default_value_t = 10.0)]
    span: f64,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_NUMERICAL),
    }
}

fn summarize(p: &Pipeline) -> ExitCode {
    let r = &p.report;
    if let Some(t) = &r.trajectory {
        println!("snapshots {} steps {} t_final {}", t.snapshots, t.steps, t.t_final);
        if let Some(te) = &t.t_estimate {
            println!("T_est {} in [{}, {}]", te.t_est, te.t_lo, te.t_hi);
        }
    }
    for pass in &r.passes {
        let tag = pass.classification.as_ref().map_or("-".to_string(), |c| format!("{:?}{}", c.tag, if c.vacuous { " (vacuous)" } else { "" }));
        println!("A = {}: {} samples, tag {}", pass.a, pass.samples, tag);
    }
    for s in r.stages.iter().filter(|s| !s.ok) {
        let pass = s.pass.map_or(String::new(), |a| format!(" (A = {a})"));
        println!("stage {:?}{} failed [{}]: {}", s.stage, pass, s.error_kind.as_deref().unwrap_or(""), s.message.as_deref().unwrap_or(""));
    }
    match r.status {
        RunStatus::Complete => {
            println!("status complete");
            ExitCode::SUCCESS
        }
        RunStatus::Interrupted => {
            println!("status interrupted; continue with --resume");
            ExitCode::SUCCESS
        }
        RunStatus::Failed => {
            println!("status failed; partial report written");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn run(args: &RunArgs, analyze_only: bool) -> ExitCode {
    let parsed = match parse_config(&args.config, args.strict) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    for key in &parsed.ignored {
        eprintln!("warning: unknown key `{key}` ignored");
    }
    let opts = RunOptions { out: args.out.clone(), resume: args.resume, stride: args.stride };
    let result = if analyze_only { analyze_persisted(&parsed.config, &opts) } else { run_pipeline(&parsed.config, &opts) };
    match result {
        Ok(p) => summarize(&p),
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match &cli.command {
        Command::Run(a) => run(a, false),
        Command::Analyze(a) => run(a, true),
        Command::Selftest => {
            let lines = selftest();
            for l in &lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
            }
            if lines.iter().all(|l| l.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
        Command::Barrier(b) => {
            let grid = CertGrid { tau_min: b.tau_min, tau_max: b.tau_max, tau_points: b.tau_points, u_points: b.u_points };
            let params = BarrierParams { b: 1.0, c: b.c, l: b.l, tau0: b.tau_min, n: b.n };
            if let Err(e) = params.validate() {
                return fail(&Error::Config(e.to_string()));
            }
            let out = find_b0(b.n, b.c, b.l, &grid).and_then(|s| {
                let m = verify_supersolution(&BarrierParams { b: 2.0 * s.b0, ..params }, &grid)?;
                Ok((s, m))
            });
            match out {
                Ok((s, m)) => {
                    let v = serde_json::json!({ "n": b.n, "c": b.c, "l": b.l, "grid": grid, "search": s, "margin_at_double": m });
                    println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Classify(c) => {
            let traj = match read_mz_csv(&c.csv) {
                Ok(t) => t,
                Err(e) => return fail(&e),
            };
            match classify(&traj, &ClassifyConfig { span: c.span, ..ClassifyConfig::default() }) {
                Ok(class) => {
                    println!("{}", serde_json::to_string_pretty(&class).expect("serializable"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
