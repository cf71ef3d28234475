//! Command-line front end for the workbench.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crdtwb::harness::{compare_models, fuzz, parse_scenario, recheck_trace, run_scenario, FuzzConfig, TraceReport, Verdict};
use crdtwb::model::{CrdtKind, SyncModel};
use crdtwb::sim::FaultPolicy;

const USAGE_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "crdtwb", version, about = "Replicated data type workbench")]
struct Cli {
    /// Directory for trace and replay files.
    #[arg(long, global = true, env = "CRDTWB_OUT_DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and print its trace.
    Run {
        file: PathBuf,
        /// Override the scenario's sync model.
        #[arg(long)]
        sync: Option<SyncModel>,
    },
    /// Generate, run and check a random scenario.
    Fuzz(FuzzArgs),
    /// Re-evaluate a recorded trace against the oracle.
    Oracle { trace: PathBuf },
    /// Run a scenario under every sync model and compare the results.
    Compare { file: PathBuf },
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long = "type")]
    ty: String,
    #[arg(long)]
    semantics: Option<String>,
    #[arg(long, default_value = "state")]
    sync: SyncModel,
    #[arg(long, default_value_t = 3)]
    replicas: usize,
    #[arg(long, default_value_t = 100)]
    ops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Duplication probability.
    #[arg(long, default_value_t = 0.0)]
    dup: f64,
    /// Effector loss probability.
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    /// Probability of extra delivery delay.
    #[arg(long, default_value_t = 0.0)]
    reorder: f64,
    /// Also inject partitions.
    #[arg(long)]
    partitions: bool,
    /// Also inject crashes and recoveries.
    #[arg(long)]
    crashes: bool,
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_out(dir: &Path, name: &str, body: &str) -> Result<PathBuf, String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(path)
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn emit(report: &TraceReport, out: Option<&Path>) -> Result<(), String> {
    let json = report.to_json();
    println!("{json}");
    if let Some(dir) = out {
        let stem = if report.name.is_empty() { "trace".to_owned() } else { file_stem(&report.name) };
        write_out(dir, &format!("{stem}.trace.json"), &json)?;
    }
    eprintln!("{} {}", report.verdict, report.name);
    Ok(())
}

fn exit(v: Verdict) -> ExitCode {
    ExitCode::from(if v.passed() { 0 } else { 1 })
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let out = cli.out.as_deref();
    match cli.cmd {
        Cmd::Run { file, sync } => {
            let s = parse_scenario(&read(&file)?).map_err(|e| format!("{}:\n{e}", file.display()))?;
            let report = run_scenario(&s, sync);
            emit(&report, out)?;
            Ok(exit(report.verdict))
        }
        Cmd::Fuzz(a) => {
            let kind = CrdtKind::parse(&a.ty, a.semantics.as_deref())?;
            let mut cfg = FuzzConfig::new(kind, a.sync, a.replicas, a.ops, a.seed);
            cfg.faults = FaultPolicy { dup: a.dup, drop: a.drop, reorder: a.reorder };
            cfg.partitions = a.partitions;
            cfg.crashes = a.crashes;
            let outcome = fuzz(&cfg)?;
            emit(&outcome.report, out)?;
            if let Some(replay) = &outcome.replay {
                let dir = out.unwrap_or(Path::new("."));
                let path = write_out(dir, &format!("{}.replay.json", file_stem(&replay.name)), &replay.to_json())?;
                eprintln!(
                    "replay with {} steps ({} shrink reruns): {}",
                    replay.steps.len(),
                    outcome.shrink_reruns,
                    path.display()
                );
            }
            Ok(exit(outcome.report.verdict))
        }
        Cmd::Oracle { trace } => {
            let report: TraceReport =
                serde_json::from_str(&read(&trace)?).map_err(|e| format!("{}: {e}", trace.display()))?;
            let (verdict, why) = recheck_trace(&report);
            println!("{verdict} {why}");
            Ok(exit(verdict))
        }
        Cmd::Compare { file } => {
            let s = parse_scenario(&read(&file)?).map_err(|e| format!("{}:\n{e}", file.display()))?;
            let report = compare_models(&s);
            println!("{}", report.to_json());
            eprintln!("{} {}", report.verdict, report.name);
            Ok(exit(report.verdict))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(USAGE_ERROR)
    })
}
