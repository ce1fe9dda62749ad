use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use labtwin::scenario::{self, RunOptions, Scenario, TraceFormat};
use labtwin::workflow::VerificationReport;

#[derive(Parser)]
#[command(
    name = "labtwin",
    version,
    about = "Run, verify and benchmark lab digital-twin scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write its trace.
    Run {
        file: PathBuf,
        /// Output path; the trace goes to stdout when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: TraceFormat,
        /// Overrides the scenario's trace stride.
        #[arg(long)]
        stride: Option<u64>,
    },
    /// Simulate a scenario and check its verification targets.
    Verify { file: PathBuf },
    /// Time batch stepping with and without semantics.
    Bench {
        file: PathBuf,
        #[arg(long, default_value_t = 64)]
        envs: usize,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
    },
    /// Print the resolved entities, slots, processes and events.
    Describe { file: PathBuf },
}

fn print_report(report: &VerificationReport) {
    for t in &report.targets {
        eprintln!("{t}");
    }
    if let Some(f) = &report.action_failure {
        eprintln!("action failed: {f}");
    }
    if !report.completed {
        eprintln!("workflow did not complete");
    }
    eprintln!("verification {}", if report.passed() { "passed" } else { "failed" });
}

fn execute(cmd: Cmd) -> Result<bool, Box<dyn std::error::Error>> {
    match cmd {
        Cmd::Run {
            file,
            trace,
            format,
            stride,
        } => {
            let sc = Scenario::from_path(&file)?;
            let out = scenario::run(
                &sc,
                RunOptions {
                    stride,
                    ..Default::default()
                },
            )?;
            let text = out.trace.emit(format)?;
            match trace {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            print_report(&out.report);
            Ok(out.report.passed())
        }
        Cmd::Verify { file } => {
            let sc = Scenario::from_path(&file)?;
            let out = scenario::run(&sc, RunOptions::default())?;
            print_report(&out.report);
            Ok(out.report.passed())
        }
        Cmd::Bench { file, envs, steps } => {
            let sc = Scenario::from_path(&file)?;
            println!("{}", scenario::bench(&sc, envs, steps)?);
            Ok(true)
        }
        Cmd::Describe { file } => {
            let sc = Scenario::from_path(&file)?;
            print!("{}", scenario::build(&sc)?.describe());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
