mod args;
mod manifest;
mod run;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use poe_rank::RankError;

use args::{Cli, Command, Invocation, ReplayArgs};
use manifest::{manifest_path, RunManifest};
use run::{execute, RunOutput};

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

/// `replay --verify` found an output that no longer matches.
#[derive(Debug)]
struct Mismatch(Vec<String>);

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "replay differs from recorded outputs: {}", self.0.join(", "))
    }
}

impl std::error::Error for Mismatch {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = configure_threads().and_then(|()| dispatch(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for numerical failures and replay mismatches, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|cause| {
        cause.downcast_ref::<RankError>().is_some_and(RankError::is_numerical)
            || cause.downcast_ref::<Mismatch>().is_some()
    });
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Honors `POE_RANK_THREADS`; unset or empty leaves rayon's default.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("POE_RANK_THREADS") else {
        return Ok(());
    };
    if raw.trim().is_empty() {
        return Ok(());
    }
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("POE_RANK_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    let invocation = match command {
        Command::Score(a) => Invocation::Score(a),
        Command::Select(a) => Invocation::Select(a),
        Command::Simulate(a) => Invocation::Simulate(a),
        Command::Symmetrize(a) => Invocation::Symmetrize(a),
        Command::Replay(a) => return replay(&a),
    };
    let run = execute(&invocation)?;
    emit(&invocation, &run)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn emit(invocation: &Invocation, run: &RunOutput) -> Result<()> {
    for artifact in &run.artifacts {
        match &artifact.path {
            Some(path) => write_file(path, &artifact.bytes)?,
            None => std::io::stdout().write_all(&artifact.bytes)?,
        }
    }
    let manifest = RunManifest::new(invocation, run).to_bytes();
    match manifest_path(invocation) {
        Some(path) => write_file(&path, &manifest),
        None => Ok(std::io::stderr().write_all(&manifest)?),
    }
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let recorded = RunManifest::load(&args.manifest)?;
    let run = execute(&recorded.invocation)?;
    if !args.verify {
        return emit(&recorded.invocation, &run);
    }
    let mut expected: Vec<(String, Vec<u8>)> = run
        .artifacts
        .iter()
        .filter_map(|a| a.path.as_ref().map(|p| (p.display().to_string(), a.bytes.clone())))
        .collect();
    expected.push((
        args.manifest.display().to_string(),
        RunManifest::new(&recorded.invocation, &run).to_bytes(),
    ));
    let mut differing = Vec::new();
    for (path, bytes) in &expected {
        let on_disk = std::fs::read(path).with_context(|| format!("reading {path}"))?;
        if &on_disk != bytes {
            differing.push(path.clone());
        }
    }
    if differing.is_empty() {
        eprintln!("replay matches {} recorded file(s)", expected.len());
        Ok(())
    } else {
        Err(Mismatch(differing).into())
    }
}
