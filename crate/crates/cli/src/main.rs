//! `dagreason` command-line tool.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AugmentArgs, EvalArgs, GenArgs, GradeArgs, ProbeArgs, RoundtripArgs, SynthDumpsArgs, VovArgs};

#[derive(Debug, Parser)]
#[command(name = "dagreason", version, about = "Generate, augment, grade and probe DAG reasoning problems")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an evaluation suite.
    Gen(GenArgs),
    /// Augment QA pairs into an SFT corpus.
    Augment(AugmentArgs),
    /// Query a model (or a mock) for every suite item.
    Eval(EvalArgs),
    /// Grade responses against a suite.
    Grade(GradeArgs),
    /// Variance of accuracy across orders and redundancy levels.
    Vov(VovArgs),
    /// Train and evaluate a relevance probe on attention dumps.
    Probe(ProbeArgs),
    /// Write synthetic attention dumps with a known relevance margin.
    SynthDumps(SynthDumpsArgs),
    /// Check that every suite query parses back to its problem.
    Roundtrip(RoundtripArgs),
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_PROPERTY: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Augment(a) => commands::augment(a),
        Command::Eval(a) => commands::eval(a),
        Command::Grade(a) => commands::grade(a),
        Command::Vov(a) => commands::vov(a),
        Command::Probe(a) => commands::probe(a),
        Command::SynthDumps(a) => commands::synth_dumps(a),
        Command::Roundtrip(a) => commands::roundtrip(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
