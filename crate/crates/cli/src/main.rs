use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cr_szego_cli::check::{outcome_text, run_checks, Suite};
use cr_szego_cli::report::{build, ReportKind};
use cr_szego_cli::spec::{parse_surface, SpecError};
use cr_szego_cli::{exit_for, Exit};

#[derive(Parser)]
#[command(name = "szego", version, about = "Second Szegő kernel coefficient on CR normal forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on a surface specification (JSON).
    Run {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        report: ReportKind,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Override the truncation degree of the input.
        #[arg(long)]
        degree: Option<i32>,
    },
    /// Randomized self-checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| {
        if text.ends_with('\n') {
            Ok(())
        } else {
            out.write_all(b"\n")
        }
    });
}

fn run(path: PathBuf, kind: ReportKind, format: Format, degree: Option<i32>) -> Exit {
    let spec = parse_surface(&path).and_then(|mut s| {
        if let Some(d) = degree {
            s.truncation_degree = d;
        }
        s.validated()
    });
    let spec = match spec {
        Ok(s) => s,
        Err(e @ (SpecError::Io { .. } | SpecError::Json(_))) => {
            eprintln!("error: {e}");
            return Exit::Input;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Exit::NormalForm;
        }
    };
    let report = spec.to_surface().and_then(|s| build(&s, kind));
    match report {
        Ok(r) => {
            match format {
                Format::Json => emit(&serde_json::to_string_pretty(&r).expect("report serializes")),
                Format::Text => emit(&r.to_text()),
            }
            match &r.szego {
                Some(s) if !s.all_agree() => {
                    eprintln!("error: the three routes disagree");
                    Exit::Disagreement
                }
                _ => Exit::Ok,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn check(seed: u64, samples: usize, suite: Suite, format: Format) -> Exit {
    let outcomes = run_checks(suite, seed, samples);
    match format {
        Format::Json => emit(&serde_json::to_string_pretty(&outcomes).expect("outcomes serialize")),
        Format::Text => emit(&outcomes.iter().map(outcome_text).collect::<String>()),
    }
    if outcomes.iter().all(|o| o.passed()) {
        Exit::Ok
    } else {
        Exit::CheckFailed
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { path, report, format, degree } => run(path, report, format, degree),
        Command::Check { seed, samples, suite, format } => check(seed, samples, suite, format),
    }
    .into()
}
