//! Command-line front end: surface specifications, reports and self-checks.

pub mod check;
pub mod report;
pub mod spec;

use std::process::ExitCode;

use cr_szego::Error;

/// Process exit statuses. Clap itself exits with 2 on usage errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Ok = 0,
    Usage = 2,
    Input = 3,
    NormalForm = 4,
    Geometry = 5,
    Phase = 6,
    Szego = 7,
    Disagreement = 8,
    CheckFailed = 9,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

/// Status for a pipeline error, by the stage it was raised in.
pub fn exit_for(err: &Error) -> Exit {
    if matches!(err.root(), Error::NormalForm(_)) {
        return Exit::NormalForm;
    }
    match err {
        Error::Stage { stage: "geometry", .. } => Exit::Geometry,
        Error::Stage { stage: "phase", .. } => Exit::Phase,
        _ => Exit::Szego,
    }
}
