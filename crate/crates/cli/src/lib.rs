//! Runner behind the `stirring` binary: argument handling, validation,
//! pipelines and file output.

pub mod args;
pub mod output;
pub mod run;
pub mod spec;

use std::ffi::OsString;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;

/// Machine-readable failure: one `error kind=... message=...` line each.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub messages: Vec<String>,
}

impl Failure {
    fn one(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            messages: vec![message.into()],
        }
    }

    pub fn lines(&self) -> Vec<String> {
        self.messages
            .iter()
            .map(|m| format!("error kind={} message={m:?}", self.kind))
            .collect()
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "usage" | "validation" => 2,
            _ => 1,
        }
    }
}

fn kind_of(e: &stirring::Error) -> &'static str {
    use stirring::Error as E;
    match e {
        E::InvalidParams(_) | E::Parse(_) | E::LengthMismatch { .. } | E::OrderViolation { .. } => "validation",
        E::StateSpaceTooLarge { .. } => "guard",
        E::MissingRates { .. } => "missing_rates",
        E::WindowTooSparse { .. } | E::AllZeroTail { .. } => "fit",
        _ => "numerical",
    }
}

/// Parses, validates, runs and writes. Returns the written paths.
pub fn main_with_args(raw: Vec<OsString>) -> Result<Vec<std::path::PathBuf>, Failure> {
    let args = args::expand_args(raw).map_err(|m| Failure::one("usage", m))?;
    let cli = match args::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(Vec::new());
        }
        Err(e) => return Err(Failure::one("usage", e.to_string().trim().to_string())),
    };
    let spec = spec::validate(&cli).map_err(|messages| Failure {
        kind: "validation",
        messages,
    })?;
    if let Some(t) = spec.threads {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let outcome = run::execute(&spec).map_err(|e| Failure::one(kind_of(&e), e.to_string()))?;
    let mut written =
        output::emit(&spec.out, &outcome.artifacts, spec.format).map_err(|e| Failure::one("io", e.to_string()))?;
    let manifest = spec.manifest(env!("CARGO_PKG_VERSION"), clock.elapsed().as_secs_f64(), started_unix);
    let path = spec.out.join("manifest.txt");
    output::write_atomic(&path, manifest.as_bytes()).map_err(|e| Failure::one("io", e.to_string()))?;
    written.push(path);
    match outcome.error {
        Some(e) => Err(Failure::one(kind_of(&e), e.to_string())),
        None => Ok(written),
    }
}
