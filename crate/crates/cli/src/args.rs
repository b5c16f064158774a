//! Command-line surface and the `key=value` config file.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stirring", version, about = "Boundary-driven stirring process experiments")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Master seed; every stochastic output is a function of it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Flat key=value file mirroring the long flags; flags given on the
    /// command line win. A `command=` line supplies the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Current,
    Density,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Half width: the lattice is [-N, N].
    #[arg(short = 'N', long = "n")]
    pub n: Option<u32>,
    /// Current strength (current model).
    #[arg(short = 'j', long = "j")]
    pub j: Option<f64>,
    /// Right reservoir density (density model).
    #[arg(long)]
    pub rho_plus: Option<f64>,
    /// Left reservoir density (density model).
    #[arg(long)]
    pub rho_minus: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// One trajectory: a single copy, or the coupled pair when the initial
    /// configuration contains `x`.
    #[command(args_override_self = true)]
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: Option<f64>,
        /// Initial configuration over `01` (single) or `x10` (coupled), site -N first.
        #[arg(long)]
        initial: Option<String>,
        /// Snapshot count for coupled runs.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Tagged-discrepancy survival curve and decay fit.
    #[command(args_override_self = true)]
    Survival {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        window_lo: Option<f64>,
        #[arg(long)]
        window_hi: Option<f64>,
        /// Start the tagged discrepancy here instead of uniformly.
        #[arg(long, allow_hyphen_values = true)]
        start: Option<i32>,
        #[arg(long)]
        initial: Option<String>,
    },
    /// Survival fits over a list of N and the flatness of `b N^2`.
    #[command(args_override_self = true)]
    Scaling {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated, ascending.
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Time-averaged stationary occupation profile.
    #[command(args_override_self = true)]
    Stationary {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        initial: Option<String>,
    },
    /// Conditional rate table and auxiliary-walk survival.
    #[command(args_override_self = true)]
    Auxwalk {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        aux_replicas: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        start: Option<i32>,
    },
    /// Exact generator, stationary law, distance decay and gap (small N).
    #[command(args_override_self = true)]
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Start of the distance curve (default: empty lattice).
        #[arg(long)]
        initial: Option<String>,
        #[arg(long)]
        guard: Option<usize>,
    },
    /// Two-sample test of tagged vs auxiliary-walk extinction times.
    #[command(args_override_self = true)]
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        aux_replicas: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        start: Option<i32>,
    },
    /// Killed-walk survival `E_x[exp(-int V)]` by RK4.
    #[command(args_override_self = true)]
    Fk {
        #[arg(short = 'N', long = "n")]
        n: Option<u32>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Killing rate at +-N.
        #[arg(long)]
        edge_rate: Option<f64>,
    },
    /// Probability of spending `threshold` time on the boundary by the horizon.
    #[command(args_override_self = true)]
    Floor {
        #[arg(short = 'N', long = "n")]
        n: Option<u32>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Survival { .. } => "survival",
            Command::Scaling { .. } => "scaling",
            Command::Stationary { .. } => "stationary",
            Command::Auxwalk { .. } => "auxwalk",
            Command::Oracle { .. } => "oracle",
            Command::Compare { .. } => "compare",
            Command::Fk { .. } => "fk",
            Command::Floor { .. } => "floor",
        }
    }
}

const SUBCOMMANDS: [&str; 9] = [
    "simulate",
    "survival",
    "scaling",
    "stationary",
    "auxwalk",
    "oracle",
    "compare",
    "fk",
    "floor",
];

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value, got {line:?}", k + 1))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("config line {}: empty key", k + 1));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices the config file (if any) into the raw arguments: its flags go
/// right after the subcommand so that later command-line flags override them.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let entries = parse_config(&text)?;
    let mut command = None;
    let mut flags: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        if key == "command" {
            command = Some(value);
            continue;
        }
        if key == "config" {
            return Err("config files cannot include other config files".into());
        }
        if key.len() == 1 {
            flags.push(format!("-{key}").into());
        } else {
            flags.push(format!("--{}", key.replace('_', "-")).into());
        }
        flags.push(value.into());
    }
    let position = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()));
    let mut out = args.clone();
    match (position, command) {
        (Some(p), Some(c)) if args[p].to_string_lossy() != c => {
            return Err(format!(
                "config names command {c:?} but {:?} was given",
                args[p].to_string_lossy()
            ));
        }
        (Some(p), _) => {
            out.splice(p + 1..p + 1, flags);
        }
        (None, Some(c)) => {
            out.insert(1, c.into());
            out.splice(2..2, flags);
        }
        (None, None) => return Err("no subcommand given on the command line or in the config".into()),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_lines() {
        let kv = parse_config("# c\n\nmodel = current\nN=4\n").unwrap();
        assert_eq!(kv, vec![("model".into(), "current".into()), ("N".into(), "4".into())]);
        assert!(parse_config("oops").is_err());
        assert!(parse_config("=3").is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "command=survival\nmodel=current\nN=4\nreplicas=10\nwindow_lo=3\n").unwrap();
        let p = path.to_str().unwrap();
        let args = expand_args(os(&["stirring", "--config", p, "-N", "6"])).unwrap();
        let cli = Cli::try_parse_from(args).unwrap();
        match cli.command {
            Command::Survival {
                model,
                replicas,
                window_lo,
                ..
            } => {
                assert_eq!(model.n, Some(6));
                assert_eq!(replicas, Some(10));
                assert_eq!(window_lo, Some(3.0));
            }
            other => panic!("wrong command {other:?}"),
        }
        let args = expand_args(os(&["stirring", "survival", "--config", p, "--replicas", "99"])).unwrap();
        let cli = Cli::try_parse_from(args).unwrap();
        assert!(matches!(cli.command, Command::Survival { replicas: Some(99), .. }));
        assert!(expand_args(os(&["stirring", "oracle", "--config", p])).is_err());
    }
}
