//! Validated run specification and its manifest form.

use std::path::PathBuf;

use stirring::estimators::Thresholds;
use stirring::{Configuration, CoupledConfiguration, ModelParams, Reservoir};

use crate::args::{Cli, Command, Format, ModelArgs, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Simulate,
    Survival,
    Scaling,
    Stationary,
    Auxwalk,
    Oracle,
    Compare,
    Fk,
    Floor,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Simulate => "simulate",
            Pipeline::Survival => "survival",
            Pipeline::Scaling => "scaling",
            Pipeline::Stationary => "stationary",
            Pipeline::Auxwalk => "auxwalk",
            Pipeline::Oracle => "oracle",
            Pipeline::Compare => "compare",
            Pipeline::Fk => "fk",
            Pipeline::Floor => "floor",
        }
    }

    fn uses_model(self) -> bool {
        !matches!(self, Pipeline::Fk | Pipeline::Floor)
    }
}

/// Fully defaulted run description. Fields a pipeline does not read keep
/// their defaults and are left out of the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub pipeline: Pipeline,
    pub params: ModelParams,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub format: Format,
    pub replicas: usize,
    pub aux_replicas: usize,
    pub horizon: f64,
    pub points: usize,
    pub burn_in: f64,
    pub window: (f64, f64),
    pub bin_width: f64,
    pub start: Option<i32>,
    pub initial: Option<String>,
    pub n_list: Vec<u32>,
    pub step: f64,
    pub edge_rate: f64,
    pub threshold: f64,
    pub guard: usize,
    pub bootstrap: usize,
    pub thresholds: Thresholds,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "out";

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

fn model_params(kind: ModelKind, m: &ModelArgs, n: u32, errors: &mut Vec<String>) -> ModelParams {
    match kind {
        ModelKind::Current => {
            if m.rho_plus.is_some() || m.rho_minus.is_some() {
                errors.push("rho_plus/rho_minus apply to the density model only".into());
            }
            ModelParams::current(n, m.j.unwrap_or(1.0))
        }
        ModelKind::Density => {
            if m.j.is_some() {
                errors.push("j applies to the current model only".into());
            }
            let plus = m.rho_plus.unwrap_or(0.75);
            let minus = m.rho_minus.unwrap_or(0.25);
            ModelParams::density(n, plus, minus)
        }
    }
}

fn check_positive(name: &str, v: f64, errors: &mut Vec<String>) {
    if !(v.is_finite() && v > 0.0) {
        errors.push(format!("{name} must be positive and finite, got {v}"));
    }
}

fn check_count(name: &str, v: usize, errors: &mut Vec<String>) {
    if v == 0 {
        errors.push(format!("{name} must be at least 1"));
    }
}

fn grid_points(horizon: f64, n2: f64) -> usize {
    ((2.0 * horizon / n2).round() as usize + 1).max(21)
}

/// Fills defaults and collects every problem instead of stopping at the first.
pub fn validate(cli: &Cli) -> Result<RunSpec, Vec<String>> {
    let mut errors = Vec::new();
    let empty = ModelArgs::default();
    let (pipeline, model, n_arg) = match &cli.command {
        Command::Simulate { model, .. } => (Pipeline::Simulate, model, model.n),
        Command::Survival { model, .. } => (Pipeline::Survival, model, model.n),
        Command::Scaling { model, .. } => (Pipeline::Scaling, model, model.n.or(Some(1))),
        Command::Stationary { model, .. } => (Pipeline::Stationary, model, model.n),
        Command::Auxwalk { model, .. } => (Pipeline::Auxwalk, model, model.n),
        Command::Oracle { model, .. } => (Pipeline::Oracle, model, model.n),
        Command::Compare { model, .. } => (Pipeline::Compare, model, model.n),
        Command::Fk { n, .. } => (Pipeline::Fk, &empty, *n),
        Command::Floor { n, .. } => (Pipeline::Floor, &empty, *n),
    };
    let n = match n_arg {
        None => {
            errors.push("N is required".into());
            1
        }
        Some(0) => {
            errors.push("N must be at least 1".into());
            1
        }
        Some(n) => n,
    };
    let kind = model.model.unwrap_or(ModelKind::Current);
    let params = model_params(kind, model, n, &mut errors);
    if pipeline.uses_model() {
        if let Err(stirring::Error::InvalidParams(list)) = params.validate() {
            errors.extend(list);
        }
    }
    let n2 = f64::from(n).powi(2);
    let th = Thresholds::default();
    let mut spec = RunSpec {
        pipeline,
        params,
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        threads: cli.threads,
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        format: cli.format.unwrap_or(Format::Csv),
        replicas: 10_000,
        aux_replicas: 10_000,
        horizon: 40.0 * n2,
        points: 0,
        burn_in: 10.0 * n2,
        window: (5.0 * n2, 40.0 * n2),
        bin_width: stirring::auxwalk::default_bin_width(n),
        start: None,
        initial: None,
        n_list: Vec::new(),
        step: 0.01,
        edge_rate: 1.0,
        threshold: 1.0,
        guard: stirring::estimators::oracle::DEFAULT_GUARD,
        bootstrap: 200,
        thresholds: th,
    };
    if spec.threads == Some(0) {
        errors.push("threads must be at least 1".into());
    }
    match &cli.command {
        Command::Simulate {
            horizon,
            initial,
            points,
            ..
        } => {
            spec.horizon = horizon.unwrap_or(n2);
            spec.initial = initial.clone();
            spec.points = points.unwrap_or(101);
        }
        Command::Survival {
            replicas,
            horizon,
            points,
            window_lo,
            window_hi,
            start,
            initial,
            ..
        } => {
            spec.replicas = replicas.unwrap_or(10_000);
            spec.horizon = horizon.unwrap_or(40.0 * n2);
            spec.points = points.unwrap_or_else(|| grid_points(spec.horizon, n2));
            spec.window = (window_lo.unwrap_or(5.0 * n2), window_hi.unwrap_or(40.0 * n2));
            spec.start = *start;
            spec.initial = initial.clone();
            if spec.window.0 >= spec.window.1 {
                errors.push(format!("fit window [{}, {}] is empty", spec.window.0, spec.window.1));
            }
        }
        Command::Scaling { n_list, replicas, .. } => {
            spec.replicas = replicas.unwrap_or(20_000);
            if model.n.is_some() {
                errors.push("scaling takes --n-list, not N".into());
            }
            let list = n_list.as_deref().unwrap_or("4,8,16");
            match list.split(',').map(|s| s.trim().parse::<u32>()).collect::<Result<Vec<_>, _>>() {
                Ok(v) if v.is_empty() => errors.push("n_list is empty".into()),
                Ok(v) => {
                    if v.contains(&0) {
                        errors.push("n_list entries must be at least 1".into());
                    }
                    if !v.windows(2).all(|w| w[0] < w[1]) {
                        errors.push("n_list must be strictly ascending".into());
                    }
                    spec.n_list = v;
                }
                Err(e) => errors.push(format!("n_list: {e}")),
            }
        }
        Command::Stationary {
            replicas,
            burn_in,
            horizon,
            initial,
            ..
        } => {
            spec.replicas = replicas.unwrap_or(64);
            spec.burn_in = burn_in.unwrap_or(10.0 * n2);
            spec.horizon = horizon.unwrap_or(10.0 * n2);
            spec.initial = initial.clone();
            if spec.burn_in < 0.0 {
                errors.push("burn_in must be non-negative".into());
            }
        }
        Command::Auxwalk {
            replicas,
            aux_replicas,
            horizon,
            bin_width,
            points,
            start,
            ..
        } => {
            spec.replicas = replicas.unwrap_or(10_000);
            spec.aux_replicas = aux_replicas.unwrap_or(10_000);
            spec.horizon = horizon.unwrap_or(10.0 * n2);
            spec.bin_width = bin_width.unwrap_or(spec.bin_width);
            spec.points = points.unwrap_or_else(|| grid_points(spec.horizon, n2));
            spec.start = *start;
        }
        Command::Oracle {
            horizon,
            points,
            initial,
            guard,
            ..
        } => {
            spec.horizon = horizon.unwrap_or(40.0 * n2);
            spec.points = points.unwrap_or(101);
            spec.initial = initial.clone();
            spec.guard = guard.unwrap_or(spec.guard);
        }
        Command::Compare {
            replicas,
            aux_replicas,
            horizon,
            bin_width,
            points,
            alpha,
            bootstrap,
            start,
            ..
        } => {
            spec.replicas = replicas.unwrap_or(10_000);
            spec.aux_replicas = aux_replicas.unwrap_or(spec.replicas);
            spec.horizon = horizon.unwrap_or(10.0 * n2);
            spec.bin_width = bin_width.unwrap_or(spec.bin_width);
            spec.points = points.unwrap_or_else(|| grid_points(spec.horizon, n2));
            spec.thresholds.ks_alpha = alpha.unwrap_or(th.ks_alpha);
            spec.bootstrap = bootstrap.unwrap_or(200);
            spec.start = *start;
            if !(spec.thresholds.ks_alpha > 0.0 && spec.thresholds.ks_alpha < 1.0) {
                errors.push("alpha must lie in (0, 1)".into());
            }
        }
        Command::Fk {
            horizon,
            step,
            edge_rate,
            ..
        } => {
            spec.horizon = horizon.unwrap_or(40.0 * n2);
            spec.step = step.unwrap_or(0.01);
            spec.edge_rate = edge_rate.unwrap_or(1.0);
            check_positive("step", spec.step, &mut errors);
            if !(spec.edge_rate.is_finite() && spec.edge_rate >= 0.0) {
                errors.push("edge_rate must be non-negative".into());
            }
        }
        Command::Floor {
            horizon,
            threshold,
            replicas,
            delta,
            ..
        } => {
            spec.horizon = horizon.unwrap_or(n2);
            spec.threshold = threshold.unwrap_or(1.0);
            spec.replicas = replicas.unwrap_or(10_000);
            spec.thresholds.floor_delta = delta.unwrap_or(th.floor_delta);
            check_positive("threshold", spec.threshold, &mut errors);
        }
    }
    check_positive("horizon", spec.horizon, &mut errors);
    check_count("replicas", spec.replicas, &mut errors);
    check_count("aux_replicas", spec.aux_replicas, &mut errors);
    check_positive("bin_width", spec.bin_width, &mut errors);
    if matches!(pipeline, Pipeline::Survival | Pipeline::Auxwalk | Pipeline::Compare | Pipeline::Oracle | Pipeline::Simulate)
        && spec.points < 2
    {
        errors.push("points must be at least 2".into());
    }
    if let Some(x) = spec.start {
        if x.unsigned_abs() > n {
            errors.push(format!("start {x} is outside [-{n}, {n}]"));
        }
    }
    if let Some(s) = &spec.initial {
        check_initial(pipeline, s, n, &mut errors);
    }
    if errors.is_empty() {
        Ok(spec)
    } else {
        Err(errors)
    }
}

fn check_initial(pipeline: Pipeline, s: &str, n: u32, errors: &mut Vec<String>) {
    let len = 2 * n as usize + 1;
    if s.chars().count() != len {
        errors.push(format!("initial has {} sites, expected 2N+1 = {len}", s.chars().count()));
        return;
    }
    let coupled_ok = matches!(pipeline, Pipeline::Simulate | Pipeline::Survival);
    let single_ok = matches!(pipeline, Pipeline::Simulate | Pipeline::Stationary | Pipeline::Oracle);
    let is_single = s.parse::<Configuration>().is_ok();
    let is_coupled = s.parse::<CoupledConfiguration>().is_ok();
    let ok = (single_ok && is_single) || (coupled_ok && is_coupled);
    if !ok {
        let want = match (single_ok, coupled_ok) {
            (true, true) => "characters 0/1, or x/1/0 for a coupled start",
            (true, false) => "characters 0/1",
            _ => "characters x/1/0",
        };
        errors.push(format!("initial {s:?}: expected {want}"));
    }
}

impl RunSpec {
    /// `key=value` lines that replay this run through `--config`.
    pub fn manifest_entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("command", self.pipeline.name().to_string())];
        let p = self.pipeline;
        if p.uses_model() {
            match self.params.reservoir {
                Reservoir::Current => {
                    out.push(("model", "current".into()));
                    out.push(("j", fmt_f64(self.params.j)));
                }
                Reservoir::Density { rho_plus, rho_minus } => {
                    out.push(("model", "density".into()));
                    out.push(("rho_plus", fmt_f64(rho_plus)));
                    out.push(("rho_minus", fmt_f64(rho_minus)));
                }
            }
        }
        if p == Pipeline::Scaling {
            let list: Vec<String> = self.n_list.iter().map(u32::to_string).collect();
            out.push(("n_list", list.join(",")));
        } else {
            out.push(("N", self.params.n.to_string()));
        }
        out.push(("seed", self.seed.to_string()));
        if let Some(t) = self.threads {
            out.push(("threads", t.to_string()));
        }
        out.push(("out", self.out.display().to_string()));
        out.push(("format", self.format.as_str().to_string()));
        let f = fmt_f64;
        match p {
            Pipeline::Simulate => {
                out.push(("horizon", f(self.horizon)));
                out.push(("points", self.points.to_string()));
            }
            Pipeline::Survival => {
                out.push(("replicas", self.replicas.to_string()));
                out.push(("horizon", f(self.horizon)));
                out.push(("points", self.points.to_string()));
                out.push(("window_lo", f(self.window.0)));
                out.push(("window_hi", f(self.window.1)));
            }
            Pipeline::Scaling => out.push(("replicas", self.replicas.to_string())),
            Pipeline::Stationary => {
                out.push(("replicas", self.replicas.to_string()));
                out.push(("burn_in", f(self.burn_in)));
                out.push(("horizon", f(self.horizon)));
            }
            Pipeline::Auxwalk => {
                out.push(("replicas", self.replicas.to_string()));
                out.push(("aux_replicas", self.aux_replicas.to_string()));
                out.push(("horizon", f(self.horizon)));
                out.push(("bin_width", f(self.bin_width)));
                out.push(("points", self.points.to_string()));
            }
            Pipeline::Oracle => {
                out.push(("horizon", f(self.horizon)));
                out.push(("points", self.points.to_string()));
                out.push(("guard", self.guard.to_string()));
            }
            Pipeline::Compare => {
                out.push(("replicas", self.replicas.to_string()));
                out.push(("aux_replicas", self.aux_replicas.to_string()));
                out.push(("horizon", f(self.horizon)));
                out.push(("bin_width", f(self.bin_width)));
                out.push(("points", self.points.to_string()));
                out.push(("alpha", f(self.thresholds.ks_alpha)));
                out.push(("bootstrap", self.bootstrap.to_string()));
            }
            Pipeline::Fk => {
                out.push(("horizon", f(self.horizon)));
                out.push(("step", f(self.step)));
                out.push(("edge_rate", f(self.edge_rate)));
            }
            Pipeline::Floor => {
                out.push(("horizon", f(self.horizon)));
                out.push(("threshold", f(self.threshold)));
                out.push(("replicas", self.replicas.to_string()));
                out.push(("delta", f(self.thresholds.floor_delta)));
            }
        }
        if let Some(x) = self.start {
            out.push(("start", x.to_string()));
        }
        if let Some(s) = &self.initial {
            out.push(("initial", s.clone()));
        }
        out
    }

    pub fn manifest(&self, version: &str, wall_clock: f64, started_unix: u64) -> String {
        let mut text = format!(
            "# stirring {version}\n# started_unix={started_unix}\n# wall_clock_seconds={wall_clock:.3}\n"
        );
        for (k, v) in self.manifest_entries() {
            text.push_str(&format!("{k}={v}\n"));
        }
        text
    }
}
