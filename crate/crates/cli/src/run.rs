//! Pipelines. Each returns the files it wants written; nothing touches the
//! disk here.

use stirring::auxwalk::{aux_extinction_times, compare_extinction, estimate_rates, resolution_check, ComparePlan, RateRequest};
use stirring::dynamics::{estimate_stationary_profile, evolve, StationaryRun};
use stirring::estimators::killed_walk::{feynman_kac_solve, hitting_floor_check, killed_walk_decay_rate};
use stirring::estimators::oracle::{matrix_to_text, MasterEquation};
use stirring::estimators::{fit_exponential_rate, linear_regression, scaling_table, tv_bound, RateFit, ScalingPlan, SurvivalCurve};
use stirring::harris::{evolve_coupled, snapshots_to_csv, survival_samples, StartPolicy, SurvivalRequest};
use stirring::rng::derive_seed;
use stirring::{Configuration, CoupledConfiguration, Error, Lattice};

use crate::spec::{Pipeline, RunSpec};

/// A produced file: name without extension for tables, full name for text.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Table { stem: String, csv: String },
    Text { name: String, body: String },
}

fn table(stem: &str, csv: String) -> Artifact {
    Artifact::Table {
        stem: stem.to_string(),
        csv,
    }
}

fn text(name: &str, body: String) -> Artifact {
    Artifact::Text {
        name: name.to_string(),
        body,
    }
}

/// Outcome of a pipeline: artifacts, plus an error to report after they are
/// written (a fit that fails still leaves its survival curve behind).
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub error: Option<Error>,
}

impl From<Vec<Artifact>> for Outcome {
    fn from(artifacts: Vec<Artifact>) -> Self {
        Self { artifacts, error: None }
    }
}

fn grid(horizon: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| horizon * k as f64 / (points - 1) as f64)
        .collect()
}

fn fit_csv(fit: &RateFit, n: u32) -> String {
    format!("{}{}", RateFit::CSV_HEADER, fit.csv_row(n))
}

pub fn execute(spec: &RunSpec) -> Result<Outcome, Error> {
    match spec.pipeline {
        Pipeline::Simulate => simulate(spec).map(Into::into),
        Pipeline::Survival => Ok(survival(spec)),
        Pipeline::Scaling => scaling(spec).map(Into::into),
        Pipeline::Stationary => stationary(spec).map(Into::into),
        Pipeline::Auxwalk => auxwalk(spec).map(Into::into),
        Pipeline::Oracle => oracle(spec).map(Into::into),
        Pipeline::Compare => compare(spec).map(Into::into),
        Pipeline::Fk => Ok(fk(spec).into()),
        Pipeline::Floor => Ok(floor(spec)),
    }
}

fn simulate(spec: &RunSpec) -> Result<Vec<Artifact>, Error> {
    let p = &spec.params;
    let initial = spec.initial.clone().unwrap_or_else(|| Configuration::empty(p.n).to_string());
    if let Ok(c0) = initial.parse::<Configuration>() {
        let traj = evolve(&c0, spec.horizon, p, spec.seed);
        return Ok(vec![table("trajectory", traj.to_csv())]);
    }
    let c0: CoupledConfiguration = initial.parse()?;
    let snaps = evolve_coupled(&c0, p, &grid(spec.horizon, spec.points), spec.seed);
    Ok(vec![table("coupled", snapshots_to_csv(&snaps))])
}

fn survival(spec: &RunSpec) -> Outcome {
    let p = &spec.params;
    let mut req = SurvivalRequest::standard(p, spec.horizon, spec.points, spec.replicas);
    if let Some(s) = &spec.initial {
        req.initial = s.parse().expect("validated initial configuration");
    }
    if let Some(x) = spec.start {
        req.policy = StartPolicy::Fixed(x);
    }
    let run = survival_samples(p, &req, spec.seed);
    let mut artifacts = vec![
        table("survival", run.curve.to_csv()),
        table("tv_bound", tv_bound(&run.curve, p.n).to_csv()),
    ];
    let error = match fit_exponential_rate(&run.curve, spec.window) {
        Ok(fit) => {
            artifacts.push(table("fit", fit_csv(&fit, p.n)));
            None
        }
        Err(e) => Some(e),
    };
    Outcome { artifacts, error }
}

fn scaling(spec: &RunSpec) -> Result<Vec<Artifact>, Error> {
    let plan = ScalingPlan::new(spec.n_list.clone(), spec.replicas);
    let t = scaling_table(&spec.params, &plan, spec.seed)?;
    let mut out = vec![
        table("scaling", t.to_csv()),
        table("fits", t.fits_csv()),
        text("flatness.txt", format!("max_over_min_b_n2 = {:.6}\n", t.flatness())),
    ];
    for row in &t.rows {
        out.push(table(&format!("survival_n{}", row.n), row.curve.to_csv()));
    }
    Ok(out)
}

fn stationary(spec: &RunSpec) -> Result<Vec<Artifact>, Error> {
    let p = &spec.params;
    let initial = match &spec.initial {
        Some(s) => s.parse()?,
        None => Configuration::empty(p.n),
    };
    let run = StationaryRun {
        initial,
        burn_in: spec.burn_in,
        sample_horizon: spec.horizon,
        replicas: spec.replicas,
    };
    let prof = estimate_stationary_profile(p, &run, spec.seed);
    let x: Vec<f64> = prof.sites.iter().map(|&s| f64::from(s)).collect();
    let (a, b, r2) = linear_regression(&x, &prof.mean);
    Ok(vec![
        table("profile", prof.to_csv()),
        text(
            "profile_fit.txt",
            format!("intercept = {a:.9}\nslope = {b:.9}\nr_squared = {r2:.9}\n"),
        ),
    ])
}

fn rate_request(spec: &RunSpec) -> RateRequest {
    let mut req = RateRequest::standard(&spec.params, spec.horizon, spec.replicas);
    req.bin_width = spec.bin_width;
    if let Some(x) = spec.start {
        req.policy = StartPolicy::Fixed(x);
    }
    req
}

fn auxwalk(spec: &RunSpec) -> Result<Vec<Artifact>, Error> {
    let p = &spec.params;
    let req = rate_request(spec);
    let est = estimate_rates(p, &req, derive_seed(spec.seed, 1));
    let deaths = aux_extinction_times(&est.table, &req, spec.aux_replicas, derive_seed(spec.seed, 2))?;
    let curve = SurvivalCurve::from_extinction_times(grid(spec.horizon, spec.points), &deaths);
    let check = resolution_check(p, &req, spec.aux_replicas, spec.points, spec.seed)?;
    let mut low = String::from("bin,entry\n");
    for (b, e) in &est.low_support {
        low.push_str(&format!("{b},{e}\n"));
    }
    Ok(vec![
        table("rates", est.table.to_csv()),
        table("aux_survival", curve.to_csv()),
        table("low_support", low),
        table("resolution", check.to_csv()),
        text(
            "resolution.txt",
            format!("max_gap = {:.9}\ngap_stderr = {:.9}\n", check.max_gap, check.gap_stderr),
        ),
    ])
}

fn oracle(spec: &RunSpec) -> Result<Vec<Artifact>, Error> {
    let p = &spec.params;
    let me = MasterEquation::single(p, spec.guard)?;
    let mu = me.stationary()?;
    let mut stat = String::from("state,configuration,probability\n");
    for (i, w) in mu.iter().enumerate() {
        stat.push_str(&format!("{i},{},{w:.15e}\n", Configuration::from_index(p.n, i)));
    }
    let start = match &spec.initial {
        Some(s) => s.parse::<Configuration>()?,
        None => Configuration::empty(p.n),
    };
    let times = grid(spec.horizon, spec.points);
    let tv = me.tv_decay(&me.point_mass(start.to_index()), &times)?;
    let mut tv_csv = String::from("t,distance\n");
    for (t, d) in times.iter().zip(&tv) {
        tv_csv.push_str(&format!("{t:.6},{d:.15e}\n"));
    }
    let marg = me.site_marginals(&mu);
    let mut prof = String::from("site,occupation\n");
    for (i, m) in marg.iter().enumerate() {
        prof.push_str(&format!("{},{m:.15e}\n", Lattice::new(p.n).site(i)));
    }
    let gap = me.spectral_gap()?;
    Ok(vec![
        text("generator.txt", matrix_to_text(&me.generator)),
        table("stationary", stat),
        table("stationary_profile", prof),
        table("tv_decay", tv_csv),
        text("gap.txt", format!("spectral_gap = {gap:.15e}\n")),
    ])
}

fn compare(spec: &RunSpec) -> Result<Vec<Artifact>, Error> {
    let plan = ComparePlan {
        rates: rate_request(spec),
        aux_replicas: spec.aux_replicas,
        alpha: spec.thresholds.ks_alpha,
        bootstrap_rounds: spec.bootstrap,
        grid_points: spec.points,
    };
    let rep = compare_extinction(&spec.params, &plan, spec.seed)?;
    Ok(vec![
        table("rates", rep.table.to_csv()),
        table("compare", rep.to_csv()),
        text("ks.txt", rep.to_text()),
    ])
}

fn fk(spec: &RunSpec) -> Vec<Artifact> {
    let n = spec.params.n;
    let lattice = Lattice::new(n);
    let pot: Vec<f64> = lattice
        .sites()
        .map(|x| if x.abs() == lattice.n() { spec.edge_rate } else { 0.0 })
        .collect();
    let sol = feynman_kac_solve(n, spec.horizon, spec.step, &pot);
    let rate = killed_walk_decay_rate(n, &pot);
    vec![
        table("fk", sol.to_csv()),
        text("decay.txt", format!("decay_rate = {rate:.15e}\ndecay_rate_times_n2 = {:.15e}\n", rate * f64::from(n * n))),
    ]
}

fn floor(spec: &RunSpec) -> Outcome {
    let est = hitting_floor_check(spec.params.n, spec.horizon, spec.threshold, spec.replicas, spec.seed);
    let (site, p, se) = est.minimum();
    let delta = spec.thresholds.floor_delta;
    let ok = p > delta;
    let summary = format!(
        "min_site = {site}\nmin_p_hat = {p:.9}\nmin_stderr = {se:.9}\ndelta = {delta}\nverdict = {}\n",
        if ok { "above" } else { "below" }
    );
    Outcome {
        artifacts: vec![table("floor", est.to_csv()), text("floor.txt", summary)],
        error: None,
    }
}
