//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! stderr (uncaptured) before asserting.

use std::io::Write;
use std::ops::ControlFlow;
use std::time::Instant;

use rand::Rng;

use stirring::auxwalk::{compare_extinction, ComparePlan, RateRequest};
use stirring::dynamics::{estimate_stationary_profile, sample_marginals, StationaryRun};
use stirring::estimators::killed_walk::{boundary_potential, feynman_kac_solve, hitting_floor_check};
use stirring::estimators::oracle::{MasterEquation, DEFAULT_GUARD};
use stirring::estimators::{linear_regression, scaling_table, tv_bound, ScalingPlan, Thresholds};
use stirring::harris::{
    coupled_marginals, survival_samples, CoupledSim, CoupledState, DiscrepancyLabels, SurvivalRequest,
};
use stirring::rng::replica_rng;
use stirring::{Configuration, CoupledConfiguration, ModelParams, Reservoir};

fn report(id: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "[criterion {id}] {verdict} {name}: {detail} ({:.1}s)\n",
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

const MARGINAL_TIMES: [f64; 3] = [1.0, 5.0, 25.0];

/// Largest `|mc - exact| / se` over sites and times, with the binomial SE of
/// the exact probability.
fn worst_z(exact: &[Vec<f64>], mc: &[Vec<f64>], replicas: usize) -> f64 {
    let mut worst = 0.0f64;
    for (e_row, m_row) in exact.iter().zip(mc) {
        for (&p, &q) in e_row.iter().zip(m_row) {
            let se = (p * (1.0 - p) / replicas as f64).sqrt();
            let z = if se > 0.0 { (q - p).abs() / se } else if q == p { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
        }
    }
    worst
}

fn exact_marginals(params: &ModelParams, c0: &Configuration) -> Vec<Vec<f64>> {
    let me = MasterEquation::single(params, DEFAULT_GUARD).unwrap();
    let p0 = me.point_mass(c0.to_index());
    MARGINAL_TIMES
        .iter()
        .map(|&t| me.site_marginals(&me.propagate(&p0, t)))
        .collect()
}

#[test]
fn criterion_1_oracle_equivalence() {
    let started = Instant::now();
    let th = Thresholds::default();
    let replicas = 100_000;
    let mut details = Vec::new();
    let mut pass = true;
    for (name, params, c0) in [
        ("current", ModelParams::current(1, 1.0), Configuration::empty(1)),
        ("density", ModelParams::density(1, 0.8, 0.3), "101".parse::<Configuration>().unwrap()),
    ] {
        let exact = exact_marginals(&params, &c0);
        let mc = sample_marginals(&params, &c0, &MARGINAL_TIMES, replicas, 21);
        let z = worst_z(&exact, &mc.mean, replicas);
        pass &= z <= th.sigma;
        details.push(format!("{name} max z = {z:.2}"));
    }
    report(1, "N=1 site marginals vs matrix exponential", pass, &details.join(", "), started);
    assert!(pass);
}

#[test]
fn criterion_2_coupling_marginal_law() {
    let started = Instant::now();
    let th = Thresholds::default();
    let replicas = 100_000;
    let params = ModelParams::current(1, 1.0);
    let upper: Configuration = "101".parse().unwrap();
    let lower = Configuration::empty(1);
    let c0 = CoupledConfiguration::compose(&upper, &lower).unwrap();
    let exact = exact_marginals(&params, &upper);
    let mc = coupled_marginals(&params, &c0, &MARGINAL_TIMES, replicas, 12);
    let z = worst_z(&exact, &mc.upper, replicas);
    let pass = z <= th.sigma;
    report(2, "copy 1 of the coupled current chain vs matrix exponential", pass, &format!("max z = {z:.2}"), started);
    assert!(pass);
}

#[test]
fn criterion_3_killed_walk_identity() {
    let started = Instant::now();
    let th = Thresholds::default();
    let replicas = 100_000;
    let n = 5;
    let params = ModelParams::density(n, 0.7, 0.2);
    let times = [5.0, 25.0, 50.0];
    let mc = coupled_marginals(&params, &CoupledConfiguration::all_discrepancies(n), &times, replicas, 13);
    let ode = feynman_kac_solve(n, 50.0, 0.005, &boundary_potential(n));
    let exact: Vec<Vec<f64>> = times.iter().map(|&t| ode.at(t)).collect();
    let z = worst_z(&exact, &mc.discrepancy, replicas);
    let pass = z <= th.sigma;
    report(3, "N=5 discrepancy survival vs killed-walk ODE", pass, &format!("max z = {z:.2}"), started);
    assert!(pass);
}

#[test]
fn criterion_4_inverse_square_scaling() {
    let started = Instant::now();
    let th = Thresholds::default();
    let plan = ScalingPlan::new(vec![4, 8, 16], 20_000);
    let table = scaling_table(&ModelParams::current(4, 1.0), &plan, 14);
    let (pass, detail) = match table {
        Ok(table) => {
            let flat = table.flatness();
            let r2_ok = table.rows.iter().all(|r| r.fit.r_squared > th.fit_r2_min);
            let rows: Vec<String> = table
                .rows
                .iter()
                .map(|r| format!("N={} bN^2={:.4} R^2={:.4}", r.n, r.normalized(), r.fit.r_squared))
                .collect();
            (
                flat <= th.scaling_ratio_max && r2_ok,
                format!("{}; max/min = {flat:.3}", rows.join(", ")),
            )
        }
        Err(e) => (false, format!("fit failed: {e}")),
    };
    report(4, "current reservoir b_N N^2 flat over N in {4,8,16}", pass, &detail, started);
    assert!(pass);
}

fn check_path(params: &ModelParams, seed: u64, index: u64) -> Result<(), String> {
    let mut rng = replica_rng(seed, index);
    let n = params.n;
    let len = params.lattice().len();
    // random ordered pair: lower <= upper sitewise
    let upper: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2)).collect();
    let lower: Vec<u8> = upper.iter().map(|&u| u & rng.gen_range(0..2)).collect();
    let upper = Configuration::from_occupancy(upper).unwrap();
    let lower = Configuration::from_occupancy(lower).unwrap();
    let c0 = CoupledConfiguration::compose(&upper, &lower).map_err(|e| e.to_string())?;
    let (mass_up, mass_low) = (upper.particle_count(), lower.particle_count());
    let silent = match params.reservoir {
        Reservoir::Current => params.j == 0.0,
        Reservoir::Density { .. } => false,
    };
    let labels = DiscrepancyLabels::uniform(&c0, &mut rng);
    let mut state = CoupledState { config: c0, labels };
    let sim = CoupledSim::new(params);
    let horizon = 4.0 * f64::from(n * n).max(1.0);
    let mut count = state.config.discrepancy_count();
    let mut violation = None;
    sim.run(&mut state, 0.0, horizon, &mut rng, |t, st, _| {
        let (u, l) = st.config.decompose();
        let ordered = u.occupancy().iter().zip(l.occupancy()).all(|(a, b)| a >= b);
        let now = st.config.discrepancy_count();
        let mut sites: Vec<i32> = st.config.discrepancy_sites().collect();
        let mut live = st.labels.live_positions();
        sites.sort_unstable();
        live.sort_unstable();
        let msg = if !ordered {
            Some(format!("order broken at t={t}"))
        } else if now > count {
            Some(format!("discrepancy count grew {count} -> {now} at t={t}"))
        } else if sites != live {
            Some(format!("labels out of sync at t={t}"))
        } else if silent && (u.particle_count() != mass_up || l.particle_count() != mass_low) {
            Some(format!("mass changed under pure stirring at t={t}"))
        } else {
            None
        };
        count = now;
        if let Some(m) = msg {
            violation = Some(m);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    });
    violation.map_or(Ok(()), Err)
}

#[test]
fn criterion_5_monotonicity_and_conservation() {
    let started = Instant::now();
    let paths = 1000u64;
    let mut violations = Vec::new();
    let mut rng = replica_rng(15, u64::MAX);
    for model in 0..3 {
        for p in 0..paths {
            let n = rng.gen_range(1..=6);
            let params = match model {
                0 => ModelParams::current(n, rng.gen_range(0.1..3.0)),
                1 => {
                    let a: f64 = rng.gen();
                    let b: f64 = rng.gen();
                    ModelParams::density(n, a.max(b), a.min(b))
                }
                _ => ModelParams::current(n, 0.0),
            };
            if let Err(e) = check_path(&params, 15 + model, p) {
                violations.push(format!("model {model} path {p}: {e}"));
            }
        }
    }
    let pass = violations.is_empty();
    let detail = format!(
        "{} paths each for current, density and silent boundaries, {} violations{}",
        paths,
        violations.len(),
        violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
    );
    report(5, "order, non-increasing discrepancies, conservation", pass, &detail, started);
    assert!(pass);
}

#[test]
fn criterion_6_stationary_profiles() {
    let started = Instant::now();
    let th = Thresholds::default();
    let n = 16;
    let n2 = f64::from(n * n);

    let density = ModelParams::density(n, 0.8, 0.2);
    let run = StationaryRun::with_defaults(&density, 10.0 * n2, 64);
    let prof = estimate_stationary_profile(&density, &run, 16);
    let x: Vec<f64> = prof.sites.iter().map(|&s| f64::from(s)).collect();
    let (_, slope, r2) = linear_regression(&x, &prof.mean);
    let density_ok = r2 > th.profile_r2_min && slope > 0.0;

    let current = ModelParams::current(n, 1.0);
    let run = StationaryRun::with_defaults(&current, 10.0 * n2, 64);
    let prof = estimate_stationary_profile(&current, &run, 17);
    let mut worst_sym = 0.0f64;
    for x in 0..=n as i32 {
        let (a, sa) = prof.at(x);
        let (b, sb) = prof.at(-x);
        let se = (sa * sa + sb * sb).sqrt();
        worst_sym = worst_sym.max((a + b - 1.0).abs() / se);
    }
    let mut worst_drop = 0.0f64;
    for w in 0..prof.sites.len() - 1 {
        let se = (prof.stderr[w].powi(2) + prof.stderr[w + 1].powi(2)).sqrt();
        worst_drop = worst_drop.max((prof.mean[w] - prof.mean[w + 1]) / se);
    }
    let current_ok = worst_sym <= th.sigma && worst_drop <= th.sigma;

    let pass = density_ok && current_ok;
    let detail = format!(
        "density R^2 = {r2:.4}; current max symmetry z = {worst_sym:.2}, max decrease z = {worst_drop:.2}"
    );
    report(6, "N=16 stationary profiles", pass, &detail, started);
    assert!(pass);
}

#[test]
fn criterion_7_auxiliary_walk_law() {
    let started = Instant::now();
    let th = Thresholds::default();
    let params = ModelParams::current(2, 1.0);
    // long enough for ~99% extinction, short enough that every boundary bin
    // still has coupled support; later deaths are censored in both samples
    let horizon = 10.0 * 4.0;
    let plan = ComparePlan {
        rates: RateRequest::standard(&params, horizon, 100_000),
        aux_replicas: 100_000,
        alpha: th.ks_alpha,
        bootstrap_rounds: 200,
        grid_points: 81,
    };
    let (pass, detail) = match compare_extinction(&params, &plan, 18) {
        Ok(rep) => (
            rep.agree,
            format!("KS D = {:.5}, critical = {:.5}, bootstrap p = {:.3}", rep.ks, rep.critical, rep.p_value),
        ),
        Err(e) => (false, format!("comparison failed: {e}")),
    };
    report(7, "tagged vs auxiliary-walk extinction times at N=2", pass, &detail, started);
    assert!(pass);
}

fn wilson_upper(p: f64, n: usize, z: f64) -> f64 {
    let n = n as f64;
    let z2 = z * z;
    (p + z2 / (2.0 * n) + z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()) / (1.0 + z2 / n)
}

#[test]
fn criterion_8_tv_bound_dominates() {
    let started = Instant::now();
    let th = Thresholds::default();
    let grid: Vec<f64> = (0..=50).map(|k| 0.5 * k as f64).collect();
    let mut pass = true;
    let mut details = Vec::new();
    for (name, params) in [
        ("current", ModelParams::current(1, 1.0)),
        ("density", ModelParams::density(1, 0.8, 0.3)),
    ] {
        let me = MasterEquation::single(&params, DEFAULT_GUARD).unwrap();
        // worst case over deterministic starts
        let exact: Vec<f64> = (0..me.dim())
            .map(|i| me.tv_decay(&me.point_mass(i), &grid).unwrap())
            .fold(vec![0.0; grid.len()], |acc, tv| acc.iter().zip(&tv).map(|(a, b)| a.max(*b)).collect());
        let mut req = SurvivalRequest::standard(&params, 25.0, grid.len(), 100_000);
        req.grid = grid.clone();
        let run = survival_samples(&params, &req, 19);
        let bound = tv_bound(&run.curve, 1);
        let sites = bound.bound[0] / run.curve.p_hat[0];
        let mut worst = f64::INFINITY;
        for k in 0..grid.len() {
            // one-sided: the bound may fall below only by sampling noise, taken
            // as the Wilson upper limit so that p_hat = 0 still carries error
            let upper = sites * wilson_upper(run.curve.p_hat[k], run.curve.n_replicas, th.sigma);
            let slack = upper - exact[k];
            worst = worst.min(slack);
            pass &= slack >= 0.0;
        }
        details.push(format!("{name} min slack = {worst:.4}"));
    }
    report(8, "(2N+1) P[tagged alive] >= exact distance at N=1", pass, &details.join(", "), started);
    assert!(pass);
}

#[test]
fn criterion_9_hitting_floor() {
    let started = Instant::now();
    let th = Thresholds::default();
    let n = 8;
    let est = hitting_floor_check(n, f64::from(n * n), 1.0, 10_000, 20);
    let (site, p, se) = est.minimum();
    let pass = p > th.floor_delta;
    report(
        9,
        "boundary hitting floor at N=8",
        pass,
        &format!("min over x at x={site}: {p:.4} +- {se:.4}"),
        started,
    );
    assert!(pass);
}
