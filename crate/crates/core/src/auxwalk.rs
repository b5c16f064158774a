//! Markovian projection of the tagged discrepancy.
//!
//! Conditioning the boundary transition rates of the tagged discrepancy on
//! its current position yields a time-inhomogeneous walk on `[-N, N]` with
//! extra inward jumps at the edges and position-dependent killing. Its
//! extinction time has the same law as the tagged discrepancy's; here the
//! conditional rates are estimated from coupled runs, binned in time, and the
//! walk is then simulated from the table.

use std::ops::ControlFlow;

use rand::Rng;

use crate::dynamics::Side;
use crate::error::{Error, Result};
use crate::estimators::SurvivalCurve;
use crate::harris::{tagged_start, CoupledSim, CoupledState, StartPolicy};
use crate::lattice::{CoupledConfiguration, ModelParams, SiteState};
use crate::rng::{self, derive_seed, map_replicas, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateKind {
    /// Killing, `d(z, t)`.
    Death,
    /// Extra inward jump from the edge, `a(+-N, t)`.
    Jump,
}

/// One conditional rate: which site it lives on and which environment
/// indicator it averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RateEntry {
    pub side: Side,
    pub kind: RateKind,
    /// `true` for the site next to the edge (`+-(N-1)`).
    pub inner: bool,
}

impl RateEntry {
    /// The six rates: deaths at `+-N` and `+-(N-1)`, jumps from `+-N`.
    pub const ALL: [RateEntry; 6] = [
        RateEntry { side: Side::Right, kind: RateKind::Death, inner: false },
        RateEntry { side: Side::Right, kind: RateKind::Death, inner: true },
        RateEntry { side: Side::Right, kind: RateKind::Jump, inner: false },
        RateEntry { side: Side::Left, kind: RateKind::Death, inner: false },
        RateEntry { side: Side::Left, kind: RateKind::Death, inner: true },
        RateEntry { side: Side::Left, kind: RateKind::Jump, inner: false },
    ];

    pub fn site(&self, n: i32) -> i32 {
        if self.inner {
            self.side.inner(n)
        } else {
            self.side.edge(n)
        }
    }

    /// Environment indicator whose conditional mean, times `j/2N`, is the rate.
    ///
    /// Right: `d(N) ~ 1 - eta_0(N-1)`, `d(N-1) ~ eta_1(N)`, `a(N) ~ eta_0(N-1)`.
    /// Left: the same with `eta_0` and `eta_1` exchanged.
    pub fn indicator(&self, c: &CoupledConfiguration) -> bool {
        let n = c.lattice().n();
        let (edge, inner) = (self.side.edge(n), self.side.inner(n));
        let (filled, emptied) = match self.side {
            Side::Right => (SiteState::One, SiteState::Zero),
            Side::Left => (SiteState::Zero, SiteState::One),
        };
        match (self.kind, self.inner) {
            (RateKind::Death, false) => c.get(inner) != emptied,
            (RateKind::Death, true) => c.get(edge) == filled,
            (RateKind::Jump, _) => c.get(inner) == emptied,
        }
    }
}

/// Piecewise-constant conditional rates on uniform time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub n: u32,
    pub rate_scale: f64,
    pub bin_width: f64,
    /// Per bin and entry: integral of the indicator over time spent at the entry's site.
    weighted: Vec<[f64; 6]>,
    /// Per bin and entry: total time spent at the entry's site, summed over replicas.
    exposure: Vec<[f64; 6]>,
    /// Per bin and entry: number of replicas that visited the entry's site.
    visits: Vec<[usize; 6]>,
}

/// `max(1, N^2/50)`.
pub fn default_bin_width(n: u32) -> f64 {
    (f64::from(n).powi(2) / 50.0).max(1.0)
}

impl RateTable {
    fn empty(params: &ModelParams, bin_width: f64, bins: usize) -> Self {
        Self {
            n: params.n,
            rate_scale: params.boundary_rate(),
            bin_width,
            weighted: vec![[0.0; 6]; bins],
            exposure: vec![[0.0; 6]; bins],
            visits: vec![[0; 6]; bins],
        }
    }

    /// Table with the given constant rates per entry (in `RateEntry::ALL` order).
    pub fn constant(params: &ModelParams, bin_width: f64, bins: usize, rates: [f64; 6]) -> Self {
        let scale = params.boundary_rate();
        let mut t = Self::empty(params, bin_width, bins);
        for b in 0..bins {
            for e in 0..6 {
                t.exposure[b][e] = 1.0;
                t.weighted[b][e] = if scale > 0.0 { rates[e] / scale } else { 0.0 };
                t.visits[b][e] = usize::MAX;
            }
        }
        t
    }

    pub fn bins(&self) -> usize {
        self.exposure.len()
    }

    /// End of the last bin.
    pub fn coverage(&self) -> f64 {
        self.bin_width * self.bins() as f64
    }

    pub fn bin_of(&self, t: f64) -> usize {
        (t / self.bin_width).floor() as usize
    }

    /// `None` when no replica spent time at the site during the bin.
    pub fn rate(&self, bin: usize, entry: usize) -> Option<f64> {
        let e = self.exposure[bin][entry];
        (e > 0.0).then(|| self.rate_scale * self.weighted[bin][entry] / e)
    }

    pub fn support(&self, bin: usize, entry: usize) -> usize {
        self.visits[bin][entry]
    }

    pub fn rate_for(&self, bin: usize, entry: RateEntry) -> Option<f64> {
        let k = RateEntry::ALL.iter().position(|&e| e == entry).expect("known entry");
        self.rate(bin, k)
    }

    fn merge(&mut self, other: &RateTable) {
        for b in 0..self.bins() {
            for e in 0..6 {
                self.weighted[b][e] += other.weighted[b][e];
                self.exposure[b][e] += other.exposure[b][e];
                self.visits[b][e] += other.visits[b][e];
            }
        }
    }

    /// Adds `[t0, t1)` spent at `z` in configuration `c`.
    fn accumulate(&mut self, z: i32, inds: &[bool; 6], sites: &[i32; 6], t0: f64, t1: f64, seen: &mut [Vec<bool>]) {
        let mut a = t0;
        while a < t1 {
            let b = self.bin_of(a);
            if b >= self.bins() {
                return;
            }
            let end = ((b + 1) as f64 * self.bin_width).min(t1);
            let dt = end - a;
            for e in 0..6 {
                if sites[e] == z {
                    self.exposure[b][e] += dt;
                    if inds[e] {
                        self.weighted[b][e] += dt;
                    }
                    if !seen[b][e] {
                        seen[b][e] = true;
                        self.visits[b][e] += 1;
                    }
                }
            }
            a = end;
        }
    }

    pub fn to_csv(&self) -> String {
        let n = self.n as i32;
        let mut out = String::from("bin_start,bin_end,site,rate_kind,value,support\n");
        for b in 0..self.bins() {
            let lo = b as f64 * self.bin_width;
            let hi = lo + self.bin_width;
            for (k, entry) in RateEntry::ALL.iter().enumerate() {
                let kind = match entry.kind {
                    RateKind::Death => "d",
                    RateKind::Jump => "a",
                };
                let value = self
                    .rate(b, k)
                    .map_or_else(|| "NA".to_string(), |v| format!("{v:.9}"));
                out.push_str(&format!(
                    "{lo:.6},{hi:.6},{},{kind},{value},{}\n",
                    entry.site(n),
                    self.visits[b][k]
                ));
            }
        }
        out
    }
}

/// Rate table plus the extinction times of the coupled runs it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub table: RateTable,
    pub extinction_times: Vec<Option<f64>>,
    /// `(bin, entry)` pairs with fewer visiting replicas than the support floor.
    pub low_support: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRequest {
    pub initial: CoupledConfiguration,
    pub policy: StartPolicy,
    pub bin_width: f64,
    pub horizon: f64,
    pub replicas: usize,
    /// Minimum number of visiting replicas before a bin is flagged.
    pub support_floor: usize,
}

impl RateRequest {
    pub fn standard(params: &ModelParams, horizon: f64, replicas: usize) -> Self {
        Self {
            initial: CoupledConfiguration::all_discrepancies(params.n),
            policy: StartPolicy::Uniform,
            bin_width: default_bin_width(params.n),
            horizon,
            replicas,
            support_floor: 30,
        }
    }

    fn bins(&self) -> usize {
        (self.horizon / self.bin_width).ceil().max(1.0) as usize
    }
}

struct Env {
    z: Option<i32>,
    inds: [bool; 6],
}

fn env_of(state: &CoupledState) -> Env {
    let z = state.labels.position(1);
    let mut inds = [false; 6];
    for (k, e) in RateEntry::ALL.iter().enumerate() {
        inds[k] = e.indicator(&state.config);
    }
    Env { z, inds }
}

fn tagged_replica(
    sim: &CoupledSim,
    params: &ModelParams,
    req: &RateRequest,
    rng: &mut SimRng,
) -> (RateTable, Option<f64>) {
    let n = params.n as i32;
    let sites: [i32; 6] = std::array::from_fn(|k| RateEntry::ALL[k].site(n));
    let mut table = RateTable::empty(params, req.bin_width, req.bins());
    let mut seen = vec![vec![false; 6]; req.bins()];
    let mut state = tagged_start(&req.initial, req.policy, rng);
    let mut env = env_of(&state);
    let mut last = 0.0;
    let mut death = None;
    sim.run(&mut state, 0.0, req.horizon, rng, |t, st, _| {
        if let Some(z) = env.z {
            table.accumulate(z, &env.inds, &sites, last, t, &mut seen);
        }
        last = t;
        env = env_of(st);
        if env.z.is_none() {
            death = Some(t);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    });
    if let (None, Some(z)) = (death, env.z) {
        table.accumulate(z, &env.inds, &sites, last, req.horizon, &mut seen);
    }
    (table, death)
}

/// Estimates the conditional rates from `req.replicas` coupled runs.
pub fn estimate_rates(params: &ModelParams, req: &RateRequest, seed: u64) -> RateEstimate {
    assert!(req.replicas >= 1);
    let sim = CoupledSim::new(params);
    let per = map_replicas(req.replicas, |r| {
        let mut rng = rng::replica_rng(seed, r as u64);
        tagged_replica(&sim, params, req, &mut rng)
    });
    let mut table = RateTable::empty(params, req.bin_width, req.bins());
    let mut extinction_times = Vec::with_capacity(per.len());
    for (t, d) in &per {
        table.merge(t);
        extinction_times.push(*d);
    }
    let n = params.n as i32;
    let mut low_support = Vec::new();
    for b in 0..table.bins() {
        for (k, e) in RateEntry::ALL.iter().enumerate() {
            // the inner death rates only matter where N-1 is not interior
            if e.site(n).abs() >= n - 1 && table.visits[b][k] < req.support_floor {
                low_support.push((b, k));
            }
        }
    }
    RateEstimate {
        table,
        extinction_times,
        low_support,
    }
}

/// Simulates the auxiliary walk from `z0` until death or `horizon`.
///
/// Rates are piecewise constant per bin; thinning against the dominating
/// rate `1 + 2 j/2N` handles bin boundaries exactly. Returns the death time,
/// `None` if alive at the horizon.
pub fn evolve_aux(table: &RateTable, z0: i32, horizon: f64, rng: &mut SimRng) -> Result<Option<f64>> {
    let n = table.n as i32;
    assert!(z0.abs() <= n, "start outside the lattice");
    if horizon > table.coverage() + 1e-9 {
        return Err(Error::MissingRates {
            site: z0,
            bin_start: table.coverage(),
        });
    }
    let sites: [i32; 6] = std::array::from_fn(|k| RateEntry::ALL[k].site(n));
    let bound = 1.0 + 2.0 * table.rate_scale;
    let mut z = z0;
    let mut t = 0.0;
    loop {
        t += rng::exponential(rng, bound);
        if t >= horizon {
            return Ok(None);
        }
        let bin = table.bin_of(t).min(table.bins() - 1);
        let mut death = 0.0;
        let mut jump = 0.0;
        for k in 0..6 {
            if sites[k] != z {
                continue;
            }
            let r = table.rate(bin, k).ok_or(Error::MissingRates {
                site: z,
                bin_start: bin as f64 * table.bin_width,
            })?;
            match RateEntry::ALL[k].kind {
                RateKind::Death => death += r,
                RateKind::Jump => jump += r,
            }
        }
        let left = if z > -n { 0.5 } else { 0.0 };
        let right = if z < n { 0.5 } else { 0.0 };
        let u = rng.gen::<f64>() * bound;
        if u < death {
            return Ok(Some(t));
        }
        let mut acc = death;
        acc += left;
        if u < acc {
            z -= 1;
            continue;
        }
        acc += right;
        if u < acc {
            z += 1;
            continue;
        }
        acc += jump;
        if u < acc {
            z = if z == n { n - 1 } else { -n + 1 };
        }
    }
}

/// Two-sample Kolmogorov-Smirnov statistic; `None` counts as `+inf`.
pub fn ks_statistic(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let key = |v: &Option<f64>| v.unwrap_or(f64::INFINITY);
    let mut x: Vec<f64> = a.iter().map(key).collect();
    let mut y: Vec<f64> = b.iter().map(key).collect();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut k) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && k < y.len() {
        let v = x[i].min(y[k]);
        while i < x.len() && x[i] == v {
            i += 1;
        }
        while k < y.len() && y[k] == v {
            k += 1;
        }
        d = d.max((i as f64 / n - k as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample critical value at level `alpha`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Bootstrap p-value: resample the pooled sample into groups of the original sizes.
pub fn ks_bootstrap_p_value(a: &[Option<f64>], b: &[Option<f64>], rounds: usize, seed: u64) -> f64 {
    let d = ks_statistic(a, b);
    let pooled: Vec<Option<f64>> = a.iter().chain(b).copied().collect();
    let exceed = map_replicas(rounds, |r| {
        let mut rng = rng::replica_rng(seed, r as u64);
        let draw = |rng: &mut SimRng, len: usize| -> Vec<Option<f64>> {
            (0..len).map(|_| pooled[rng.gen_range(0..pooled.len())]).collect()
        };
        let x = draw(&mut rng, a.len());
        let y = draw(&mut rng, b.len());
        ks_statistic(&x, &y) >= d
    });
    (exceed.iter().filter(|&&e| e).count() as f64 + 1.0) / (rounds as f64 + 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub coupled: SurvivalCurve,
    pub auxiliary: SurvivalCurve,
    pub ks: f64,
    pub critical: f64,
    pub alpha: f64,
    pub p_value: f64,
    pub agree: bool,
    pub table: RateTable,
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        format!(
            "two-sample KS on extinction times\nreplicas_coupled = {}\nreplicas_auxiliary = {}\nks_statistic = {:.6}\ncritical_value(alpha={}) = {:.6}\nbootstrap_p_value = {:.4}\nverdict = {}\n",
            self.coupled.n_replicas,
            self.auxiliary.n_replicas,
            self.ks,
            self.alpha,
            self.critical,
            self.p_value,
            if self.agree { "agree" } else { "disagree" }
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p_coupled,stderr_coupled,p_auxiliary,stderr_auxiliary\n");
        for k in 0..self.coupled.grid.len() {
            out.push_str(&format!(
                "{:.6},{:.9},{:.9},{:.9},{:.9}\n",
                self.coupled.grid[k],
                self.coupled.p_hat[k],
                self.coupled.stderr[k],
                self.auxiliary.p_hat[k],
                self.auxiliary.stderr[k]
            ));
        }
        out
    }
}

/// Extinction times of `replicas` auxiliary walks started as `req` prescribes.
pub fn aux_extinction_times(table: &RateTable, req: &RateRequest, replicas: usize, seed: u64) -> Result<Vec<Option<f64>>> {
    let starts = req.initial.discrepancy_sites().collect::<Vec<_>>();
    map_replicas(replicas, |r| {
        let mut rng = rng::replica_rng(seed, r as u64);
        let z0 = match req.policy {
            StartPolicy::Fixed(x) => x,
            StartPolicy::Uniform => starts[rng.gen_range(0..starts.len())],
        };
        evolve_aux(table, z0, req.horizon, &mut rng)
    })
    .into_iter()
    .collect()
}

fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| horizon * k as f64 / (points - 1).max(1) as f64)
        .collect()
}

/// Auxiliary-walk survival from tables binned at `w` and at `w / 2`, with
/// the walks driven by common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionCheck {
    pub coarse: SurvivalCurve,
    pub fine: SurvivalCurve,
    /// Largest `|coarse - fine|` over the grid.
    pub max_gap: f64,
    /// Combined standard error at that grid point.
    pub gap_stderr: f64,
}

impl ResolutionCheck {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p_coarse,p_fine,difference\n");
        for k in 0..self.coarse.grid.len() {
            let (a, b) = (self.coarse.p_hat[k], self.fine.p_hat[k]);
            out.push_str(&format!("{:.6},{a:.9},{b:.9},{:.9}\n", self.coarse.grid[k], a - b));
        }
        out
    }
}

pub fn resolution_check(
    params: &ModelParams,
    req: &RateRequest,
    aux_replicas: usize,
    grid_points: usize,
    seed: u64,
) -> Result<ResolutionCheck> {
    let grid = uniform_grid(req.horizon, grid_points);
    let aux_seed = derive_seed(seed, 2);
    let mut curves = Vec::with_capacity(2);
    for width in [req.bin_width, req.bin_width / 2.0] {
        let r = RateRequest {
            bin_width: width,
            ..req.clone()
        };
        let est = estimate_rates(params, &r, derive_seed(seed, 1));
        let times = aux_extinction_times(&est.table, &r, aux_replicas, aux_seed)?;
        curves.push(SurvivalCurve::from_extinction_times(grid.clone(), &times));
    }
    let fine = curves.pop().expect("two curves");
    let coarse = curves.pop().expect("two curves");
    let (k, max_gap) = (0..grid.len())
        .map(|k| (k, (coarse.p_hat[k] - fine.p_hat[k]).abs()))
        .fold((0, 0.0), |best, x| if x.1 > best.1 { x } else { best });
    let gap_stderr = (coarse.stderr[k].powi(2) + fine.stderr[k].powi(2)).sqrt();
    Ok(ResolutionCheck {
        coarse,
        fine,
        max_gap,
        gap_stderr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparePlan {
    pub rates: RateRequest,
    pub aux_replicas: usize,
    pub alpha: f64,
    pub bootstrap_rounds: usize,
    pub grid_points: usize,
}

/// Runs the tagged discrepancy and the auxiliary walk built from its own
/// conditional rates, and tests equality of the extinction-time laws.
pub fn compare_extinction(params: &ModelParams, plan: &ComparePlan, seed: u64) -> Result<ComparisonReport> {
    let req = &plan.rates;
    let est = estimate_rates(params, req, derive_seed(seed, 1));
    let table = est.table;
    let aux = aux_extinction_times(&table, req, plan.aux_replicas, derive_seed(seed, 2))?;
    let grid = uniform_grid(req.horizon, plan.grid_points);
    let coupled = SurvivalCurve::from_extinction_times(grid.clone(), &est.extinction_times);
    let auxiliary = SurvivalCurve::from_extinction_times(grid, &aux);
    let ks = ks_statistic(&est.extinction_times, &aux);
    let critical = ks_critical_value(est.extinction_times.len(), aux.len(), plan.alpha);
    let p_value = ks_bootstrap_p_value(&est.extinction_times, &aux, plan.bootstrap_rounds, derive_seed(seed, 3));
    Ok(ComparisonReport {
        coupled,
        auxiliary,
        ks,
        critical,
        alpha: plan.alpha,
        p_value,
        agree: ks <= critical,
        table,
    })
}
