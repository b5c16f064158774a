//! Exact event-driven evolution of a single copy.
//!
//! The event alphabet is the stirring of each bond at rate 1/2 plus the
//! boundary clocks of the chosen reservoir. [`clocks`] is the single source
//! of truth for rates: the Gillespie loop here and the generator matrix in
//! [`crate::estimators::oracle`] both read it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, CoupledConfiguration, Lattice, ModelParams, Reservoir};
use crate::rng::{self, map_replicas, SimRng};

/// Stirring rate of every bond.
pub const STIR_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Boundary site `-N` or `N`.
    pub fn edge(self, n: i32) -> i32 {
        match self {
            Side::Left => -n,
            Side::Right => n,
        }
    }

    /// Neighbour of the edge inside the boundary window: `-N+1` or `N-1`.
    pub fn inner(self, n: i32) -> i32 {
        match self {
            Side::Left => -n + 1,
            Side::Right => n - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Exchange the contents of `x` and `x + 1`.
    Stir(i32),
    /// Density reservoir: set the edge site on `side` to `value`.
    DensitySet { side: Side, value: u8 },
    /// Current reservoir: birth at `site` in `{N-1, N}` when it is the last empty site.
    CurrentBirth(i32),
    /// Current reservoir: death at `site` in `{-N, -N+1}` when it is the first occupied site.
    CurrentDeath(i32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clock {
    pub event: EventKind,
    pub rate: f64,
}

/// Every clock of the single-copy chain with a positive rate.
pub fn clocks(params: &ModelParams) -> Vec<Clock> {
    let lattice = params.lattice();
    let n = lattice.n();
    let mut out: Vec<Clock> = lattice
        .bonds()
        .map(|x| Clock {
            event: EventKind::Stir(x),
            rate: STIR_RATE,
        })
        .collect();
    match params.reservoir {
        Reservoir::Density {
            rho_plus,
            rho_minus,
        } => {
            for (side, rho) in [(Side::Right, rho_plus), (Side::Left, rho_minus)] {
                out.push(Clock {
                    event: EventKind::DensitySet { side, value: 1 },
                    rate: rho,
                });
                out.push(Clock {
                    event: EventKind::DensitySet { side, value: 0 },
                    rate: 1.0 - rho,
                });
            }
        }
        Reservoir::Current => {
            let rate = params.boundary_rate();
            for x in [n - 1, n] {
                out.push(Clock {
                    event: EventKind::CurrentBirth(x),
                    rate,
                });
            }
            for x in [-n, -n + 1] {
                out.push(Clock {
                    event: EventKind::CurrentDeath(x),
                    rate,
                });
            }
        }
    }
    out.retain(|c| c.rate > 0.0);
    out
}

/// `D_+ eta(x) = (1 - eta(x)) eta(x+1) ... eta(N)`.
pub fn birth_indicator(c: &Configuration, x: i32) -> bool {
    let n = c.lattice().n();
    c.get(x) == 0 && (x + 1..=n).all(|y| c.get(y) == 1)
}

/// `D_- eta(x) = eta(x) (1 - eta(x-1)) ... (1 - eta(-N))`.
pub fn death_indicator(c: &Configuration, x: i32) -> bool {
    let n = c.lattice().n();
    c.get(x) == 1 && (-n..x).all(|y| c.get(y) == 0)
}

/// Applies a valid event in place. Returns whether the configuration changed.
#[inline]
pub fn fire(c: &mut Configuration, event: EventKind) -> bool {
    match event {
        EventKind::Stir(x) => {
            let changed = c.get(x) != c.get(x + 1);
            c.swap(x);
            changed
        }
        EventKind::DensitySet { side, value } => {
            let x = side.edge(c.lattice().n());
            let changed = c.get(x) != value;
            c.set(x, value);
            changed
        }
        EventKind::CurrentBirth(x) => {
            if birth_indicator(c, x) {
                c.set(x, 1);
                true
            } else {
                false
            }
        }
        EventKind::CurrentDeath(x) => {
            if death_indicator(c, x) {
                c.set(x, 0);
                true
            } else {
                false
            }
        }
    }
}

/// Word types that stirring acts on.
pub trait Stirrable: Clone {
    fn lattice(&self) -> Lattice;
    fn swap_bond(&mut self, x: i32);
}

impl Stirrable for Configuration {
    fn lattice(&self) -> Lattice {
        Configuration::lattice(self)
    }
    fn swap_bond(&mut self, x: i32) {
        self.swap(x)
    }
}

impl Stirrable for CoupledConfiguration {
    fn lattice(&self) -> Lattice {
        CoupledConfiguration::lattice(self)
    }
    fn swap_bond(&mut self, x: i32) {
        self.swap(x)
    }
}

pub fn apply_stirring<C: Stirrable>(c: &C, bond: i32) -> Result<C> {
    let n = c.lattice().n();
    if !(-n..n).contains(&bond) {
        return Err(Error::BondOutOfRange { bond });
    }
    let mut out = c.clone();
    out.swap_bond(bond);
    Ok(out)
}

pub fn apply_density_boundary(
    c: &Configuration,
    params: &ModelParams,
    side: Side,
    value: u8,
) -> Result<Configuration> {
    if params.reservoir.is_current() {
        return Err(Error::WrongModel("current-reservoir"));
    }
    let mut out = c.clone();
    fire(&mut out, EventKind::DensitySet { side, value });
    Ok(out)
}

/// Right side: birth at the last empty site of `{N-1, N}`; left side: death at
/// the first occupied site of `{-N, -N+1}`. Identity when no site qualifies.
pub fn apply_current_boundary(
    c: &Configuration,
    params: &ModelParams,
    side: Side,
) -> Result<Configuration> {
    if !params.reservoir.is_current() {
        return Err(Error::WrongModel("density-reservoir"));
    }
    let n = c.lattice().n();
    let mut out = c.clone();
    match side {
        Side::Right => {
            if let Some(x) = [n, n - 1].into_iter().find(|&x| birth_indicator(c, x)) {
                out.set(x, 1);
            }
        }
        Side::Left => {
            if let Some(x) = [-n, -n + 1].into_iter().find(|&x| death_indicator(c, x)) {
                out.set(x, 0);
            }
        }
    }
    Ok(out)
}

/// Gillespie sampler over a fixed clock table.
#[derive(Debug, Clone)]
pub struct SingleCopy {
    clocks: Vec<Clock>,
    cumulative: Vec<f64>,
    total: f64,
}

impl SingleCopy {
    pub fn new(params: &ModelParams) -> Self {
        let clocks = clocks(params);
        let mut acc = 0.0;
        let cumulative = clocks
            .iter()
            .map(|c| {
                acc += c.rate;
                acc
            })
            .collect();
        Self {
            clocks,
            cumulative,
            total: acc,
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    fn pick(&self, rng: &mut SimRng) -> EventKind {
        let u = rng.gen::<f64>() * self.total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.clocks[i.min(self.clocks.len() - 1)].event
    }

    /// Advances `c` from `t0` to `t1`, calling `on_change(t, c)` after each
    /// event that modifies the configuration.
    pub fn run<F>(&self, c: &mut Configuration, t0: f64, t1: f64, rng: &mut SimRng, mut on_change: F)
    where
        F: FnMut(f64, &Configuration),
    {
        if self.total <= 0.0 {
            return;
        }
        let mut t = t0;
        loop {
            t += rng::exponential(rng, self.total);
            if t > t1 {
                // the pending event is discarded; memorylessness makes this exact
                return;
            }
            if fire(c, self.pick(rng)) {
                on_change(t, c);
            }
        }
    }
}

/// A sampled path: the initial state and every subsequent state change.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    pub seed: u64,
    pub horizon: f64,
}

impl Trajectory {
    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> &Configuration {
        let i = self.times.partition_point(|&s| s <= t);
        &self.states[i.saturating_sub(1)]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,configuration\n");
        for (t, c) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.9},{c}\n"));
        }
        out
    }
}

pub fn evolve(c0: &Configuration, horizon: f64, params: &ModelParams, seed: u64) -> Trajectory {
    let sim = SingleCopy::new(params);
    let mut rng = rng::replica_rng(seed, 0);
    let mut times = vec![0.0];
    let mut states = vec![c0.clone()];
    let mut c = c0.clone();
    sim.run(&mut c, 0.0, horizon, &mut rng, |t, c| {
        times.push(t);
        states.push(c.clone());
    });
    Trajectory {
        times,
        states,
        seed,
        horizon,
    }
}

/// Empirical per-site occupation probabilities at fixed times.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteMarginals {
    pub times: Vec<f64>,
    /// `mean[k][i]`: fraction of replicas occupied at storage offset `i` at `times[k]`.
    pub mean: Vec<Vec<f64>>,
    pub replicas: usize,
}

impl SiteMarginals {
    pub fn from_counts(times: &[f64], counts: Vec<Vec<u64>>, replicas: usize) -> Self {
        let mean = counts
            .into_iter()
            .map(|row| row.into_iter().map(|k| k as f64 / replicas as f64).collect())
            .collect();
        Self {
            times: times.to_vec(),
            mean,
            replicas,
        }
    }

    /// Binomial standard error of an entry.
    pub fn stderr(&self, k: usize, i: usize) -> f64 {
        let p = self.mean[k][i];
        (p * (1.0 - p) / self.replicas as f64).sqrt()
    }
}

/// Monte Carlo occupation probabilities at `times` (ascending) from `c0`.
pub fn sample_marginals(
    params: &ModelParams,
    c0: &Configuration,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> SiteMarginals {
    let sim = SingleCopy::new(params);
    let snapshots = map_replicas(replicas, |r| {
        let mut rng = rng::replica_rng(seed, r as u64);
        let mut c = c0.clone();
        let mut t = 0.0;
        times
            .iter()
            .map(|&target| {
                sim.run(&mut c, t, target, &mut rng, |_, _| {});
                t = target;
                c.occupancy().to_vec()
            })
            .collect::<Vec<_>>()
    });
    let len = c0.lattice().len();
    let mut counts = vec![vec![0u64; len]; times.len()];
    for snap in snapshots {
        for (row, occ) in counts.iter_mut().zip(snap) {
            for (k, v) in row.iter_mut().zip(occ) {
                *k += v as u64;
            }
        }
    }
    SiteMarginals::from_counts(times, counts, replicas)
}

/// Per-site stationary mean occupation with replica standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub sites: Vec<i32>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

impl Profile {
    pub fn at(&self, x: i32) -> (f64, f64) {
        let i = self.sites.iter().position(|&s| s == x).expect("site in profile");
        (self.mean[i], self.stderr[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,mean,stderr,n_samples\n");
        for ((x, m), s) in self.sites.iter().zip(&self.mean).zip(&self.stderr) {
            out.push_str(&format!("{x},{m:.9},{s:.9},{}\n", self.n_samples));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryRun {
    pub initial: Configuration,
    pub burn_in: f64,
    pub sample_horizon: f64,
    pub replicas: usize,
}

impl StationaryRun {
    /// Empty start and burn-in `10 N^2`.
    pub fn with_defaults(params: &ModelParams, sample_horizon: f64, replicas: usize) -> Self {
        let n = f64::from(params.n);
        Self {
            initial: Configuration::empty(params.n),
            burn_in: 10.0 * n * n,
            sample_horizon,
            replicas,
        }
    }
}

/// Time average of the occupations over `[burn_in, burn_in + sample_horizon]`,
/// then averaged over replicas.
pub fn estimate_stationary_profile(params: &ModelParams, run: &StationaryRun, seed: u64) -> Profile {
    assert!(run.replicas >= 1, "need at least one replica");
    assert!(run.sample_horizon > 0.0, "sample horizon must be positive");
    let sim = SingleCopy::new(params);
    let lattice = params.lattice();
    let t0 = run.burn_in;
    let t1 = run.burn_in + run.sample_horizon;
    let per_replica = map_replicas(run.replicas, |r| {
        let mut rng = rng::replica_rng(seed, r as u64);
        let mut c = run.initial.clone();
        sim.run(&mut c, 0.0, t0, &mut rng, |_, _| {});
        let mut integral = vec![0.0; lattice.len()];
        let mut last_t = t0;
        let mut last = c.occupancy().to_vec();
        sim.run(&mut c, t0, t1, &mut rng, |t, now| {
            let dt = t - last_t;
            for (acc, &v) in integral.iter_mut().zip(&last) {
                *acc += dt * v as f64;
            }
            last_t = t;
            last.copy_from_slice(now.occupancy());
        });
        let dt = t1 - last_t;
        for (acc, &v) in integral.iter_mut().zip(&last) {
            *acc += dt * v as f64;
        }
        integral.iter().map(|a| a / run.sample_horizon).collect::<Vec<f64>>()
    });
    let r = run.replicas as f64;
    let mut mean = vec![0.0; lattice.len()];
    for v in &per_replica {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / r;
        }
    }
    let stderr = (0..lattice.len())
        .map(|i| {
            if run.replicas < 2 {
                return f64::NAN;
            }
            let ss: f64 = per_replica.iter().map(|v| (v[i] - mean[i]).powi(2)).sum();
            (ss / (r - 1.0) / r).sqrt()
        })
        .collect();
    Profile {
        sites: lattice.sites().collect(),
        mean,
        stderr,
        n_samples: run.replicas,
    }
}
