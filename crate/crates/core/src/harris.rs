//! Graphical construction of the monotone coupling.
//!
//! Two copies are driven by one family of independent Poisson clocks. The
//! pair lives in the three-letter alphabet of [`SiteState`], so order between
//! the copies cannot be broken. Discrepancies carry labels that follow the
//! marks; the label set always equals the set of `Ne` sites.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dynamics::{Side, STIR_RATE};
use crate::estimators::SurvivalCurve;
use crate::lattice::{CoupledConfiguration, ModelParams, Reservoir, SiteState};
use crate::rng::{self, map_replicas, SimRng};

/// Identity of a Poisson clock. The derived order breaks exact time ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClockId {
    /// Stirring of bond `(x, x+1)`.
    Stir(i32),
    /// Discrepancy at the edge moves inward while the inner site flips.
    A(Side),
    /// Discrepancy at the edge dies.
    DEdge(Side),
    /// Discrepancy next to the edge dies.
    DInner(Side),
    /// Both copies get the reservoir value at the edge.
    BEdge(Side),
    /// Both copies get the reservoir value next to the edge.
    BInner(Side),
    /// Density reservoir: both copies are set to `value` at the edge.
    Kill { side: Side, value: u8 },
}

/// Every clock of the coupled chain with a positive intensity.
pub fn coupled_clocks(params: &ModelParams) -> Vec<(ClockId, f64)> {
    let mut out: Vec<(ClockId, f64)> = params
        .lattice()
        .bonds()
        .map(|x| (ClockId::Stir(x), STIR_RATE))
        .collect();
    match params.reservoir {
        Reservoir::Current => {
            let rate = params.boundary_rate();
            for side in [Side::Right, Side::Left] {
                out.extend([
                    (ClockId::A(side), rate),
                    (ClockId::DEdge(side), rate),
                    (ClockId::DInner(side), rate),
                    (ClockId::BEdge(side), rate),
                    (ClockId::BInner(side), rate),
                ]);
            }
        }
        Reservoir::Density {
            rho_plus,
            rho_minus,
        } => {
            for (side, rho) in [(Side::Right, rho_plus), (Side::Left, rho_minus)] {
                out.push((ClockId::Kill { side, value: 1 }, rho));
                out.push((ClockId::Kill { side, value: 0 }, 1.0 - rho));
            }
        }
    }
    out.retain(|&(_, r)| r > 0.0);
    out
}

/// What a mark did to the discrepancy set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    /// Guard failed or the update was the identity.
    Nothing,
    /// Sites `x` and `x+1` exchanged contents (labels travel with them).
    Swap(i32),
    /// Discrepancy set unchanged but some site changed state.
    Recolored,
    /// The discrepancy at `from` moved to `to`.
    Moved { from: i32, to: i32 },
    /// The discrepancy at the site died.
    Killed(i32),
}

/// The reservoir value that `B` marks write: occupied on the right, empty on the left.
fn filled(side: Side) -> SiteState {
    match side {
        Side::Right => SiteState::One,
        Side::Left => SiteState::Zero,
    }
}

fn emptied(side: Side) -> SiteState {
    match side {
        Side::Right => SiteState::Zero,
        Side::Left => SiteState::One,
    }
}

/// Applies one mark to the configuration. Marks whose guard fails are no-ops.
///
/// Right-window rules, with `e = N` and `i = N-1`:
/// `A`: `(i,e) = (0,x) -> (x,1)`; `D` at `e`: `x -> 1` unless `i` is `0`;
/// `D` at `i`: `x -> 1` if `e` is `1`; `B` at `e`: `0 -> 1`;
/// `B` at `i`: `0 -> 1` if `e` is `1`. The left window is the mirror image
/// with the roles of `1` and `0` exchanged.
pub fn apply_clock(c: &mut CoupledConfiguration, clock: ClockId) -> Effect {
    use SiteState::*;
    let n = c.lattice().n();
    match clock {
        ClockId::Stir(x) => {
            if c.get(x) == c.get(x + 1) {
                Effect::Nothing
            } else {
                c.swap(x);
                Effect::Swap(x)
            }
        }
        ClockId::A(side) => {
            let (e, i) = (side.edge(n), side.inner(n));
            if c.get(e) == Ne && c.get(i) == emptied(side) {
                c.set(e, filled(side));
                c.set(i, Ne);
                Effect::Moved { from: e, to: i }
            } else {
                Effect::Nothing
            }
        }
        ClockId::DEdge(side) => {
            let (e, i) = (side.edge(n), side.inner(n));
            if c.get(e) == Ne && c.get(i) != emptied(side) {
                c.set(e, filled(side));
                Effect::Killed(e)
            } else {
                Effect::Nothing
            }
        }
        ClockId::DInner(side) => {
            let (e, i) = (side.edge(n), side.inner(n));
            if c.get(i) == Ne && c.get(e) == filled(side) {
                c.set(i, filled(side));
                Effect::Killed(i)
            } else {
                Effect::Nothing
            }
        }
        ClockId::BEdge(side) => {
            let e = side.edge(n);
            if c.get(e) == emptied(side) {
                c.set(e, filled(side));
                Effect::Recolored
            } else {
                Effect::Nothing
            }
        }
        ClockId::BInner(side) => {
            let (e, i) = (side.edge(n), side.inner(n));
            if c.get(e) == filled(side) && c.get(i) == emptied(side) {
                c.set(i, filled(side));
                Effect::Recolored
            } else {
                Effect::Nothing
            }
        }
        ClockId::Kill { side, value } => {
            let e = side.edge(n);
            let target = if value == 1 { One } else { Zero };
            let before = c.get(e);
            c.set(e, target);
            match before {
                Ne => Effect::Killed(e),
                s if s == target => Effect::Nothing,
                _ => Effect::Recolored,
            }
        }
    }
}

/// Positions of labelled discrepancies. Label `k` is stored at index `k - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscrepancyLabels {
    n: i32,
    positions: Vec<Option<i32>>,
    at_site: Vec<Option<u32>>,
}

impl DiscrepancyLabels {
    /// Labels the `Ne` sites of `c` by a uniformly random permutation.
    pub fn uniform<R: Rng + ?Sized>(c: &CoupledConfiguration, rng: &mut R) -> Self {
        let mut sites: Vec<i32> = c.discrepancy_sites().collect();
        sites.shuffle(rng);
        Self::from_positions(c, sites)
    }

    /// Label 1 at `tagged`, the remaining `Ne` sites labelled uniformly at random.
    pub fn with_tagged<R: Rng + ?Sized>(c: &CoupledConfiguration, tagged: i32, rng: &mut R) -> Self {
        assert_eq!(c.get(tagged), SiteState::Ne, "tagged site {tagged} is not a discrepancy");
        let mut rest: Vec<i32> = c.discrepancy_sites().filter(|&x| x != tagged).collect();
        rest.shuffle(rng);
        let mut sites = vec![tagged];
        sites.extend(rest);
        Self::from_positions(c, sites)
    }

    /// `sites[k]` holds label `k + 1`.
    pub fn from_positions(c: &CoupledConfiguration, sites: Vec<i32>) -> Self {
        let lattice = c.lattice();
        let mut at_site = vec![None; lattice.len()];
        for (k, &x) in sites.iter().enumerate() {
            at_site[lattice.index(x)] = Some(k as u32 + 1);
        }
        Self {
            n: lattice.n(),
            positions: sites.into_iter().map(Some).collect(),
            at_site,
        }
    }

    fn idx(&self, x: i32) -> usize {
        (x + self.n) as usize
    }

    /// Position of `label`, `None` once dead.
    pub fn position(&self, label: u32) -> Option<i32> {
        self.positions[label as usize - 1]
    }

    pub fn label_at(&self, x: i32) -> Option<u32> {
        self.at_site[self.idx(x)]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn alive(&self) -> usize {
        self.positions.iter().filter(|p| p.is_some()).count()
    }

    /// Live positions, sorted.
    pub fn live_positions(&self) -> Vec<i32> {
        let mut v: Vec<i32> = self.positions.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// Live `(label, position)` pairs in label order.
    pub fn live(&self) -> impl Iterator<Item = (u32, i32)> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.map(|x| (k as u32 + 1, x)))
    }

    pub fn update(&mut self, effect: Effect) {
        match effect {
            Effect::Nothing | Effect::Recolored => {}
            Effect::Swap(x) => {
                let (i, k) = (self.idx(x), self.idx(x + 1));
                let (a, b) = (self.at_site[i], self.at_site[k]);
                self.at_site[i] = b;
                self.at_site[k] = a;
                if let Some(l) = a {
                    self.positions[l as usize - 1] = Some(x + 1);
                }
                if let Some(l) = b {
                    self.positions[l as usize - 1] = Some(x);
                }
            }
            Effect::Moved { from, to } => {
                let (i, k) = (self.idx(from), self.idx(to));
                debug_assert!(self.at_site[k].is_none(), "label already at {to}");
                if let Some(l) = self.at_site[i].take() {
                    self.at_site[k] = Some(l);
                    self.positions[l as usize - 1] = Some(to);
                }
            }
            Effect::Killed(x) => {
                let i = self.idx(x);
                if let Some(l) = self.at_site[i].take() {
                    self.positions[l as usize - 1] = None;
                }
            }
        }
    }
}

/// Coupled configuration together with its labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledState {
    pub config: CoupledConfiguration,
    pub labels: DiscrepancyLabels,
}

/// Applies a mark and moves labels accordingly.
pub fn apply_mark(state: &mut CoupledState, clock: ClockId) -> Effect {
    let effect = apply_clock(&mut state.config, clock);
    state.labels.update(effect);
    effect
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub time: f64,
    pub clock: ClockId,
}

/// Sorted Poisson marks of every clock on `[start, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkStream {
    pub start: f64,
    pub horizon: f64,
    pub marks: Vec<Mark>,
    /// Adjacent marks sharing a time stamp; ordered by clock id.
    pub ties: usize,
}

fn sample_window(
    clocks: &[(ClockId, f64)],
    start: f64,
    end: f64,
    rng: &mut SimRng,
    marks: &mut Vec<Mark>,
) -> usize {
    marks.clear();
    if end <= start {
        return 0;
    }
    for &(clock, rate) in clocks {
        let mut t = start + rng::exponential(rng, rate);
        while t <= end {
            marks.push(Mark { time: t, clock });
            t += rng::exponential(rng, rate);
        }
    }
    marks.sort_unstable_by(|a, b| a.time.total_cmp(&b.time).then(a.clock.cmp(&b.clock)));
    marks.windows(2).filter(|w| w[0].time == w[1].time).count()
}

/// Independent Poisson streams for every clock of the coupled chain on `[0, horizon]`.
pub fn sample_marks(params: &ModelParams, horizon: f64, rng: &mut SimRng) -> MarkStream {
    let mut marks = Vec::new();
    let ties = sample_window(&coupled_clocks(params), 0.0, horizon, rng, &mut marks);
    MarkStream {
        start: 0.0,
        horizon: horizon.max(0.0),
        marks,
        ties,
    }
}

/// Runs the coupled chain from pre-sampled marks, one window at a time.
#[derive(Debug, Clone)]
pub struct CoupledSim {
    clocks: Vec<(ClockId, f64)>,
    window: f64,
}

impl CoupledSim {
    /// Window length defaults to `N^2` time units (at least 1).
    pub fn new(params: &ModelParams) -> Self {
        let n = f64::from(params.n);
        Self {
            clocks: coupled_clocks(params),
            window: (n * n).max(1.0),
        }
    }

    pub fn with_window(mut self, window: f64) -> Self {
        assert!(window > 0.0);
        self.window = window;
        self
    }

    pub fn clocks(&self) -> &[(ClockId, f64)] {
        &self.clocks
    }

    /// Applies all marks in `(t0, t1]`. `observe(t, state, effect)` runs after
    /// every mark that changed something; returning `Break` stops the run and
    /// yields the time of that mark.
    pub fn run<F>(
        &self,
        state: &mut CoupledState,
        t0: f64,
        t1: f64,
        rng: &mut SimRng,
        mut observe: F,
    ) -> Option<f64>
    where
        F: FnMut(f64, &CoupledState, Effect) -> ControlFlow<()>,
    {
        let mut marks = Vec::new();
        let mut start = t0;
        while start < t1 {
            let end = (start + self.window).min(t1);
            sample_window(&self.clocks, start, end, rng, &mut marks);
            for m in &marks {
                let effect = apply_mark(state, m.clock);
                if effect != Effect::Nothing && observe(m.time, state, effect).is_break() {
                    return Some(m.time);
                }
            }
            start = end;
        }
        None
    }
}

/// Labelled snapshot of the coupled chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub state: CoupledState,
}

/// Coupled evolution from `c0` with uniform labels, recording the state at
/// each of `sample_times` (ascending, within `[0, horizon]`).
pub fn evolve_coupled(
    c0: &CoupledConfiguration,
    params: &ModelParams,
    sample_times: &[f64],
    seed: u64,
) -> Vec<Snapshot> {
    assert!(sample_times.windows(2).all(|w| w[0] <= w[1]), "sample times must ascend");
    let sim = CoupledSim::new(params);
    let mut rng = rng::replica_rng(seed, 0);
    let labels = DiscrepancyLabels::uniform(c0, &mut rng);
    let mut state = CoupledState {
        config: c0.clone(),
        labels,
    };
    let mut t = 0.0;
    let mut out = Vec::with_capacity(sample_times.len());
    for &s in sample_times {
        sim.run(&mut state, t, s, &mut rng, |_, _, _| ControlFlow::Continue(()));
        t = s;
        out.push(Snapshot {
            time: s,
            state: state.clone(),
        });
    }
    out
}

pub fn snapshots_to_csv(snaps: &[Snapshot]) -> String {
    let mut out = String::from("t,configuration,live_labels\n");
    for s in snaps {
        let labels: Vec<String> = s
            .state
            .labels
            .live()
            .map(|(l, x)| format!("{l}@{x}"))
            .collect();
        out.push_str(&format!("{:.9},{},{}\n", s.time, s.state.config, labels.join(" ")));
    }
    out
}

/// Per-site fractions of replicas in each coupled state at fixed times.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMarginals {
    pub times: Vec<f64>,
    pub replicas: usize,
    /// `upper[k][i]`: fraction with the upper copy occupied at offset `i` at `times[k]`.
    pub upper: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    /// Fraction with a discrepancy.
    pub discrepancy: Vec<Vec<f64>>,
}

pub fn coupled_marginals(
    params: &ModelParams,
    c0: &CoupledConfiguration,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> CoupledMarginals {
    let sim = CoupledSim::new(params);
    let len = c0.lattice().len();
    let per = map_replicas(replicas, |r| {
        let mut rng = rng::replica_rng(seed, r as u64);
        let mut state = CoupledState {
            labels: DiscrepancyLabels::uniform(c0, &mut rng),
            config: c0.clone(),
        };
        let mut t = 0.0;
        times
            .iter()
            .map(|&s| {
                sim.run(&mut state, t, s, &mut rng, |_, _, _| ControlFlow::Continue(()));
                t = s;
                state.config.states().to_vec()
            })
            .collect::<Vec<_>>()
    });
    let mut upper = vec![vec![0u64; len]; times.len()];
    let mut lower = upper.clone();
    let mut disc = upper.clone();
    for snaps in per {
        for (k, states) in snaps.into_iter().enumerate() {
            for (i, s) in states.into_iter().enumerate() {
                upper[k][i] += s.upper() as u64;
                lower[k][i] += s.lower() as u64;
                disc[k][i] += (s == SiteState::Ne) as u64;
            }
        }
    }
    let scale = |m: Vec<Vec<u64>>| -> Vec<Vec<f64>> {
        m.into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / replicas as f64).collect())
            .collect()
    };
    CoupledMarginals {
        times: times.to_vec(),
        replicas,
        upper: scale(upper),
        lower: scale(lower),
        discrepancy: scale(disc),
    }
}

/// Where the tagged discrepancy starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPolicy {
    /// Uniform over the discrepancies of the initial configuration.
    Uniform,
    Fixed(i32),
}

/// Initial labelled state for a tagged run from `c0`.
pub fn tagged_start(c0: &CoupledConfiguration, policy: StartPolicy, rng: &mut SimRng) -> CoupledState {
    let labels = match policy {
        StartPolicy::Uniform => DiscrepancyLabels::uniform(c0, rng),
        StartPolicy::Fixed(x) => DiscrepancyLabels::with_tagged(c0, x, rng),
    };
    CoupledState {
        config: c0.clone(),
        labels,
    }
}

/// Output of [`survival_samples`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRun {
    pub curve: SurvivalCurve,
    /// Death time of the tagged discrepancy per replica, `None` if alive at the horizon.
    pub extinction_times: Vec<Option<f64>>,
    /// Mean total discrepancy count on the grid, when requested.
    pub mean_count: Option<Vec<f64>>,
    pub count_stderr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRequest {
    pub initial: CoupledConfiguration,
    pub policy: StartPolicy,
    /// Ascending grid starting at 0; its last point is the horizon.
    pub grid: Vec<f64>,
    pub replicas: usize,
    /// Keep simulating after the tagged discrepancy dies to record the total count.
    pub track_count: bool,
}

impl SurvivalRequest {
    /// All-discrepancy start, uniform tag, `points` equally spaced grid points on `[0, horizon]`.
    pub fn standard(params: &ModelParams, horizon: f64, points: usize, replicas: usize) -> Self {
        let grid = (0..points)
            .map(|k| horizon * k as f64 / (points - 1).max(1) as f64)
            .collect();
        Self {
            initial: CoupledConfiguration::all_discrepancies(params.n),
            policy: StartPolicy::Uniform,
            grid,
            replicas,
            track_count: false,
        }
    }
}

struct ReplicaSurvival {
    alive: Vec<bool>,
    counts: Option<Vec<usize>>,
    death: Option<f64>,
}

fn survive_one(sim: &CoupledSim, req: &SurvivalRequest, rng: &mut SimRng) -> ReplicaSurvival {
    let mut state = tagged_start(&req.initial, req.policy, rng);
    let mut alive = Vec::with_capacity(req.grid.len());
    let mut counts = req.track_count.then(Vec::new);
    let mut death = None;
    let mut t = 0.0;
    for &s in &req.grid {
        if death.is_none() || req.track_count {
            let track = req.track_count;
            let stop = sim.run(&mut state, t, s, rng, |time, st, effect| {
                if death.is_none() && matches!(effect, Effect::Killed(_)) && st.labels.position(1).is_none() {
                    death = Some(time);
                    if !track {
                        return ControlFlow::Break(());
                    }
                }
                ControlFlow::Continue(())
            });
            if stop.is_none() {
                t = s;
            }
        }
        alive.push(death.is_none());
        if let Some(c) = counts.as_mut() {
            c.push(state.config.discrepancy_count());
        }
    }
    ReplicaSurvival {
        alive,
        counts,
        death,
    }
}

/// Monte Carlo survival of the tagged discrepancy (label 1).
pub fn survival_samples(params: &ModelParams, req: &SurvivalRequest, seed: u64) -> SurvivalRun {
    assert!(req.replicas >= 1, "need at least one replica");
    let sim = CoupledSim::new(params);
    let per = map_replicas(req.replicas, |r| {
        let mut rng = rng::replica_rng(seed, r as u64);
        survive_one(&sim, req, &mut rng)
    });
    let points = req.grid.len();
    let mut n_alive = vec![0usize; points];
    let mut count_sum = vec![0.0f64; points];
    let mut count_sq = vec![0.0f64; points];
    let mut extinction_times = Vec::with_capacity(per.len());
    for rep in &per {
        for (k, &a) in rep.alive.iter().enumerate() {
            n_alive[k] += a as usize;
        }
        if let Some(c) = &rep.counts {
            for (k, &v) in c.iter().enumerate() {
                count_sum[k] += v as f64;
                count_sq[k] += (v * v) as f64;
            }
        }
        extinction_times.push(rep.death);
    }
    let r = req.replicas as f64;
    let (mean_count, count_stderr) = if req.track_count {
        let mean: Vec<f64> = count_sum.iter().map(|s| s / r).collect();
        let se = mean
            .iter()
            .zip(&count_sq)
            .map(|(m, sq)| ((sq / r - m * m).max(0.0) / r).sqrt())
            .collect();
        (Some(mean), Some(se))
    } else {
        (None, None)
    };
    SurvivalRun {
        curve: SurvivalCurve::from_counts(req.grid.clone(), n_alive, req.replicas),
        extinction_times,
        mean_count,
        count_stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{clocks, fire};
    use crate::lattice::Configuration;
    use std::collections::HashMap;

    fn coupled(s: &str) -> CoupledConfiguration {
        s.parse().unwrap()
    }

    fn state(s: &str) -> CoupledState {
        let c = coupled(s);
        let sites: Vec<i32> = c.discrepancy_sites().collect();
        CoupledState {
            labels: DiscrepancyLabels::from_positions(&c, sites),
            config: c,
        }
    }

    #[test]
    fn a_mark_moves_discrepancy_inward() {
        // N = 2, sites -2..2
        let mut st = state("1110x");
        let effect = apply_mark(&mut st, ClockId::A(Side::Right));
        assert_eq!(st.config.to_string(), "111x1");
        assert_eq!(effect, Effect::Moved { from: 2, to: 1 });
        assert_eq!(st.labels.position(1), Some(1));
    }

    #[test]
    fn d_mark_at_edge_kills_when_inner_is_not_empty() {
        let mut st = state("0001x");
        apply_mark(&mut st, ClockId::DEdge(Side::Right));
        assert_eq!(st.config.to_string(), "00011");
        assert_eq!(st.labels.position(1), None);

        let mut st = state("0000x");
        let effect = apply_mark(&mut st, ClockId::DEdge(Side::Right));
        assert_eq!(effect, Effect::Nothing);
        assert_eq!(st.config.to_string(), "0000x");
        assert_eq!(st.labels.position(1), Some(2));
    }

    #[test]
    fn remaining_right_window_rules() {
        let mut c = coupled("000x1");
        assert_eq!(apply_clock(&mut c, ClockId::DInner(Side::Right)), Effect::Killed(1));
        assert_eq!(c.to_string(), "00011");
        let mut c = coupled("000x0");
        assert_eq!(apply_clock(&mut c, ClockId::DInner(Side::Right)), Effect::Nothing);
        let mut c = coupled("00000");
        assert_eq!(apply_clock(&mut c, ClockId::BEdge(Side::Right)), Effect::Recolored);
        assert_eq!(c.to_string(), "00001");
        assert_eq!(apply_clock(&mut c, ClockId::BInner(Side::Right)), Effect::Recolored);
        assert_eq!(c.to_string(), "00011");
        let mut c = coupled("0000x");
        assert_eq!(apply_clock(&mut c, ClockId::BInner(Side::Right)), Effect::Nothing);
    }

    #[test]
    fn left_window_mirrors_right_with_one_and_zero_exchanged() {
        let mut c = coupled("x1000");
        assert_eq!(apply_clock(&mut c, ClockId::A(Side::Left)), Effect::Moved { from: -2, to: -1 });
        assert_eq!(c.to_string(), "0x000");
        let mut c = coupled("x0000");
        assert_eq!(apply_clock(&mut c, ClockId::DEdge(Side::Left)), Effect::Killed(-2));
        assert_eq!(c.to_string(), "00000");
        let mut c = coupled("0x111");
        assert_eq!(apply_clock(&mut c, ClockId::DInner(Side::Left)), Effect::Killed(-1));
        assert_eq!(c.to_string(), "00111");
        let mut c = coupled("11111");
        apply_clock(&mut c, ClockId::BEdge(Side::Left));
        apply_clock(&mut c, ClockId::BInner(Side::Left));
        assert_eq!(c.to_string(), "00111");
    }

    #[test]
    fn kill_marks_set_edge_and_remove_label() {
        let mut st = state("xxx");
        apply_mark(&mut st, ClockId::Kill { side: Side::Right, value: 1 });
        assert_eq!(st.config.to_string(), "xx1");
        assert_eq!(st.labels.position(3), None);
        apply_mark(&mut st, ClockId::Kill { side: Side::Left, value: 0 });
        assert_eq!(st.config.to_string(), "0x1");
        assert_eq!(st.labels.live_positions(), vec![0]);
    }

    #[test]
    fn stirring_swaps_labels() {
        let mut st = state("xx0");
        apply_mark(&mut st, ClockId::Stir(-1));
        // equal states: nothing happens to the configuration, labels stay
        assert_eq!(st.labels.live_positions(), vec![-1, 0]);
        apply_mark(&mut st, ClockId::Stir(0));
        assert_eq!(st.config.to_string(), "x0x");
        assert_eq!(st.labels.position(2), Some(1));
    }

    /// Transition rates of the single chain, `from -> to`, from the dynamics clocks.
    fn single_rates(params: &ModelParams, from: &Configuration) -> HashMap<Configuration, f64> {
        let mut out = HashMap::new();
        for clock in clocks(params) {
            let mut c = from.clone();
            if fire(&mut c, clock.event) && c != *from {
                *out.entry(c).or_insert(0.0) += clock.rate;
            }
        }
        out
    }

    #[test]
    fn each_copy_of_the_coupling_has_the_single_chain_rates() {
        // projected coupled rates equal single-chain rates for every state
        let models = [
            ModelParams::current(1, 1.0),
            ModelParams::current(2, 0.7),
            ModelParams::current(3, 2.0),
            ModelParams::density(2, 0.8, 0.3),
        ];
        for params in models {
            let len = params.lattice().len() as u32;
            for idx in 0..3usize.pow(len) {
                let c = CoupledConfiguration::from_index(params.n, idx);
                for copy in 0..2 {
                    let project = |cc: &CoupledConfiguration| if copy == 0 { cc.upper() } else { cc.lower() };
                    let from = project(&c);
                    let mut projected: HashMap<Configuration, f64> = HashMap::new();
                    for (clock, rate) in coupled_clocks(&params) {
                        let mut next = c.clone();
                        apply_clock(&mut next, clock);
                        let to = project(&next);
                        if to != from {
                            *projected.entry(to).or_insert(0.0) += rate;
                        }
                    }
                    let expected = single_rates(&params, &from);
                    assert_eq!(projected.len(), expected.len(), "{params:?} {c} copy {copy}");
                    for (k, v) in expected {
                        assert!((projected[&k] - v).abs() < 1e-12, "{params:?} {c} copy {copy} -> {k}");
                    }
                }
            }
        }
    }

    #[test]
    fn sample_marks_counts_and_order() {
        let params = ModelParams::current(3, 1.5);
        let horizon = 10.0;
        let draws = 4000;
        let mut stir = 0usize;
        let mut a_right = 0usize;
        let mut rng = rng::replica_rng(21, 0);
        for _ in 0..draws {
            let s = sample_marks(&params, horizon, &mut rng);
            assert!(s.marks.windows(2).all(|w| w[0].time <= w[1].time));
            assert!(s.marks.iter().all(|m| m.time > 0.0 && m.time <= horizon));
            stir += s.marks.iter().filter(|m| matches!(m.clock, ClockId::Stir(_))).count();
            a_right += s.marks.iter().filter(|m| m.clock == ClockId::A(Side::Right)).count();
        }
        let stir_mean = horizon * 3.0;
        let got = stir as f64 / draws as f64;
        assert!((got - stir_mean).abs() < 3.0 * (stir_mean / draws as f64).sqrt());
        let a_mean = horizon * 1.5 / 6.0;
        let got = a_right as f64 / draws as f64;
        assert!((got - a_mean).abs() < 3.0 * (a_mean / draws as f64).sqrt());
        assert!(sample_marks(&params, 0.0, &mut rng).marks.is_empty());
    }

    #[test]
    fn snapshots_start_with_all_labels_alive() {
        let params = ModelParams::current(3, 1.0);
        let c0 = CoupledConfiguration::all_discrepancies(3);
        let snaps = evolve_coupled(&c0, &params, &[0.0, 5.0, 50.0], 4);
        assert_eq!(snaps[0].state.labels.alive(), 7);
        assert_eq!(snaps[0].state.config, c0);
        for s in &snaps {
            let ne: Vec<i32> = s.state.config.discrepancy_sites().collect();
            assert_eq!(s.state.labels.live_positions(), ne);
        }
        let csv = snapshots_to_csv(&snaps);
        assert!(csv.starts_with("t,configuration,live_labels\n0.000000000,xxxxxxx,"));
    }

    #[test]
    fn silent_boundary_keeps_every_discrepancy() {
        let params = ModelParams::current(3, 0.0);
        let c0: CoupledConfiguration = "x10x0x1".parse().unwrap();
        let snaps = evolve_coupled(&c0, &params, &[1.0, 10.0, 100.0], 8);
        assert!(snaps.iter().all(|s| s.state.config.discrepancy_count() == 3));
    }

    #[test]
    fn survival_curve_basics_and_exchangeability() {
        let params = ModelParams::current(2, 1.0);
        let mut req = SurvivalRequest::standard(&params, 40.0, 9, 20_000);
        req.track_count = true;
        let run = survival_samples(&params, &req, 17);
        let curve = &run.curve;
        assert_eq!(curve.p_hat[0], 1.0);
        assert!(curve.n_alive.windows(2).all(|w| w[0] >= w[1]));
        let mean = run.mean_count.as_ref().unwrap();
        let se = run.count_stderr.as_ref().unwrap();
        for k in 1..curve.grid.len() {
            let scaled = mean[k] / 5.0;
            let sigma = (curve.stderr[k].powi(2) + (se[k] / 5.0).powi(2)).sqrt();
            assert!((scaled - curve.p_hat[k]).abs() < 3.0 * sigma, "t={} {scaled} vs {}", curve.grid[k], curve.p_hat[k]);
        }
        // early termination gives the same tagged survival
        req.track_count = false;
        let fast = survival_samples(&params, &req, 17);
        assert_eq!(fast.curve.n_alive, curve.n_alive);
        assert_eq!(fast.extinction_times, run.extinction_times);
    }

    #[test]
    fn density_coupling_kills_edge_discrepancies_at_unit_rate() {
        let params = ModelParams::density(3, 0.6, 0.3);
        let sim = CoupledSim::new(&params);
        let mut exposure = 0.0;
        let mut kills = 0usize;
        for r in 0..3000 {
            let mut rng = rng::replica_rng(99, r);
            let mut st = tagged_start(&CoupledConfiguration::all_discrepancies(3), StartPolicy::Uniform, &mut rng);
            let mut last_t = 0.0;
            let mut edges = 2usize;
            let horizon = 30.0;
            sim.run(&mut st, 0.0, horizon, &mut rng, |t, s, effect| {
                exposure += (t - last_t) * edges as f64;
                if let Effect::Killed(x) = effect {
                    if x.abs() == 3 {
                        kills += 1;
                    }
                }
                last_t = t;
                edges = [3, -3].iter().filter(|&&x| s.config.get(x) == SiteState::Ne).count();
                ControlFlow::Continue(())
            });
            exposure += (horizon - last_t) * edges as f64;
        }
        let hazard = kills as f64 / exposure;
        let sigma = (kills as f64).sqrt() / exposure;
        assert!((hazard - 1.0).abs() < 3.0 * sigma, "hazard {hazard} +- {sigma}");
    }
}
