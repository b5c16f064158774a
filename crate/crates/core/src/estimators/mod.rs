//! Survival curves, exponential-rate fits, scaling tables and coupling
//! bounds on the distance to stationarity, plus exact small-N oracles.

pub mod killed_walk;
pub mod oracle;

use rand::Rng;

use crate::error::{Error, Result};
use crate::harris::{survival_samples, SurvivalRequest};
use crate::lattice::ModelParams;
use crate::rng::{self, derive_seed};

/// Acceptance thresholds used across the analysis code. Nothing here comes
/// from a derivation; these are tunable audit knobs kept in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Allowed deviation in standard errors for Monte Carlo comparisons.
    pub sigma: f64,
    /// Relative tolerance of a fitted rate against an exact one.
    pub fit_rel_tol: f64,
    /// Maximum allowed max/min ratio of `b_N N^2` across a scaling table.
    pub scaling_ratio_max: f64,
    /// Minimum weighted R^2 of a decay fit.
    pub fit_r2_min: f64,
    /// Minimum R^2 of the linear stationary profile.
    pub profile_r2_min: f64,
    /// Significance level of the two-sample extinction-time test.
    pub ks_alpha: f64,
    /// Lower bound required of the boundary hitting floor.
    pub floor_delta: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            fit_rel_tol: 0.10,
            scaling_ratio_max: 2.0,
            fit_r2_min: 0.98,
            profile_r2_min: 0.99,
            ks_alpha: 0.01,
            floor_delta: 0.01,
        }
    }
}

/// Empirical survival probability on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub grid: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_alive: Vec<usize>,
    pub n_replicas: usize,
}

impl SurvivalCurve {
    pub fn from_counts(grid: Vec<f64>, n_alive: Vec<usize>, n_replicas: usize) -> Self {
        let r = n_replicas as f64;
        let p_hat: Vec<f64> = n_alive.iter().map(|&k| k as f64 / r).collect();
        let stderr = p_hat.iter().map(|p| (p * (1.0 - p) / r).sqrt()).collect();
        Self {
            grid,
            p_hat,
            stderr,
            n_alive,
            n_replicas,
        }
    }

    /// Survival curve of a sample of (possibly censored) extinction times.
    pub fn from_extinction_times(grid: Vec<f64>, times: &[Option<f64>]) -> Self {
        let n_alive = grid
            .iter()
            .map(|&t| times.iter().filter(|d| d.map_or(true, |d| d > t)).count())
            .collect();
        Self::from_counts(grid, n_alive, times.len())
    }

    /// Exact curve with zero standard errors (synthetic input, oracle output).
    pub fn exact(grid: Vec<f64>, p: Vec<f64>) -> Self {
        let stderr = vec![0.0; p.len()];
        Self {
            n_alive: vec![0; p.len()],
            grid,
            p_hat: p,
            stderr,
            n_replicas: 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p_hat,stderr,n_alive,n_replicas\n");
        for k in 0..self.grid.len() {
            out.push_str(&format!(
                "{:.6},{:.9},{:.9},{},{}\n",
                self.grid[k], self.p_hat[k], self.stderr[k], self.n_alive[k], self.n_replicas
            ));
        }
        out
    }
}

/// Weighted log-linear fit `p(t) ~ c exp(-b t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub b_hat: f64,
    pub c_hat: f64,
    pub window: (f64, f64),
    /// 95% residual-bootstrap interval for `b_hat`.
    pub confidence: (f64, f64),
    /// Weighted coefficient of determination of the log fit.
    pub r_squared: f64,
    pub points: usize,
    pub n_replicas: usize,
}

impl RateFit {
    pub const CSV_HEADER: &'static str = "N,b_hat,b_lo,b_hi,c_hat,window_lo,window_hi,n_replicas\n";

    pub fn csv_row(&self, n: u32) -> String {
        format!(
            "{n},{:.9e},{:.9e},{:.9e},{:.9e},{:.6},{:.6},{}\n",
            self.b_hat,
            self.confidence.0,
            self.confidence.1,
            self.c_hat,
            self.window.0,
            self.window.1,
            self.n_replicas
        )
    }
}

/// Default fit window `[5 N^2, 40 N^2]`.
pub fn default_window(n: u32) -> (f64, f64) {
    let n2 = f64::from(n).powi(2);
    (5.0 * n2, 40.0 * n2)
}

const MIN_FIT_POINTS: usize = 5;
const BOOTSTRAP_ROUNDS: usize = 400;

struct Wls {
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

fn wls(t: &[f64], y: &[f64], w: &[f64]) -> Wls {
    let sw: f64 = w.iter().sum();
    let tm = t.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for k in 0..t.len() {
        let dt = t[k] - tm;
        let dy = y[k] - ym;
        stt += w[k] * dt * dt;
        sty += w[k] * dt * dy;
        syy += w[k] * dy * dy;
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss_res: f64 = (0..t.len())
        .map(|k| w[k] * (y[k] - intercept - slope * t[k]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Wls {
        slope,
        intercept,
        r_squared,
    }
}

/// Weighted least squares of `ln p_hat` against `t` on `window`.
///
/// Weights are inverse delta-method variances `(p / se)^2`. Points with
/// `p_hat = 0` cannot be logged and are left out.
pub fn fit_exponential_rate(curve: &SurvivalCurve, window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let in_window: Vec<usize> = (0..curve.grid.len())
        .filter(|&k| curve.grid[k] >= lo && curve.grid[k] <= hi)
        .collect();
    let usable: Vec<usize> = in_window.iter().copied().filter(|&k| curve.p_hat[k] > 0.0).collect();
    if usable.len() < MIN_FIT_POINTS {
        if !in_window.is_empty() && curve.p_hat[in_window[0]] == 0.0 {
            return Err(Error::AllZeroTail { lo });
        }
        return Err(Error::WindowTooSparse {
            lo,
            hi,
            points: usable.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let t: Vec<f64> = usable.iter().map(|&k| curve.grid[k]).collect();
    let y: Vec<f64> = usable.iter().map(|&k| curve.p_hat[k].ln()).collect();
    let var: Vec<f64> = usable
        .iter()
        .map(|&k| (curve.stderr[k] / curve.p_hat[k]).powi(2))
        .collect();
    let floor = var.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = if floor.is_finite() {
        var.iter().map(|&v| 1.0 / v.max(floor)).collect()
    } else {
        vec![1.0; var.len()]
    };
    let fit = wls(&t, &y, &w);

    // residual bootstrap on the standardised residuals
    let resid: Vec<f64> = (0..t.len())
        .map(|k| w[k].sqrt() * (y[k] - fit.intercept - fit.slope * t[k]))
        .collect();
    let mut rng = rng::replica_rng(derive_seed(0x5eed, t.len() as u64), 0);
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_ROUNDS)
        .map(|_| {
            let y_star: Vec<f64> = (0..t.len())
                .map(|k| {
                    let r = resid[rng.gen_range(0..resid.len())];
                    fit.intercept + fit.slope * t[k] + r / w[k].sqrt()
                })
                .collect();
            -wls(&t, &y_star, &w).slope
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round()) as usize];

    Ok(RateFit {
        b_hat: -fit.slope,
        c_hat: fit.intercept.exp(),
        window,
        confidence: (q(0.025), q(0.975)),
        r_squared: fit.r_squared,
        points: usable.len(),
        n_replicas: curve.n_replicas,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: u32,
    pub fit: RateFit,
    pub curve: SurvivalCurve,
}

impl ScalingRow {
    pub fn normalized(&self) -> f64 {
        self.fit.b_hat * f64::from(self.n).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    /// max/min of `b_hat N^2` over the rows.
    pub fn flatness(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(ScalingRow::normalized).collect();
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,b_hat,b_hat_times_N2\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.9e},{:.9}\n", r.n, r.fit.b_hat, r.normalized()));
        }
        out
    }

    pub fn fits_csv(&self) -> String {
        let mut out = String::from(RateFit::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&r.fit.csv_row(r.n));
        }
        out
    }
}

/// Settings for [`scaling_table`]. Horizon and window scale with `N^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPlan {
    pub n_list: Vec<u32>,
    pub replicas: usize,
    /// Horizon is `horizon_factor * N^2`.
    pub horizon_factor: f64,
    /// Grid points per `N^2` time units.
    pub points_per_n2: usize,
    /// Fit window in units of `N^2`.
    pub window: (f64, f64),
}

impl ScalingPlan {
    pub fn new(n_list: Vec<u32>, replicas: usize) -> Self {
        Self {
            n_list,
            replicas,
            horizon_factor: 40.0,
            points_per_n2: 2,
            window: (5.0, 40.0),
        }
    }
}

/// Tagged-discrepancy survival and decay fit for each `N`.
pub fn scaling_table(base: &ModelParams, plan: &ScalingPlan, seed: u64) -> Result<ScalingTable> {
    assert!(plan.n_list.windows(2).all(|w| w[0] < w[1]), "N list must ascend");
    let mut rows = Vec::with_capacity(plan.n_list.len());
    for &n in &plan.n_list {
        let params = ModelParams { n, ..*base };
        let n2 = f64::from(n).powi(2);
        let horizon = plan.horizon_factor * n2;
        let points = (plan.horizon_factor * plan.points_per_n2 as f64).round() as usize + 1;
        let req = SurvivalRequest::standard(&params, horizon, points, plan.replicas);
        let run = survival_samples(&params, &req, derive_seed(seed, u64::from(n)));
        let fit = fit_exponential_rate(&run.curve, (plan.window.0 * n2, plan.window.1 * n2))?;
        rows.push(ScalingRow {
            n,
            fit,
            curve: run.curve,
        });
    }
    Ok(ScalingTable { rows })
}

/// Pointwise coupling bound on `||mu S_t - mu_st||`, an upper bound and not an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TvBound {
    pub grid: Vec<f64>,
    pub bound: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// `(2N+1) p_hat(t)`: expected number of surviving discrepancies under uniform labelling.
pub fn tv_bound(curve: &SurvivalCurve, n: u32) -> TvBound {
    let sites = f64::from(2 * n + 1);
    TvBound {
        grid: curve.grid.clone(),
        bound: curve.p_hat.iter().map(|p| sites * p).collect(),
        stderr: curve.stderr.iter().map(|s| sites * s).collect(),
    }
}

impl TvBound {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,tv_upper_bound,stderr\n");
        for k in 0..self.grid.len() {
            out.push_str(&format!("{:.6},{:.9},{:.9}\n", self.grid[k], self.bound[k], self.stderr[k]));
        }
        out
    }
}

/// Least-squares line through `(x, y)`: `(intercept, slope, r_squared)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let w = vec![1.0; x.len()];
    let fit = wls(x, y, &w);
    (fit.intercept, fit.slope, fit.r_squared)
}
