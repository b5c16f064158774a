//! A single walker on `[-N, N]` jumping at rate 1/2 to each neighbour, jumps
//! off the segment suppressed, and killed by a site potential.
//!
//! `pi(x, t) = E_x[exp(-int_0^t V(x_s) ds)]` solves `dv/dt = (L - V) v` with
//! `v(., 0) = 1`. With `V = 1` on `{-N, N}` this is the survival of a
//! discrepancy in the density-reservoir coupling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::lattice::Lattice;
use crate::rng::{self, map_replicas};

/// Killing rate 1 at `+-N`, 0 inside.
pub fn boundary_potential(n: u32) -> Vec<f64> {
    let lattice = Lattice::new(n);
    lattice
        .sites()
        .map(|x| if x.abs() == lattice.n() { 1.0 } else { 0.0 })
        .collect()
}

/// `L - V` as a dense symmetric matrix in storage order.
pub fn killed_generator(n: u32, potential: &[f64]) -> DMatrix<f64> {
    let len = Lattice::new(n).len();
    assert_eq!(potential.len(), len, "potential must have 2N+1 entries");
    let mut m = DMatrix::zeros(len, len);
    for i in 0..len {
        if i > 0 {
            m[(i, i - 1)] = 0.5;
            m[(i, i)] -= 0.5;
        }
        if i + 1 < len {
            m[(i, i + 1)] = 0.5;
            m[(i, i)] -= 0.5;
        }
        m[(i, i)] -= potential[i];
    }
    m
}

/// `-lambda_max(L - V)`: the exponential decay rate of `pi`.
pub fn killed_walk_decay_rate(n: u32, potential: &[f64]) -> f64 {
    let eig = SymmetricEigen::new(killed_generator(n, potential));
    -eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `pi(x, t)` sampled every `step` (the last step shortened to hit the horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct KilledWalkSolution {
    pub n: u32,
    pub times: Vec<f64>,
    /// `values[k][i]` at `times[k]`, site offset `i`.
    pub values: Vec<Vec<f64>>,
}

impl KilledWalkSolution {
    /// Linear interpolation in time.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0].clone();
        }
        if k == self.times.len() {
            return self.values[k - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1]
            .iter()
            .zip(&self.values[k])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let lattice = Lattice::new(self.n);
        let mut out = String::from("t,site,pi\n");
        for (t, row) in self.times.iter().zip(&self.values) {
            for (i, v) in row.iter().enumerate() {
                out.push_str(&format!("{t:.6},{},{v:.12}\n", lattice.site(i)));
            }
        }
        out
    }
}

/// Classical RK4 on `dv/dt = (L - V) v`, `v(0) = 1`.
pub fn feynman_kac_solve(n: u32, horizon: f64, step: f64, potential: &[f64]) -> KilledWalkSolution {
    assert!(step > 0.0 && horizon >= 0.0);
    let a = killed_generator(n, potential);
    let len = a.nrows();
    let mut v = DVector::from_element(len, 1.0);
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut values = vec![v.iter().copied().collect::<Vec<_>>()];
    while t < horizon - 1e-12 {
        let h = step.min(horizon - t);
        let k1 = &a * &v;
        let k2 = &a * (&v + &k1 * (h / 2.0));
        let k3 = &a * (&v + &k2 * (h / 2.0));
        let k4 = &a * (&v + &k3 * h);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        times.push(t);
        values.push(v.iter().copied().collect());
    }
    KilledWalkSolution { n, times, values }
}

/// Monte Carlo estimate of `P_x[T*(horizon) >= threshold]` per start site,
/// `T*` the time spent on `{-N, N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorEstimate {
    pub sites: Vec<i32>,
    pub p: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicas: usize,
}

impl FloorEstimate {
    /// `(site, p, stderr)` at the smallest estimate.
    pub fn minimum(&self) -> (i32, f64, f64) {
        let k = (0..self.p.len())
            .min_by(|&a, &b| self.p[a].total_cmp(&self.p[b]))
            .expect("nonempty");
        (self.sites[k], self.p[k], self.stderr[k])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,p_hat,stderr,n_replicas\n");
        for k in 0..self.sites.len() {
            out.push_str(&format!("{},{:.9},{:.9},{}\n", self.sites[k], self.p[k], self.stderr[k], self.replicas));
        }
        out
    }
}

fn boundary_time_reaches(n: i32, start: i32, horizon: f64, threshold: f64, rng: &mut rng::SimRng) -> bool {
    // uniformised walk: total clock rate 1, a suppressed jump is a self-loop
    let mut x = start;
    let mut t = 0.0;
    let mut acc = 0.0;
    loop {
        let dt = rng::exponential(rng, 1.0);
        let stay = dt.min(horizon - t);
        if x.abs() == n {
            acc += stay;
            if acc >= threshold {
                return true;
            }
        }
        t += dt;
        if t >= horizon {
            return false;
        }
        let y = if rng.gen::<bool>() { x + 1 } else { x - 1 };
        if y.abs() <= n {
            x = y;
        }
    }
}

pub fn hitting_floor_check(n: u32, horizon: f64, threshold: f64, replicas: usize, seed: u64) -> FloorEstimate {
    let lattice = Lattice::new(n);
    let sites: Vec<i32> = lattice.sites().collect();
    let hits = map_replicas(sites.len() * replicas, |r| {
        let x = sites[r / replicas];
        let mut rng = rng::replica_rng(seed, r as u64);
        boundary_time_reaches(lattice.n(), x, horizon, threshold, &mut rng)
    });
    let rf = replicas as f64;
    let p: Vec<f64> = hits
        .chunks(replicas)
        .map(|c| c.iter().filter(|&&h| h).count() as f64 / rf)
        .collect();
    let stderr = p.iter().map(|p| (p * (1.0 - p) / rf).sqrt()).collect();
    FloorEstimate {
        sites,
        p,
        stderr,
        replicas,
    }
}

/// Deterministic `P_x[T*(horizon) >= threshold]` for every start `x`, by
/// evolving the joint law of (position, accumulated boundary time) on a grid
/// of width `h`: each step first advances the clock of walkers sitting on the
/// boundary, then moves everybody with `exp(L h)`. First order in `h`.
pub fn boundary_time_oracle(n: u32, horizon: f64, threshold: f64, h: f64) -> Vec<f64> {
    let lattice = Lattice::new(n);
    let len = lattice.len();
    let a = killed_generator(n, &vec![0.0; len]);
    let step = (a * h).exp();
    let levels = (threshold / h).round() as usize;
    let steps = (horizon / h).round() as usize;
    let boundary = |i: usize| lattice.site(i).abs() == lattice.n();
    (0..len)
        .map(|start| {
            // mass[level][site]; the last level collects everything past the threshold
            let mut mass = vec![vec![0.0; len]; levels + 1];
            mass[0][start] = 1.0;
            for _ in 0..steps {
                for i in (0..len).filter(|&i| boundary(i)) {
                    let done = mass[levels - 1][i];
                    for l in (1..levels).rev() {
                        mass[l][i] = mass[l - 1][i];
                    }
                    mass[0][i] = 0.0;
                    mass[levels][i] += done;
                }
                for row in mass.iter_mut() {
                    let v = DVector::from_column_slice(row);
                    let moved = step.tr_mul(&v);
                    row.copy_from_slice(moved.as_slice());
                }
            }
            mass[levels].iter().sum()
        })
        .collect()
}
