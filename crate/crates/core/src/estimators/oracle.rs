//! Exact master-equation solutions for small lattices.
//!
//! Generators are assembled from the same clock tables and update rules that
//! drive the simulators ([`crate::dynamics::clocks`] and
//! [`crate::harris::coupled_clocks`]), so the oracle and the Monte Carlo code
//! cannot disagree about rates.

use nalgebra::{DMatrix, DVector, Schur};

use crate::dynamics::{clocks, fire};
use crate::error::{Error, Result};
use crate::harris::{apply_clock, coupled_clocks};
use crate::lattice::{Configuration, CoupledConfiguration, ModelParams};

/// Default bound on the number of states.
pub const DEFAULT_GUARD: usize = 20_000;

/// Dense generator `Q` with `Q[(i, k)]` the rate from state `i` to state `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterEquation {
    pub n: u32,
    pub generator: DMatrix<f64>,
}

impl MasterEquation {
    /// Single-copy chain on `{0,1}^{2N+1}`; states indexed by [`Configuration::to_index`].
    pub fn single(params: &ModelParams, guard: usize) -> Result<Self> {
        let len = params.lattice().len() as u32;
        let dim = 1usize.checked_shl(len).filter(|&d| d <= guard).ok_or(Error::StateSpaceTooLarge {
            states: 2usize.saturating_pow(len),
            guard,
        })?;
        let table = clocks(params);
        let mut q = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let from = Configuration::from_index(params.n, i);
            for clock in &table {
                let mut to = from.clone();
                if fire(&mut to, clock.event) {
                    let k = to.to_index();
                    if k != i {
                        q[(i, k)] += clock.rate;
                        q[(i, i)] -= clock.rate;
                    }
                }
            }
        }
        Ok(Self {
            n: params.n,
            generator: q,
        })
    }

    /// Coupled chain on `{x,1,0}^{2N+1}`; states indexed by [`CoupledConfiguration::to_index`].
    pub fn coupled(params: &ModelParams, guard: usize) -> Result<Self> {
        let len = params.lattice().len() as u32;
        let dim = 3usize.checked_pow(len).filter(|&d| d <= guard).ok_or(Error::StateSpaceTooLarge {
            states: 3usize.saturating_pow(len),
            guard,
        })?;
        let table = coupled_clocks(params);
        let mut q = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let from = CoupledConfiguration::from_index(params.n, i);
            for &(clock, rate) in &table {
                let mut to = from.clone();
                apply_clock(&mut to, clock);
                let k = to.to_index();
                if k != i {
                    q[(i, k)] += rate;
                    q[(i, i)] -= rate;
                }
            }
        }
        Ok(Self {
            n: params.n,
            generator: q,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    /// Point mass on one state.
    pub fn point_mass(&self, index: usize) -> DVector<f64> {
        let mut p = DVector::zeros(self.dim());
        p[index] = 1.0;
        p
    }

    /// Solves `mu Q = 0`, `sum mu = 1`, and checks the residual.
    pub fn stationary(&self) -> Result<DVector<f64>> {
        let dim = self.dim();
        let mut a = self.generator.transpose();
        for k in 0..dim {
            a[(dim - 1, k)] = 1.0;
        }
        let mut rhs = DVector::zeros(dim);
        rhs[dim - 1] = 1.0;
        let mu = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular system for the stationary vector".into()))?;
        let residual = (self.generator.transpose() * &mu).amax();
        if residual > 1e-10 {
            return Err(Error::Numerical(format!("stationary residual {residual:e}")));
        }
        Ok(mu)
    }

    /// Law at time `t` from `p0` (row-vector convention `p0 exp(Q t)`).
    pub fn propagate(&self, p0: &DVector<f64>, t: f64) -> DVector<f64> {
        let e = (&self.generator * t).exp();
        e.tr_mul(p0)
    }

    /// `sum_eta |p_t(eta) - mu(eta)|` on each time of `times` (ascending).
    /// Equal gaps reuse one matrix exponential.
    pub fn tv_decay(&self, p0: &DVector<f64>, times: &[f64]) -> Result<Vec<f64>> {
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "times must ascend");
        let mu = self.stationary()?;
        let mut p = p0.clone();
        let mut t = 0.0;
        let mut cached: Option<(f64, DMatrix<f64>)> = None;
        let mut out = Vec::with_capacity(times.len());
        for &s in times {
            let dt = s - t;
            if dt > 0.0 {
                let step = match cached.take() {
                    Some((h, e)) if (h - dt).abs() <= 1e-12 * dt.max(1.0) => (h, e),
                    _ => (dt, (&self.generator * dt).exp()),
                };
                p = step.1.tr_mul(&p);
                cached = Some(step);
            }
            t = s;
            out.push((&p - &mu).abs().sum());
        }
        Ok(out)
    }

    /// Smallest nonzero `-Re(lambda)` over the spectrum of `Q`.
    pub fn spectral_gap(&self) -> Result<f64> {
        smallest_decay(&self.generator, 1e-9)
    }

    /// Occupation probability per site (storage order) of a single-copy law.
    pub fn site_marginals(&self, p: &DVector<f64>) -> Vec<f64> {
        let len = 2 * self.n as usize + 1;
        let mut out = vec![0.0; len];
        for (i, &w) in p.iter().enumerate() {
            for (site, o) in out.iter_mut().enumerate() {
                if (i >> site) & 1 == 1 {
                    *o += w;
                }
            }
        }
        out
    }

    /// Slowest decay rate of the coupled chain restricted to states that still
    /// carry a discrepancy: the exponential rate of `E[#discrepancies]`.
    ///
    /// Read off the growth of `log |exp(Q t)|` between `t` and `2t`, doubling
    /// `t` until two successive estimates agree to `1e-10`.
    pub fn discrepancy_decay_rate(&self) -> Result<f64> {
        let live: Vec<usize> = (0..self.dim())
            .filter(|&i| CoupledConfiguration::from_index(self.n, i).discrepancy_count() > 0)
            .collect();
        let sub = DMatrix::from_fn(live.len(), live.len(), |a, b| self.generator[(live[a], live[b])]);
        let mut t = 1.0;
        let mut e = (&sub * t).exp();
        // e = exp(Q t) / exp(scale)
        let mut scale = 0.0;
        let mut prev = f64::NAN;
        for _ in 0..12 {
            let e2 = &e * &e;
            let (a, b) = (e.amax(), e2.amax());
            if b <= 0.0 || !b.is_finite() {
                break;
            }
            let rate = (a.ln() - b.ln() - scale) / t;
            if (rate - prev).abs() < 1e-10 {
                return Ok(rate);
            }
            prev = rate;
            // renormalise so the entries stay representable
            e = e2 / b;
            scale = 2.0 * scale + b.ln();
            t *= 2.0;
        }
        if prev.is_finite() {
            Ok(prev)
        } else {
            Err(Error::Numerical("discrepancy decay rate did not converge".into()))
        }
    }

    /// Plain-text dump: a `rows cols` header line, then one row per line.
    pub fn to_text(&self) -> String {
        matrix_to_text(&self.generator)
    }
}

pub fn matrix_to_text(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|k| format!("{:.17e}", m[(i, k)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn smallest_decay(m: &DMatrix<f64>, zero_tol: f64) -> Result<f64> {
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| -z.re)
        .filter(|&r| r > zero_tol)
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Uniformisation: `p exp(Qt) = sum_k Pois(k; lt) p P^k`, `P = I + Q/l`.
    fn uniformized(q: &DMatrix<f64>, p0: &DVector<f64>, t: f64) -> DVector<f64> {
        let lambda = (0..q.nrows()).map(|i| -q[(i, i)]).fold(0.0, f64::max) * 1.05;
        let p = DMatrix::identity(q.nrows(), q.nrows()) + q / lambda;
        let mut term = p0.clone();
        let mut weight = (-lambda * t).exp();
        let mut out = &term * weight;
        for k in 1..2000 {
            term = p.tr_mul(&term);
            weight *= lambda * t / k as f64;
            out += &term * weight;
            if k as f64 > lambda * t && weight < 1e-18 {
                break;
            }
        }
        out
    }

    #[test]
    fn generator_structure() {
        for params in [ModelParams::current(1, 1.0), ModelParams::density(2, 0.9, 0.1)] {
            let me = MasterEquation::single(&params, DEFAULT_GUARD).unwrap();
            for i in 0..me.dim() {
                assert!(me.generator.row(i).sum().abs() < 1e-12);
                for k in 0..me.dim() {
                    if k != i {
                        assert!(me.generator[(i, k)] >= 0.0);
                    }
                }
            }
        }
        let me = MasterEquation::coupled(&ModelParams::current(1, 1.0), DEFAULT_GUARD).unwrap();
        assert_eq!(me.dim(), 27);
        assert!((0..27).all(|i| me.generator.row(i).sum().abs() < 1e-12));
    }

    #[test]
    fn guard_rejects_large_spaces() {
        let p = ModelParams::current(7, 1.0);
        assert!(matches!(
            MasterEquation::single(&p, DEFAULT_GUARD),
            Err(Error::StateSpaceTooLarge { states: 32768, .. })
        ));
        assert!(MasterEquation::coupled(&ModelParams::current(5, 1.0), DEFAULT_GUARD).is_err());
    }

    #[test]
    fn matrix_exponential_agrees_with_uniformisation() {
        let me = MasterEquation::single(&ModelParams::current(1, 1.0), DEFAULT_GUARD).unwrap();
        let p0 = me.point_mass(0);
        for t in [0.5, 3.0, 25.0] {
            let a = me.propagate(&p0, t);
            let b = uniformized(&me.generator, &p0, t);
            assert!((a - b).amax() < 1e-10);
        }
    }

    #[test]
    fn current_stationary_law_is_reflect_flip_symmetric() {
        let params = ModelParams::current(1, 1.0);
        let me = MasterEquation::single(&params, DEFAULT_GUARD).unwrap();
        let mu = me.stationary().unwrap();
        // generator commutes with the reflect-flip permutation
        let perm: Vec<usize> = (0..me.dim())
            .map(|i| Configuration::from_index(1, i).reflect_flip().to_index())
            .collect();
        for i in 0..me.dim() {
            assert!((mu[i] - mu[perm[i]]).abs() < 1e-12);
            for k in 0..me.dim() {
                assert!((me.generator[(i, k)] - me.generator[(perm[i], perm[k])]).abs() < 1e-15);
            }
        }
        let m = me.site_marginals(&mu);
        assert!((m[0] + m[2] - 1.0).abs() < 1e-12);
        assert!((m[1] - 0.5).abs() < 1e-12);
        assert!(m[0] < m[1] && m[1] < m[2]);
    }

    #[test]
    fn equal_densities_give_product_bernoulli() {
        let rho = 0.3;
        let params = ModelParams::density(1, rho, rho);
        let me = MasterEquation::single(&params, DEFAULT_GUARD).unwrap();
        let product = DVector::from_fn(me.dim(), |i, _| {
            let c = Configuration::from_index(1, i);
            let k = c.particle_count() as i32;
            rho.powi(k) * (1.0 - rho).powi(3 - k)
        });
        // direct check that the product law is invariant
        assert!((me.generator.tr_mul(&product)).amax() < 1e-14);
        let mu = me.stationary().unwrap();
        assert!((mu - product).amax() < 1e-12);
    }

    #[test]
    fn tv_decay_and_gap() {
        let me = MasterEquation::single(&ModelParams::current(1, 1.0), DEFAULT_GUARD).unwrap();
        let start = me.point_mass(Configuration::full(1).to_index());
        let tv = me.tv_decay(&start, &[0.0, 5.0, 10.0, 40.0]).unwrap();
        assert!(tv[0] > 1.0 && tv[0] <= 2.0);
        assert!(tv.windows(2).all(|w| w[1] < w[0]));
        let gap = me.spectral_gap().unwrap();
        assert!(gap > 0.0);
        // asymptotic decay is at least as fast as the gap predicts
        let ratio = tv[3] / tv[2];
        assert!(ratio <= (-gap * 30.0).exp() * 10.0);
    }

    #[test]
    fn density_coupled_decay_matches_killed_walk() {
        // with density reservoirs each discrepancy is an independent killed walk
        let params = ModelParams::density(2, 0.7, 0.2);
        let me = MasterEquation::coupled(&params, DEFAULT_GUARD).unwrap();
        let exact = super::super::killed_walk::killed_walk_decay_rate(2, &super::super::killed_walk::boundary_potential(2));
        assert_relative_eq!(me.discrepancy_decay_rate().unwrap(), exact, epsilon = 1e-8);
    }

    #[test]
    fn text_dump_has_header() {
        let me = MasterEquation::single(&ModelParams::current(1, 1.0), DEFAULT_GUARD).unwrap();
        let txt = me.to_text();
        assert!(txt.starts_with("8 8\n"));
        assert_eq!(txt.lines().count(), 9);
    }
}
