//! wasm-bindgen entry points for `www/index.html`. Every function returns a
//! flat `Float64Array`; the layout is given per function.

use stirring::dynamics::{estimate_stationary_profile, StationaryRun};
use stirring::estimators::killed_walk::{boundary_potential, feynman_kac_solve};
use stirring::estimators::{fit_exponential_rate, default_window};
use stirring::harris::{survival_samples, SurvivalRequest};
use stirring::ModelParams;
use wasm_bindgen::prelude::*;

const MAX_N: u32 = 64;

fn params(model: &str, n: u32, j: f64, rho_plus: f64, rho_minus: f64) -> Result<ModelParams, String> {
    if n > MAX_N {
        return Err(format!("N above {MAX_N} is too slow for the browser"));
    }
    let p = match model {
        "current" => ModelParams::current(n, j),
        "density" => ModelParams::density(n, rho_plus, rho_minus),
        other => return Err(format!("unknown model {other:?}")),
    };
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

/// `[mean(-N..=N), stderr(-N..=N)]`, length `2 (2N+1)`.
pub fn profile(
    model: &str,
    n: u32,
    j: f64,
    rho_plus: f64,
    rho_minus: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let p = params(model, n, j, rho_plus, rho_minus)?;
    let n2 = f64::from(n * n);
    let run = StationaryRun::with_defaults(&p, 10.0 * n2, replicas.max(1));
    let prof = estimate_stationary_profile(&p, &run, seed);
    Ok(prof.mean.into_iter().chain(prof.stderr).collect())
}

/// `[t_0.., p_0.., b_hat N^2]` for the tagged discrepancy on `[0, 40 N^2]`;
/// the last entry is NaN when the fit window has too little data.
pub fn survival(
    model: &str,
    n: u32,
    j: f64,
    rho_plus: f64,
    rho_minus: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let p = params(model, n, j, rho_plus, rho_minus)?;
    let n2 = f64::from(n * n);
    let req = SurvivalRequest::standard(&p, 40.0 * n2, 81, replicas.max(1));
    let run = survival_samples(&p, &req, seed);
    let scaled = fit_exponential_rate(&run.curve, default_window(n))
        .map(|f| f.b_hat * n2)
        .unwrap_or(f64::NAN);
    let mut out = run.curve.grid;
    out.extend(run.curve.p_hat);
    out.push(scaled);
    Ok(out)
}

/// `pi(x, t)` for `x = -N..=N`.
pub fn killed_walk(n: u32, t: f64) -> Result<Vec<f64>, String> {
    if n == 0 || n > MAX_N {
        return Err(format!("N must lie in 1..={MAX_N}"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err("t must be non-negative".into());
    }
    let sol = feynman_kac_solve(n, t, 0.05, &boundary_potential(n));
    Ok(sol.at(t))
}

#[wasm_bindgen]
pub fn stationary_profile(
    model: &str,
    n: u32,
    j: f64,
    rho_plus: f64,
    rho_minus: f64,
    replicas: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    profile(model, n, j, rho_plus, rho_minus, replicas as usize, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn survival_curve(
    model: &str,
    n: u32,
    j: f64,
    rho_plus: f64,
    rho_minus: f64,
    replicas: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    survival(model, n, j, rho_plus, rho_minus, replicas as usize, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn killed_walk_profile(n: u32, t: f64) -> Result<Vec<f64>, JsError> {
    killed_walk(n, t).map_err(|e| JsError::new(&e))
}
