//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers in units of `γN̄` and returns a JSON string.

use qjump_core::hilbert::HilbertSpec;
use qjump_core::lindblad::SimParams;
use qjump_core::record;
use qjump_core::regimes;
use qjump_core::sme::{self, InitialState, Mode, PhononDistribution};
use qjump_core::stats;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Most points shipped to the page per series.
const MAX_POINTS: usize = 1500;

fn params(nbar: f64, kappa: f64, big_gamma: f64, t_final: f64, seed: u64) -> SimParams {
    let gamma = 1.0 / nbar;
    let chi = (big_gamma * kappa).sqrt();
    let mech = regimes::thermal_cutoff(nbar, 1e-6) + 1;
    SimParams {
        kappa,
        gamma,
        nbar,
        chi,
        eta: 1.0,
        dt: SimParams::default_dt(kappa, gamma, nbar, chi, mech - 1, false),
        t_final,
        seed,
    }
}

fn thin(v: &[f64], stride: usize) -> Vec<f64> {
    v.iter().step_by(stride).copied().collect()
}

/// One adiabatic trajectory with its filtered photocurrent rescaled to phonon number.
pub fn trajectory_json(nbar: f64, kappa: f64, big_gamma: f64, t_final: f64, seed: u64) -> Result<Value, String> {
    if !nbar.is_finite() || nbar <= 0.0 {
        return Err(format!("N̄ = {nbar} must be positive"));
    }
    let p = params(nbar, kappa, big_gamma, t_final, seed);
    let spec = HilbertSpec::new(2, regimes::thermal_cutoff(nbar, 1e-6) + 1).map_err(|e| e.to_string())?;
    let init = InitialState::Diagonal(PhononDistribution::fock(0, spec.mech_dim() - 1).map_err(|e| e.to_string())?);
    let every = ((regimes::SAMPLE_SPACING / p.dt).round() as usize).max(1);
    let r = sme::simulate(&p, &spec, &init, Mode::Adiabatic, every).map_err(|e| e.to_string())?;
    let window = 0.1 / regimes::thermalization_rate(1, nbar, p.gamma);
    let f = record::sliding_average(&r.times, &r.photocurrent, window).map_err(|e| e.to_string())?;
    let readout: Vec<f64> = f.values.iter().map(|i| -i / (2.0 * p.chi)).collect();
    let discard = stats::default_discard(kappa, window);
    let hist = stats::fock_histogram(&r, discard).map_err(|e| e.to_string())?;
    let stride = r.len().div_ceil(MAX_POINTS).max(1);
    Ok(json!({
        "times": thin(&r.times, stride),
        "mean_n": thin(&r.mean_n, stride),
        "readout": thin(&readout, stride),
        "window": window,
        "dt": p.dt,
        "histogram": hist.weights,
        "thermal": stats::thermal_distribution(nbar, hist.weights.len().max(2) - 1)
            .map(|d| d.probabilities().to_vec())
            .unwrap_or_default(),
    }))
}

/// Regime report for resolving jumps out of levels up to `n_max`.
pub fn regime_json(nbar: f64, kappa: f64, big_gamma: f64, n_max: usize) -> Value {
    let p = params(nbar.max(1e-12), kappa, big_gamma, 1.0, 0);
    let r = regimes::check_conditions(&p, n_max);
    json!({
        "thermalization_rate": r.thermalization_rate,
        "measurement_rate": r.measurement_rate,
        "adiabatic_ratio": r.adiabatic_ratio,
        "fast_meas_ratio": r.fast_meas_ratio,
        "gain": r.gain,
        "adiabatic_ok": r.adiabatic_ok,
        "fast_ok": r.fast_ok,
        "threshold": regimes::THRESHOLD,
    })
}

/// Posteriors after each of `windows` integrated windows of a record taken on
/// Fock state `level`, starting from a thermal prior at `nbar`.
pub fn posterior_json(
    nbar: f64,
    kappa: f64,
    big_gamma: f64,
    level: usize,
    window: f64,
    windows: usize,
    seed: u64,
) -> Result<Value, String> {
    let n_max = (level + 3).max(regimes::thermal_cutoff(nbar, 1e-3));
    let chi = (big_gamma * kappa).sqrt();
    // a frozen level: no bath, only the record
    let p = SimParams {
        kappa,
        gamma: 0.0,
        nbar: 0.0,
        chi,
        eta: 1.0,
        dt: (window / 200.0).min(0.1 / kappa),
        t_final: window * windows as f64,
        seed,
    };
    let spec = HilbertSpec::new(2, n_max + 1).map_err(|e| e.to_string())?;
    let init = InitialState::Diagonal(PhononDistribution::fock(level, n_max).map_err(|e| e.to_string())?);
    let r = sme::simulate(&p, &spec, &init, Mode::Adiabatic, 1).map_err(|e| e.to_string())?;
    let mut belief = stats::thermal_distribution(nbar, n_max).map_err(|e| e.to_string())?;
    let mut steps = vec![json!({ "x": Value::Null, "posterior": belief.probabilities() })];
    for k in 0..windows {
        let x = record::integrate_window(&r.times, &r.photocurrent, k as f64 * window, window).map_err(|e| e.to_string())?;
        belief = record::bayes_update(&belief, x, chi, kappa, window).map_err(|e| e.to_string())?;
        steps.push(json!({ "x": x, "estimate": record::estimate_center(x, chi, window), "posterior": belief.probabilities() }));
    }
    Ok(json!({
        "sharpness": record::sharpness(chi, kappa, window),
        "steps": steps,
    }))
}

#[wasm_bindgen]
pub fn trajectory(nbar: f64, kappa: f64, big_gamma: f64, t_final: f64, seed: u32) -> Result<String, JsError> {
    trajectory_json(nbar, kappa, big_gamma, t_final, seed as u64)
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn regime(nbar: f64, kappa: f64, big_gamma: f64, n_max: u32) -> String {
    regime_json(nbar, kappa, big_gamma, n_max as usize).to_string()
}

#[wasm_bindgen]
pub fn posterior(
    nbar: f64,
    kappa: f64,
    big_gamma: f64,
    level: u32,
    window: f64,
    windows: u32,
    seed: u32,
) -> Result<String, JsError> {
    posterior_json(nbar, kappa, big_gamma, level as usize, window, windows as usize, seed as u64)
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}
