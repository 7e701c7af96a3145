//! `qjump verify`: quick self-checks printed as JSON lines.

use std::io;
use std::process::ExitCode;

use anyhow::Result;
use num_complex::Complex64 as C64;
use qjump_core::analytic::{mean_field_unconditional, mean_phonon_unconditional, walls_state, InitialWeights};
use qjump_core::hilbert::{self, DensityMatrix, HilbertSpec};
use qjump_core::lindblad::{self, EvolveOptions, JointModel, SimParams};
use qjump_core::record;
use qjump_core::regimes;
use qjump_core::sme::{self, InitialState, Mode, PhononDistribution};
use qjump_core::stats;

use crate::output::{self, CheckLine};

#[derive(Copy, Clone, Debug, clap::ValueEnum)]
pub enum Suite {
    Oracles,
    Conditions,
    Record,
}

fn line(suite: &str, check: &str, pass: bool, measured: f64, expected: &str) -> CheckLine {
    CheckLine {
        suite: suite.to_string(),
        check: check.to_string(),
        pass,
        measured,
        expected: expected.to_string(),
    }
}

pub fn run(suite: Suite) -> Result<ExitCode> {
    let lines = match suite {
        Suite::Oracles => oracles()?,
        Suite::Conditions => conditions()?,
        Suite::Record => record_checks()?,
    };
    output::write_jsonl(io::stdout().lock(), &lines)?;
    Ok(if lines.iter().all(|l| l.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn quiet(kappa: f64, gamma: f64, nbar: f64, chi: f64, dt: f64, t_final: f64, seed: u64) -> SimParams {
    SimParams {
        kappa,
        gamma,
        nbar,
        chi,
        eta: 1.0,
        dt,
        t_final,
        seed,
    }
}

fn oracles() -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();

    // closed-form cavity state with no mechanical bath
    let (kappa, chi) = (1.0, 1.5);
    let spec = HilbertSpec::new(HilbertSpec::auto(chi / kappa, 1).cavity_dim(), 2)?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let init = InitialWeights::pure_product(&[C64::new(h, 0.0), C64::new(0.0, h)], C64::new(0.0, 0.0))?;
    let rho0 = walls_state(&init, chi, kappa, 0.0, &spec)?;
    let params = quiet(kappa, 0.0, 0.0, chi, 1e-3, 2.0, 0);
    let evo = lindblad::evolve_with(&rho0, &params, &spec, 500, &EvolveOptions { positivity_every: None })?;
    let mut worst: f64 = 0.0;
    for (t, rho) in &evo.samples {
        let exact = walls_state(&init, chi, kappa, *t, &spec)?;
        let err = (rho.matrix() - exact.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    out.push(line("oracles", "master_equation_vs_closed_form", worst <= 1e-6, worst, "<= 1e-6"));

    // moments with a thermal bath
    let (kappa, chi, nbar, n0) = (1.0, 0.5, 0.5, 1usize);
    let gamma = kappa / 100.0;
    let spec = HilbertSpec::auto(chi / kappa, n0 + 2);
    let rho0 = DensityMatrix::product(
        &hilbert::fock_state(0, spec.cavity_dim())?,
        &hilbert::fock_state(n0, spec.mech_dim())?,
    );
    let params = quiet(kappa, gamma, nbar, chi, 1e-2, 5.0, 0);
    let evo = lindblad::evolve_with(&rho0, &params, &spec, 10, &EvolveOptions { positivity_every: None })?;
    let model = JointModel::new(&params, &spec);
    let (mut n_err, mut a_err, mut a_peak) = (0.0f64, 0.0f64, 0.0f64);
    for (t, rho) in &evo.samples {
        let (mean_n, _) = model.phonon_moments(rho.matrix());
        let exact_n = mean_phonon_unconditional(n0 as f64, nbar, gamma, *t);
        n_err = n_err.max(((mean_n - exact_n) / exact_n).abs());
        let exact_a = mean_field_unconditional(C64::new(0.0, 0.0), n0 as f64, nbar, chi, gamma, kappa, *t)?;
        a_err = a_err.max((model.mean_a(rho.matrix()) - exact_a).norm());
        a_peak = a_peak.max(exact_a.norm());
    }
    out.push(line("oracles", "phonon_mean_rel_error", n_err <= 1e-4, n_err, "<= 1e-4"));
    out.push(line("oracles", "cavity_mean_rel_error", a_err / a_peak <= 1e-4, a_err / a_peak, "<= 1e-4"));

    // trajectory average against the unconditional mean
    let params = quiet(100.0, 2.0, 0.5, 100.0, 1e-3, 1.0, 11);
    let spec = HilbertSpec::new(2, regimes::thermal_cutoff(0.5, 1e-6) + 1)?;
    let init = InitialState::Diagonal(PhononDistribution::fock(1, spec.mech_dim() - 1)?);
    let count = 200;
    let runs = stats::run_trajectories(&params, &spec, &init, Mode::Adiabatic, 100, count)?;
    let series: Vec<Vec<f64>> = runs.iter().map(|r| r.mean_n.clone()).collect();
    let s = stats::summarize(runs[0].times.clone(), &series)?;
    let mut worst_se: f64 = 0.0;
    for k in 1..s.times.len() {
        let exact = mean_phonon_unconditional(1.0, params.nbar, params.gamma, s.times[k]);
        worst_se = worst_se.max((s.mean_of_mean_n[k] - exact).abs() / s.stderr[k]);
    }
    out.push(line("oracles", "trajectory_mean_in_standard_errors", worst_se <= 4.0, worst_se, "<= 4"));
    Ok(out)
}

fn conditions() -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    for k in 1..=4u8 {
        for p in regimes::figure(k)? {
            let r = p.report();
            let want = match (k, p.label) {
                (2, "a") | (2, "b") => (false, true),
                (3, "a") | (3, "b") => (true, false),
                _ => (true, true),
            };
            let name = format!("fig{k}{}_regime", p.label);
            let got = (r.adiabatic_ok, r.fast_ok);
            let expected = format!("adiabatic {} fast {}", want.0, want.1);
            out.push(line("conditions", &name, got == want, r.adiabatic_ratio.min(r.fast_meas_ratio), &expected));
        }
    }

    // faster measurement resolves jumps better
    let mut scores = Vec::new();
    for p in regimes::figure(3)? {
        let mut params = p.params;
        params.t_final = 5.0;
        let init = InitialState::Diagonal(PhononDistribution::fock(0, p.spec.mech_dim() - 1)?);
        let r = sme::simulate(&params, &p.spec, &init, p.mode, p.sample_every)?;
        let discard = stats::default_discard(params.kappa, p.filter_window());
        scores.push(stats::jump_resolution_score(&r, discard)?);
    }
    let ordered = scores.windows(2).all(|w| w[1] > w[0]);
    out.push(line("conditions", "fig3_scores_increase", ordered, scores[2] - scores[0], "> 0, monotone"));

    let f = regimes::feasibility(0.3, 1.2e7, 0.3e6, 10.0)?;
    let rel = (f.thermal_rate / 3e3 - 1.0).abs();
    out.push(line("conditions", "lab_thermal_rate", rel <= 0.1, f.thermal_rate, "3e3 s^-1 within 10%"));
    out.push(line("conditions", "lab_adiabatic", f.adiabatic_ok, f.adiabatic_margin, ">= 10"));
    out.push(line("conditions", "lab_fast_fails", !f.fast_ok, f.fast_margin, "< 10"));
    Ok(out)
}

fn record_checks() -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    let kappa: f64 = 100.0;
    let chi = (100.0 * kappa).sqrt();
    let window = 0.1;
    let params = quiet(kappa, 0.0, 0.0, chi, 1e-4, window, 77);
    let spec = HilbertSpec::new(2, 4)?;
    let p0 = PhononDistribution::new(vec![0.4, 0.3, 0.2, 0.1])?;
    let windows = 2000;
    let xs = stats::par_indexed(windows, |k| {
        let init = InitialState::Diagonal(p0.clone());
        let r = sme::simulate_with(&params, &spec, &init, Mode::Adiabatic, 100, k as u64, &Default::default())?;
        record::integrate_window(&r.times, &r.photocurrent, 0.0, window)
    })?;
    let mean = xs.iter().sum::<f64>() / windows as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (windows - 1) as f64;
    let want_mean = -2.0 * chi * p0.mean() * window;
    let want_var = 4.0 * chi * chi * window * window * p0.variance() + kappa * window;
    out.push(line("record", "window_mean", (mean / want_mean - 1.0).abs() <= 0.05, mean, &want_mean.to_string()));
    out.push(line("record", "window_variance", (var / want_var - 1.0).abs() <= 0.1, var, &want_var.to_string()));

    let delta = record::sharpness(chi, kappa, window);
    out.push(line("record", "sharpness", (delta - 0.0125).abs() < 1e-12, delta, "0.0125"));

    let pinned = SimParams { seed: 78, ..params };
    let hits = stats::par_indexed(windows, |k| {
        let level = k % 4;
        let init = InitialState::Diagonal(PhononDistribution::fock(level, 3)?);
        let r = sme::simulate_with(&pinned, &spec, &init, Mode::Adiabatic, 100, k as u64, &Default::default())?;
        let x = record::integrate_window(&r.times, &r.photocurrent, 0.0, window)?;
        Ok(record::estimate_center(x, chi, window).round() == level as f64)
    })?;
    let hit = hits.iter().filter(|h| **h).count() as f64 / windows as f64;
    out.push(line("record", "fock_level_from_window", hit >= 0.99, hit, ">= 0.99"));

    // a clean staircase comes back as one event per step
    let dt = 1e-3;
    let times: Vec<f64> = (0..3000).map(|k| k as f64 * dt).collect();
    let levels: Vec<f64> = times.iter().map(|t| if *t < 1.0 { 0.0 } else if *t < 2.0 { 1.0 } else { 0.0 }).collect();
    let raw: Vec<f64> = levels.iter().map(|n| -2.0 * chi * n).collect();
    let filtered = record::sliding_average(&times, &raw, 0.05)?;
    let events = record::detect_jumps(&filtered, 2.0 * chi, record::DEFAULT_HYSTERESIS)?;
    out.push(line("record", "staircase_events", events.len() == 2, events.len() as f64, "2"));
    Ok(out)
}
