//! Processing of the homodyne record: causal filtering, window integrals, the
//! Gaussian number estimator and level-change detection.
//!
//! Series are sampled on a uniform grid where entry `k` stands for the interval
//! ending at `times[k]`, as produced by [`crate::sme::simulate`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sme::PhononDistribution;

/// Default hysteresis of [`detect_jumps`], in levels.
pub const DEFAULT_HYSTERESIS: f64 = 0.3;

/// Causal boxcar average of a sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub window: f64,
    /// Leading samples whose trailing window is incomplete.
    pub warmup: usize,
}

impl FilteredSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples after the warm-up, as `(time, value)` pairs.
    pub fn settled(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .skip(self.warmup)
    }
}

/// Committed change of the estimated phonon level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    pub from_n: usize,
    pub to_n: usize,
}

impl JumpEvent {
    /// Single-phonon step, the only kind a thermal bath produces.
    pub fn is_single_step(&self) -> bool {
        self.from_n.abs_diff(self.to_n) == 1
    }
}

fn grid_step(times: &[f64]) -> Result<f64> {
    match times {
        [a, b, ..] if b > a => Ok(b - a),
        [_, _, ..] => Err(Error::InvalidWindow("sample times must increase".into())),
        _ => Err(Error::InvalidWindow("need at least two samples".into())),
    }
}

/// Trailing boxcar mean over `window`.
///
/// The window is rounded to a whole number of samples, which must be at least
/// two. Samples before the first full window average what is available and are
/// counted in `warmup`.
pub fn sliding_average(times: &[f64], raw: &[f64], window: f64) -> Result<FilteredSeries> {
    if times.len() != raw.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: raw.len(),
        });
    }
    let dt = grid_step(times)?;
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::InvalidWindow(format!("window {window} must be positive")));
    }
    let width = (window / dt).round() as usize;
    if width < 2 {
        return Err(Error::InvalidWindow(format!(
            "window {window} spans {width} samples of {dt}; need at least 2"
        )));
    }
    let mut values = Vec::with_capacity(raw.len());
    let mut sum = 0.0;
    for (k, &x) in raw.iter().enumerate() {
        sum += x;
        if k >= width {
            sum -= raw[k - width];
        }
        values.push(sum / (k + 1).min(width) as f64);
    }
    Ok(FilteredSeries {
        times: times.to_vec(),
        values,
        window: width as f64 * dt,
        warmup: (width - 1).min(raw.len()),
    })
}

/// `∫ i_h dt` over `(t0, t0 + dt_window]` as a Riemann sum on the sample grid.
pub fn integrate_window(times: &[f64], raw: &[f64], t0: f64, dt_window: f64) -> Result<f64> {
    if times.len() != raw.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: raw.len(),
        });
    }
    let dt = grid_step(times)?;
    if !(dt_window > 0.0) {
        return Err(Error::InvalidWindow(format!("duration {dt_window} must be positive")));
    }
    let start = times[0] - dt;
    let end = *times.last().unwrap_or(&start);
    let slack = 1e-9 * dt;
    if t0 < start - slack || t0 + dt_window > end + slack {
        return Err(Error::InvalidWindow(format!(
            "[{t0}, {}] is outside the record [{start}, {end}]",
            t0 + dt_window
        )));
    }
    let first = ((t0 - start) / dt).round() as usize;
    let count = (dt_window / dt).round() as usize;
    if count == 0 {
        return Err(Error::InvalidWindow(format!("duration {dt_window} is shorter than a sample")));
    }
    Ok(raw[first..(first + count).min(raw.len())].iter().sum::<f64>() * dt)
}

/// `P(x | n)` for the integrated current over a window `δt`.
pub fn likelihood(x: f64, n: usize, chi: f64, kappa: f64, dt_window: f64) -> f64 {
    let var = kappa * dt_window;
    let mean = -2.0 * chi * n as f64 * dt_window;
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Centre `n̄ = −x/(2χδt)` of the number estimate from one window.
pub fn estimate_center(x: f64, chi: f64, dt_window: f64) -> f64 {
    -x / (2.0 * chi * dt_window)
}

/// Sharpness parameter `Δ = κ/(8χ²δt)`; the estimate singles out one level
/// when `Δ ≪ 1`, equivalently `8Γδt ≫ 1`.
pub fn sharpness(chi: f64, kappa: f64, dt_window: f64) -> f64 {
    kappa / (8.0 * chi * chi * dt_window)
}

/// Posterior `p_n P(x|n) / P(x)` on the support of `prior`.
///
/// Computed in log space; fails if the evidence `P(x)` underflows.
pub fn bayes_update(
    prior: &PhononDistribution,
    x: f64,
    chi: f64,
    kappa: f64,
    dt_window: f64,
) -> Result<PhononDistribution> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidRate { name: "kappa", value: kappa });
    }
    if !(dt_window > 0.0) {
        return Err(Error::InvalidWindow(format!("duration {dt_window} must be positive")));
    }
    let var = kappa * dt_window;
    let log_w: Vec<f64> = prior
        .probabilities()
        .iter()
        .enumerate()
        .map(|(n, &p)| {
            let mean = -2.0 * chi * n as f64 * dt_window;
            p.ln() - (x - mean).powi(2) / (2.0 * var)
        })
        .collect();
    let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_evidence = peak - 0.5 * (2.0 * PI * var).ln();
    if !peak.is_finite() || log_evidence < f64::MIN_POSITIVE.ln() {
        return Err(Error::DegenerateEvidence { x });
    }
    PhononDistribution::new(log_w.iter().map(|l| (l - peak).exp()).collect())
}

/// Level changes of a signal already expressed in phonons.
///
/// The level starts at the rounded first value and moves only when the signal
/// passes the midpoint to a neighbour by more than `hysteresis`.
pub fn detect_levels(times: &[f64], levels: &[f64], hysteresis: f64) -> Result<Vec<JumpEvent>> {
    if times.len() != levels.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: levels.len(),
        });
    }
    if !(hysteresis > 0.0 && hysteresis < 0.5) {
        return Err(Error::InvalidParameter {
            name: "hysteresis",
            reason: format!("{hysteresis} is outside (0, 0.5)"),
        });
    }
    let to_level = |s: f64| s.round().max(0.0) as usize;
    let mut events = Vec::new();
    let Some(&first) = levels.first() else {
        return Ok(events);
    };
    let mut level = to_level(first);
    for (&t, &s) in times.iter().zip(levels) {
        let l = level as f64;
        if s > l + 0.5 + hysteresis || s < l - 0.5 - hysteresis {
            let next = to_level(s);
            if next != level {
                events.push(JumpEvent {
                    t,
                    from_n: level,
                    to_n: next,
                });
                level = next;
            }
        }
    }
    Ok(events)
}

/// Jumps in a filtered current or quadrature whose level `n` sits at `−gain·n`.
///
/// `gain` is `2ηχ` for the photocurrent and `2χ/κ` for the phase quadrature.
/// Warm-up samples are skipped and event times are moved back by half a
/// window, the delay of the boxcar.
pub fn detect_jumps(filtered: &FilteredSeries, gain: f64, hysteresis: f64) -> Result<Vec<JumpEvent>> {
    if gain == 0.0 || !gain.is_finite() {
        return Err(Error::InvalidParameter {
            name: "gain",
            reason: format!("{gain} must be finite and nonzero"),
        });
    }
    let (times, levels): (Vec<f64>, Vec<f64>) = filtered.settled().map(|(t, v)| (t, -v / gain)).unzip();
    let mut events = detect_levels(&times, &levels, hysteresis)?;
    for e in &mut events {
        e.t -= 0.5 * filtered.window;
    }
    Ok(events)
}
