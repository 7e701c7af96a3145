//! Rates, the adiabatic and fast-measurement conditions, drive conversions,
//! the laboratory feasibility estimate and the parameter sets of the figures.
//!
//! Figure presets use the thermal excitation rate `γN̄` as the unit of rate.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{self, HilbertSpec};
use crate::lindblad::SimParams;
use crate::sme::Mode;

/// Ratio at which `≫` is taken to hold.
pub const THRESHOLD: f64 = 10.0;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Rate at which the bath moves the mechanics out of Fock state `n`.
pub fn thermalization_rate(n: usize, nbar: f64, gamma: f64) -> f64 {
    let n = n as f64;
    gamma * (nbar * (n + 1.0) + (nbar + 1.0) * n)
}

/// `Γ = χ²/κ`.
pub fn measurement_rate(chi: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidRate { name: "kappa", value: kappa });
    }
    Ok(chi * chi / kappa)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    /// Thermalization rate of the highest level to be resolved.
    pub thermalization_rate: f64,
    pub measurement_rate: f64,
    /// `κ` over the thermalization rate.
    pub adiabatic_ratio: f64,
    /// `Γ` over the thermalization rate.
    pub fast_meas_ratio: f64,
    /// `χ/κ`.
    pub gain: f64,
    pub adiabatic_ok: bool,
    pub fast_ok: bool,
}

fn ratio(rate: f64, against: f64) -> f64 {
    if against > 0.0 {
        rate / against
    } else {
        f64::INFINITY
    }
}

/// Both conditions for resolving jumps out of levels up to `n_max`.
pub fn check_conditions(params: &SimParams, n_max: usize) -> RegimeReport {
    let thermal = thermalization_rate(n_max, params.nbar, params.gamma);
    let big_gamma = params.measurement_rate();
    let adiabatic_ratio = ratio(params.kappa, thermal);
    let fast_meas_ratio = ratio(big_gamma, thermal);
    RegimeReport {
        thermalization_rate: thermal,
        measurement_rate: big_gamma,
        adiabatic_ratio,
        fast_meas_ratio,
        gain: params.chi / params.kappa,
        adiabatic_ok: adiabatic_ratio >= THRESHOLD,
        fast_ok: fast_meas_ratio >= THRESHOLD,
    }
}

/// Steady amplitude `α₀ = −iε/(κ/2 + iδ)` of the driven cavity.
pub fn steady_cavity_amplitude(epsilon: C64, kappa: f64, detuning: f64) -> C64 {
    -C64::i() * epsilon / C64::new(kappa / 2.0, detuning)
}

/// Effective coupling `χ = 2Gα₀` of the linearized drive.
pub fn chi_from_drive(g: f64, alpha0: f64) -> f64 {
    2.0 * g * alpha0
}

/// Laboratory estimate in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// `k_B T/(Qħ)`, the thermalization scale, s⁻¹.
    pub thermal_rate: f64,
    pub measurement_rate: f64,
    /// `κ` over the thermal rate.
    pub adiabatic_margin: f64,
    /// `χ²/κ` over the thermal rate.
    pub fast_margin: f64,
    pub adiabatic_ok: bool,
    pub fast_ok: bool,
}

/// Checks both conditions against `k_B T/(Qħ)` for a bath at `temperature`
/// kelvin and a mechanical quality factor `q`.
pub fn feasibility(temperature: f64, q: f64, kappa: f64, chi: f64) -> Result<Feasibility> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "temperature",
            reason: format!("{temperature} K must be positive"),
        });
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "Q",
            reason: format!("{q} must be positive"),
        });
    }
    if !chi.is_finite() {
        return Err(Error::InvalidRate { name: "chi", value: chi });
    }
    let thermal_rate = BOLTZMANN * temperature / (q * HBAR);
    let big_gamma = measurement_rate(chi, kappa)?;
    let adiabatic_margin = kappa / thermal_rate;
    let fast_margin = big_gamma / thermal_rate;
    Ok(Feasibility {
        thermal_rate,
        measurement_rate: big_gamma,
        adiabatic_margin,
        fast_margin,
        adiabatic_ok: adiabatic_margin >= THRESHOLD,
        fast_ok: fast_margin >= THRESHOLD,
    })
}

/// One simulated panel of a figure.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub figure: u8,
    /// `"a"`, `"b"`, ... in caption order.
    pub label: &'static str,
    pub params: SimParams,
    pub mode: Mode,
    pub spec: HilbertSpec,
    pub sample_every: usize,
    /// Highest level whose jumps the panel is meant to resolve.
    pub n_max: usize,
}

impl Panel {
    pub fn report(&self) -> RegimeReport {
        check_conditions(&self.params, self.n_max)
    }

    /// Spacing of the recorded samples.
    pub fn sample_interval(&self) -> f64 {
        self.params.dt * self.sample_every as f64
    }

    /// `τ₁/10`, the default filter and estimator window.
    pub fn filter_window(&self) -> f64 {
        0.1 / thermalization_rate(1, self.params.nbar, self.params.gamma)
    }
}

/// Fixed default seed of each figure.
pub fn default_seed(figure: u8) -> u64 {
    1000 * figure as u64 + 7
}

/// Fewest cavity levels kept in a frame of the full SME.
pub const FRAME_CAVITY_DIM: usize = 16;
/// Most cavity levels the presets spend on the pointer frame.
pub const MAX_POINTER_CAVITY_DIM: usize = 40;
/// Mechanical levels kept in the full SME.
pub const FULL_MECH_DIM: usize = 6;
/// Target spacing of recorded samples, in `1/γN̄`.
pub const SAMPLE_SPACING: f64 = 5e-4;

/// Smallest truncation whose thermal occupancy of the top level is below `tol`.
pub fn thermal_cutoff(nbar: f64, tol: f64) -> usize {
    if nbar <= 0.0 {
        return 1;
    }
    let x = nbar / (nbar + 1.0);
    let mut n = 1;
    while (1.0 - x) * x.powi(n as i32) >= tol {
        n += 1;
    }
    n
}

/// Cavity truncation for the full SME at pointer gain `χ/κ`: enough levels to
/// hold a one-phonon shift in the pointer frame, or the moving-frame minimum
/// when that would exceed [`MAX_POINTER_CAVITY_DIM`].
pub fn full_cavity_dim(gain: f64) -> usize {
    let (_, needed) = hilbert::coherent_leak(C64::new(gain.abs(), 0.0), FRAME_CAVITY_DIM, hilbert::LEAK_TOL);
    if needed <= MAX_POINTER_CAVITY_DIM {
        needed.max(FRAME_CAVITY_DIM)
    } else {
        FRAME_CAVITY_DIM
    }
}

fn panel(figure: u8, label: &'static str, nbar: f64, kappa: f64, big_gamma: f64, t_final: f64, mode: Mode) -> Panel {
    // rates in units of γN̄
    let gamma = 1.0 / nbar;
    let chi = (big_gamma * kappa).sqrt();
    let spec = match mode {
        Mode::Full => HilbertSpec::new(full_cavity_dim(chi / kappa), FULL_MECH_DIM),
        Mode::Adiabatic => HilbertSpec::new(2, thermal_cutoff(nbar, 1e-6) + 1),
    }
    .expect("preset dimensions are valid");
    let dt = SimParams::default_dt(kappa, gamma, nbar, chi, spec.mech_dim() - 1, mode == Mode::Full);
    Panel {
        figure,
        label,
        params: SimParams {
            kappa,
            gamma,
            nbar,
            chi,
            eta: 1.0,
            dt,
            t_final,
            seed: default_seed(figure),
        },
        mode,
        spec,
        sample_every: ((SAMPLE_SPACING / dt).round() as usize).max(1),
        n_max: 1,
    }
}

/// Parameter sets of figure `k`.
pub fn figure(k: u8) -> Result<Vec<Panel>> {
    let panels = match k {
        1 => vec![panel(1, "a", 0.5, 100.0, 225.0, 10.0, Mode::Full)],
        2 => ["a", "b", "c"]
            .into_iter()
            .zip([1.0, 10.0, 100.0])
            .map(|(l, kappa)| panel(2, l, 0.5, kappa, 100.0, 10.0, Mode::Full))
            .collect(),
        3 => ["a", "b", "c"]
            .into_iter()
            .zip([1.0, 10.0, 100.0])
            .map(|(l, g)| panel(3, l, 0.5, 1e4, g, 20.0, Mode::Adiabatic))
            .collect(),
        4 => ["a", "b"]
            .into_iter()
            .zip([0.5, 1.0])
            .map(|(l, nbar)| panel(4, l, nbar, 100.0, 400.0, 30.0, Mode::Adiabatic))
            .collect(),
        _ => {
            return Err(Error::InvalidParameter {
                name: "figure",
                reason: format!("{k} is not one of 1, 2, 3, 4"),
            })
        }
    };
    Ok(panels)
}
