//! Conditional dynamics under homodyne detection of the cavity phase quadrature.
//!
//! Two integrators share one record format:
//!
//! * the full stochastic master equation on cavity ⊗ mechanics, and
//! * the diagonal stochastic rate equation for `p_n` left after adiabatic
//!   elimination of the cavity (`a → −i(χ/κ)b†b`).
//!
//! The full SME is stepped in Kraus form and the rate equation with an Euler
//! thermal step followed by the exact likelihood update of the measurement;
//! both are first order and positivity preserving. The Wiener increment of a
//! step drives the state update and the photocurrent sample of that step.
//!
//! By default the full SME runs in the pointer frame of [`PointerStepper`],
//! where every phonon branch carries its own cavity displacement. The older
//! single-frame integrator remains available: it runs either in the lab frame
//! or in a displaced cavity frame `ρ = D(β) ρ̃ D(β)†` whose centre follows the
//! conditional cavity amplitude. The frame is exact:
//! the generator for `ρ̃` picks up `−[u a† − u* a, ρ̃]` with `u = β̇ + κβ/2`
//! and a mechanical phase `χ Re β b†b`, while the innovation `H[−ia]` is
//! unchanged. Only the Fock cutoff of `ρ̃` then needs to cover the spread of the
//! cavity state, not its full excursion; that fails once distant phonon
//! branches hold weight, which the pointer frame avoids.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hilbert::{self, CMatrix, DensityMatrix, HilbertSpec};
use crate::lindblad::{mirror_upper, JointModel, SimParams};

mod pointer;

pub use pointer::PointerStepper;

/// Largest probability mass the SRE may clamp away in a single step.
pub const MAX_CLAMP_PER_STEP: f64 = 1e-3;

/// Probability distribution over phonon Fock levels `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononDistribution {
    p: Vec<f64>,
}

impl PhononDistribution {
    /// Normalizes `weights`; they must be finite, non-negative and not all zero.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension { dim: 0 });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "weights must be finite and non-negative".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "weights sum to zero".into(),
            });
        }
        Ok(Self {
            p: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn fock(k: usize, n_max: usize) -> Result<Self> {
        if k > n_max {
            return Err(Error::Truncation {
                leak: 1.0,
                required_dim: k + 1,
            });
        }
        let mut p = vec![0.0; n_max + 1];
        p[k] = 1.0;
        Ok(Self { p })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.p.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.p
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum()
    }
}

/// Sampled conditional trajectory. Entry `k` describes the state at `times[k]`
/// and the record over the sampling interval ending there: `photocurrent` is
/// the current averaged over that interval and `dw` the summed increments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub mean_n: Vec<f64>,
    pub var_n: Vec<f64>,
    /// `⟨−ia + ia†⟩`. In adiabatic mode this is the eliminated value `−2(χ/κ)⟨n⟩`.
    pub quad_phase: Vec<f64>,
    pub photocurrent: Vec<f64>,
    pub dw: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub diagnostics: Diagnostics,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Spacing of the sample grid.
    pub fn sample_interval(&self) -> f64 {
        match self.times.as_slice() {
            [first, second, ..] => second - first,
            [only] => *only,
            [] => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Largest population seen on the highest cavity Fock level.
    pub max_cavity_top: f64,
    /// Largest population seen on the highest phonon level.
    pub max_phonon_top: f64,
    /// Probability removed by clamping negative SRE weights, summed over steps.
    pub clamped_mass: f64,
    /// Smallest eigenvalue seen at positivity checkpoints, if any ran.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Adiabatic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Joint(DensityMatrix),
    Diagonal(PhononDistribution),
}

/// Cavity frame of the full SME.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Fock basis of the laboratory.
    Lab,
    /// One displaced frame following the conditional amplitude.
    Moving,
    /// Branch `n` displaced by its pointer amplitude `−iχn/κ`.
    Pointer,
    /// `Pointer` when a one-phonon shift `χ/κ` fits the cavity basis, else `Moving`.
    Auto,
}

impl Frame {
    /// Resolves `Auto` for the given truncation.
    pub fn resolve(self, params: &SimParams, spec: &HilbertSpec) -> Frame {
        match self {
            Frame::Auto => {
                let gain = C64::new(params.chi / params.kappa, 0.0);
                let (leak, _) = hilbert::coherent_leak(gain, spec.cavity_dim(), hilbert::LEAK_TOL);
                if leak <= hilbert::LEAK_TOL {
                    Frame::Pointer
                } else {
                    Frame::Moving
                }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    pub frame: Frame,
    /// Check positivity every this many steps (full mode only).
    pub positivity_every: Option<usize>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            frame: Frame::Auto,
            positivity_every: None,
        }
    }
}

/// Random stream for trajectory `stream` of an ensemble seeded with `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Gaussian increment with mean 0 and variance `dt`.
pub fn wiener_increment<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * dt.sqrt()
}

/// Positivity-preserving integrator for the joint SME, optionally in a moving frame.
#[derive(Debug, Clone)]
pub struct FullStepper {
    model: JointModel,
    params: SimParams,
    frame: C64,
    moving_frame: bool,
    scratch: CMatrix,
    increment: CMatrix,
}

impl FullStepper {
    pub fn new(params: &SimParams, spec: &HilbertSpec, moving_frame: bool) -> Self {
        let d = spec.joint_dim();
        Self {
            model: JointModel::new(params, spec),
            params: *params,
            frame: C64::new(0.0, 0.0),
            moving_frame,
            scratch: CMatrix::zeros(d, d),
            increment: CMatrix::zeros(d, d),
        }
    }

    /// Centre `β` of the current cavity frame.
    pub fn frame(&self) -> C64 {
        self.frame
    }

    pub fn model(&self) -> &JointModel {
        &self.model
    }

    /// Lab-frame `⟨a⟩` for a frame state `ρ̃`.
    pub fn mean_a(&self, rho: &CMatrix) -> C64 {
        self.model.mean_a(rho) + self.frame
    }

    /// Lab-frame `⟨−ia + ia†⟩`.
    pub fn quadrature(&self, rho: &CMatrix) -> f64 {
        2.0 * self.mean_a(rho).im
    }

    /// Advances `rho` (a frame state) by one step driven by `dw`, returning the
    /// photocurrent sample of that step.
    ///
    /// The update is `M ρ M† + Σ L ρ L† dt` renormalized, with `M` carrying the
    /// drift, the innovation and the Itô correction. It agrees with
    /// Euler–Maruyama to first order but cannot leave the positive cone.
    pub fn step(&mut self, rho: &mut CMatrix, dw: f64, step: usize) -> Result<f64> {
        let p = self.params;
        let dt = p.dt;
        let spec = *self.model.spec();
        let nc = spec.cavity_dim();
        let nm = spec.mech_dim();
        let d = nc * nm;
        let relative = self.model.mean_a(rho);
        let beta = self.frame;
        let quad_lab = 2.0 * (relative + beta).im;
        let rate = p.eta * p.kappa;
        let dy = p.eta.sqrt() * p.kappa.sqrt() * quad_lab * dt + dw;
        let current = rate.sqrt() * dy / dt;

        let beta_dot = if self.moving_frame {
            let (mean_n, _) = self.model.phonon_moments(rho);
            C64::new(0.0, -p.chi * mean_n / 2.0) + relative * p.kappa - beta * (p.kappa / 2.0)
        } else {
            C64::new(0.0, 0.0)
        };

        let i = C64::new(0.0, 1.0);
        let ito = dy * dy - dt;
        let up = p.gamma * p.nbar;
        let down = p.gamma * (p.nbar + 1.0);
        let s: Vec<f64> = (0..nc + 2).map(|k| (k as f64).sqrt()).collect();
        let bbdag = |n: usize| if n + 1 < nm { (n + 1) as f64 } else { 0.0 };

        // M = Σ diag + A(n)·a + B(n)·a† + C·a², per mechanical level n
        let mut diag = vec![C64::new(0.0, 0.0); d];
        let mut coef_a = vec![C64::new(0.0, 0.0); nm];
        let mut coef_ad = vec![C64::new(0.0, 0.0); nm];
        let coef_aa = C64::new(-0.5 * rate * ito, 0.0);
        let const_part =
            -i * rate.sqrt() * beta * dy - 0.5 * rate * beta * beta * ito - 0.5 * p.kappa * beta.norm_sqr() * dt;
        for n in 0..nm {
            let fnn = n as f64;
            coef_a[n] = -i * (0.5 * p.chi * fnn * dt) + beta_dot.conj() * dt - beta.conj() * (0.5 * p.kappa * dt)
                - i * rate.sqrt() * dy
                - beta * (rate * ito);
            coef_ad[n] = -i * (0.5 * p.chi * fnn * dt) - beta_dot * dt - beta * (0.5 * p.kappa * dt);
        }
        for ci in 0..nc {
            for n in 0..nm {
                let fnn = n as f64;
                let real = 0.5 * p.kappa * ci as f64 + 0.5 * down * fnn + 0.5 * up * bbdag(n);
                diag[ci * nm + n] =
                    C64::new(1.0, 0.0) + const_part - (C64::new(real, 0.0) + i * (p.chi * beta.re * fnn)) * dt;
            }
        }

        // X = M ρ, row side
        let x = &mut self.scratch;
        {
            let src = rho.as_slice();
            let dst = x.as_mut_slice();
            for col in 0..d {
                let off = col * d;
                for ci in 0..nc {
                    for n in 0..nm {
                        let r = ci * nm + n;
                        let mut acc = diag[r] * src[r + off];
                        if ci + 1 < nc {
                            acc += coef_a[n] * s[ci + 1] * src[r + nm + off];
                        }
                        if ci >= 1 {
                            acc += coef_ad[n] * s[ci] * src[r - nm + off];
                        }
                        if ci + 2 < nc {
                            acc += coef_aa * s[ci + 1] * s[ci + 2] * src[r + 2 * nm + off];
                        }
                        dst[r + off] = acc;
                    }
                }
            }
        }

        // Y = X M† + jumps, upper triangle
        let y = &mut self.increment;
        {
            let xs = x.as_slice();
            let src = rho.as_slice();
            let dst = y.as_mut_slice();
            let lost = (1.0 - p.eta) * p.kappa * dt;
            for cj in 0..nc {
                for m in 0..nm {
                    let c = cj * nm + m;
                    let off = c * d;
                    let dc = diag[c].conj();
                    let ac = coef_a[m].conj();
                    let bc = coef_ad[m].conj();
                    let cc = coef_aa.conj();
                    for r in 0..=c {
                        let (ci, n) = (r / nm, r % nm);
                        let mut acc = dc * xs[r + off];
                        if cj + 1 < nc {
                            acc += ac * s[cj + 1] * xs[r + off + nm * d];
                        }
                        if cj >= 1 {
                            acc += bc * s[cj] * xs[r + off - nm * d];
                        }
                        if cj + 2 < nc {
                            acc += cc * s[cj + 1] * s[cj + 2] * xs[r + off + 2 * nm * d];
                        }
                        // undetected photons: (a+β) ρ (a+β)†
                        if lost > 0.0 {
                            let mut jump = beta * beta.conj() * src[r + off];
                            if ci + 1 < nc {
                                jump += beta.conj() * s[ci + 1] * src[r + nm + off];
                            }
                            if cj + 1 < nc {
                                jump += beta * s[cj + 1] * src[r + off + nm * d];
                            }
                            if ci + 1 < nc && cj + 1 < nc {
                                jump += s[ci + 1] * s[cj + 1] * src[r + nm + off + nm * d];
                            }
                            acc += jump * lost;
                        }
                        if n + 1 < nm && m + 1 < nm {
                            acc += down * dt * s[n + 1] * s[m + 1] * src[r + 1 + off + d];
                        }
                        if n >= 1 && m >= 1 {
                            acc += up * dt * s[n] * s[m] * src[r - 1 + off - d];
                        }
                        dst[r + off] = acc;
                    }
                }
            }
        }
        mirror_upper(y);
        std::mem::swap(rho, y);
        self.frame += beta_dot * dt;

        let tr = rho.trace().re;
        if !tr.is_finite() || tr <= 0.0 || !self.frame.re.is_finite() || !self.frame.im.is_finite() {
            return Err(Error::NumericFailure { step });
        }
        *rho /= C64::new(tr, 0.0);
        Ok(current)
    }
}

/// One lab-frame step of the joint SME, renormalized and hermitized.
pub fn step_full(rho: &DensityMatrix, params: &SimParams, spec: &HilbertSpec, dw: f64) -> Result<DensityMatrix> {
    if rho.dim() != spec.joint_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.joint_dim(),
            actual: rho.dim(),
        });
    }
    let mut stepper = FullStepper::new(params, spec, false);
    let mut m = rho.matrix().clone();
    stepper.step(&mut m, dw, 0)?;
    let mut out = DensityMatrix::from_matrix(m)?;
    out.hermitize();
    Ok(out)
}

/// One step of the diagonal rate equation, in place.
///
/// Thermal flow is an Euler step; the measurement term is applied as the exact
/// Gaussian likelihood `exp(c n dY − c²n²dt/2)` of the record increment
/// `dY = dW + c⟨n⟩dt`, `c = −2√(ηΓ)`, which expands to the SRE innovation at
/// first order and keeps every `p_n` positive. The top level has no upward
/// outflow, matching the truncated `b†`; negative weights are clamped to zero
/// and the removed mass is returned.
pub(crate) fn sre_step(p: &mut [f64], next: &mut [f64], params: &SimParams, dw: f64, step: usize) -> Result<f64> {
    let len = p.len();
    let dt = params.dt;
    let up = params.gamma * params.nbar;
    let down = params.gamma * (params.nbar + 1.0);
    let c = -2.0 * (params.eta * params.measurement_rate()).sqrt();
    let mean: f64 = p.iter().enumerate().map(|(n, w)| n as f64 * w).sum();
    let dy = dw + c * mean * dt;
    for n in 0..len {
        let fnn = n as f64;
        let mut rate = 0.0;
        if n >= 1 {
            rate += up * fnn * p[n - 1];
        }
        if n + 1 < len {
            rate -= up * (fnn + 1.0) * p[n];
            rate += down * (fnn + 1.0) * p[n + 1];
        }
        rate -= down * fnn * p[n];
        next[n] = p[n] + rate * dt;
    }
    let mut clamped = 0.0;
    for w in next.iter_mut() {
        if *w < 0.0 {
            clamped -= *w;
            *w = 0.0;
        }
    }
    let log_lik = |n: usize| c * n as f64 * dy - 0.5 * c * c * (n * n) as f64 * dt;
    let peak = (0..len)
        .filter(|&n| next[n] > 0.0)
        .map(log_lik)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (n, w) in next.iter_mut().enumerate() {
        *w *= (log_lik(n) - peak).exp();
        total += *w;
    }
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::NumericFailure { step });
    }
    if clamped > MAX_CLAMP_PER_STEP {
        return Err(Error::StepSize { step, clamped });
    }
    for (dst, src) in p.iter_mut().zip(next.iter()) {
        *dst = src / total;
    }
    Ok(clamped)
}

/// One step of the diagonal stochastic rate equation.
pub fn step_diagonal(p: &PhononDistribution, params: &SimParams, dw: f64) -> Result<PhononDistribution> {
    let mut w = p.p.clone();
    let mut scratch = vec![0.0; w.len()];
    sre_step(&mut w, &mut scratch, params, dw, 0)?;
    Ok(PhononDistribution { p: w })
}

/// State handed to [`photocurrent_sample`].
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    /// Lab-frame joint state.
    Joint(&'a DensityMatrix, &'a HilbertSpec),
    Diagonal(&'a PhononDistribution),
}

/// Homodyne current for one step: deterministic part plus `√(ηκ)·dW/dt`.
pub fn photocurrent_sample(state: StateRef<'_>, params: &SimParams, dw: f64, dt: f64) -> Result<f64> {
    let noise = (params.eta * params.kappa).sqrt() * dw / dt;
    let signal = match state {
        StateRef::Joint(rho, spec) => {
            let op = crate::lindblad::phase_quadrature_op(spec)?;
            params.eta * params.kappa * hilbert::expectation(&op, rho)?.re
        }
        StateRef::Diagonal(p) => -2.0 * params.eta * params.chi * p.mean(),
    };
    Ok(signal + noise)
}

struct Recorder {
    record: TrajectoryRecord,
    sample_every: usize,
    current_acc: f64,
    dw_acc: f64,
}

impl Recorder {
    fn new(seed: u64, stream: u64, steps: usize, sample_every: usize) -> Self {
        let cap = steps / sample_every + 1;
        Self {
            record: TrajectoryRecord {
                times: Vec::with_capacity(cap),
                mean_n: Vec::with_capacity(cap),
                var_n: Vec::with_capacity(cap),
                quad_phase: Vec::with_capacity(cap),
                photocurrent: Vec::with_capacity(cap),
                dw: Vec::with_capacity(cap),
                seed,
                stream,
                diagnostics: Diagnostics::default(),
            },
            sample_every,
            current_acc: 0.0,
            dw_acc: 0.0,
        }
    }

    fn accumulate(&mut self, current: f64, dw: f64) {
        self.current_acc += current;
        self.dw_acc += dw;
    }

    fn due(&self, step: usize, steps: usize) -> bool {
        step.is_multiple_of(self.sample_every) || step == steps
    }

    fn push(&mut self, t: f64, samples: usize, mean: f64, var: f64, quad: f64) {
        let r = &mut self.record;
        r.times.push(t);
        r.mean_n.push(mean);
        r.var_n.push(var);
        r.quad_phase.push(quad);
        r.photocurrent.push(self.current_acc / samples as f64);
        r.dw.push(self.dw_acc);
        self.current_acc = 0.0;
        self.dw_acc = 0.0;
    }
}

/// Integrates one conditional trajectory on random stream 0 of `params.seed`.
pub fn simulate(
    params: &SimParams,
    spec: &HilbertSpec,
    initial: &InitialState,
    mode: Mode,
    sample_every: usize,
) -> Result<TrajectoryRecord> {
    simulate_with(params, spec, initial, mode, sample_every, 0, &SimulateOptions::default())
}

pub fn simulate_with(
    params: &SimParams,
    spec: &HilbertSpec,
    initial: &InitialState,
    mode: Mode,
    sample_every: usize,
    stream: u64,
    options: &SimulateOptions,
) -> Result<TrajectoryRecord> {
    params.validate(mode == Mode::Full)?;
    let sample_every = sample_every.max(1);
    let mut rng = trajectory_rng(params.seed, stream);
    match mode {
        Mode::Full => {
            let rho0 = match initial {
                InitialState::Joint(rho) => rho.clone(),
                InitialState::Diagonal(p) => {
                    if p.len() != spec.mech_dim() {
                        return Err(Error::DimensionMismatch {
                            expected: spec.mech_dim(),
                            actual: p.len(),
                        });
                    }
                    DensityMatrix::product(
                        &hilbert::fock_state(0, spec.cavity_dim())?,
                        &hilbert::diagonal_state(p.probabilities())?,
                    )
                }
            };
            if rho0.dim() != spec.joint_dim() {
                return Err(Error::DimensionMismatch {
                    expected: spec.joint_dim(),
                    actual: rho0.dim(),
                });
            }
            rho0.validate(false)?;
            simulate_full(params, spec, rho0, sample_every, stream, options, &mut rng)
        }
        Mode::Adiabatic => {
            let p0 = match initial {
                InitialState::Diagonal(p) => p.clone(),
                InitialState::Joint(rho) => {
                    PhononDistribution::new(rho.phonon_populations(spec)?)?
                }
            };
            simulate_diagonal(params, p0, sample_every, stream, &mut rng)
        }
    }
}

fn simulate_full(
    params: &SimParams,
    spec: &HilbertSpec,
    rho0: DensityMatrix,
    sample_every: usize,
    stream: u64,
    options: &SimulateOptions,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryRecord> {
    let mut stepper = match options.frame.resolve(params, spec) {
        Frame::Pointer | Frame::Auto => Stepper::Pointer(Box::new(PointerStepper::new(params, spec, &rho0)?)),
        Frame::Lab | Frame::Moving => Stepper::Single(
            Box::new(FullStepper::new(params, spec, options.frame == Frame::Moving)),
            rho0.into_matrix(),
        ),
    };
    let steps = params.steps();
    let dt = params.dt;
    let mut rec = Recorder::new(params.seed, stream, steps, sample_every);
    let mut since_sample = 0;
    let mut diag = Diagnostics::default();
    for step in 1..=steps {
        let dw = wiener_increment(rng, dt);
        let current = match &mut stepper {
            Stepper::Pointer(st) => st.step(dw, step)?,
            Stepper::Single(st, rho) => st.step(rho, dw, step)?,
        };
        rec.accumulate(current, dw);
        since_sample += 1;
        if let Some(every) = options.positivity_every {
            if step % every.max(1) == 0 {
                let state = match &stepper {
                    Stepper::Pointer(st) => st.frame_state(),
                    Stepper::Single(_, rho) => rho.clone(),
                };
                let min = DensityMatrix::from_matrix(state)?.min_eigenvalue();
                diag.min_eigenvalue = Some(diag.min_eigenvalue.map_or(min, |m: f64| m.min(min)));
                if min < -hilbert::POS_TOL {
                    return Err(Error::Positivity {
                        time: step as f64 * dt,
                        min_eigenvalue: min,
                    });
                }
            }
        }
        if rec.due(step, steps) {
            let (mean, var, quad, cavity_top, phonon_top) = match &stepper {
                Stepper::Pointer(st) => {
                    let (mean, var) = st.phonon_moments();
                    (mean, var, st.quadrature(), st.cavity_top_population(), st.phonon_top_population())
                }
                Stepper::Single(st, rho) => {
                    let model = st.model();
                    let (mean, var) = model.phonon_moments(rho);
                    let nm = spec.mech_dim();
                    let top: f64 = (0..spec.cavity_dim())
                        .map(|i| rho[(i * nm + nm - 1, i * nm + nm - 1)].re)
                        .sum();
                    (mean, var, st.quadrature(rho), model.cavity_top_population(rho), top)
                }
            };
            diag.max_cavity_top = diag.max_cavity_top.max(cavity_top);
            diag.max_phonon_top = diag.max_phonon_top.max(phonon_top);
            rec.push(step as f64 * dt, since_sample, mean, var, quad);
            since_sample = 0;
        }
    }
    rec.record.diagnostics = diag;
    Ok(rec.record)
}

enum Stepper {
    Pointer(Box<PointerStepper>),
    Single(Box<FullStepper>, CMatrix),
}

fn simulate_diagonal(
    params: &SimParams,
    p0: PhononDistribution,
    sample_every: usize,
    stream: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryRecord> {
    let steps = params.steps();
    let dt = params.dt;
    let gain = params.chi / params.kappa;
    let noise = (params.eta * params.kappa).sqrt() / dt;
    let mut p = p0.p;
    let mut scratch = vec![0.0; p.len()];
    let mut rec = Recorder::new(params.seed, stream, steps, sample_every);
    let mut since_sample = 0;
    let mut diag = Diagnostics::default();
    let top = p.len() - 1;
    for step in 1..=steps {
        let dw = wiener_increment(rng, dt);
        let mean: f64 = p.iter().enumerate().map(|(n, w)| n as f64 * w).sum();
        let current = -2.0 * params.eta * params.chi * mean + noise * dw;
        diag.clamped_mass += sre_step(&mut p, &mut scratch, params, dw, step)?;
        rec.accumulate(current, dw);
        since_sample += 1;
        if rec.due(step, steps) {
            let mean: f64 = p.iter().enumerate().map(|(n, w)| n as f64 * w).sum();
            let second: f64 = p.iter().enumerate().map(|(n, w)| (n * n) as f64 * w).sum();
            diag.max_phonon_top = diag.max_phonon_top.max(p[top]);
            rec.push(step as f64 * dt, since_sample, mean, second - mean * mean, -2.0 * gain * mean);
            since_sample = 0;
        }
    }
    rec.record.diagnostics = diag;
    Ok(rec.record)
}
