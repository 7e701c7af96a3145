//! Unconditional master-equation dynamics on the joint cavity ⊗ mechanics space.
//!
//! Units: ħ is scaled out and every rate is in inverse time, so the interaction
//! `(χ/2)(a + a†)b†b` enters the generator directly as a rate.
//!
//! The generator is applied entry by entry: every ladder operator only shifts
//! Fock indices, so one application costs O(D²) on a dense D×D state instead
//! of the O(D³) of dense products. [`dense_rhs`] keeps the textbook dense form
//! as a cross-check.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{self, CMatrix, DensityMatrix, HilbertSpec, Operator, Subsystem};

/// Physical rates and integration settings. All rates share one time unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub kappa: f64,
    pub gamma: f64,
    pub nbar: f64,
    pub chi: f64,
    pub eta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
}

/// `κ·dt` or `Γ·dt` above this only warns.
pub const STABILITY_WARN: f64 = 0.1;
/// `κ·dt` or `Γ·dt` above this is rejected.
pub const STABILITY_LIMIT: f64 = 0.5;

impl SimParams {
    /// `Γ = χ²/κ`.
    pub fn measurement_rate(&self) -> f64 {
        self.chi * self.chi / self.kappa
    }

    /// Number of integration steps covering `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    /// Step size resolving the fastest rate in play. The cavity rate only
    /// matters when the cavity is simulated explicitly.
    pub fn default_dt(
        kappa: f64,
        gamma: f64,
        nbar: f64,
        chi: f64,
        n_max: usize,
        resolve_cavity: bool,
    ) -> f64 {
        let big_gamma = chi * chi / kappa;
        let mut dt = f64::INFINITY;
        if resolve_cavity {
            dt = dt.min(0.02 / kappa);
        }
        if big_gamma > 0.0 {
            dt = dt.min(0.02 / big_gamma);
        }
        let thermal = gamma * (nbar + 1.0) * (n_max as f64 + 1.0);
        if thermal > 0.0 {
            dt = dt.min(0.001 / thermal);
        }
        if dt.is_finite() {
            dt
        } else {
            1e-3
        }
    }

    /// Checks the rate invariants and the step-size guard; returns warnings for
    /// products in `(STABILITY_WARN, STABILITY_LIMIT]`.
    pub fn validate(&self, resolve_cavity: bool) -> Result<Vec<String>> {
        let positive = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidRate { name, value })
            }
        };
        let non_negative = |name: &'static str, value: f64| {
            if value >= 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidRate { name, value })
            }
        };
        positive("kappa", self.kappa)?;
        positive("dt", self.dt)?;
        non_negative("gamma", self.gamma)?;
        non_negative("nbar", self.nbar)?;
        if !self.chi.is_finite() {
            return Err(Error::InvalidRate {
                name: "chi",
                value: self.chi,
            });
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("detector efficiency {} outside (0, 1]", self.eta),
            });
        }
        if !(self.t_final >= self.dt) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: format!("horizon {} shorter than one step {}", self.t_final, self.dt),
            });
        }
        let mut warnings = Vec::new();
        let mut guard = |name: &'static str, product: f64| -> Result<()> {
            if product > STABILITY_LIMIT {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("{name}·dt = {product:.3} exceeds {STABILITY_LIMIT}"),
                })
            } else {
                if product > STABILITY_WARN {
                    warnings.push(format!("{name}·dt = {product:.3} above {STABILITY_WARN}"));
                }
                Ok(())
            }
        };
        if resolve_cavity {
            guard("kappa", self.kappa * self.dt)?;
        }
        guard("Gamma", self.measurement_rate() * self.dt)?;
        Ok(warnings)
    }
}

/// Precomputed tables for the joint generator.
#[derive(Debug, Clone)]
pub struct JointModel {
    spec: HilbertSpec,
    kappa: f64,
    gamma_down: f64,
    gamma_up: f64,
    chi: f64,
    sqrt: Vec<f64>,
}

impl JointModel {
    pub fn new(params: &SimParams, spec: &HilbertSpec) -> Self {
        let top = spec.cavity_dim().max(spec.mech_dim()) + 1;
        Self {
            spec: *spec,
            kappa: params.kappa,
            gamma_down: params.gamma * (params.nbar + 1.0),
            gamma_up: params.gamma * params.nbar,
            chi: params.chi,
            sqrt: (0..=top).map(|k| (k as f64).sqrt()).collect(),
        }
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    /// Writes `L(ρ)` into `out`.
    ///
    /// Only the upper triangle is computed; the lower one is its conjugate.
    pub(crate) fn apply(&self, rho: &CMatrix, out: &mut CMatrix) {
        let nc = self.spec.cavity_dim();
        let nm = self.spec.mech_dim();
        let d = nc * nm;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        let s = &self.sqrt;
        let i_unit = C64::new(0.0, 1.0);
        let half_chi = 0.5 * self.chi;
        // e_n of b b† = diag(n+1) with the top level cut by truncation
        let bbdag = |n: usize| if n + 1 < nm { (n + 1) as f64 } else { 0.0 };

        for j in 0..nc {
            for m in 0..nm {
                let c = j * nm + m;
                let col = c * d;
                let fm = m as f64;
                // ρX picks up +iχm/2 from −i[H, ρ]
                let right_x = i_unit * half_chi * fm;
                for i in 0..nc {
                    if i * nm > c {
                        break;
                    }
                    let fi = i as f64;
                    for n in 0..nm {
                        let r = i * nm + n;
                        if r > c {
                            break;
                        }
                        let fn_ = n as f64;
                        let left_x = -i_unit * half_chi * fn_;
                        let mut acc = C64::new(0.0, 0.0);

                        // −i[(χ/2) X b†b, ρ]
                        if i + 1 < nc {
                            acc += left_x * s[i + 1] * src[r + nm + col];
                        }
                        if i >= 1 {
                            acc += left_x * s[i] * src[r - nm + col];
                        }
                        if j >= 1 {
                            acc += right_x * s[j] * src[r + col - nm * d];
                        }
                        if j + 1 < nc {
                            acc += right_x * s[j + 1] * src[r + col + nm * d];
                        }
                        // κ D[a]
                        if i + 1 < nc && j + 1 < nc {
                            acc += self.kappa * s[i + 1] * s[j + 1] * src[r + nm + col + nm * d];
                        }
                        let mut diag = -0.5 * self.kappa * (fi + j as f64);
                        // γ(N̄+1) D[b]
                        if n + 1 < nm && m + 1 < nm {
                            acc += self.gamma_down * s[n + 1] * s[m + 1] * src[r + 1 + col + d];
                        }
                        diag -= 0.5 * self.gamma_down * (fn_ + fm);
                        // γN̄ D[b†]
                        if n >= 1 && m >= 1 {
                            acc += self.gamma_up * s[n] * s[m] * src[r - 1 + col - d];
                        }
                        diag -= 0.5 * self.gamma_up * (bbdag(n) + bbdag(m));
                        dst[r + col] = acc + src[r + col] * diag;
                    }
                }
            }
        }
        mirror_upper(out);
    }

    /// `⟨a⟩` on the cavity factor of a joint state.
    pub fn mean_a(&self, rho: &CMatrix) -> C64 {
        let nm = self.spec.mech_dim();
        let nc = self.spec.cavity_dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..nc - 1 {
            for n in 0..nm {
                let r = i * nm + n;
                acc += self.sqrt[i + 1] * rho[(r + nm, r)];
            }
        }
        acc
    }

    /// `(⟨b†b⟩, Var b†b)`.
    pub fn phonon_moments(&self, rho: &CMatrix) -> (f64, f64) {
        let nm = self.spec.mech_dim();
        let nc = self.spec.cavity_dim();
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..nc {
            for n in 0..nm {
                let r = i * nm + n;
                let p = rho[(r, r)].re;
                m1 += n as f64 * p;
                m2 += (n * n) as f64 * p;
            }
        }
        (m1, m2 - m1 * m1)
    }

    /// Population of the highest cavity Fock level, a truncation diagnostic.
    pub fn cavity_top_population(&self, rho: &CMatrix) -> f64 {
        let nm = self.spec.mech_dim();
        let top = self.spec.cavity_dim() - 1;
        (0..nm).map(|n| rho[(top * nm + n, top * nm + n)].re).sum()
    }
}

/// Fills the strict lower triangle with the conjugate of the upper one.
pub(crate) fn mirror_upper(m: &mut CMatrix) {
    let d = m.nrows();
    let data = m.as_mut_slice();
    for c in 0..d {
        for r in c + 1..d {
            data[r + c * d] = data[c + r * d].conj();
        }
    }
}

/// Right-hand side of the unconditional master equation.
pub fn rhs_unconditional(rho: &DensityMatrix, params: &SimParams, spec: &HilbertSpec) -> Result<CMatrix> {
    if rho.dim() != spec.joint_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.joint_dim(),
            actual: rho.dim(),
        });
    }
    let model = JointModel::new(params, spec);
    let mut out = CMatrix::zeros(rho.dim(), rho.dim());
    model.apply(rho.matrix(), &mut out);
    Ok(out)
}

/// The same generator assembled from dense lifted operators and
/// [`hilbert::dissipator`]. O(D³); used to cross-check [`rhs_unconditional`].
pub fn dense_rhs(rho: &DensityMatrix, params: &SimParams, spec: &HilbertSpec) -> Result<CMatrix> {
    let a = hilbert::lift(&hilbert::annihilation(spec.cavity_dim())?, Subsystem::Cavity, spec)?;
    let b = hilbert::lift(&hilbert::annihilation(spec.mech_dim())?, Subsystem::Mechanics, spec)?;
    let nb = b.adjoint().compose(&b)?;
    let x = a.add(&a.adjoint())?;
    let h = x.compose(&nb)?.scale(C64::new(params.chi / 2.0, 0.0));
    let comm = h.matrix() * rho.matrix() - rho.matrix() * h.matrix();
    let mut out = comm * C64::new(0.0, -1.0);
    out += hilbert::dissipator(&a, rho)? * C64::new(params.kappa, 0.0);
    out += hilbert::dissipator(&b, rho)? * C64::new(params.gamma * (params.nbar + 1.0), 0.0);
    out += hilbert::dissipator(&b.adjoint(), rho)? * C64::new(params.gamma * params.nbar, 0.0);
    Ok(out)
}

pub(crate) fn phase_quadrature_op(spec: &HilbertSpec) -> Result<Operator> {
    hilbert::lift(
        &hilbert::quadrature(spec.cavity_dim(), std::f64::consts::FRAC_PI_2)?,
        Subsystem::Cavity,
        spec,
    )
}

/// `y += a·x` over the raw storage.
pub(crate) fn axpy(y: &mut CMatrix, a: f64, x: &CMatrix) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += xi * a;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Check the smallest eigenvalue every this many samples; `None` disables it.
    pub positivity_every: Option<usize>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            positivity_every: Some(1),
        }
    }
}

/// Sampled output of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub samples: Vec<(f64, DensityMatrix)>,
    /// `|Tr ρ − 1|` before each renormalization, one entry per step.
    pub trace_drift: Vec<f64>,
}

/// Fixed-step RK4 integration of the master equation, renormalizing the trace
/// after every step. Samples `t = 0` and every `sample_every` steps.
pub fn evolve(
    rho0: &DensityMatrix,
    params: &SimParams,
    spec: &HilbertSpec,
    sample_every: usize,
) -> Result<Evolution> {
    evolve_with(rho0, params, spec, sample_every, &EvolveOptions::default())
}

pub fn evolve_with(
    rho0: &DensityMatrix,
    params: &SimParams,
    spec: &HilbertSpec,
    sample_every: usize,
    options: &EvolveOptions,
) -> Result<Evolution> {
    params.validate(true)?;
    if rho0.dim() != spec.joint_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.joint_dim(),
            actual: rho0.dim(),
        });
    }
    rho0.validate(false)?;
    let sample_every = sample_every.max(1);
    let model = JointModel::new(params, spec);
    let d = spec.joint_dim();
    let dt = params.dt;
    let steps = params.steps();

    let mut rho = rho0.matrix().clone();
    let mut k1 = CMatrix::zeros(d, d);
    let mut k2 = CMatrix::zeros(d, d);
    let mut k3 = CMatrix::zeros(d, d);
    let mut k4 = CMatrix::zeros(d, d);
    let mut tmp = CMatrix::zeros(d, d);

    let mut samples = vec![(0.0, rho0.clone())];
    let mut trace_drift = Vec::with_capacity(steps);
    for step in 1..=steps {
        model.apply(&rho, &mut k1);
        tmp.copy_from(&rho);
        axpy(&mut tmp, dt / 2.0, &k1);
        model.apply(&tmp, &mut k2);
        tmp.copy_from(&rho);
        axpy(&mut tmp, dt / 2.0, &k2);
        model.apply(&tmp, &mut k3);
        tmp.copy_from(&rho);
        axpy(&mut tmp, dt, &k3);
        model.apply(&tmp, &mut k4);

        k2 += &k3;
        axpy(&mut k1, 2.0, &k2);
        k1 += &k4;
        axpy(&mut rho, dt / 6.0, &k1);

        let tr = rho.trace().re;
        if !tr.is_finite() {
            return Err(Error::NumericFailure { step });
        }
        trace_drift.push((tr - 1.0).abs());
        rho /= C64::new(tr, 0.0);

        if step % sample_every == 0 || step == steps {
            let t = step as f64 * dt;
            let state = DensityMatrix::from_matrix(rho.clone())?;
            if let Some(every) = options.positivity_every {
                if samples.len() % every.max(1) == 0 {
                    let min = state.min_eigenvalue();
                    if min < -hilbert::POS_TOL {
                        return Err(Error::Positivity {
                            time: t,
                            min_eigenvalue: min,
                        });
                    }
                }
            }
            samples.push((t, state));
        }
    }
    Ok(Evolution {
        samples,
        trace_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_state, expectation, fock_state, lift, number, thermal_state};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(kappa: f64, gamma: f64, nbar: f64, chi: f64) -> SimParams {
        SimParams {
            kappa,
            gamma,
            nbar,
            chi,
            eta: 1.0,
            dt: 1e-3,
            t_final: 1.0,
            seed: 0,
        }
    }

    fn random_state(dim: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut rho = DensityMatrix::from_matrix(&g * g.adjoint()).unwrap();
        rho.normalize();
        rho
    }

    #[test]
    fn kernel_matches_dense_generator() {
        let spec = HilbertSpec::new(5, 4).unwrap();
        let p = params(1.3, 0.4, 0.7, 0.9);
        for seed in 0..5 {
            let rho = random_state(spec.joint_dim(), seed);
            let fast = rhs_unconditional(&rho, &p, &spec).unwrap();
            let dense = dense_rhs(&rho, &p, &spec).unwrap();
            let err = (&fast - &dense).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "max-abs {err}");
        }
    }

    #[test]
    fn dark_state_is_stationary() {
        let spec = HilbertSpec::new(4, 3).unwrap();
        let rho = DensityMatrix::product(&fock_state(0, 4).unwrap(), &random_state(3, 4));
        let out = rhs_unconditional(&rho, &params(2.0, 0.0, 0.3, 0.0), &spec).unwrap();
        assert!(out.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let spec = HilbertSpec::new(6, 4).unwrap();
        for seed in 0..10 {
            let rho = random_state(spec.joint_dim(), seed);
            let out = rhs_unconditional(&rho, &params(1.0, 0.3, 0.5, 2.0), &spec).unwrap();
            assert!(out.trace().norm() < 1e-12);
            assert!(hilbert::max_abs_asymmetry(&out) < 1e-12);
        }
    }

    #[test]
    fn cavity_moment_equation() {
        // d⟨a⟩/dt = −i(χ/2)⟨b†b⟩ − (κ/2)⟨a⟩ holds when the top cavity level is empty
        let spec = HilbertSpec::new(12, 4).unwrap();
        let p = params(1.7, 0.2, 0.5, 0.8);
        let mech = random_state(4, 3);
        let cav = coherent_state(C64::new(0.4, -0.3), 12).unwrap();
        let rho = DensityMatrix::product(&cav, &mech);
        let drho = DensityMatrix::from_matrix(rhs_unconditional(&rho, &p, &spec).unwrap()).unwrap();
        let a = lift(&hilbert::annihilation(12).unwrap(), Subsystem::Cavity, &spec).unwrap();
        let nb = lift(&number(4).unwrap(), Subsystem::Mechanics, &spec).unwrap();
        let lhs = expectation(&a, &drho).unwrap();
        let rhs = C64::new(0.0, -p.chi / 2.0) * expectation(&nb, &rho).unwrap()
            - expectation(&a, &rho).unwrap() * (p.kappa / 2.0);
        assert!((lhs - rhs).norm() < 1e-6, "{lhs} vs {rhs}");
    }

    #[test]
    fn thermal_relaxation_matches_closed_form() {
        let spec = HilbertSpec::new(2, 20).unwrap();
        let p = SimParams {
            dt: 1e-3,
            t_final: 1.0,
            ..params(1.0, 1.0, 0.5, 0.0)
        };
        let rho0 = DensityMatrix::product(&fock_state(0, 2).unwrap(), &fock_state(0, 20).unwrap());
        let evo = evolve(&rho0, &p, &spec, 1000).unwrap();
        let (t, rho) = evo.samples.last().unwrap();
        let (mean, _) = JointModel::new(&p, &spec).phonon_moments(rho.matrix());
        let expected = crate::analytic::mean_phonon_unconditional(0.0, 0.5, 1.0, *t);
        assert!((mean - expected).abs() / expected < 1e-4);
        assert!(evo.trace_drift.iter().all(|&x| x < 1e-9));
    }

    #[test]
    fn evolve_rejects_bad_params() {
        let spec = HilbertSpec::new(3, 3).unwrap();
        let rho0 = DensityMatrix::product(&fock_state(0, 3).unwrap(), &thermal_state(0.01, 3).unwrap());
        let mut p = params(1.0, 0.1, 0.01, 0.5);
        p.dt = 0.9;
        assert!(evolve(&rho0, &p, &spec, 1).is_err());
        p.dt = 1e-3;
        p.eta = 0.0;
        assert!(evolve(&rho0, &p, &spec, 1).is_err());
    }

    #[test]
    fn stability_guard_levels() {
        let mut p = params(10.0, 0.1, 0.5, 1.0);
        p.dt = 0.005;
        assert!(p.validate(true).unwrap().is_empty());
        p.dt = 0.02;
        assert_eq!(p.validate(true).unwrap().len(), 1);
        p.dt = 0.06;
        assert!(p.validate(true).is_err());
        // without an explicit cavity only Γ·dt is guarded
        assert!(p.validate(false).is_ok());
    }
}
