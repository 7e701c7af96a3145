//! Closed-form results used as oracles for the numerical integrators.
//!
//! With γ = 0 each mechanical coherence `|n⟩⟨m|` carries the cavity dyad
//! `|α_n(t)⟩⟨α'_m(t)|`, whose amplitudes relax toward the pointer values
//! `−iχn/κ`; the scalar prefactor decays with the decoherence factor.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{self, CMatrix, DensityMatrix, HilbertSpec};

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidRate {
            name: "kappa",
            value: kappa,
        })
    }
}

/// Cavity amplitude conditioned on `n` phonons, starting from `alpha`.
pub fn coherent_amplitude_n(n: usize, alpha: C64, chi: f64, kappa: f64, t: f64) -> Result<C64> {
    check_kappa(kappa)?;
    let decay = (-kappa * t / 2.0).exp();
    Ok(C64::new(0.0, -chi * n as f64 / kappa) * (1.0 - decay) + alpha * decay)
}

/// Suppression of the `|n⟩⟨m|` coherence by the cavity measurement.
pub fn decoherence_factor(n: usize, m: usize, chi: f64, kappa: f64, t: f64) -> Result<C64> {
    check_kappa(kappa)?;
    let dn = n as f64 - m as f64;
    let kt = kappa * t;
    let exponent = (chi / kappa).powi(2) * dn * dn * (1.0 - kt / 2.0 - (-kt / 2.0).exp());
    Ok(C64::new(exponent.exp(), 0.0))
}

/// One term `P_nm(α, α') |n⟩⟨m| ⊗ |α⟩⟨α'| / ⟨α'|α⟩` of an initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTerm {
    pub n: usize,
    pub m: usize,
    pub alpha: C64,
    pub alpha_prime: C64,
    pub weight: C64,
}

/// Sparse expansion of the initial joint state in mechanical Fock dyads and
/// cavity coherent dyads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialWeights {
    terms: Vec<WeightTerm>,
}

impl InitialWeights {
    pub fn new(terms: Vec<WeightTerm>) -> Result<Self> {
        let w = Self { terms };
        w.validate()?;
        Ok(w)
    }

    /// `(Σ c_n|n⟩)(Σ c_m*⟨m|) ⊗ |α⟩⟨α|`; the amplitudes are normalized here.
    pub fn pure_product(mech_amplitudes: &[C64], alpha: C64) -> Result<Self> {
        let norm: f64 = mech_amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter {
                name: "mech_amplitudes",
                reason: "all amplitudes vanish".into(),
            });
        }
        let mut terms = Vec::new();
        for (n, cn) in mech_amplitudes.iter().enumerate() {
            for (m, cm) in mech_amplitudes.iter().enumerate() {
                let weight = cn * cm.conj() / (norm * norm);
                if weight.norm() > 0.0 {
                    terms.push(WeightTerm {
                        n,
                        m,
                        alpha,
                        alpha_prime: alpha,
                        weight,
                    });
                }
            }
        }
        Self::new(terms)
    }

    /// A mechanical density matrix times the cavity coherent state `|α⟩⟨α|`.
    pub fn mechanical_state(rho_b: &DensityMatrix, alpha: C64) -> Result<Self> {
        let d = rho_b.dim();
        let mut terms = Vec::new();
        for n in 0..d {
            for m in 0..d {
                let weight = rho_b.matrix()[(n, m)];
                if weight.norm() > 0.0 {
                    terms.push(WeightTerm {
                        n,
                        m,
                        alpha,
                        alpha_prime: alpha,
                        weight,
                    });
                }
            }
        }
        Self::new(terms)
    }

    pub fn terms(&self) -> &[WeightTerm] {
        &self.terms
    }

    pub fn max_phonon(&self) -> usize {
        self.terms.iter().map(|t| t.n.max(t.m)).max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        // the normalized dyads have unit trace, so only n = m terms contribute
        let trace: C64 = self
            .terms
            .iter()
            .filter(|t| t.n == t.m)
            .map(|t| t.weight)
            .sum();
        if (trace - C64::new(1.0, 0.0)).norm() > hilbert::TRACE_TOL {
            return Err(Error::InvalidParameter {
                name: "initial_weights",
                reason: format!("trace {trace} differs from 1"),
            });
        }
        for t in &self.terms {
            let partner: C64 = self
                .terms
                .iter()
                .filter(|s| s.n == t.m && s.m == t.n && s.alpha == t.alpha_prime && s.alpha_prime == t.alpha)
                .map(|s| s.weight)
                .sum();
            if (partner - t.weight.conj()).norm() > hilbert::HERM_TOL {
                return Err(Error::InvalidParameter {
                    name: "initial_weights",
                    reason: format!("term ({}, {}) has no hermitian partner", t.n, t.m),
                });
            }
        }
        Ok(())
    }
}

/// Coherent-state overlap `⟨β|α⟩`.
fn overlap(beta: C64, alpha: C64) -> C64 {
    (-(beta.norm_sqr() + alpha.norm_sqr()) / 2.0 + beta.conj() * alpha).exp()
}

/// Exact joint state at time `t` for an undamped mechanics (γ = 0).
pub fn walls_state(
    init: &InitialWeights,
    chi: f64,
    kappa: f64,
    t: f64,
    spec: &HilbertSpec,
) -> Result<DensityMatrix> {
    check_kappa(kappa)?;
    if init.max_phonon() >= spec.mech_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.mech_dim(),
            actual: init.max_phonon() + 1,
        });
    }
    let nc = spec.cavity_dim();
    let gain = chi / kappa;
    let rise = 1.0 - (-kappa * t / 2.0).exp();
    let mut rho = CMatrix::zeros(spec.joint_dim(), spec.joint_dim());
    for term in init.terms() {
        let ket_amp = coherent_amplitude_n(term.n, term.alpha, chi, kappa, t)?;
        let bra_amp = coherent_amplitude_n(term.m, term.alpha_prime, chi, kappa, t)?;
        let dn = term.n as f64 - term.m as f64;
        let cross = (C64::new(0.0, -gain) * (term.alpha_prime.conj() + term.alpha) * dn * rise).exp();
        let coeff = term.weight
            * decoherence_factor(term.n, term.m, chi, kappa, t)?
            * cross
            / overlap(bra_amp, ket_amp);
        let ket = hilbert::coherent_ket(ket_amp, nc)?;
        let bra = hilbert::coherent_ket(bra_amp, nc)?;
        for i in 0..nc {
            for j in 0..nc {
                rho[(spec.index(i, term.n), spec.index(j, term.m))] += coeff * ket[i] * bra[j].conj();
            }
        }
    }
    let mut state = DensityMatrix::from_matrix(rho)?;
    state.normalize();
    Ok(state)
}

/// Unconditional mean phonon number relaxing from `n0` toward `nbar`.
pub fn mean_phonon_unconditional(n0: f64, nbar: f64, gamma: f64, t: f64) -> f64 {
    let decay = (-gamma * t).exp();
    n0 * decay + nbar * (1.0 - decay)
}

/// Unconditional cavity amplitude `⟨a⟩(t)` driven by the relaxing phonon number.
///
/// Near `κ/2 = γ` the ratio `(e^{−γt} − e^{−κt/2})/(κ/2 − γ)` is replaced by
/// its limit `t·e^{−γt}`.
pub fn mean_field_unconditional(
    a0: C64,
    n0: f64,
    nbar: f64,
    chi: f64,
    gamma: f64,
    kappa: f64,
    t: f64,
) -> Result<C64> {
    check_kappa(kappa)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidRate {
            name: "gamma",
            value: gamma,
        });
    }
    let half = kappa / 2.0;
    let cavity_decay = (-half * t).exp();
    let gap = half - gamma;
    let transient = if gap.abs() < 1e-9 * kappa {
        t * (-gamma * t).exp()
    } else {
        ((-gamma * t).exp() - cavity_decay) / gap
    };
    let bracket = (n0 - nbar) * transient + nbar * (1.0 - cavity_decay) / half;
    Ok(a0 * cavity_decay + C64::new(0.0, -chi / 2.0) * bracket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const I: C64 = C64::new(0.0, 1.0);

    #[test]
    fn amplitude_limits() {
        let alpha = C64::new(0.3, -0.2);
        for n in 0..4 {
            assert_eq!(coherent_amplitude_n(n, alpha, 2.0, 1.0, 0.0).unwrap(), alpha);
            let late = coherent_amplitude_n(n, alpha, 2.0, 1.0, 200.0).unwrap();
            assert!((late - C64::new(0.0, -2.0 * n as f64)).norm() < 1e-12);
        }
        let v = coherent_amplitude_n(0, C64::new(1.0, 0.0), 1.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(v.re, (-1.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(v.re, 0.36787944117144233, max_relative = 1e-12);
        assert!(coherent_amplitude_n(0, alpha, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn decoherence_examples() {
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(decoherence_factor(2, 2, 1.5, 1.0, t).unwrap().re, 1.0);
        }
        assert_eq!(decoherence_factor(0, 3, 1.5, 1.0, 0.0).unwrap().re, 1.0);
        let f = decoherence_factor(1, 0, 1.0, 1.0, 4.0).unwrap();
        let expected = (1.0 - 2.0 - (-2.0f64).exp()).exp();
        assert_relative_eq!(f.re, expected, max_relative = 1e-14);
        assert_relative_eq!(f.re, 0.3213, max_relative = 2e-4);
    }

    #[test]
    fn decoherence_monotone() {
        let ts: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        for dn in 0..4usize {
            let mut prev = f64::INFINITY;
            for &t in &ts {
                let f = decoherence_factor(dn, 0, 1.3, 0.7, t).unwrap().norm();
                assert!(f <= 1.0 + 1e-15);
                assert!(f <= prev + 1e-15);
                prev = f;
            }
        }
        for &t in &ts[1..] {
            let mut prev = f64::INFINITY;
            for dn in 0..5usize {
                let f = decoherence_factor(dn, 0, 1.3, 0.7, t).unwrap().norm();
                assert!(f <= prev + 1e-15);
                prev = f;
            }
        }
    }

    #[test]
    fn walls_vacuum_is_stationary() {
        let spec = HilbertSpec::new(6, 2).unwrap();
        let init = InitialWeights::pure_product(&[C64::new(1.0, 0.0)], C64::new(0.0, 0.0)).unwrap();
        for t in [0.0, 1.0, 10.0] {
            let rho = walls_state(&init, 1.0, 1.0, t, &spec).unwrap();
            assert!((rho.matrix()[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-14);
            assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn walls_populations_constant() {
        let spec = HilbertSpec::auto(1.0, 2);
        let amps = [C64::new(0.6, 0.0), C64::new(0.0, 0.5), C64::new(0.4, 0.3)];
        let init = InitialWeights::pure_product(&amps, C64::new(0.2, 0.0)).unwrap();
        let p0 = walls_state(&init, 1.0, 1.0, 0.0, &spec).unwrap().phonon_populations(&spec).unwrap();
        for t in [0.3, 1.0, 4.0, 12.0] {
            let rho = walls_state(&init, 1.0, 1.0, t, &spec).unwrap();
            rho.validate(true).unwrap();
            let p = rho.phonon_populations(&spec).unwrap();
            for (a, b) in p.iter().zip(&p0) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn initial_weights_validation() {
        let bad = InitialWeights::new(vec![WeightTerm {
            n: 0,
            m: 1,
            alpha: C64::new(0.0, 0.0),
            alpha_prime: C64::new(0.0, 0.0),
            weight: C64::new(0.5, 0.0),
        }]);
        assert!(bad.is_err());
    }

    #[test]
    fn mean_phonon_examples() {
        assert_eq!(mean_phonon_unconditional(1.3, 0.5, 2.0, 0.0), 1.3);
        assert_relative_eq!(mean_phonon_unconditional(1.3, 0.5, 2.0, 100.0), 0.5, max_relative = 1e-12);
        let v = mean_phonon_unconditional(0.0, 0.5, 1.0, 1.0);
        assert_relative_eq!(v, 0.5 * (1.0 - (-1.0f64).exp()), max_relative = 1e-14);
        assert_relative_eq!(v, 0.3161, max_relative = 2e-4);
    }

    #[test]
    fn mean_field_examples() {
        let a0 = C64::new(0.4, 0.1);
        assert_eq!(mean_field_unconditional(a0, 0.7, 0.5, 3.0, 0.1, 2.0, 0.0).unwrap(), a0);

        let (chi, kappa, nbar) = (3.0, 2.0, 0.5);
        for t in [1.0, 5.0, 40.0] {
            let v = mean_field_unconditional(C64::new(0.0, 0.0), nbar, nbar, chi, 0.1, kappa, t).unwrap();
            let expected = -I * chi * nbar / kappa * (1.0 - (-kappa * t / 2.0).exp());
            assert!((v - expected).norm() < 1e-12);
        }

        let gamma = 1.0;
        let kappa = 100.0 * gamma;
        let t = 5.0 / gamma;
        let v = mean_field_unconditional(C64::new(0.0, 0.0), 2.0, 0.5, chi, gamma, kappa, t).unwrap();
        let adiabatic = -I * (chi / kappa) * mean_phonon_unconditional(2.0, 0.5, gamma, t);
        assert!((v - adiabatic).norm() / adiabatic.norm() < 0.03);
    }

    #[test]
    fn mean_field_matches_pointer_without_damping() {
        let a0 = C64::new(0.2, -0.4);
        for n in 0..4 {
            for t in [0.0, 0.7, 3.0] {
                let lhs = mean_field_unconditional(a0, n as f64, 0.8, 1.7, 0.0, 1.1, t).unwrap();
                let rhs = coherent_amplitude_n(n, a0, 1.7, 1.1, t).unwrap();
                assert!((lhs - rhs).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_branch_is_continuous() {
        let kappa = 2.0;
        let a0 = C64::new(0.1, 0.0);
        for t in [0.5, 2.0, 7.0] {
            let exact = mean_field_unconditional(a0, 1.5, 0.5, 1.2, 1.0, kappa, t).unwrap();
            for eps in [1e-6, -1e-6] {
                let near = mean_field_unconditional(a0, 1.5, 0.5, 1.2, 1.0 * (1.0 + eps), kappa, t).unwrap();
                assert!((near - exact).norm() / exact.norm() < 1e-6);
            }
        }
    }
}
