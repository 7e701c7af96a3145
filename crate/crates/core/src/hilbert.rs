//! Truncated Fock-space linear algebra for the cavity and mechanical modes.
//!
//! Joint operators act on `cavity ⊗ mechanics`. A joint basis vector
//! `|i⟩_cav ⊗ |n⟩_mech` sits at index `i * mech_dim + n`; every other module
//! relies on this ordering through [`HilbertSpec::index`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Allowed deviation of the trace from one after normalization.
pub const TRACE_TOL: f64 = 1e-9;
/// Max-abs deviation from hermiticity.
pub const HERM_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated by a positivity check.
pub const POS_TOL: f64 = 1e-8;
/// Largest probability a state constructor may lose to truncation.
pub const LEAK_TOL: f64 = 1e-6;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Cavity,
    Mechanics,
}

/// Truncation of the joint cavity ⊗ mechanics space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertSpec {
    cavity_dim: usize,
    mech_dim: usize,
}

impl HilbertSpec {
    pub fn new(cavity_dim: usize, mech_dim: usize) -> Result<Self> {
        for dim in [cavity_dim, mech_dim] {
            if dim < 2 {
                return Err(Error::InvalidDimension { dim });
            }
        }
        Ok(Self { cavity_dim, mech_dim })
    }

    /// Sizes the truncation for resolving phonon levels up to `n_max` when the
    /// pointer amplitude per phonon is `gain = χ/κ`.
    ///
    /// The largest pointer state `|α| = gain·n_max` needs
    /// `|α|² + 6|α| + 10` cavity levels; the mechanics keeps five spare levels.
    pub fn auto(gain: f64, n_max: usize) -> Self {
        let alpha = gain.abs() * n_max as f64;
        let cavity_dim = (alpha * alpha + 6.0 * alpha + 10.0).ceil() as usize;
        Self {
            cavity_dim,
            mech_dim: n_max + 5,
        }
    }

    pub fn cavity_dim(&self) -> usize {
        self.cavity_dim
    }

    pub fn mech_dim(&self) -> usize {
        self.mech_dim
    }

    pub fn joint_dim(&self) -> usize {
        self.cavity_dim * self.mech_dim
    }

    pub fn dim_of(&self, which: Subsystem) -> usize {
        match which {
            Subsystem::Cavity => self.cavity_dim,
            Subsystem::Mechanics => self.mech_dim,
        }
    }

    #[inline]
    pub fn index(&self, cavity: usize, mech: usize) -> usize {
        cavity * self.mech_dim + mech
    }
}

/// Dense square operator on a single-mode or joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
}

impl Operator {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NumericFailure { step: 0 });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            matrix: &self.matrix * factor,
        }
    }

    pub fn compose(&self, rhs: &Operator) -> Result<Self> {
        check_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Self> {
        check_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            matrix: &self.matrix + &rhs.matrix,
        })
    }

    pub fn commutator(&self, rhs: &Operator) -> Result<Self> {
        check_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            matrix: &self.matrix * &rhs.matrix - &rhs.matrix * &self.matrix,
        })
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Truncated annihilation operator: `⟨i|a|i+1⟩ = √(i+1)`.
pub fn annihilation(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim });
    }
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim - 1 {
        m[(i, i + 1)] = C64::new(((i + 1) as f64).sqrt(), 0.0);
    }
    Ok(Operator { matrix: m })
}

pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.adjoint())
}

/// `a†a`, diagonal `(0, 1, …, dim−1)`.
pub fn number(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim });
    }
    let diag = DVector::from_iterator(dim, (0..dim).map(|i| C64::new(i as f64, 0.0)));
    Ok(Operator {
        matrix: CMatrix::from_diagonal(&diag),
    })
}

/// Quadrature `a e^{−iθ} + a† e^{iθ}`. θ = π/2 is the phase quadrature.
pub fn quadrature(dim: usize, theta: f64) -> Result<Operator> {
    let a = annihilation(dim)?;
    let phase = C64::from_polar(1.0, -theta);
    a.scale(phase).add(&a.adjoint().scale(phase.conj()))
}

/// Embeds a single-mode operator into the joint space: `op ⊗ I` for the
/// cavity, `I ⊗ op` for the mechanics.
pub fn lift(op: &Operator, which: Subsystem, spec: &HilbertSpec) -> Result<Operator> {
    check_dim(spec.dim_of(which), op.dim())?;
    let matrix = match which {
        Subsystem::Cavity => op.matrix.kronecker(&CMatrix::identity(spec.mech_dim, spec.mech_dim)),
        Subsystem::Mechanics => {
            CMatrix::identity(spec.cavity_dim, spec.cavity_dim).kronecker(&op.matrix)
        }
    };
    Ok(Operator { matrix })
}

/// Density matrix on a single-mode or joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix without checking the state invariants; see [`Self::validate`].
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` for a normalized ket.
    pub fn pure(ket: &DVector<C64>) -> Self {
        Self {
            matrix: ket * ket.adjoint(),
        }
    }

    /// Product state on `cavity ⊗ mechanics`.
    pub fn product(cavity: &DensityMatrix, mech: &DensityMatrix) -> Self {
        Self {
            matrix: cavity.matrix.kronecker(&mech.matrix),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `max |ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs_asymmetry(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    pub fn normalize(&mut self) {
        let tr = self.matrix.trace().re;
        if tr != 0.0 {
            self.matrix /= C64::new(tr, 0.0);
        }
    }

    pub fn hermitize(&mut self) {
        let adj = self.matrix.adjoint();
        self.matrix += adj;
        self.matrix *= C64::new(0.5, 0.0);
    }

    /// Checks unit trace and hermiticity, plus positivity when asked.
    pub fn validate(&self, check_positivity: bool) -> Result<()> {
        let tr = self.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let herm = self.hermiticity_error();
        if herm > HERM_TOL {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("hermiticity error {herm:.3e}"),
            });
        }
        if check_positivity {
            let min = self.min_eigenvalue();
            if min < -POS_TOL {
                return Err(Error::Positivity {
                    time: f64::NAN,
                    min_eigenvalue: min,
                });
            }
        }
        Ok(())
    }

    /// Reduced state of the mechanics, `Tr_cav ρ`.
    pub fn mechanics(&self, spec: &HilbertSpec) -> Result<DensityMatrix> {
        check_dim(spec.joint_dim(), self.dim())?;
        let mut out = CMatrix::zeros(spec.mech_dim, spec.mech_dim);
        for i in 0..spec.cavity_dim {
            for n in 0..spec.mech_dim {
                for m in 0..spec.mech_dim {
                    out[(n, m)] += self.matrix[(spec.index(i, n), spec.index(i, m))];
                }
            }
        }
        Ok(DensityMatrix { matrix: out })
    }

    /// Reduced state of the cavity, `Tr_mech ρ`.
    pub fn cavity(&self, spec: &HilbertSpec) -> Result<DensityMatrix> {
        check_dim(spec.joint_dim(), self.dim())?;
        let mut out = CMatrix::zeros(spec.cavity_dim, spec.cavity_dim);
        for i in 0..spec.cavity_dim {
            for j in 0..spec.cavity_dim {
                for n in 0..spec.mech_dim {
                    out[(i, j)] += self.matrix[(spec.index(i, n), spec.index(j, n))];
                }
            }
        }
        Ok(DensityMatrix { matrix: out })
    }

    /// Diagonal of the reduced mechanical state, `p_n`.
    pub fn phonon_populations(&self, spec: &HilbertSpec) -> Result<Vec<f64>> {
        check_dim(spec.joint_dim(), self.dim())?;
        Ok((0..spec.mech_dim)
            .map(|n| {
                (0..spec.cavity_dim)
                    .map(|i| self.matrix[(spec.index(i, n), spec.index(i, n))].re)
                    .sum()
            })
            .collect())
    }
}

pub(crate) fn max_abs_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for c in 0..n {
        for r in 0..=c {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

fn check_state(c: &Operator, rho: &DensityMatrix) -> Result<()> {
    check_dim(c.dim(), rho.dim())
}

/// Lindblad dissipator `cρc† − (c†cρ + ρc†c)/2`.
pub fn dissipator(c: &Operator, rho: &DensityMatrix) -> Result<CMatrix> {
    check_state(c, rho)?;
    let cd = c.matrix.adjoint();
    let cdc = &cd * &c.matrix;
    let half = C64::new(0.5, 0.0);
    Ok(&c.matrix * &rho.matrix * &cd - (&cdc * &rho.matrix + &rho.matrix * &cdc) * half)
}

/// Homodyne innovation superoperator `cρ + ρc† − Tr(cρ + ρc†)ρ`.
pub fn measurement_superop(c: &Operator, rho: &DensityMatrix) -> Result<CMatrix> {
    check_state(c, rho)?;
    let c_rho = &c.matrix * &rho.matrix;
    let rho_cd = &rho.matrix * c.matrix.adjoint();
    let sum = c_rho + rho_cd;
    let tr = sum.trace();
    Ok(&sum - &rho.matrix * tr)
}

/// `Tr(op·ρ)`.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    check_state(op, rho)?;
    let n = op.dim();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += op.matrix[(i, k)] * rho.matrix[(k, i)];
        }
    }
    Ok(acc)
}

pub fn fock_ket(n: usize, dim: usize) -> Result<DVector<C64>> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim });
    }
    if n >= dim {
        return Err(Error::Truncation {
            leak: 1.0,
            required_dim: n + 1,
        });
    }
    let mut v = DVector::zeros(dim);
    v[n] = ONE;
    Ok(v)
}

pub fn fock_state(n: usize, dim: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::pure(&fock_ket(n, dim)?))
}

/// Probability that `|α⟩` lies outside the first `dim` Fock levels, together
/// with the smallest dimension bringing it below `tol`.
pub fn coherent_leak(alpha: C64, dim: usize, tol: f64) -> (f64, usize) {
    let mean = alpha.norm_sqr();
    let mut weight = (-mean).exp();
    let mut kept = 0.0;
    let mut leak_at_dim = 1.0;
    let mut required = None;
    let mut k = 0usize;
    while k < dim || required.is_none() {
        kept += weight;
        k += 1;
        weight *= mean / k as f64;
        let leak = (1.0 - kept).max(0.0);
        if k == dim {
            leak_at_dim = leak;
        }
        if required.is_none() && k >= 2 && leak <= tol {
            required = Some(k);
        }
    }
    (leak_at_dim, required.unwrap_or(dim))
}

/// Coherent-state ket truncated to `dim` levels and renormalized; errors when
/// the truncated tail exceeds `tol`.
pub fn coherent_ket_with_tol(alpha: C64, dim: usize, tol: f64) -> Result<DVector<C64>> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim });
    }
    let (leak, required_dim) = coherent_leak(alpha, dim, tol);
    if leak > tol {
        return Err(Error::Truncation { leak, required_dim });
    }
    let mut v = DVector::zeros(dim);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for k in 0..dim {
        v[k] = c;
        c = c * alpha / ((k + 1) as f64).sqrt();
    }
    let norm = v.norm();
    Ok(v / C64::new(norm, 0.0))
}

pub fn coherent_ket(alpha: C64, dim: usize) -> Result<DVector<C64>> {
    coherent_ket_with_tol(alpha, dim, LEAK_TOL)
}

pub fn coherent_state(alpha: C64, dim: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::pure(&coherent_ket(alpha, dim)?))
}

/// Leading `dim × dim` block of the displacement `D(α) = exp(αa† − α*a)`.
///
/// `D(ir) = exp(ir(a + a†))` comes from one real symmetric eigensolve on a
/// padded basis; the phase of `α` is a rotation `e^{iψa†a}`.
pub fn displacement(alpha: C64, dim: usize) -> CMatrix {
    let r = alpha.norm();
    if r == 0.0 {
        return CMatrix::identity(dim, dim);
    }
    let big = dim + (r * r + 6.0 * r + 20.0).ceil() as usize;
    let mut x = DMatrix::<f64>::zeros(big, big);
    for k in 0..big - 1 {
        let s = ((k + 1) as f64).sqrt();
        x[(k + 1, k)] = s;
        x[(k, k + 1)] = s;
    }
    let eig = x.symmetric_eigen();
    let v = eig.eigenvectors.rows(0, dim);
    let phases: Vec<C64> = eig.eigenvalues.iter().map(|&l| C64::new(0.0, r * l).exp()).collect();
    let psi = alpha.arg() - std::f64::consts::FRAC_PI_2;
    let rot: Vec<C64> = (0..dim).map(|k| C64::new(0.0, psi * k as f64).exp()).collect();
    CMatrix::from_fn(dim, dim, |i, j| {
        let mut z = C64::new(0.0, 0.0);
        for (k, ph) in phases.iter().enumerate() {
            z += ph * (v[(i, k)] * v[(j, k)]);
        }
        z * rot[i] * rot[j].conj()
    })
}

/// Bose–Einstein weights `N̄ⁿ/(N̄+1)^{n+1}` on `dim` levels, before truncation.
pub(crate) fn bose_einstein(nbar: f64, dim: usize) -> Vec<f64> {
    let ratio = nbar / (nbar + 1.0);
    let mut w = Vec::with_capacity(dim);
    let mut p = 1.0 / (nbar + 1.0);
    for _ in 0..dim {
        w.push(p);
        p *= ratio;
    }
    w
}

pub fn thermal_state(nbar: f64, dim: usize) -> Result<DensityMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim });
    }
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(Error::InvalidParameter {
            name: "nbar",
            reason: format!("mean occupation {nbar} must be finite and non-negative"),
        });
    }
    let ratio = nbar / (nbar + 1.0);
    let leak = ratio.powi(dim as i32);
    if leak > LEAK_TOL {
        let required_dim = (LEAK_TOL.ln() / ratio.ln()).ceil() as usize;
        return Err(Error::Truncation { leak, required_dim });
    }
    let w = bose_einstein(nbar, dim);
    let total: f64 = w.iter().sum();
    let diag = DVector::from_iterator(dim, w.iter().map(|p| C64::new(p / total, 0.0)));
    Ok(DensityMatrix {
        matrix: CMatrix::from_diagonal(&diag),
    })
}

/// Diagonal density matrix with the given populations.
pub fn diagonal_state(populations: &[f64]) -> Result<DensityMatrix> {
    if populations.len() < 2 {
        return Err(Error::InvalidDimension {
            dim: populations.len(),
        });
    }
    let diag = DVector::from_iterator(
        populations.len(),
        populations.iter().map(|&p| C64::new(p, 0.0)),
    );
    Ok(DensityMatrix {
        matrix: CMatrix::from_diagonal(&diag),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(dim: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut rho = DensityMatrix {
            matrix: &g * g.adjoint(),
        };
        rho.normalize();
        rho
    }

    fn random_operator(dim: usize, seed: u64) -> Operator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Operator::from_matrix(CMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }))
        .unwrap()
    }

    #[test]
    fn displacement_moves_vacuum_to_coherent_state() {
        let alpha = C64::new(0.4, -1.5);
        let d = displacement(alpha, 24);
        let shifted = d.column(0).into_owned();
        let exact = coherent_ket(alpha, 24).unwrap();
        assert!((shifted - exact).norm() < 1e-9);
        // D(α)† = D(−α) on the retained block
        let back = displacement(-alpha, 24);
        assert!((back - d.adjoint()).norm() < 1e-9);
    }

    #[test]
    fn displacement_matches_padded_exponential() {
        let alpha = C64::new(0.0, -6.0);
        let (dim, big) = (30, 140);
        let mut gen = CMatrix::zeros(big, big);
        for k in 0..big - 1 {
            let s = ((k + 1) as f64).sqrt();
            gen[(k + 1, k)] = alpha * s;
            gen[(k, k + 1)] = -alpha.conj() * s;
        }
        let exact = gen.exp().view((0, 0), (dim, dim)).into_owned();
        assert!((displacement(alpha, dim) - exact).norm() < 1e-10);
    }

    #[test]
    fn annihilation_smallest() {
        let a = annihilation(2).unwrap();
        assert_eq!(a.matrix()[(0, 1)], ONE);
        assert_eq!(a.matrix()[(0, 0)], ZERO);
        assert_eq!(a.matrix()[(1, 0)], ZERO);
        assert_eq!(a.matrix()[(1, 1)], ZERO);
        let a3 = annihilation(3).unwrap();
        assert_eq!(a3.matrix()[(1, 2)].re, 2f64.sqrt());
        assert!(matches!(annihilation(1), Err(Error::InvalidDimension { dim: 1 })));
    }

    #[test]
    fn number_operator_from_ladder() {
        for d in 2..8 {
            let a = annihilation(d).unwrap();
            let n = a.adjoint().compose(&a).unwrap();
            for i in 0..d {
                assert_abs_diff_eq!(n.matrix()[(i, i)].re, i as f64, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn truncated_commutator() {
        let d = 6;
        let a = annihilation(d).unwrap();
        let comm = a.commutator(&a.adjoint()).unwrap();
        for i in 0..d {
            for j in 0..d {
                let expected = if i != j {
                    0.0
                } else if i == d - 1 {
                    1.0 - d as f64
                } else {
                    1.0
                };
                // √k·√k rounds, so "exact" means within a few ulps
                let z = comm.matrix()[(i, j)];
                assert!((z - C64::new(expected, 0.0)).norm() <= 4.0 * f64::EPSILON * d as f64, "({i},{j})");
            }
        }
    }

    #[test]
    fn lift_embeddings() {
        let spec = HilbertSpec::new(3, 4).unwrap();
        let id_cav = lift(&Operator::identity(3), Subsystem::Cavity, &spec).unwrap();
        assert_eq!(id_cav.matrix(), &CMatrix::identity(12, 12));

        let a = lift(&annihilation(3).unwrap(), Subsystem::Cavity, &spec).unwrap();
        let b = lift(&annihilation(4).unwrap(), Subsystem::Mechanics, &spec).unwrap();
        let comm = a.commutator(&b).unwrap();
        assert!(comm.matrix().iter().all(|z| z.norm() == 0.0));

        // ordering: ⟨i,n|a⊗I|j,m⟩ lands at index i*mech_dim + n
        assert_eq!(a.matrix()[(spec.index(0, 2), spec.index(1, 2))], ONE);
        assert!(lift(&annihilation(4).unwrap(), Subsystem::Cavity, &spec).is_err());
    }

    #[test]
    fn lifted_number_matches_reduced_expectation() {
        let spec = HilbertSpec::new(3, 3).unwrap();
        let rho_a = random_state(3, 1);
        let rho_b = random_state(3, 2);
        let joint = DensityMatrix::product(&rho_a, &rho_b);
        let nb = number(3).unwrap();
        let lifted = lift(&nb, Subsystem::Mechanics, &spec).unwrap();
        let lhs = expectation(&lifted, &joint).unwrap();
        let mut rhs = ZERO;
        for n in 0..3 {
            rhs += C64::new(n as f64, 0.0) * rho_b.matrix()[(n, n)];
        }
        assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-12);
        assert_abs_diff_eq!(lhs.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dissipator_examples() {
        let b = annihilation(3).unwrap();
        let vac = fock_state(0, 3).unwrap();
        assert!(dissipator(&b, &vac).unwrap().iter().all(|z| z.norm() == 0.0));

        let one = fock_state(1, 3).unwrap();
        let d = dissipator(&b, &one).unwrap();
        let mut expected = CMatrix::zeros(3, 3);
        expected[(0, 0)] = ONE;
        expected[(1, 1)] = -ONE;
        assert!((d - expected).iter().all(|z| z.norm() < 1e-15));

        assert!(dissipator(&annihilation(4).unwrap(), &one).is_err());
    }

    #[test]
    fn superoperators_traceless_and_hermitian() {
        for seed in 0..20 {
            let rho = random_state(5, seed);
            let c = random_operator(5, seed + 100);
            let d = dissipator(&c, &rho).unwrap();
            let h = measurement_superop(&c, &rho).unwrap();
            assert!(d.trace().norm() <= 1e-12);
            assert!(h.trace().norm() <= 1e-12);
            assert!(max_abs_asymmetry(&d) <= 1e-12);
            assert!(max_abs_asymmetry(&h) <= 1e-12);
        }
    }

    #[test]
    fn measurement_superop_vanishes_on_eigenstates() {
        let n = number(4).unwrap();
        for k in 0..4 {
            let rho = fock_state(k, 4).unwrap();
            let h = measurement_superop(&n, &rho).unwrap();
            assert!(h.iter().all(|z| z.norm() < 1e-14));
        }
        // c = −i a on cavity vacuum ⊗ arbitrary mechanics
        let spec = HilbertSpec::new(4, 3).unwrap();
        let a = lift(&annihilation(4).unwrap(), Subsystem::Cavity, &spec).unwrap();
        let c = a.scale(C64::new(0.0, -1.0));
        let rho = DensityMatrix::product(&fock_state(0, 4).unwrap(), &random_state(3, 9));
        let h = measurement_superop(&c, &rho).unwrap();
        assert!(h.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn state_constructors() {
        let vac = fock_state(0, 5).unwrap();
        assert_eq!(vac.matrix()[(0, 0)], ONE);
        assert_eq!(vac.trace(), ONE);
        let coh0 = coherent_state(C64::new(0.0, 0.0), 5).unwrap();
        assert!((coh0.matrix() - vac.matrix()).iter().all(|z| z.norm() < 1e-15));
        assert!(fock_state(5, 5).is_err());

        let th = thermal_state(0.5, 20).unwrap();
        let ratio = th.matrix()[(1, 1)].re / th.matrix()[(0, 0)].re;
        // geometric-series oracle: p_k = N̄^k / (N̄+1)^{k+1}
        let p0 = 1.0 / 1.5;
        let p1 = 0.5 / 1.5f64.powi(2);
        assert_abs_diff_eq!(ratio, p1 / p0, epsilon = 1e-12);
        assert_abs_diff_eq!(ratio, 1.0 / 3.0, epsilon = 1e-12);
        assert!(matches!(thermal_state(5.0, 10), Err(Error::Truncation { .. })));
    }

    #[test]
    fn coherent_expectation_and_leak() {
        let alpha = C64::new(1.2, -0.7);
        let dim = 25;
        let rho = coherent_state(alpha, dim).unwrap();
        let a = annihilation(dim).unwrap();
        let ev = expectation(&a, &rho).unwrap();
        assert!((ev - alpha).norm() < 1e-6);
        rho.validate(true).unwrap();

        let (leak, required) = coherent_leak(alpha, dim, LEAK_TOL);
        let direct: f64 = 1.0
            - (0..dim)
                .map(|k| {
                    let mut w = (-alpha.norm_sqr()).exp();
                    for j in 1..=k {
                        w *= alpha.norm_sqr() / j as f64;
                    }
                    w
                })
                .sum::<f64>();
        assert_abs_diff_eq!(leak, direct.max(0.0), epsilon = 1e-14);
        assert!(required <= dim);

        match coherent_state(C64::new(4.0, 0.0), 10) {
            Err(Error::Truncation { required_dim, leak }) => {
                assert!(leak > LEAK_TOL);
                assert!(required_dim > 10);
                let (leak_req, _) = coherent_leak(C64::new(4.0, 0.0), required_dim, LEAK_TOL);
                assert!(leak_req <= LEAK_TOL);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn thermal_expectation() {
        let nbar = 0.7;
        let rho = thermal_state(nbar, 60).unwrap();
        let n = number(60).unwrap();
        let ev = expectation(&n, &rho).unwrap();
        // geometric-series oracle Σ k N̄^k/(N̄+1)^{k+1} = N̄
        assert_abs_diff_eq!(ev.re, nbar, epsilon = 1e-8);
        assert_abs_diff_eq!(ev.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reduced_states() {
        let spec = HilbertSpec::new(3, 4).unwrap();
        let rho_a = random_state(3, 3);
        let rho_b = random_state(4, 4);
        let joint = DensityMatrix::product(&rho_a, &rho_b);
        let mech = joint.mechanics(&spec).unwrap();
        let cav = joint.cavity(&spec).unwrap();
        assert!((mech.matrix() - rho_b.matrix()).iter().all(|z| z.norm() < 1e-12));
        assert!((cav.matrix() - rho_a.matrix()).iter().all(|z| z.norm() < 1e-12));
        let pops = joint.phonon_populations(&spec).unwrap();
        for (n, p) in pops.iter().take(4).enumerate() {
            assert_abs_diff_eq!(*p, rho_b.matrix()[(n, n)].re, epsilon = 1e-12);
        }
    }

    #[test]
    fn auto_sizing_rule() {
        let spec = HilbertSpec::auto(1.5, 2);
        assert_eq!(spec.cavity_dim(), 37);
        assert_eq!(spec.mech_dim(), 7);
        let (leak, _) = coherent_leak(C64::new(0.0, -3.0), spec.cavity_dim(), LEAK_TOL);
        assert!(leak < LEAK_TOL);
    }
}
