//! Full SME in the pointer frame.
//!
//! The joint state is kept as phonon blocks `ρ^{nm}` (cavity operators) with
//! each branch displaced by its steady amplitude `α_n = −iχn/κ`:
//! `ρ^{nm} = D(α_n) σ^{nm} D(α_m)†`. Drive and damping then cancel on the
//! vacuum of every branch, so `σ` stays near the bottom of the Fock ladder no
//! matter how far apart the pointer states are. A phonon jump moves a block
//! between neighbouring branches and picks up the fixed shift
//! `D(α_{n+1} − α_n)`; the phase of that product vanishes because all `α_n`
//! lie on one line through the origin.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{self, CMatrix, DensityMatrix, HilbertSpec};
use crate::lindblad::SimParams;

/// Largest thermal probability moved by one split thermal step.
const THERMAL_STEP: f64 = 1e-3;

/// `diag + a·A + a†·B + a²·C` on the cavity index.
#[derive(Debug, Clone, Copy)]
struct Banded {
    offset: C64,
    number: C64,
    a: C64,
    ad: C64,
    aa: C64,
}

impl Banded {
    fn diag(&self, i: usize) -> C64 {
        self.offset + self.number * i as f64
    }
}

/// `dst = B src`.
fn left(b: &Banded, src: &[C64], dst: &mut [C64], nc: usize, s: &[f64]) {
    for j in 0..nc {
        let col = j * nc;
        for i in 0..nc {
            let mut acc = b.diag(i) * src[i + col];
            if i + 1 < nc {
                acc += b.a * s[i + 1] * src[i + 1 + col];
            }
            if i >= 1 {
                acc += b.ad * s[i] * src[i - 1 + col];
            }
            if i + 2 < nc {
                acc += b.aa * s[i + 1] * s[i + 2] * src[i + 2 + col];
            }
            dst[i + col] = acc;
        }
    }
}

/// `dst += w · src B†`.
fn right_add(b: &Banded, src: &[C64], dst: &mut [C64], nc: usize, s: &[f64], w: f64) {
    let (a, ad, aa) = (b.a.conj() * w, b.ad.conj() * w, b.aa.conj() * w);
    for j in 0..nc {
        let col = j * nc;
        let d = b.diag(j).conj() * w;
        for i in 0..nc {
            let mut acc = d * src[i + col];
            if j + 1 < nc {
                acc += a * s[j + 1] * src[i + col + nc];
            }
            if j >= 1 {
                acc += ad * s[j] * src[i + col - nc];
            }
            if j + 2 < nc {
                acc += aa * s[j + 1] * s[j + 2] * src[i + col + 2 * nc];
            }
            dst[i + col] += acc;
        }
    }
}

/// `c = α·a·b + β·c` for square column-major matrices of equal size.
fn zgemm(alpha: C64, a: &CMatrix, b: &CMatrix, beta: C64, c: &mut CMatrix) {
    let n = a.nrows();
    assert!(a.shape() == (n, n) && b.shape() == (n, n) && c.shape() == (n, n));
    let (ld, one) = (n as isize, 1isize);
    // SAFETY: Complex64 is repr(C) over two f64, the buffers hold n² elements
    // laid out column-major, and c does not alias a or b.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            n,
            n,
            n,
            [alpha.re, alpha.im],
            a.as_ptr().cast(),
            one,
            ld,
            b.as_ptr().cast(),
            one,
            ld,
            [beta.re, beta.im],
            c.as_mut_ptr().cast(),
            one,
            ld,
        );
    }
}

/// Positivity-preserving full-SME integrator on pointer-frame blocks.
#[derive(Debug, Clone)]
pub struct PointerStepper {
    params: SimParams,
    nc: usize,
    nm: usize,
    alpha: Vec<C64>,
    shift: CMatrix,
    shift_adj: CMatrix,
    thermal_every: usize,
    // σ^{nm} at n·nm + m; only n ≤ m is kept current. Blocks that are exactly
    // zero stay zero (no process creates coherence between branches), so a
    // diagonal start only ever touches the nm diagonal blocks.
    blocks: Vec<CMatrix>,
    active: Vec<bool>,
    next: Vec<CMatrix>,
    work: CMatrix,
    sqrt: Vec<f64>,
}

impl PointerStepper {
    /// Converts a lab-frame joint state; fails if a displaced branch does not
    /// fit the cavity truncation.
    pub fn new(params: &SimParams, spec: &HilbertSpec, rho: &DensityMatrix) -> Result<Self> {
        let nc = spec.cavity_dim();
        let nm = spec.mech_dim();
        if rho.dim() != spec.joint_dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.joint_dim(),
                actual: rho.dim(),
            });
        }
        let gain = params.chi / params.kappa;
        let alpha: Vec<C64> = (0..nm).map(|n| C64::new(0.0, -gain * n as f64)).collect();
        let (jump_leak, required_dim) = hilbert::coherent_leak(C64::new(gain, 0.0), nc, hilbert::LEAK_TOL);
        if jump_leak > hilbert::LEAK_TOL {
            // a phonon jump would push the cavity out of the frame basis
            return Err(Error::Truncation {
                leak: jump_leak,
                required_dim,
            });
        }
        let shift = hilbert::displacement(C64::new(0.0, -gain), nc);
        let g_max = (0..nm).map(|n| thermal_loss(params, n, nm)).fold(0.0, f64::max);
        let thermal_every = if g_max > 0.0 {
            ((THERMAL_STEP / (g_max * params.dt)).floor() as usize).max(1)
        } else {
            usize::MAX
        };

        // σ^{nm} = D(−α_n) ρ^{nm} D(−α_m)†; lab blocks vanish beyond nc, so
        // the leading block of each displacement is all that is needed
        let undo: Vec<CMatrix> = alpha.iter().map(|a| hilbert::displacement(-a, nc)).collect();
        let m = rho.matrix();
        let mut blocks = vec![CMatrix::zeros(nc, nc); nm * nm];
        for n in 0..nm {
            for k in n..nm {
                let lab = CMatrix::from_fn(nc, nc, |i, j| m[(i * nm + n, j * nm + k)]);
                blocks[n * nm + k] = &undo[n] * lab * undo[k].adjoint();
            }
        }
        let kept: f64 = (0..nm).map(|n| blocks[n * nm + n].trace().re).sum();
        let total = rho.trace().re;
        let leak = (total - kept) / total;
        if leak > hilbert::LEAK_TOL {
            let top = (0..nm)
                .rev()
                .find(|&n| (0..nc).any(|i| m[(i * nm + n, i * nm + n)].re > 0.0))
                .unwrap_or(0);
            return Err(Error::Truncation {
                leak,
                required_dim: HilbertSpec::auto(gain, top).cavity_dim(),
            });
        }
        let active = blocks.iter().map(|b| b.iter().any(|z| z.norm_sqr() > 0.0)).collect();
        let mut out = Self {
            params: *params,
            nc,
            nm,
            alpha,
            shift_adj: shift.adjoint(),
            shift,
            thermal_every,
            next: blocks.clone(),
            blocks,
            active,
            work: CMatrix::zeros(nc, nc),
            sqrt: (0..nc.max(nm) + 2).map(|k| (k as f64).sqrt()).collect(),
        };
        out.normalize(0)?;
        Ok(out)
    }

    /// Applies the phonon baths every `k` steps instead of the default split.
    pub fn with_thermal_every(mut self, k: usize) -> Self {
        self.thermal_every = k.max(1);
        self
    }

    pub fn thermal_every(&self) -> usize {
        self.thermal_every
    }

    fn block(&self, n: usize, m: usize) -> &CMatrix {
        &self.blocks[n * self.nm + m]
    }

    /// Phonon populations `p_n`.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.nm).map(|n| self.block(n, n).trace().re).collect()
    }

    /// `(⟨b†b⟩, Var b†b)`.
    pub fn phonon_moments(&self) -> (f64, f64) {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (n, p) in self.populations().into_iter().enumerate() {
            m1 += n as f64 * p;
            m2 += (n * n) as f64 * p;
        }
        (m1, m2 - m1 * m1)
    }

    /// Lab-frame `⟨a⟩`.
    pub fn mean_a(&self) -> C64 {
        let nc = self.nc;
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..self.nm {
            let b = self.block(n, n);
            for i in 0..nc - 1 {
                acc += b[(i + 1, i)] * self.sqrt[i + 1];
            }
            acc += self.alpha[n] * b.trace().re;
        }
        acc
    }

    /// Lab-frame `⟨−ia + ia†⟩`.
    pub fn quadrature(&self) -> f64 {
        2.0 * self.mean_a().im
    }

    /// Weight on the highest cavity level of the frame, summed over branches.
    pub fn cavity_top_population(&self) -> f64 {
        (0..self.nm).map(|n| self.block(n, n)[(self.nc - 1, self.nc - 1)].re).sum()
    }

    pub fn phonon_top_population(&self) -> f64 {
        self.block(self.nm - 1, self.nm - 1).trace().re
    }

    /// The frame state `σ` as one joint matrix in the usual ordering. It is
    /// unitarily equivalent to the lab state, so shares its spectrum.
    pub fn frame_state(&self) -> CMatrix {
        let (nc, nm) = (self.nc, self.nm);
        let mut out = CMatrix::zeros(nc * nm, nc * nm);
        for n in 0..nm {
            for m in 0..nm {
                let b = if n <= m {
                    self.block(n, m).clone()
                } else {
                    self.block(m, n).adjoint()
                };
                for i in 0..nc {
                    for j in 0..nc {
                        out[(i * nm + n, j * nm + m)] = b[(i, j)];
                    }
                }
            }
        }
        out
    }

    /// Advances by one step driven by `dw` and returns the photocurrent sample.
    pub fn step(&mut self, dw: f64, step: usize) -> Result<f64> {
        let p = self.params;
        let dt = p.dt;
        let (nc, nm) = (self.nc, self.nm);
        let rate = p.eta * p.kappa;
        let root = rate.sqrt();
        let dy = root * self.quadrature() * dt + dw;
        let current = root * dy / dt;
        let ito = dy * dy - dt;
        let i = C64::new(0.0, 1.0);

        let kraus: Vec<Banded> = self
            .alpha
            .iter()
            .enumerate()
            .map(|(n, &al)| {
                let drive = -i * (0.5 * p.chi * n as f64 * dt);
                Banded {
                    offset: C64::new(1.0 - 0.5 * p.kappa * al.norm_sqr() * dt, 0.0)
                        - i * root * al * dy
                        - al * al * (0.5 * rate * ito),
                    number: C64::new(-0.5 * p.kappa * dt, 0.0),
                    a: drive - al.conj() * (0.5 * p.kappa * dt) - i * root * dy - al * (rate * ito),
                    ad: drive - al * (0.5 * p.kappa * dt),
                    aa: C64::new(-0.5 * rate * ito, 0.0),
                }
            })
            .collect();
        let lost = (1.0 - p.eta) * p.kappa * dt;
        let jumps: Vec<Banded> = self
            .alpha
            .iter()
            .map(|&al| Banded {
                offset: al,
                number: C64::new(0.0, 0.0),
                a: C64::new(1.0, 0.0),
                ad: C64::new(0.0, 0.0),
                aa: C64::new(0.0, 0.0),
            })
            .collect();

        let s = &self.sqrt;
        for n in 0..nm {
            for m in n..nm {
                let k = n * nm + m;
                if !self.active[k] {
                    continue;
                }
                let src = self.blocks[k].as_slice();
                let dst = self.next[k].as_mut_slice();
                dst.fill(C64::new(0.0, 0.0));
                left(&kraus[n], src, self.work.as_mut_slice(), nc, s);
                right_add(&kraus[m], self.work.as_slice(), dst, nc, s, 1.0);
                if lost > 0.0 {
                    left(&jumps[n], src, self.work.as_mut_slice(), nc, s);
                    right_add(&jumps[m], self.work.as_slice(), dst, nc, s, lost);
                }
            }
        }
        for k in 0..nm * nm {
            if self.active[k] {
                std::mem::swap(&mut self.blocks[k], &mut self.next[k]);
            }
        }
        if step.is_multiple_of(self.thermal_every) {
            self.thermal(self.thermal_every as f64 * dt);
        }
        self.normalize(step)?;
        Ok(current)
    }

    /// Euler step of the phonon baths over `h`, in Kraus form.
    fn thermal(&mut self, h: f64) {
        let p = self.params;
        let nm = self.nm;
        let down = p.gamma * (p.nbar + 1.0) * h;
        let up = p.gamma * p.nbar * h;
        let keep: Vec<f64> = (0..nm).map(|n| 1.0 - 0.5 * h * thermal_loss(&p, n, nm)).collect();
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut now_active = self.active.clone();
        for n in 0..nm {
            for m in n..nm {
                let k = n * nm + m;
                let below = m + 1 < nm && self.active[k + nm + 1];
                let above = n >= 1 && self.active[k - nm - 1];
                if !(self.active[k] || below || above) {
                    continue;
                }
                now_active[k] = true;
                let out = &mut self.next[k];
                out.copy_from(&self.blocks[k]);
                *out *= C64::new(keep[n] * keep[m], 0.0);
                if below {
                    let w = down * self.sqrt[n + 1] * self.sqrt[m + 1];
                    zgemm(one, &self.shift, &self.blocks[k + nm + 1], zero, &mut self.work);
                    zgemm(C64::new(w, 0.0), &self.work, &self.shift_adj, one, out);
                }
                if above {
                    let w = up * self.sqrt[n] * self.sqrt[m];
                    zgemm(one, &self.shift_adj, &self.blocks[k - nm - 1], zero, &mut self.work);
                    zgemm(C64::new(w, 0.0), &self.work, &self.shift, one, out);
                }
            }
        }
        self.active = now_active;
        for k in 0..nm * nm {
            if self.active[k] {
                std::mem::swap(&mut self.blocks[k], &mut self.next[k]);
            }
        }
    }

    fn normalize(&mut self, step: usize) -> Result<()> {
        let nm = self.nm;
        let tr: f64 = (0..nm).map(|n| self.blocks[n * nm + n].trace().re).sum();
        if !tr.is_finite() || tr <= 0.0 {
            return Err(Error::NumericFailure { step });
        }
        let scale = C64::new(1.0 / tr, 0.0);
        for n in 0..nm {
            for m in n..nm {
                if !self.active[n * nm + m] {
                    continue;
                }
                let b = &mut self.blocks[n * nm + m];
                *b *= scale;
                if n == m {
                    // keep diagonal blocks exactly hermitian
                    let h = (b.clone() + b.adjoint()) * C64::new(0.5, 0.0);
                    *b = h;
                }
            }
        }
        Ok(())
    }
}

/// Total escape rate `γ(N̄+1)n + γN̄(n+1)` of level `n`, with no way up from the top.
fn thermal_loss(p: &SimParams, n: usize, nm: usize) -> f64 {
    let up = if n + 1 < nm { (n + 1) as f64 } else { 0.0 };
    p.gamma * (p.nbar + 1.0) * n as f64 + p.gamma * p.nbar * up
}
