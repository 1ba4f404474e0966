//! Collocation methods that represent the harmonic potential in a basis
//! of flat-strip eigenfunctions evaluated on the curved surface: the
//! direct form solves a global relation for the Neumann data, the
//! adjoint ("starred") form expands the Dirichlet data and
//! differentiates the series.  Both are regularized by oversampling the
//! basis columns and truncating the SVD with a pseudo-inverse cutoff.
//! A QR-based variant provides the same orthonormal column basis more
//! cheaply, and powers the discrete transform that measures how
//! efficiently the orthogonalized basis represents surface data.

use crate::error::{DnoError, Result};
use crate::linalg::{self, DenseMatrix, QrFactorization, SvdFactorization};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use crate::profiles::{Depth, WaveProfile};
use crate::spectral::{self, Grid, SurfaceField};
use std::sync::OnceLock;
use std::sync::Arc;

/// Oversampled collocation system.  At infinite depth `A` is the
/// complex matrix with columns `(1/M) e^{|k|(eta(x_j) - eta_max)}
/// e^{ikx_j}` for `-K/2 < k < K/2` and `B = i sgn(k) A` columnwise.  At
/// finite depth the real packed form is used: column 0 is the constant
/// `1/M`, and columns `2k-1, 2k` hold `(sqrt2/M) cosh(k(eta+h)) /
/// cosh(k(eta_max+h))` times `cos kx, sin kx` (with the matching
/// sinh-ratio sine/cosine pair in `B`).
pub struct AfmSystem {
    a: DenseMatrix,
    b: DenseMatrix,
    profile: WaveProfile,
    grid: Grid,
    eta_max: MpReal,
    k_limit: usize,
    real_form: bool,
    svd: OnceLock<Arc<SvdFactorization>>,
    qr: OnceLock<Arc<QrFactorization>>,
    /// packed real-form basis for the transform (built on demand at
    /// infinite depth, shared with `a` at finite depth)
    real_qr: OnceLock<Arc<QrFactorization>>,
}

impl AfmSystem {
    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k_limit(&self) -> usize {
        self.k_limit
    }

    pub fn profile(&self) -> &WaveProfile {
        &self.profile
    }

    pub fn is_real_form(&self) -> bool {
        self.real_form
    }

    /// Wavenumber index of column `c` (for the complex form the signed
    /// mode; for the packed real form the harmonic it belongs to).
    pub fn column_wavenumber(&self, c: usize) -> i64 {
        if self.real_form {
            ((c + 1) / 2) as i64
        } else {
            c as i64 - (self.k_limit / 2 - 1) as i64
        }
    }

    fn factor(&self) -> Result<Arc<SvdFactorization>> {
        if let Some(f) = self.svd.get() {
            return Ok(f.clone());
        }
        let f = Arc::new(linalg::svd(&self.a)?);
        let _ = self.svd.set(f.clone());
        Ok(f)
    }

    fn qr(&self) -> Result<Arc<QrFactorization>> {
        if let Some(f) = self.qr.get() {
            return Ok(f.clone());
        }
        let f = Arc::new(linalg::qr_factor(&self.a)?);
        let _ = self.qr.set(f.clone());
        Ok(f)
    }

    pub fn singular_values(&self) -> Result<Vec<MpReal>> {
        Ok(self.factor()?.s.clone())
    }

    fn check_field(&self, field: &SurfaceField, what: &str) -> Result<()> {
        if field.grid().len() != self.grid.len() {
            return Err(DnoError::GridMismatch(format!(
                "{what}: field on {} points, system on {}",
                field.grid().len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    fn check_cutoff(&self, cutoff: usize) -> Result<()> {
        if cutoff > self.k_limit - 1 {
            return Err(DnoError::OutOfRange(format!(
                "pseudo-inverse cutoff {cutoff} exceeds K-1 = {}",
                self.k_limit - 1
            )));
        }
        Ok(())
    }
}

fn complex_samples(field: &SurfaceField, ctx: &PrecisionCtx) -> Vec<MpComplex> {
    field.values().iter().map(|v| ctx.complex_from_real(v)).collect()
}

fn real_field(grid: &Grid, samples: &[MpComplex], ctx: &PrecisionCtx) -> Result<SurfaceField> {
    let values: Vec<MpReal> = samples.iter().map(|z| z.real().clone()).collect();
    SurfaceField::from_values(grid.clone(), values, ctx)
}

/// Packed real basis matrix (constant column plus cosine/sine pairs
/// weighted by the depth-appropriate even ratio).
fn real_basis_matrix(
    profile: &WaveProfile,
    eta: &SurfaceField,
    eta_max: &MpReal,
    k_limit: usize,
    ctx: &PrecisionCtx,
) -> DenseMatrix {
    let grid = eta.grid();
    let m = grid.len();
    let mut a = DenseMatrix::zeros(m, k_limit - 1, ctx);
    let inv_m = ctx.one() / ctx.real_from_i64(m as i64);
    let sqrt2_m = ctx.real_from_i64(2).sqrt() / ctx.real_from_i64(m as i64);
    let points = grid.points(ctx);
    for j in 0..m {
        *a.at_mut(j, 0) = ctx.complex_from_real(&inv_m);
        for k in 1..k_limit / 2 {
            let kappa = grid.wavenumber(k as i64, ctx);
            let ratio = match profile.depth() {
                Depth::Infinite => {
                    ((eta.values()[j].clone() - eta_max) * &kappa).exp()
                }
                Depth::Finite(h) => {
                    let num = ((eta.values()[j].clone() + h) * &kappa).cosh();
                    let den = ((eta_max.clone() + h) * &kappa).cosh();
                    num / den
                }
            };
            let phase = kappa * &points[j];
            let (s, c) = phase.sin_cos(ctx.zero());
            let w = ratio * &sqrt2_m;
            *a.at_mut(j, 2 * k - 1) = ctx.complex_from_real(&(c * &w));
            *a.at_mut(j, 2 * k) = ctx.complex_from_real(&(s * &w));
        }
    }
    a
}

/// Assemble the collocation system on `M >= K` points.
pub fn build_system(
    profile: &WaveProfile,
    k_limit: usize,
    m: usize,
    ctx: &PrecisionCtx,
) -> Result<AfmSystem> {
    if k_limit < 4 || k_limit % 2 != 0 {
        return Err(DnoError::Config(format!(
            "column count parameter K must be even and >= 4, got {k_limit}"
        )));
    }
    if m < k_limit {
        return Err(DnoError::Config(format!(
            "need M >= K for oversampled collocation, got M={m}, K={k_limit}"
        )));
    }
    let grid = Grid::new(m, profile.period().clone())?;
    let eta = profile.sample(&grid, ctx)?;
    let eta_max = profile.eta_max().clone();
    let points = grid.points(ctx);
    let (a, b, real_form) = match profile.depth() {
        Depth::Infinite => {
            let half = (k_limit / 2) as i64;
            let mut a = DenseMatrix::zeros(m, k_limit - 1, ctx);
            let mut b = DenseMatrix::zeros(m, k_limit - 1, ctx);
            for j in 0..m {
                for (c, k) in (-half + 1..half).enumerate() {
                    let kappa = grid.wavenumber(k, ctx);
                    let mut mag = (eta.values()[j].clone() - &eta_max) * kappa.clone().abs();
                    mag = mag.exp();
                    mag /= ctx.real_from_i64(m as i64);
                    let phase = kappa * &points[j];
                    let (s, co) = phase.sin_cos(ctx.zero());
                    let z = ctx.complex(co * &mag, s * mag);
                    let bz = ctx.imag_unit() * &z * ctx.real_from_i64(spectral::sgn(k));
                    *a.at_mut(j, c) = z;
                    *b.at_mut(j, c) = bz;
                }
            }
            (a, b, false)
        }
        Depth::Finite(h) => {
            let a = real_basis_matrix(profile, &eta, &eta_max, k_limit, ctx);
            let mut b = DenseMatrix::zeros(m, k_limit - 1, ctx);
            let sqrt2_m = ctx.real_from_i64(2).sqrt() / ctx.real_from_i64(m as i64);
            for j in 0..m {
                for k in 1..k_limit / 2 {
                    let kappa = grid.wavenumber(k as i64, ctx);
                    let num = ((eta.values()[j].clone() + h) * &kappa).sinh();
                    let den = ((eta_max.clone() + h) * &kappa).cosh();
                    let ratio = num / den;
                    let phase = kappa * &points[j];
                    let (s, c) = phase.sin_cos(ctx.zero());
                    let w = ratio * &sqrt2_m;
                    // adjoint pairing of the sine/cosine columns
                    *b.at_mut(j, 2 * k - 1) = ctx.complex_from_real(&(-s.clone() * &w));
                    *b.at_mut(j, 2 * k) = ctx.complex_from_real(&(c * &w));
                }
            }
            (a, b, true)
        }
    };
    Ok(AfmSystem {
        a,
        b,
        profile: profile.clone(),
        grid,
        eta_max,
        k_limit,
        real_form,
        svd: OnceLock::new(),
        qr: OnceLock::new(),
        real_qr: OnceLock::new(),
    })
}

/// Assemble with the default oversampling `M = 3K/2`.
pub fn build_system_oversampled(
    profile: &WaveProfile,
    k_limit: usize,
    ctx: &PrecisionCtx,
) -> Result<AfmSystem> {
    build_system(profile, k_limit, 3 * k_limit / 2, ctx)
}

/// Direct method: `N = U pinv(S) V* B* dD/dx` with the unfiltered
/// spectral derivative, keeping the leading `cutoff` singular values.
pub fn afm_neumann(
    sys: &AfmSystem,
    dirichlet: &SurfaceField,
    cutoff: usize,
    ctx: &PrecisionCtx,
) -> Result<SurfaceField> {
    sys.check_field(dirichlet, "afm_neumann")?;
    sys.check_cutoff(cutoff)?;
    let dx = spectral::derivative(dirichlet, ctx)?;
    let rhs = sys.b.apply_adjoint(&complex_samples(&dx, ctx))?;
    let f = sys.factor()?;
    let mut w = f.v.apply_adjoint(&rhs)?;
    for (i, wi) in w.iter_mut().enumerate() {
        if i < cutoff {
            *wi /= &f.s[i];
        } else {
            *wi = ctx.complex_zero();
        }
    }
    let n = f.u.apply(&w)?;
    real_field(&sys.grid, &n, ctx)
}

/// Adjoint method: `N = -d/dx [ B V pinv(S) U* D ]`.
pub fn afmstar_neumann(
    sys: &AfmSystem,
    dirichlet: &SurfaceField,
    cutoff: usize,
    ctx: &PrecisionCtx,
) -> Result<SurfaceField> {
    sys.check_field(dirichlet, "afmstar_neumann")?;
    sys.check_cutoff(cutoff)?;
    let f = sys.factor()?;
    let mut w = f.u.apply_adjoint(&complex_samples(dirichlet, ctx))?;
    for (i, wi) in w.iter_mut().enumerate() {
        if i < cutoff {
            *wi /= &f.s[i];
        } else {
            *wi = ctx.complex_zero();
        }
    }
    let coeffs = f.v.apply(&w)?;
    let mut y = sys.b.apply(&coeffs)?;
    for z in &mut y {
        *z = -z.clone();
    }
    let series = real_field(&sys.grid, &y, ctx)?;
    spectral::derivative(&series, ctx)
}

/// Cheaper variant replacing the pseudo-inverse with a true inverse via
/// `A = QR`: solves `R* z = B* dD/dx` and returns `Q z`.
pub fn afm_qr_neumann(
    sys: &AfmSystem,
    dirichlet: &SurfaceField,
    ctx: &PrecisionCtx,
) -> Result<SurfaceField> {
    sys.check_field(dirichlet, "afm_qr_neumann")?;
    let dx = spectral::derivative(dirichlet, ctx)?;
    let rhs = sys.b.apply_adjoint(&complex_samples(&dx, ctx))?;
    let f = sys.qr()?;
    // forward substitution on the lower-triangular R*
    let n = rhs.len();
    let mut z: Vec<MpComplex> = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = rhs[i].clone();
        for (j, zj) in z.iter().enumerate() {
            acc -= f.r.at(j, i).clone().conj() * zj;
        }
        let d = f.r.at(i, i);
        if d.clone().abs().real().is_zero() {
            return Err(DnoError::SingularMatrix {
                step: i,
                pivot: "0".into(),
            });
        }
        acc /= d.clone().conj();
        z.push(acc);
    }
    let out = f.q.apply(&z)?;
    real_field(&sys.grid, &out, ctx)
}

/// Sweep of the pseudo-inverse cutoff for both methods against exact
/// Neumann data, with the RMS error per cutoff and the pointwise error
/// at each method's optimum.
pub struct CutoffSweep {
    pub cutoffs: Vec<usize>,
    pub rms_afm: Vec<MpReal>,
    pub rms_afmstar: Vec<MpReal>,
    pub best_afm: usize,
    pub best_afmstar: usize,
    pub pointwise_afm: Vec<MpReal>,
    pub pointwise_afmstar: Vec<MpReal>,
}

fn rms_and_pointwise(
    approx: &[MpComplex],
    exact: &SurfaceField,
    ctx: &PrecisionCtx,
) -> (MpReal, Vec<MpReal>) {
    let m = exact.grid().len();
    let mut acc = ctx.zero();
    let mut e = Vec::with_capacity(m);
    for (z, x) in approx.iter().zip(exact.values()) {
        let d = z.real().clone() - x;
        acc += d.clone().square();
        e.push(d);
    }
    acc /= ctx.real_from_i64(m as i64);
    (acc.sqrt(), e)
}

pub fn cutoff_sweep(
    sys: &AfmSystem,
    dirichlet: &SurfaceField,
    exact_neumann: &SurfaceField,
    ctx: &PrecisionCtx,
) -> Result<CutoffSweep> {
    sys.check_field(dirichlet, "cutoff_sweep")?;
    sys.check_field(exact_neumann, "cutoff_sweep")?;
    let f = sys.factor()?;
    let m = sys.grid.len();
    let n_cols = sys.k_limit - 1;
    // direct method: accumulate columns of U against V* B* dD/dx
    let dx = spectral::derivative(dirichlet, ctx)?;
    let w_afm = f.v.apply_adjoint(&sys.b.apply_adjoint(&complex_samples(&dx, ctx))?)?;
    // adjoint method: accumulate columns of BV against U* D
    let w_star = f.u.apply_adjoint(&complex_samples(dirichlet, ctx))?;
    let bv = linalg::matmul(&sys.b, &f.v)?;
    let mut acc_afm: Vec<MpComplex> = (0..m).map(|_| ctx.complex_zero()).collect();
    let mut acc_star: Vec<MpComplex> = (0..m).map(|_| ctx.complex_zero()).collect();
    let mut cutoffs = Vec::with_capacity(n_cols + 1);
    let mut rms_afm = Vec::with_capacity(n_cols + 1);
    let mut rms_star = Vec::with_capacity(n_cols + 1);
    let mut best_afm = (0usize, ctx.nan());
    let mut best_star = (0usize, ctx.nan());
    let mut pw_afm = Vec::new();
    let mut pw_star = Vec::new();
    for cutoff in 0..=n_cols {
        if cutoff > 0 {
            let i = cutoff - 1;
            let ca = w_afm[i].clone() / &f.s[i];
            let cs = w_star[i].clone() / &f.s[i];
            for j in 0..m {
                *(&mut acc_afm[j]) += f.u.at(j, i).clone() * &ca;
                *(&mut acc_star[j]) += bv.at(j, i).clone() * &cs;
            }
        }
        let (ra, ea) = rms_and_pointwise(&acc_afm, exact_neumann, ctx);
        // adjoint method needs the derivative of the accumulated series
        let series = real_field(&sys.grid, &acc_star, ctx)?;
        let mut ns = spectral::derivative(&series, ctx)?;
        ns = SurfaceField::from_values(
            sys.grid.clone(),
            ns.values().iter().map(|v| -v.clone()).collect(),
            ctx,
        )?;
        let star_samples = complex_samples(&ns, ctx);
        let (rs, es) = rms_and_pointwise(&star_samples, exact_neumann, ctx);
        if best_afm.1.is_nan() || ra < best_afm.1 {
            best_afm = (cutoff, ra.clone());
            pw_afm = ea;
        }
        if best_star.1.is_nan() || rs < best_star.1 {
            best_star = (cutoff, rs.clone());
            pw_star = es;
        }
        cutoffs.push(cutoff);
        rms_afm.push(ra);
        rms_star.push(rs);
    }
    Ok(CutoffSweep {
        cutoffs,
        rms_afm,
        rms_afmstar: rms_star,
        best_afm: best_afm.0,
        best_afmstar: best_star.0,
        pointwise_afm: pw_afm,
        pointwise_afmstar: pw_star,
    })
}

/// Discrete transform in the orthogonalized basis: `c = (1/sqrt M) Q^T
/// samples` from the QR of the packed real basis, returned packed as
/// `out[0] = c_0`, `out[k] = c_{2k-1} + i c_{2k}`.
pub fn afm_transform(
    sys: &AfmSystem,
    field: &SurfaceField,
    ctx: &PrecisionCtx,
) -> Result<Vec<MpComplex>> {
    sys.check_field(field, "afm_transform")?;
    let qr = if sys.real_form {
        sys.qr()?
    } else {
        // packed real basis built on demand for the complex-form system
        if let Some(f) = sys.real_qr.get() {
            f.clone()
        } else {
            let eta = sys.profile.sample(&sys.grid, ctx)?;
            let a = real_basis_matrix(&sys.profile, &eta, &sys.eta_max, sys.k_limit, ctx);
            let f = Arc::new(linalg::qr_factor(&a)?);
            let _ = sys.real_qr.set(f.clone());
            f
        }
    };
    let mut c = qr.q.apply_adjoint(&complex_samples(field, ctx))?;
    let scale = ctx.one() / ctx.real_from_i64(sys.grid.len() as i64).sqrt();
    for z in &mut c {
        *z *= ctx.complex_from_real(&scale);
    }
    let mut out = Vec::with_capacity(sys.k_limit / 2);
    out.push(c[0].clone());
    for k in 1..sys.k_limit / 2 {
        let re = c[2 * k - 1].real().clone();
        let im = c[2 * k].real().clone();
        out.push(ctx.complex(re, im));
    }
    Ok(out)
}
