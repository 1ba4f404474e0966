//! Boundary-integral solver: the well-conditioned reference method.
//! The potential is represented by a periodized dipole density on the
//! surface, giving a second-kind integral equation whose kernels are
//! smooth (the cotangent singularities cancel analytically on the
//! diagonal).  Finite depth is handled by a single image reflection of
//! the dipole distribution across the flat bottom.

use crate::error::{DnoError, Result};
use crate::linalg::{self, DenseMatrix};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use crate::profiles::{Depth, WaveProfile};
use crate::spectral::{self, Grid, SurfaceField};

/// Collocation values of the two smooth kernels.  `akern` feeds the
/// density equation, `bkern` the Neumann evaluation.  Entries are real
/// (stored in the complex matrix type used by the solvers).
pub struct BimKernels {
    akern: DenseMatrix,
    bkern: DenseMatrix,
    profile: WaveProfile,
    grid: Grid,
}

impl BimKernels {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn profile(&self) -> &WaveProfile {
        &self.profile
    }

    pub fn akern(&self) -> &DenseMatrix {
        &self.akern
    }

    pub fn bkern(&self) -> &DenseMatrix {
        &self.bkern
    }

    /// Quadrature weight of the integral operators:
    /// `(1/2pi) * (L/M)`.
    fn quad_weight(&self, ctx: &PrecisionCtx) -> MpReal {
        self.grid.period().clone()
            / (ctx.two_pi() * ctx.real_from_i64(self.grid.len() as i64))
    }

    /// Dense matrix of the second-kind system `mu/2 + K mu = D`.
    pub fn system_matrix(&self, ctx: &PrecisionCtx) -> DenseMatrix {
        let m = self.grid.len();
        let w = self.quad_weight(ctx);
        let half = ctx.real_ratio(1, 2);
        DenseMatrix::from_fn(m, m, ctx, |i, j| {
            let mut z = self.akern.at(i, j).clone() * ctx.complex_from_real(&w);
            if i == j {
                z += ctx.complex_from_real(&half);
            }
            z
        })
    }
}

/// Complex cotangent `cot z` via `cos z / sin z`.
fn ccot(z: &MpComplex, ctx: &PrecisionCtx) -> MpComplex {
    let s = z.clone().sin();
    let c = z.clone().cos();
    let _ = ctx;
    c / s
}

/// Assemble both kernels on an `M`-point grid.
pub fn assemble_kernels(
    profile: &WaveProfile,
    m: usize,
    ctx: &PrecisionCtx,
) -> Result<BimKernels> {
    let grid = Grid::new(m, profile.period().clone())?;
    let points = grid.points(ctx);
    let lambda = ctx.two_pi() / grid.period();
    let half = ctx.real_ratio(1, 2);
    // surface parametrization and derivatives at the nodes
    let mut zeta = Vec::with_capacity(m);
    let mut dzeta = Vec::with_capacity(m);
    let mut ddzeta = Vec::with_capacity(m);
    for x in &points {
        let eta = profile.eval(x, ctx);
        let slope = profile.eval_slope(x, ctx);
        let curv = profile.eval_curvature(x, ctx);
        zeta.push(ctx.complex(x.clone(), eta));
        dzeta.push(ctx.complex(ctx.one(), slope));
        ddzeta.push(ctx.complex(ctx.zero(), curv));
    }
    // a graph parametrization has |zeta'| >= 1; reject the degenerate
    // case anyway in case of non-finite profile values
    for d in &dzeta {
        let mag = d.clone().abs().into_real_imag().0;
        if !(mag.to_f64() >= 1.0) {
            return Err(DnoError::SingularSurface(
                "non-finite surface slope in kernel assembly".into(),
            ));
        }
    }
    let image_shift = match profile.depth() {
        Depth::Infinite => None,
        Depth::Finite(h) => {
            // reflected surface point: conj(zeta) - 2ih
            let two_h = h.clone() * ctx.real_from_i64(2);
            Some(ctx.complex(ctx.zero(), -two_h))
        }
    };
    let mut akern = DenseMatrix::zeros(m, m, ctx);
    let mut bkern = DenseMatrix::zeros(m, m, ctx);
    for i in 0..m {
        for j in 0..m {
            let (mut a, mut b);
            if i == j {
                // analytic diagonal limits of the cancelling cotangents
                let ratio = ddzeta[i].clone() / &dzeta[i] * ctx.complex_from_real(&half);
                a = ctx.complex_from_real(&(-ratio.imag().clone()));
                b = ctx.complex_from_real(ratio.real());
            } else {
                let dz = (zeta[i].clone() - &zeta[j]) * ctx.complex_from_real(&lambda)
                    * ctx.complex_from_real(&half);
                let da = ctx.complex_from_real(
                    &((points[i].clone() - &points[j]) * &lambda * &half),
                );
                let cot_s = ccot(&dz, ctx);
                let cot_f = ccot(&da, ctx);
                let lam_half = ctx.complex_from_real(&(lambda.clone() * &half));
                let ta = dzeta[j].clone() * &lam_half * &cot_s - cot_f.clone() * &lam_half;
                let tb = dzeta[i].clone() * &lam_half * &cot_s - cot_f * &lam_half;
                a = ctx.complex_from_real(ta.imag());
                b = ctx.complex_from_real(tb.real());
            }
            if let Some(shift) = &image_shift {
                // smooth image kernel from the bottom reflection
                let arg = (zeta[i].clone().conj() + shift - &zeta[j])
                    * ctx.complex_from_real(&(lambda.clone() * &half));
                let cot_i = ccot(&arg, ctx);
                let lam_half = ctx.complex_from_real(&(lambda.clone() * &half));
                let ta = dzeta[j].clone() * &lam_half * &cot_i;
                let tb = dzeta[i].clone().conj() * lam_half * cot_i;
                a += ctx.complex_from_real(ta.imag());
                b -= ctx.complex_from_real(tb.real());
            }
            *akern.at_mut(i, j) = a;
            *bkern.at_mut(i, j) = b;
        }
    }
    Ok(BimKernels {
        akern,
        bkern,
        profile: profile.clone(),
        grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Iterative,
}

pub struct BimSolution {
    pub mu: SurfaceField,
    /// 2-norm condition estimate of the discrete second-kind system
    pub condition: MpReal,
    /// iterations used (iterative path only)
    pub iterations: Option<usize>,
    /// true when the iterative path failed to converge and the direct
    /// solver produced the returned density
    pub fell_back: bool,
}

/// Restarted residual-minimizing iteration (generalized conjugate
/// residual), adequate because the system is a perturbation of the
/// identity.
fn gcr_solve(
    s: &DenseMatrix,
    b: &[MpComplex],
    tol: &MpReal,
    max_iters: usize,
    restart: usize,
    ctx: &PrecisionCtx,
) -> Result<(Vec<MpComplex>, usize, bool)> {
    let n = b.len();
    let mut x: Vec<MpComplex> = (0..n).map(|_| ctx.complex_zero()).collect();
    let mut r: Vec<MpComplex> = b.to_vec();
    let norm = |v: &[MpComplex]| -> MpReal {
        let mut acc = ctx.zero();
        for z in v {
            acc += z.clone().norm().into_real_imag().0;
        }
        acc.sqrt()
    };
    let dot = |u: &[MpComplex], v: &[MpComplex]| -> MpComplex {
        let mut acc = ctx.complex_zero();
        for (a, c) in u.iter().zip(v) {
            acc += a.clone() * c.clone().conj();
        }
        acc
    };
    let mut iters = 0;
    'outer: while iters < max_iters {
        let mut ps: Vec<Vec<MpComplex>> = Vec::new();
        let mut aps: Vec<Vec<MpComplex>> = Vec::new();
        while ps.len() < restart && iters < max_iters {
            if norm(&r) <= *tol {
                break 'outer;
            }
            let mut p = r.clone();
            let mut ap = s.apply(&p)?;
            for (pj, apj) in ps.iter().zip(&aps) {
                let denom = dot(apj, apj);
                let beta = dot(&ap, apj) / denom;
                for k in 0..n {
                    let t1 = apj[k].clone() * &beta;
                    ap[k] -= t1;
                    let t2 = pj[k].clone() * &beta;
                    p[k] -= t2;
                }
            }
            let denom = dot(&ap, &ap);
            if denom.clone().abs().real().is_zero() {
                break 'outer;
            }
            let alpha = dot(&r, &ap) / denom;
            for k in 0..n {
                let t1 = p[k].clone() * &alpha;
                x[k] += t1;
                let t2 = ap[k].clone() * &alpha;
                r[k] -= t2;
            }
            ps.push(p);
            aps.push(ap);
            iters += 1;
        }
    }
    let converged = norm(&r) <= *tol;
    Ok((x, iters, converged))
}

/// Solve the second-kind system for the dipole density.
pub fn bim_solve(
    kernels: &BimKernels,
    dirichlet: &SurfaceField,
    method: SolveMethod,
    ctx: &PrecisionCtx,
) -> Result<BimSolution> {
    if dirichlet.grid().len() != kernels.grid.len() {
        return Err(DnoError::GridMismatch("bim_solve".into()));
    }
    let s = kernels.system_matrix(ctx);
    let rhs: Vec<MpComplex> = dirichlet
        .values()
        .iter()
        .map(|v| ctx.complex_from_real(v))
        .collect();
    let lu = linalg::lu_factor(&s)?;
    let condition = linalg::condition_estimate(&s, &lu, 20)?;
    let (mu, iterations, fell_back) = match method {
        SolveMethod::Direct => (lu.solve(&rhs)?, None, false),
        SolveMethod::Iterative => {
            let mut rhs_norm = ctx.zero();
            for z in &rhs {
                rhs_norm += z.clone().norm().into_real_imag().0;
            }
            let mut tol = rhs_norm.sqrt();
            tol >>= ctx.bits() - 10;
            let (x, iters, converged) = gcr_solve(&s, &rhs, &tol, 200, 30, ctx)?;
            if converged {
                (x, Some(iters), false)
            } else {
                (lu.solve(&rhs)?, Some(iters), true)
            }
        }
    };
    let values: Vec<MpReal> = mu.iter().map(|z| z.real().clone()).collect();
    Ok(BimSolution {
        mu: SurfaceField::from_values(kernels.grid.clone(), values, ctx)?,
        condition,
        iterations,
        fell_back,
    })
}

/// Evaluate the Neumann data from the solved density:
/// half the Hilbert transform of the density derivative plus the
/// smooth-kernel correction.
pub fn bim_neumann(
    kernels: &BimKernels,
    mu: &SurfaceField,
    ctx: &PrecisionCtx,
) -> Result<SurfaceField> {
    if mu.grid().len() != kernels.grid.len() {
        return Err(DnoError::GridMismatch("bim_neumann".into()));
    }
    let dmu = spectral::derivative(mu, ctx)?;
    let hpart = spectral::hilbert(&dmu, ctx)?;
    let w = kernels.quad_weight(ctx);
    let samples: Vec<MpComplex> = dmu
        .values()
        .iter()
        .map(|v| ctx.complex_from_real(v))
        .collect();
    let smooth = kernels.bkern.apply(&samples)?;
    let half = ctx.real_ratio(1, 2);
    let values: Vec<MpReal> = hpart
        .values()
        .iter()
        .zip(&smooth)
        .map(|(h, s)| h.clone() * &half + s.real().clone() * &w)
        .collect();
    SurfaceField::from_values(kernels.grid.clone(), values, ctx)
}

/// One-call Dirichlet-to-Neumann map through the boundary-integral
/// pipeline.
pub fn bim_dno(
    profile: &WaveProfile,
    dirichlet: &SurfaceField,
    method: SolveMethod,
    ctx: &PrecisionCtx,
) -> Result<(SurfaceField, BimSolution)> {
    let kernels = assemble_kernels(profile, dirichlet.grid().len(), ctx)?;
    let sol = bim_solve(&kernels, dirichlet, method, ctx)?;
    let n = bim_neumann(&kernels, &sol.mu, ctx)?;
    Ok((n, sol))
}
