//! Dense complex matrix algebra at arbitrary precision: multiplication,
//! LU solve, Householder QR, one-sided Jacobi SVD, and pseudo-inverse
//! application with an index cutoff.
//!
//! The Jacobi SVD is one-sided (cyclic-by-row over column pairs), which
//! keeps tiny singular values accurate in a relative sense -- the
//! spectra we feed it are strongly graded, decaying below 1e-100 at high
//! working precision, and a bidiagonalization would flush that tail.

use crate::error::{DnoError, Result};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use rug::Assign;

/// Row-major dense complex matrix with a uniform precision context.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<MpComplex>,
    ctx: PrecisionCtx,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize, ctx: &PrecisionCtx) -> Self {
        DenseMatrix {
            rows,
            cols,
            entries: (0..rows * cols).map(|_| ctx.complex_zero()).collect(),
            ctx: *ctx,
        }
    }

    pub fn identity(n: usize, ctx: &PrecisionCtx) -> Self {
        let mut m = Self::zeros(n, n, ctx);
        for i in 0..n {
            *m.at_mut(i, i) = ctx.complex_from_f64(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        ctx: &PrecisionCtx,
        f: impl Fn(usize, usize) -> MpComplex,
    ) -> Self {
        let entries = (0..rows * cols)
            .map(|idx| f(idx / cols, idx % cols))
            .collect();
        DenseMatrix {
            rows,
            cols,
            entries,
            ctx: *ctx,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ctx(&self) -> &PrecisionCtx {
        &self.ctx
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &MpComplex {
        &self.entries[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut MpComplex {
        &mut self.entries[i * self.cols + j]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, &self.ctx, |i, j| {
            self.at(j, i).clone().conj()
        })
    }

    pub fn frobenius_norm(&self) -> MpReal {
        let mut acc = self.ctx.zero();
        for e in &self.entries {
            acc += e.clone().norm().into_real_imag().0;
        }
        acc.sqrt()
    }

    pub fn max_abs(&self) -> MpReal {
        let mut best = self.ctx.zero();
        for e in &self.entries {
            let a = e.clone().abs().into_real_imag().0;
            if a > best {
                best = a;
            }
        }
        best
    }

    /// Matrix-vector product `A x`.
    pub fn apply(&self, x: &[MpComplex]) -> Result<Vec<MpComplex>> {
        if x.len() != self.cols {
            return Err(DnoError::DimensionMismatch(format!(
                "apply: {}x{} matrix, vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let ctx = &self.ctx;
        let mut t = ctx.complex_zero();
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = ctx.complex_zero();
                for (j, xj) in x.iter().enumerate() {
                    t.assign(self.at(i, j) * xj);
                    acc += &t;
                }
                acc
            })
            .collect())
    }

    /// Adjoint-vector product `A* x`.
    pub fn apply_adjoint(&self, x: &[MpComplex]) -> Result<Vec<MpComplex>> {
        if x.len() != self.rows {
            return Err(DnoError::DimensionMismatch(format!(
                "apply_adjoint: {}x{} matrix, vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let ctx = &self.ctx;
        let mut t = ctx.complex_zero();
        let mut out: Vec<MpComplex> = (0..self.cols).map(|_| ctx.complex_zero()).collect();
        for (i, xi) in x.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                t.assign(&self.at(i, j).clone().conj() * xi);
                *o += &t;
            }
        }
        Ok(out)
    }
}

/// `C = A B`, accumulated in fixed (row-major) order.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(DnoError::DimensionMismatch(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let ctx = a.ctx;
    let mut c = DenseMatrix::zeros(a.rows, b.cols, &ctx);
    let mut t = ctx.complex_zero();
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.at(i, k);
            if aik.is_zero() {
                continue;
            }
            for j in 0..b.cols {
                t.assign(aik * b.at(k, j));
                *c.at_mut(i, j) += &t;
            }
        }
    }
    Ok(c)
}

/// LU factorization with partial pivoting, reusable for repeated solves
/// with the matrix or its adjoint.
pub struct LuFactorization {
    n: usize,
    ctx: PrecisionCtx,
    /// packed L (unit diagonal, below) and U (on and above)
    lu: Vec<MpComplex>,
    /// row swaps (k, pivot_row) in elimination order
    swaps: Vec<(usize, usize)>,
}

pub fn lu_factor(a: &DenseMatrix) -> Result<LuFactorization> {
    if a.rows != a.cols {
        return Err(DnoError::DimensionMismatch(format!(
            "lu_factor needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let ctx = a.ctx;
    let mut lu = a.entries.clone();
    let mut swaps = Vec::new();
    let mut t = ctx.complex_zero();
    for k in 0..n {
        // partial pivot: largest |entry| in column k at or below the diagonal
        let mut piv = k;
        let mut best = lu[k * n + k].clone().abs().into_real_imag().0;
        for i in k + 1..n {
            let cand = lu[i * n + k].clone().abs().into_real_imag().0;
            if cand > best {
                best = cand;
                piv = i;
            }
        }
        if best.is_zero() {
            return Err(DnoError::SingularMatrix {
                step: k,
                pivot: "0".into(),
            });
        }
        if piv != k {
            for j in 0..n {
                lu.swap(k * n + j, piv * n + j);
            }
            swaps.push((k, piv));
        }
        for i in k + 1..n {
            let factor = lu[i * n + k].clone() / &lu[k * n + k];
            for j in k + 1..n {
                t.assign(&factor * &lu[k * n + j]);
                lu[i * n + j] -= &t;
            }
            lu[i * n + k] = factor;
        }
    }
    Ok(LuFactorization { n, ctx, lu, swaps })
}

impl LuFactorization {
    fn check_rhs(&self, b: &[MpComplex]) -> Result<()> {
        if b.len() != self.n {
            return Err(DnoError::DimensionMismatch(format!(
                "lu solve: system of size {}, rhs of length {}",
                self.n,
                b.len()
            )));
        }
        Ok(())
    }

    fn check_finite(x: &[MpComplex]) -> Result<()> {
        for z in x {
            if !z.real().is_finite() || !z.imag().is_finite() {
                return Err(DnoError::NonFinite("lu solve"));
            }
        }
        Ok(())
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[MpComplex]) -> Result<Vec<MpComplex>> {
        self.check_rhs(b)?;
        let n = self.n;
        let mut x: Vec<MpComplex> = b.to_vec();
        for &(k, piv) in &self.swaps {
            x.swap(k, piv);
        }
        let mut t = self.ctx.complex_zero();
        for k in 0..n {
            for j in 0..k {
                t.assign(&self.lu[k * n + j] * &x[j]);
                x[k] -= &t;
            }
        }
        for k in (0..n).rev() {
            for j in k + 1..n {
                t.assign(&self.lu[k * n + j] * &x[j]);
                x[k] -= &t;
            }
            let xi = x[k].clone() / &self.lu[k * n + k];
            x[k] = xi;
        }
        Self::check_finite(&x)?;
        Ok(x)
    }

    /// Solve `A* x = b` using the same factorization
    /// (`A = P^T L U` gives `A* = U* L* P`).
    pub fn solve_adjoint(&self, b: &[MpComplex]) -> Result<Vec<MpComplex>> {
        self.check_rhs(b)?;
        let n = self.n;
        let mut x: Vec<MpComplex> = b.to_vec();
        let mut t = self.ctx.complex_zero();
        // forward substitution on the lower-triangular U*
        for k in 0..n {
            for j in 0..k {
                t.assign(self.lu[j * n + k].clone().conj() * &x[j]);
                x[k] -= &t;
            }
            let xi = x[k].clone() / self.lu[k * n + k].clone().conj();
            x[k] = xi;
        }
        // back substitution on the unit upper-triangular L*
        for k in (0..n).rev() {
            for j in k + 1..n {
                t.assign(self.lu[j * n + k].clone().conj() * &x[j]);
                x[k] -= &t;
            }
        }
        // undo the row swaps in reverse
        for &(k, piv) in self.swaps.iter().rev() {
            x.swap(k, piv);
        }
        Self::check_finite(&x)?;
        Ok(x)
    }
}

/// Solve `A x = b` by LU factorization with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &[MpComplex]) -> Result<Vec<MpComplex>> {
    if b.len() != a.rows {
        return Err(DnoError::DimensionMismatch(format!(
            "lu_solve: {}x{} matrix, rhs of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    lu_factor(a)?.solve(b)
}

/// Deterministic 2-norm condition estimate by power iteration on `A*A`
/// (largest singular value) and inverse iteration through the supplied
/// factorization (smallest).
pub fn condition_estimate(
    a: &DenseMatrix,
    lu: &LuFactorization,
    iters: usize,
) -> Result<MpReal> {
    if a.rows != a.cols || a.rows != lu.n {
        return Err(DnoError::DimensionMismatch(
            "condition_estimate needs the square matrix and its factorization".into(),
        ));
    }
    let ctx = a.ctx;
    let n = a.rows;
    let start: Vec<MpComplex> = (0..n)
        .map(|j| {
            let t = ctx.real_from_i64(j as i64 + 1);
            ctx.complex(t.clone().sin(), (t * ctx.real_from_i64(3)).cos())
        })
        .collect();
    let norm = |v: &[MpComplex]| -> MpReal {
        let mut acc = ctx.zero();
        for z in v {
            acc += z.clone().norm().into_real_imag().0;
        }
        acc.sqrt()
    };
    let normalize = |v: &mut Vec<MpComplex>| -> MpReal {
        let s = norm(v);
        if !s.is_zero() {
            let inv = ctx.one() / &s;
            for z in v.iter_mut() {
                *z *= ctx.complex_from_real(&inv);
            }
        }
        s
    };
    let mut v = start.clone();
    normalize(&mut v);
    let mut sigma_max = ctx.zero();
    for _ in 0..iters {
        let mut w = a.apply_adjoint(&a.apply(&v)?)?;
        sigma_max = normalize(&mut w).sqrt();
        v = w;
    }
    let mut u = start;
    normalize(&mut u);
    let mut inv_sq = ctx.zero();
    for _ in 0..iters {
        let mut w = lu.solve(&lu.solve_adjoint(&u)?)?;
        inv_sq = normalize(&mut w);
        u = w;
    }
    if inv_sq.is_zero() {
        return Err(DnoError::NonFinite("condition estimate"));
    }
    Ok(sigma_max * inv_sq.sqrt())
}

/// Thin QR factorization: `A = Q R`, Q column-orthonormal M x r,
/// R r x r upper triangular with real nonnegative diagonal.
#[derive(Debug, Clone)]
pub struct QrFactorization {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

/// Householder QR without column pivoting -- column order is meaningful
/// (wavenumber order) and must be preserved.
pub fn qr_factor(a: &DenseMatrix) -> Result<QrFactorization> {
    let (m, n) = (a.rows, a.cols);
    if n > m {
        return Err(DnoError::DimensionMismatch(format!(
            "qr_factor needs cols <= rows, got {}x{}",
            m, n
        )));
    }
    let ctx = a.ctx;
    let mut work = a.clone();
    // reflectors v_k stored per column; each reflector H = I - 2 v v* / (v* v)
    let mut reflectors: Vec<Vec<MpComplex>> = Vec::with_capacity(n);
    let mut t = ctx.complex_zero();
    for k in 0..n {
        // norm of the k-th column below (and including) the diagonal
        let mut norm2 = ctx.zero();
        for i in k..m {
            norm2 += work.at(i, k).clone().norm().into_real_imag().0;
        }
        let norm = norm2.sqrt();
        let mut v: Vec<MpComplex> = (k..m).map(|i| work.at(i, k).clone()).collect();
        if !norm.is_zero() {
            // v = x + e^{i theta} ||x|| e_1, theta the phase of x_1
            let x0_abs = v[0].clone().abs().into_real_imag().0;
            let phase = if x0_abs.is_zero() {
                ctx.complex_from_f64(1.0, 0.0)
            } else {
                v[0].clone() / &ctx.complex_from_real(&x0_abs)
            };
            t.assign(&phase * &ctx.complex_from_real(&norm));
            v[0] += &t;
            let mut vnorm2 = ctx.zero();
            for vi in &v {
                vnorm2 += vi.clone().norm().into_real_imag().0;
            }
            if !vnorm2.is_zero() {
                // apply H to the trailing block of `work`
                for j in k..n {
                    let mut dot = ctx.complex_zero();
                    for (i, vi) in v.iter().enumerate() {
                        t.assign(&vi.clone().conj() * work.at(k + i, j));
                        dot += &t;
                    }
                    dot *= ctx.complex_from_f64(2.0, 0.0);
                    dot /= ctx.complex_from_real(&vnorm2);
                    for (i, vi) in v.iter().enumerate() {
                        t.assign(vi * &dot);
                        *work.at_mut(k + i, j) -= &t;
                    }
                }
            }
        }
        reflectors.push(v);
    }
    // R is the leading n x n upper triangle of `work`
    let mut r = DenseMatrix::zeros(n, n, &ctx);
    for i in 0..n {
        for j in i..n {
            r.at_mut(i, j).assign(work.at(i, j));
        }
    }
    // thin Q: apply reflectors in reverse to the first n identity columns
    let mut q = DenseMatrix::zeros(m, n, &ctx);
    for j in 0..n {
        q.at_mut(j, j).assign(&ctx.complex_from_f64(1.0, 0.0));
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        let mut vnorm2 = ctx.zero();
        for vi in v {
            vnorm2 += vi.clone().norm().into_real_imag().0;
        }
        if vnorm2.is_zero() {
            continue;
        }
        for j in 0..n {
            let mut dot = ctx.complex_zero();
            for (i, vi) in v.iter().enumerate() {
                t.assign(&vi.clone().conj() * q.at(k + i, j));
                dot += &t;
            }
            dot *= ctx.complex_from_f64(2.0, 0.0);
            dot /= ctx.complex_from_real(&vnorm2);
            for (i, vi) in v.iter().enumerate() {
                t.assign(vi * &dot);
                *q.at_mut(k + i, j) -= &t;
            }
        }
    }
    // make the R diagonal real nonnegative by a phase per column of Q / row of R
    for k in 0..n {
        let d = r.at(k, k).clone();
        let dabs = d.clone().abs().into_real_imag().0;
        if dabs.is_zero() {
            continue;
        }
        let phase = d / &ctx.complex_from_real(&dabs);
        let conj_phase = phase.clone().conj();
        for j in k..n {
            let e = r.at(k, j).clone() * &conj_phase;
            r.at_mut(k, j).assign(&e);
        }
        for i in 0..m {
            let e = q.at(i, k).clone() * &phase;
            q.at_mut(i, k).assign(&e);
        }
    }
    Ok(QrFactorization { q, r })
}

/// Singular value decomposition `A = U diag(S) V*` with U M x r
/// column-orthonormal, S decreasing, V r x r unitary.
#[derive(Debug, Clone)]
pub struct SvdFactorization {
    pub u: DenseMatrix,
    pub s: Vec<MpReal>,
    pub v: DenseMatrix,
}

const JACOBI_SWEEP_LIMIT: usize = 30;

/// One-sided Jacobi SVD, cyclic-by-row over column pairs.  Converged when
/// every off-diagonal cosine `|u_p* u_q| / (|u_p||u_q|)` is below
/// `2^(-bits+4)`.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactorization> {
    let (m, n) = (a.rows, a.cols);
    if n > m {
        return Err(DnoError::DimensionMismatch(format!(
            "svd needs cols <= rows, got {}x{}",
            m, n
        )));
    }
    let ctx = a.ctx;
    let bits = ctx.bits();
    let mut tol = ctx.one();
    tol >>= bits - 4;
    // column-major working copy: cols[j][i] = A_ij
    let mut cols: Vec<Vec<MpComplex>> = (0..n)
        .map(|j| (0..m).map(|i| a.at(i, j).clone()).collect())
        .collect();
    let mut v = DenseMatrix::identity(n, &ctx);
    let mut norms2: Vec<MpReal> = cols
        .iter()
        .map(|c| {
            let mut acc = ctx.zero();
            for z in c {
                acc += z.clone().norm().into_real_imag().0;
            }
            acc
        })
        .collect();
    let mut t = ctx.complex_zero();
    let mut worst = ctx.zero();
    let mut converged = false;
    for _sweep in 0..JACOBI_SWEEP_LIMIT {
        worst.assign(ctx.zero());
        for p in 0..n {
            for q in p + 1..n {
                if norms2[p].is_zero() || norms2[q].is_zero() {
                    continue;
                }
                // gamma = col_p* . col_q
                let mut gamma = ctx.complex_zero();
                {
                    let (cp, cq) = {
                        let (lo, hi) = cols.split_at_mut(q);
                        (&lo[p], &hi[0])
                    };
                    for (x, y) in cp.iter().zip(cq.iter()) {
                        t.assign(&x.clone().conj() * y);
                        gamma += &t;
                    }
                }
                let gabs = gamma.clone().abs().into_real_imag().0;
                let denom = (norms2[p].clone() * &norms2[q]).sqrt();
                let cosine = gabs.clone() / &denom;
                if cosine > worst {
                    worst.assign(&cosine);
                }
                if cosine <= tol {
                    continue;
                }
                // rotate the (p,q) column pair to annihilate gamma
                let phase = gamma / &ctx.complex_from_real(&gabs);
                let tau = (norms2[q].clone() - &norms2[p]) / (gabs.clone() * ctx.real_from_i64(2));
                let tt = {
                    let mag = ctx.one() / (tau.clone().abs() + (tau.clone().square() + ctx.one()).sqrt());
                    if tau.is_sign_negative() {
                        -mag
                    } else {
                        mag
                    }
                };
                let c = ctx.one() / (tt.clone().square() + ctx.one()).sqrt();
                let s = c.clone() * &tt;
                let cc = ctx.complex_from_real(&c);
                let s_phase = ctx.complex_from_real(&s) * &phase;
                let s_phase_conj = s_phase.clone().conj();
                let rotate = |x: &mut MpComplex, y: &mut MpComplex, t: &mut MpComplex| {
                    // x' = c x - s e^{-i th} y ;  y' = s e^{i th} x + c y
                    let x0 = x.clone();
                    t.assign(&s_phase_conj * &*y);
                    let mut xn = x0.clone() * &cc;
                    xn -= &*t;
                    t.assign(&s_phase * &x0);
                    let mut yn = y.clone() * &cc;
                    yn += &*t;
                    x.assign(&xn);
                    y.assign(&yn);
                };
                {
                    let (lo, hi) = cols.split_at_mut(q);
                    let cp = &mut lo[p];
                    let cq = &mut hi[0];
                    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                        rotate(x, y, &mut t);
                    }
                }
                for i in 0..n {
                    // V columns rotate with the data columns
                    let mut x = v.at(i, p).clone();
                    let mut y = v.at(i, q).clone();
                    rotate(&mut x, &mut y, &mut t);
                    v.at_mut(i, p).assign(&x);
                    v.at_mut(i, q).assign(&y);
                }
                // refresh cached norms
                for idx in [p, q] {
                    let mut acc = ctx.zero();
                    for z in &cols[idx] {
                        acc += z.clone().norm().into_real_imag().0;
                    }
                    norms2[idx] = acc;
                }
            }
        }
        if worst <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(DnoError::SvdNoConvergence {
            sweeps: JACOBI_SWEEP_LIMIT,
            residual: ctx.format_real(&worst),
        });
    }
    // singular values and left vectors
    let mut sigma: Vec<MpReal> = norms2.iter().map(|n2| n2.clone().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let mut u = DenseMatrix::zeros(m, n, &ctx);
    let mut v_sorted = DenseMatrix::zeros(n, n, &ctx);
    let mut s_sorted = Vec::with_capacity(n);
    for (new_j, &old_j) in order.iter().enumerate() {
        let sj = sigma[old_j].clone();
        if !sj.is_zero() {
            for i in 0..m {
                let e = cols[old_j][i].clone() / &ctx.complex_from_real(&sj);
                u.at_mut(i, new_j).assign(&e);
            }
        }
        for i in 0..n {
            v_sorted.at_mut(i, new_j).assign(v.at(i, old_j));
        }
        s_sorted.push(sj);
    }
    sigma.clear();
    // phase fix: largest-magnitude entry of each U column made real positive
    for j in 0..n {
        let mut best_i = 0;
        let mut best = ctx.zero();
        for i in 0..m {
            let a = u.at(i, j).clone().abs().into_real_imag().0;
            if a > best {
                best = a;
                best_i = i;
            }
        }
        if best.is_zero() {
            continue;
        }
        let phase = u.at(best_i, j).clone() / &ctx.complex_from_real(&best);
        let conj_phase = phase.conj();
        for i in 0..m {
            let e = u.at(i, j).clone() * &conj_phase;
            u.at_mut(i, j).assign(&e);
        }
        for i in 0..n {
            let e = v_sorted.at(i, j).clone() * &conj_phase;
            v_sorted.at_mut(i, j).assign(&e);
        }
    }
    Ok(SvdFactorization {
        u,
        s: s_sorted,
        v: v_sorted,
    })
}

impl SvdFactorization {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// `V diag(1/S_i for i < cutoff, else 0) U* y`: least-squares solve of
/// `A x = y` with the spectrum truncated at `cutoff` retained directions.
pub fn pinv_apply(
    f: &SvdFactorization,
    cutoff: usize,
    y: &[MpComplex],
) -> Result<Vec<MpComplex>> {
    let ctx = *f.u.ctx();
    if cutoff > f.s.len() {
        return Err(DnoError::OutOfRange(format!(
            "pinv cutoff {} exceeds rank {}",
            cutoff,
            f.s.len()
        )));
    }
    let mut coeff = f.u.apply_adjoint(y)?;
    for (i, c) in coeff.iter_mut().enumerate() {
        if i < cutoff && !f.s[i].is_zero() {
            *c /= &ctx.complex_from_real(&f.s[i]);
        } else {
            c.assign(ctx.complex_zero());
        }
    }
    f.v.apply(&coeff)
}

/// `U diag(1/S_i for i < cutoff, else 0) V* y`: pseudo-inverse of the
/// adjoint, used by the adjoint-form eigenfunction method.
pub fn pinv_apply_adjoint(
    f: &SvdFactorization,
    cutoff: usize,
    y: &[MpComplex],
) -> Result<Vec<MpComplex>> {
    let ctx = *f.u.ctx();
    if cutoff > f.s.len() {
        return Err(DnoError::OutOfRange(format!(
            "pinv cutoff {} exceeds rank {}",
            cutoff,
            f.s.len()
        )));
    }
    let mut coeff = f.v.apply_adjoint(y)?;
    for (i, c) in coeff.iter_mut().enumerate() {
        if i < cutoff && !f.s[i].is_zero() {
            *c /= &ctx.complex_from_real(&f.s[i]);
        } else {
            c.assign(ctx.complex_zero());
        }
    }
    f.u.apply(&coeff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> PrecisionCtx {
        PrecisionCtx::quad()
    }

    #[test]
    fn lu_adjoint_solve_consistent() {
        let ctx = ctx();
        let a = random_matrix(9, 9, &ctx, 91);
        let f = lu_factor(&a).unwrap();
        let b: Vec<MpComplex> = (0..9)
            .map(|i| ctx.complex_from_f64(1.0 / (i + 1) as f64, (i as f64).cos()))
            .collect();
        let x = f.solve_adjoint(&b).unwrap();
        let back = a.apply_adjoint(&x).unwrap();
        for (u, w) in back.iter().zip(&b) {
            assert!((u.clone() - w).abs().real().to_f64() < 1e-28);
        }
        // plain solve agrees with the one-shot helper
        let x1 = f.solve(&b).unwrap();
        let x2 = lu_solve(&a, &b).unwrap();
        for (u, w) in x1.iter().zip(&x2) {
            assert!((u.clone() - w).abs().real().to_f64() < 1e-30);
        }
    }

    #[test]
    fn condition_estimate_matches_svd() {
        let ctx = ctx();
        // well-conditioned test matrix: identity plus a modest bump
        let mut a = random_matrix(8, 8, &ctx, 17);
        for i in 0..8 {
            *a.at_mut(i, i) += ctx.complex_from_f64(4.0, 0.0);
        }
        let f = lu_factor(&a).unwrap();
        let est = condition_estimate(&a, &f, 25).unwrap().to_f64();
        let sv = svd(&a).unwrap();
        let exact = (sv.s[0].clone() / sv.s.last().unwrap()).to_f64();
        assert!((est - exact).abs() / exact < 1e-6, "est {est}, exact {exact}");
    }

    fn random_matrix(rows: usize, cols: usize, ctx: &PrecisionCtx, seed: u64) -> DenseMatrix {
        let rng = std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed));
        DenseMatrix::from_fn(rows, cols, ctx, |_, _| {
            let mut r = rng.borrow_mut();
            ctx.complex_from_f64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn matmul_identity() {
        let ctx = ctx();
        let a = random_matrix(5, 5, &ctx, 1);
        let i = DenseMatrix::identity(5, &ctx);
        let c = matmul(&i, &a).unwrap();
        for r in 0..5 {
            for s in 0..5 {
                assert!((c.at(r, s).clone() - a.at(r, s)).abs().real().to_f64() < 1e-30);
            }
        }
    }

    #[test]
    fn matmul_hand_example() {
        let ctx = ctx();
        let a = DenseMatrix::from_fn(2, 2, &ctx, |i, j| {
            ctx.complex_from_f64((2 * i + j + 1) as f64, 0.0)
        });
        let b = DenseMatrix::from_fn(2, 1, &ctx, |i, _| ctx.complex_from_f64((5 + i) as f64, 0.0));
        let c = matmul(&a, &b).unwrap();
        assert!((c.at(0, 0).real().clone() - ctx.real_from_i64(17)).abs().to_f64() < 1e-30);
        assert!((c.at(1, 0).real().clone() - ctx.real_from_i64(39)).abs().to_f64() < 1e-30);
    }

    #[test]
    fn matmul_precision_refinement() {
        let lo = PrecisionCtx::new(113).unwrap();
        let hi = PrecisionCtx::new(226).unwrap();
        let a_lo = random_matrix(50, 50, &lo, 7);
        let b_lo = random_matrix(50, 50, &lo, 8);
        let a_hi = DenseMatrix::from_fn(50, 50, &hi, |i, j| hi.round_complex(a_lo.at(i, j)));
        let b_hi = DenseMatrix::from_fn(50, 50, &hi, |i, j| hi.round_complex(b_lo.at(i, j)));
        let c_lo = matmul(&a_lo, &b_lo).unwrap();
        let c_hi = matmul(&a_hi, &b_hi).unwrap();
        let tol = 50.0 * 2f64.powi(-105);
        for i in 0..50 {
            for j in 0..50 {
                let ref_v = c_hi.at(i, j);
                let d = (hi.round_complex(c_lo.at(i, j)) - ref_v).abs().real().to_f64();
                let scale = ref_v.clone().abs().real().to_f64().max(1.0);
                assert!(d / scale < tol);
            }
        }
    }

    #[test]
    fn lu_identity_and_diag() {
        let ctx = ctx();
        let i = DenseMatrix::identity(3, &ctx);
        let b = vec![
            ctx.complex_from_f64(1.0, 2.0),
            ctx.complex_from_f64(-3.0, 0.5),
            ctx.complex_from_f64(0.0, 1.0),
        ];
        let x = lu_solve(&i, &b).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi.clone() - bi).abs().real().to_f64() < 1e-30);
        }
        let d = DenseMatrix::from_fn(2, 2, &ctx, |i, j| {
            if i == j {
                ctx.complex_from_f64(2.0 * (i + 1) as f64, 0.0)
            } else {
                ctx.complex_zero()
            }
        });
        let b2 = vec![ctx.complex_from_f64(2.0, 0.0), ctx.complex_from_f64(8.0, 0.0)];
        let x2 = lu_solve(&d, &b2).unwrap();
        assert!((x2[0].real().clone() - ctx.one()).abs().to_f64() < 1e-30);
        assert!((x2[1].real().clone() - ctx.real_from_i64(2)).abs().to_f64() < 1e-30);
    }

    #[test]
    fn lu_random_residual() {
        let ctx = ctx();
        let a = random_matrix(20, 20, &ctx, 3);
        let b: Vec<MpComplex> = (0..20)
            .map(|i| ctx.complex_from_f64((i as f64).sin(), (i as f64).cos()))
            .collect();
        let x = lu_solve(&a, &b).unwrap();
        let ax = a.apply(&x).unwrap();
        for (u, w) in ax.iter().zip(&b) {
            assert!((u.clone() - w).abs().real().to_f64() < 1e-28);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let ctx = ctx();
        let a = DenseMatrix::from_fn(2, 2, &ctx, |_, j| ctx.complex_from_f64(j as f64 + 1.0, 0.0));
        let b = vec![ctx.complex_from_f64(1.0, 0.0), ctx.complex_from_f64(1.0, 0.0)];
        assert!(matches!(
            lu_solve(&a, &b),
            Err(DnoError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn qr_identity() {
        let ctx = ctx();
        let i = DenseMatrix::identity(4, &ctx);
        let f = qr_factor(&i).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((f.q.at(r, c).clone() - ctx.complex_from_f64(expect, 0.0))
                    .abs()
                    .real()
                    .to_f64()
                    < 1e-30);
            }
        }
    }

    #[test]
    fn qr_hand_example() {
        let ctx = ctx();
        // columns (1,0) and (1,1): R_00 = 1, Q first column e_1
        let a = DenseMatrix::from_fn(2, 2, &ctx, |i, j| {
            let v = if j == 0 {
                if i == 0 { 1.0 } else { 0.0 }
            } else {
                1.0
            };
            ctx.complex_from_f64(v, 0.0)
        });
        let f = qr_factor(&a).unwrap();
        assert!((f.r.at(0, 0).real().clone() - ctx.one()).abs().to_f64() < 1e-30);
        assert!((f.q.at(0, 0).real().clone() - ctx.one()).abs().to_f64() < 1e-30);
        assert!(f.q.at(1, 0).clone().abs().real().to_f64() < 1e-30);
    }

    #[test]
    fn qr_reconstruction_and_orthonormality() {
        let ctx = ctx();
        let a = random_matrix(12, 7, &ctx, 11);
        let f = qr_factor(&a).unwrap();
        let qr = matmul(&f.q, &f.r).unwrap();
        let anorm = a.frobenius_norm().to_f64();
        for i in 0..12 {
            for j in 0..7 {
                assert!((qr.at(i, j).clone() - a.at(i, j)).abs().real().to_f64() < 1e-28 * anorm);
            }
        }
        let qtq = matmul(&f.q.adjoint(), &f.q).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (qtq.at(i, j).clone() - ctx.complex_from_f64(expect, 0.0))
                        .abs()
                        .real()
                        .to_f64()
                        < 7.0 * 2f64.powi(-105)
                );
            }
        }
        // diagonal of R real nonnegative
        for i in 0..7 {
            assert!(f.r.at(i, i).imag().clone().abs().to_f64() < 1e-30);
            assert!(!f.r.at(i, i).real().is_sign_negative());
        }
    }

    #[test]
    fn svd_diag() {
        let ctx = ctx();
        let a = DenseMatrix::from_fn(2, 2, &ctx, |i, j| {
            if i == j {
                ctx.complex_from_f64(3.0 + i as f64 * 1.0, 0.0)
            } else {
                ctx.complex_zero()
            }
        });
        let f = svd(&a).unwrap();
        assert!((f.s[0].clone() - ctx.real_from_i64(4)).abs().to_f64() < 1e-30);
        assert!((f.s[1].clone() - ctx.real_from_i64(3)).abs().to_f64() < 1e-30);
    }

    #[test]
    fn svd_orthonormal_input_gives_unit_spectrum() {
        let ctx = ctx();
        let a = random_matrix(10, 4, &ctx, 5);
        let q = qr_factor(&a).unwrap().q;
        let f = svd(&q).unwrap();
        for s in &f.s {
            assert!((s.clone() - ctx.one()).abs().to_f64() < 1e-28);
        }
    }

    #[test]
    fn svd_reconstruction() {
        let ctx = ctx();
        let a = random_matrix(9, 6, &ctx, 42);
        let f = svd(&a).unwrap();
        // U diag(S) V*
        let us = DenseMatrix::from_fn(9, 6, &ctx, |i, j| {
            f.u.at(i, j).clone() * &ctx.complex_from_real(&f.s[j])
        });
        let recon = matmul(&us, &f.v.adjoint()).unwrap();
        let anorm = a.frobenius_norm().to_f64();
        for i in 0..9 {
            for j in 0..6 {
                assert!(
                    (recon.at(i, j).clone() - a.at(i, j)).abs().real().to_f64() < 1e-28 * anorm
                );
            }
        }
        // S sorted descending
        for w in f.s.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // U column-orthonormal, V unitary
        let utu = matmul(&f.u.adjoint(), &f.u).unwrap();
        let vtv = matmul(&f.v.adjoint(), &f.v).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                let tol = 6.0 * 2f64.powi(-105);
                assert!((utu.at(i, j).clone() - ctx.complex_from_f64(expect, 0.0))
                    .abs()
                    .real()
                    .to_f64()
                    < tol);
                assert!((vtv.at(i, j).clone() - ctx.complex_from_f64(expect, 0.0))
                    .abs()
                    .real()
                    .to_f64()
                    < tol);
            }
        }
    }

    #[test]
    fn svd_unchanged_by_zero_row_padding() {
        let ctx = ctx();
        let a = random_matrix(6, 4, &ctx, 9);
        let padded = DenseMatrix::from_fn(9, 4, &ctx, |i, j| {
            if i < 6 {
                a.at(i, j).clone()
            } else {
                ctx.complex_zero()
            }
        });
        let fa = svd(&a).unwrap();
        let fp = svd(&padded).unwrap();
        for (x, y) in fa.s.iter().zip(&fp.s) {
            assert!((x.clone() - y).abs().to_f64() < 1e-28);
        }
    }

    #[test]
    fn svd_graded_spectrum_relative_accuracy() {
        // diag(1, 1e-30, 1e-60) scaled by a unitary-ish rotation: one-sided
        // Jacobi must recover the tiny values to relative accuracy
        let ctx = PrecisionCtx::new(300).unwrap();
        let n = 3;
        let svals = [1.0_f64, 1e-30, 1e-60];
        let rot = qr_factor(&random_matrix(n, n, &ctx, 21)).unwrap().q;
        let rot2 = qr_factor(&random_matrix(n, n, &ctx, 22)).unwrap().q;
        let d = DenseMatrix::from_fn(n, n, &ctx, |i, j| {
            if i == j {
                let mut v = ctx.one();
                for _ in 0..(i * 30) {
                    v /= 10u32;
                }
                ctx.complex_from_real(&v)
            } else {
                ctx.complex_zero()
            }
        });
        let a = matmul(&matmul(&rot, &d).unwrap(), &rot2.adjoint()).unwrap();
        let f = svd(&a).unwrap();
        for (s, expect) in f.s.iter().zip(&svals) {
            let rel = (s.to_f64() - expect).abs() / expect;
            assert!(rel < 1e-25, "rel err {rel}");
        }
    }

    #[test]
    fn pinv_cutoff_behaviour() {
        let ctx = ctx();
        let a = random_matrix(8, 5, &ctx, 31);
        let f = svd(&a).unwrap();
        let y: Vec<MpComplex> = (0..8)
            .map(|i| ctx.complex_from_f64((i as f64 * 0.9).cos(), (i as f64 * 0.4).sin()))
            .collect();
        // cutoff 0 -> zero vector
        let z = pinv_apply(&f, 0, &y).unwrap();
        for zi in &z {
            assert!(zi.clone().abs().real().to_f64() < 1e-30);
        }
        // full cutoff on a well-conditioned matrix solves the normal equations
        let x = pinv_apply(&f, 5, &y).unwrap();
        let ata = matmul(&a.adjoint(), &a).unwrap();
        let aty = a.apply_adjoint(&y).unwrap();
        let x_ne = lu_solve(&ata, &aty).unwrap();
        for (u, w) in x.iter().zip(&x_ne) {
            assert!((u.clone() - w).abs().real().to_f64() < 1e-25);
        }
        // linearity in y
        let y2: Vec<MpComplex> = y.iter().map(|v| v.clone() * ctx.complex_from_f64(2.0, 0.0)).collect();
        let x2 = pinv_apply(&f, 5, &y2).unwrap();
        for (u, w) in x2.iter().zip(&x) {
            let d = (u.clone() - w.clone() * ctx.complex_from_f64(2.0, 0.0))
                .abs()
                .real()
                .to_f64();
            assert!(d < 1e-28);
        }
    }

    #[test]
    fn pinv_one_retained_direction() {
        let ctx = ctx();
        // A = U S V* with S = (2, 1e-80); keeping one direction inverts only it
        let base = random_matrix(6, 2, &ctx, 55);
        let q = qr_factor(&base).unwrap().q;
        let mut tiny = ctx.one();
        for _ in 0..80 {
            tiny /= 10u32;
        }
        let a = DenseMatrix::from_fn(6, 2, &ctx, |i, j| {
            let s = if j == 0 {
                ctx.real_from_i64(2)
            } else {
                tiny.clone()
            };
            q.at(i, j).clone() * &ctx.complex_from_real(&s)
        });
        let f = svd(&a).unwrap();
        // y = 2 * (first left singular vector)
        let y: Vec<MpComplex> = (0..6)
            .map(|i| f.u.at(i, 0).clone() * ctx.complex_from_f64(2.0, 0.0))
            .collect();
        let x = pinv_apply(&f, 1, &y).unwrap();
        // expect V e_1 * (2/2) = first column of V
        for (i, xi) in x.iter().enumerate() {
            assert!((xi.clone() - f.v.at(i, 0)).abs().real().to_f64() < 1e-28);
        }
    }

    #[test]
    fn scaling_matrix_scales_singular_values() {
        let ctx = ctx();
        let a = random_matrix(7, 4, &ctx, 77);
        let lam = ctx.real_from_f64(3.5);
        let b = DenseMatrix::from_fn(7, 4, &ctx, |i, j| {
            a.at(i, j).clone() * &ctx.complex_from_real(&lam)
        });
        let fa = svd(&a).unwrap();
        let fb = svd(&b).unwrap();
        for (x, y) in fa.s.iter().zip(&fb.s) {
            let d = (x.clone() * &lam - y).abs().to_f64();
            assert!(d < 1e-28);
        }
    }

    #[test]
    fn adjoint_pinv_matches_pinv_of_adjoint() {
        let ctx = ctx();
        let a = random_matrix(8, 5, &ctx, 91);
        let f = svd(&a).unwrap();
        let fh = svd_of_adjoint_via_lu_check(&a, &f, &ctx);
        assert!(fh);
    }

    // (A*)^+ y computed through pinv_apply_adjoint must satisfy the
    // least-squares normal equations of A* for a full cutoff.
    fn svd_of_adjoint_via_lu_check(
        a: &DenseMatrix,
        f: &SvdFactorization,
        ctx: &PrecisionCtx,
    ) -> bool {
        let y: Vec<MpComplex> = (0..a.cols())
            .map(|i| ctx.complex_from_f64((i as f64).sin(), 0.3 * i as f64))
            .collect();
        let x = pinv_apply_adjoint(f, f.s.len(), &y).unwrap();
        // normal equations for A* x = y: A A* x = A y
        let aat = matmul(a, &a.adjoint()).unwrap();
        let ay = a.apply(&y).unwrap();
        // A A* is singular (rank 5 < 8), so check the residual projected
        // through A* instead: A* A A* x = A* A y
        let lhs = a.apply_adjoint(&aat.apply(&x).unwrap()).unwrap();
        let rhs = a.apply_adjoint(&ay).unwrap();
        lhs.iter()
            .zip(&rhs)
            .all(|(u, w)| (u.clone() - w).abs().real().to_f64() < 1e-24)
    }
}
