//! Taylor expansion of the Dirichlet--Neumann operator in powers of the
//! surface profile: assembly of the per-order operator matrices, the
//! cancellation-quantifying norm/symmetry report, and application of
//! partial sums to Dirichlet data.
//!
//! Everything works in Fourier space except the products
//! `f^{n-s} * (G_s column)`, which go through an inverse FFT, a
//! pointwise multiply, and a forward FFT.

use crate::error::{DnoError, Result};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use crate::profiles::{Depth, WaveProfile};
use crate::spectral::{self, Grid, SurfaceField};
use rug::ops::Pow;
use rug::Assign;

/// One expansion order of the operator, stored column by column in
/// Fourier space.  Columns cover `0 < j < K/2`; rows cover all modes
/// `-M/2 < k < M/2` (Nyquist zeroed).  The opposite quadrant is implied
/// by `G^_{-k,-j} = conj(G^_{kj})`; the `j = 0` column is identically
/// zero.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub order: usize,
    m: usize,
    k_limit: usize,
    /// cols[j-1] is the spectral column for mode j, in FFT bin order
    cols: Vec<Vec<MpComplex>>,
}

impl OperatorMatrix {
    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn k_limit(&self) -> usize {
        self.k_limit
    }

    pub fn columns(&self) -> &[Vec<MpComplex>] {
        &self.cols
    }

    fn bin(&self, k: i64) -> usize {
        if k >= 0 {
            k as usize
        } else {
            (self.m as i64 + k) as usize
        }
    }

    /// Entry for `|k| < M/2` and `|j| < K/2`; the `j < 0` quadrant is
    /// reconstructed by conjugate symmetry.
    pub fn entry(&self, k: i64, j: i64, ctx: &PrecisionCtx) -> MpComplex {
        if j == 0 || k.unsigned_abs() as usize >= self.m / 2 {
            return ctx.complex_zero();
        }
        assert!((j.unsigned_abs() as usize) < self.k_limit / 2, "column out of range");
        if j > 0 {
            self.cols[(j - 1) as usize][self.bin(k)].clone()
        } else {
            self.cols[(-j - 1) as usize][self.bin(-k)].clone().conj()
        }
    }

    /// Frobenius norm over `-K/2 < k < K/2`, `0 < j < K/2`, times
    /// `sqrt(2)` for the implied opposite quadrant.
    pub fn frobenius_norm(&self, ctx: &PrecisionCtx) -> MpReal {
        let half = (self.k_limit / 2) as i64;
        let mut acc = ctx.zero();
        for col in &self.cols {
            for k in -half + 1..half {
                acc += col[self.bin(k)].clone().norm().into_real_imag().0;
            }
        }
        acc <<= 1;
        acc.sqrt()
    }

    /// Max self-adjointness defect `|G^_{kj} - conj(G^_{jk})|` over
    /// `|k|, |j| < K/2` (not normalized).
    pub fn symmetry_defect(&self, ctx: &PrecisionCtx) -> MpReal {
        let half = (self.k_limit / 2) as i64;
        let mut worst = ctx.zero();
        for j in 1..half {
            for k in -half + 1..half {
                let a = self.entry(k, j, ctx);
                let b = self.entry(j, k, ctx).conj();
                let d = (a - b).abs().into_real_imag().0;
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Roundoff-corruption heuristic: median binary exponent of the
    /// outer 10% of rows against the interior.  A positive value means
    /// the boundary rows dominate, the signature of noise propagating
    /// inward from `|k| = M/2`.
    pub fn noise_exponent_gap(&self) -> Option<i32> {
        let half = (self.m / 2) as i64;
        let outer_from = half - (half / 10).max(1);
        let mut outer = Vec::new();
        let mut inner = Vec::new();
        for col in &self.cols {
            for k in -half + 1..half {
                let z = &col[self.bin(k)];
                let e = z
                    .real()
                    .get_exp()
                    .into_iter()
                    .chain(z.imag().get_exp())
                    .max();
                if k.abs() >= outer_from {
                    outer.push(e);
                } else if k.abs() <= half / 2 {
                    inner.push(e);
                }
            }
        }
        let med = |v: &mut Vec<Option<i32>>| -> Option<i32> {
            v.sort_unstable();
            v.get(v.len() / 2).copied().flatten()
        };
        let (mo, mi) = (med(&mut outer)?, med(&mut inner)?);
        Some(mo - mi)
    }
}

/// Shared per-profile data for the expansion: grid samples of `f`, its
/// powers, their spectra, and factorials.
struct Workspace {
    grid: Grid,
    depth: Depth,
    /// f^p nodal values, power_values[p-1] for p = 1..n_max
    power_values: Vec<Vec<MpReal>>,
    /// (f^n)^ spectra, power_hats[n-1] for n = 1..n_max
    power_hats: Vec<Vec<MpComplex>>,
    factorials: Vec<MpReal>,
}

impl Workspace {
    fn new(f: &WaveProfile, m: usize, n_max: usize, ctx: &PrecisionCtx) -> Result<Self> {
        let grid = Grid::new(m, f.period().clone())?;
        let base = f.sample(&grid, ctx)?;
        let mut power_values: Vec<Vec<MpReal>> = Vec::with_capacity(n_max.max(1));
        power_values.push(base.values().to_vec());
        for p in 2..=n_max.max(1) {
            let prev = &power_values[p - 2];
            let next: Vec<MpReal> = prev
                .iter()
                .zip(base.values())
                .map(|(a, b)| a.clone() * b)
                .collect();
            power_values.push(next);
        }
        let mut power_hats = Vec::with_capacity(power_values.len());
        for vals in &power_values {
            power_hats.push(spectral::forward_real(vals, ctx)?);
        }
        let mut factorials = Vec::with_capacity(n_max + 1);
        factorials.push(ctx.one());
        for n in 1..=n_max {
            let next = factorials[n - 1].clone() * ctx.real_from_i64(n as i64);
            factorials.push(next);
        }
        Ok(Workspace {
            grid,
            depth: f.depth().clone(),
            power_values,
            power_hats,
            factorials,
        })
    }

    fn wavenumber(&self, k: i64, ctx: &PrecisionCtx) -> MpReal {
        self.grid.wavenumber(k, ctx)
    }

    /// Flat-operator symbol at mode `k`.
    fn g0(&self, k: i64, ctx: &PrecisionCtx) -> MpReal {
        spectral::g0_symbol(k, self.depth.as_finite(), &self.grid, ctx)
    }

    /// Symbol of the recursion weight: `|D|^s` for even `s` (and at
    /// infinite depth), `|D|^s tanh(h|D|)` for odd `s` at finite depth.
    fn y_symbol(&self, s: usize, k: i64, ctx: &PrecisionCtx) -> MpReal {
        let base = self.wavenumber(k, ctx).abs().pow(s as u32);
        match &self.depth {
            Depth::Infinite => base,
            Depth::Finite(h) => {
                if s % 2 == 0 {
                    base
                } else {
                    let t = (self.wavenumber(k, ctx).abs() * h).tanh();
                    base * t
                }
            }
        }
    }

    /// One spectral column of the order-`n` first-term operator.
    fn an_column(&self, n: usize, j: i64, ctx: &PrecisionCtx) -> Vec<MpComplex> {
        let m = self.grid.len();
        let half = (m / 2) as i64;
        let hat = &self.power_hats[n - 1];
        let mut col: Vec<MpComplex> = (0..m).map(|_| ctx.complex_zero()).collect();
        let kj = self.wavenumber(j, ctx);
        for t in 0..m {
            let k = self.grid.bin_to_mode(t);
            if k.abs() >= half || (k - j).abs() >= half {
                continue;
            }
            let hat_idx = (((k - j) % m as i64 + m as i64) % m as i64) as usize;
            match &self.depth {
                Depth::Infinite => {
                    // -2|k|^n |j| (f^n)^_{k-j} / n!  on the kj<0 quadrants
                    if k * j >= 0 {
                        continue;
                    }
                    let mut coef = self.wavenumber(k, ctx).abs().pow(n as u32);
                    coef *= kj.clone().abs();
                    coef /= &self.factorials[n];
                    coef *= ctx.real_from_i64(-2);
                    col[t] = hat[hat_idx].clone() * ctx.complex_from_real(&coef);
                }
                Depth::Finite(h) => {
                    // j k^n a_{nkj} (f^n)^_{k-j} / n!
                    if k == 0 {
                        continue;
                    }
                    let tk = (self.wavenumber(k, ctx) * h).tanh();
                    let tj = (kj.clone() * h).tanh();
                    let a = if n % 2 == 0 { tk - tj } else { ctx.one() - tk * tj };
                    let mut coef = self.wavenumber(k, ctx).pow(n as u32);
                    coef *= &kj;
                    coef *= a;
                    coef /= &self.factorials[n];
                    col[t] = hat[hat_idx].clone() * ctx.complex_from_real(&coef);
                }
            }
        }
        col
    }

    /// Zero pattern of the expansion for the single-harmonic profile:
    /// `kj = 0`, `|k| > n - |j|`, or `k - j - n` odd.
    fn apply_bandlimited_filter(col: &mut [MpComplex], n: usize, j: i64, grid: &Grid, ctx: &PrecisionCtx) {
        for (t, z) in col.iter_mut().enumerate() {
            let k = grid.bin_to_mode(t);
            let zero = k * j == 0
                || k.abs() > n as i64 - j.abs()
                || (k - j - n as i64).rem_euclid(2) == 1;
            if zero {
                z.assign(ctx.complex_zero());
            }
        }
    }

    /// All expansion orders of one column `j`, by the recursion
    /// `G_n = A_n - sum_{s=1}^{n-1} Y_{n-s} f^{n-s} G_s / (n-s)!`.
    fn column_orders(
        &self,
        j: i64,
        n_max: usize,
        filter: bool,
        ctx: &PrecisionCtx,
    ) -> Result<Vec<Vec<MpComplex>>> {
        let m = self.grid.len();
        let mut spec: Vec<Vec<MpComplex>> = Vec::with_capacity(n_max + 1);
        let mut real: Vec<Vec<MpComplex>> = Vec::with_capacity(n_max + 1);
        // order 0: diagonal flat symbol
        let mut col0: Vec<MpComplex> = (0..m).map(|_| ctx.complex_zero()).collect();
        col0[self.grid.mode_to_bin(j)] = ctx.complex_from_real(&self.g0(j, ctx));
        let mut r0 = col0.clone();
        spectral::inverse_complex(&mut r0, ctx)?;
        spec.push(col0);
        real.push(r0);
        let mut t = ctx.complex_zero();
        for n in 1..=n_max {
            let mut col = self.an_column(n, j, ctx);
            for s in 1..n {
                let p = n - s;
                let mut v: Vec<MpComplex> = real[s]
                    .iter()
                    .zip(&self.power_values[p - 1])
                    .map(|(g, fp)| g.clone() * ctx.complex_from_real(fp))
                    .collect();
                spectral::forward_complex(&mut v, ctx)?;
                for (tt, z) in v.iter_mut().enumerate() {
                    let k = self.grid.bin_to_mode(tt);
                    let mut y = self.y_symbol(p, k, ctx);
                    y /= &self.factorials[p];
                    t.assign(&*z * &ctx.complex_from_real(&y));
                    col[tt] -= &t;
                }
            }
            if let Some(ny) = self.grid.nyquist_bin() {
                col[ny].assign(ctx.complex_zero());
            }
            if filter {
                Self::apply_bandlimited_filter(&mut col, n, j, &self.grid, ctx);
            }
            let mut r = col.clone();
            spectral::inverse_complex(&mut r, ctx)?;
            spec.push(col);
            real.push(r);
        }
        Ok(spec)
    }
}

fn check_dims(m: usize, k_limit: usize) -> Result<()> {
    if k_limit < 4 || k_limit > m {
        return Err(DnoError::Config(format!(
            "need 4 <= K <= M, got K={k_limit}, M={m}"
        )));
    }
    Ok(())
}

/// First-term operator of order `n >= 1` (the explicitly cancelled
/// combination of the flat symbols with `f^n`).
pub fn an_matrix(
    f: &WaveProfile,
    n: usize,
    m: usize,
    k_limit: usize,
    ctx: &PrecisionCtx,
) -> Result<OperatorMatrix> {
    check_dims(m, k_limit)?;
    if n == 0 {
        return Err(DnoError::OutOfRange("first-term operator starts at order 1".into()));
    }
    let ws = Workspace::new(f, m, n, ctx)?;
    let cols = (1..(k_limit / 2) as i64)
        .map(|j| ws.an_column(n, j, ctx))
        .collect();
    Ok(OperatorMatrix {
        order: n,
        m,
        k_limit,
        cols,
    })
}

/// All expansion orders `0..=n_max` as operator matrices.
pub fn gn_recursion(
    f: &WaveProfile,
    n_max: usize,
    m: usize,
    k_limit: usize,
    filter: bool,
    ctx: &PrecisionCtx,
) -> Result<Vec<OperatorMatrix>> {
    check_dims(m, k_limit)?;
    let ws = Workspace::new(f, m, n_max, ctx)?;
    let mut mats: Vec<OperatorMatrix> = (0..=n_max)
        .map(|n| OperatorMatrix {
            order: n,
            m,
            k_limit,
            cols: Vec::with_capacity(k_limit / 2 - 1),
        })
        .collect();
    for j in 1..(k_limit / 2) as i64 {
        let orders = ws.column_orders(j, n_max, filter, ctx)?;
        for (n, col) in orders.into_iter().enumerate() {
            mats[n].cols.push(col);
        }
    }
    Ok(mats)
}

/// Per-order cancellation and consistency metrics.
#[derive(Debug, Clone)]
pub struct CancellationRow {
    pub order: usize,
    /// Frobenius norm of the first-term operator
    pub a_norm: MpReal,
    /// Frobenius norm of the expansion operator
    pub g_norm: MpReal,
    /// self-adjointness defect normalized by `g_norm`
    pub r_sym: MpReal,
    /// norms multiplied by `rescale^n`, if a rescale factor was given
    pub a_norm_rescaled: Option<MpReal>,
    pub g_norm_rescaled: Option<MpReal>,
    /// outer-vs-interior median binary exponent gap (noise heuristic)
    pub noise_gap: Option<i32>,
}

#[derive(Debug, Clone)]
pub struct CancellationReport {
    pub rows: Vec<CancellationRow>,
    /// orders flagged by the noise heuristic (gap > 0)
    pub flagged_orders: Vec<usize>,
}

/// Exact Frobenius norms of the first-term operators over the quadrant
/// `k < 0`, `j > 0`, `|k - j| < M/2` (doubled for the mirror quadrant),
/// for orders `1..=n_max` at infinite depth.  Costs `O(M)` per order via
/// prefix sums instead of assembling any matrix.
pub fn an_frobenius_exact(
    f: &WaveProfile,
    n_max: usize,
    m: usize,
    ctx: &PrecisionCtx,
) -> Result<Vec<MpReal>> {
    if !f.depth().is_infinite() {
        return Err(DnoError::Config(
            "exact quadrant norm is defined for infinite depth".into(),
        ));
    }
    let ws = Workspace::new(f, m, n_max, ctx)?;
    let half = m / 2;
    let kappa = ws.wavenumber(1, ctx);
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let hat = &ws.power_hats[n - 1];
        // T_n(d) = sum_{a=1}^{d-1} a^{2n} (d-a)^2 = d^2 P0 - 2d P1 + P2,
        // P_i = sum_{a=1}^{d-1} a^{2n+i}, accumulated as d increases
        let mut p0 = ctx.zero();
        let mut p1 = ctx.zero();
        let mut p2 = ctx.zero();
        let mut acc = ctx.zero();
        for d in 2..half as i64 {
            let a = ctx.real_from_i64(d - 1);
            let apow = a.clone().pow(2 * n as u32);
            p0 += apow.clone();
            p1 += apow.clone() * &a;
            p2 += apow * a.clone().square();
            let dd = ctx.real_from_i64(d);
            let mut t = dd.clone().square() * &p0;
            t -= dd * &p1 * ctx.real_from_i64(2);
            t += &p2;
            // |hat_{-d}| = |hat_d| for real f
            let mag2 = hat[d as usize].clone().norm().into_real_imag().0;
            acc += mag2 * t;
        }
        // entry coefficient (-2 kappa^{n+1} / n!)^2, plus the mirror factor 2
        let mut scale = kappa.clone().pow((n + 1) as u32) / &ws.factorials[n];
        scale *= ctx.real_from_i64(2);
        acc *= scale.square();
        acc <<= 1;
        out.push(acc.sqrt());
    }
    Ok(out)
}

/// Run the recursion and collect norms, symmetry defects, and noise
/// flags, streaming column by column so only one column's history is in
/// memory at a time.  At infinite depth the first-term norms use the
/// exact quadrant sum; at finite depth they are taken over the same
/// index range as the expansion norms.
pub fn cancellation_report(
    f: &WaveProfile,
    n_max: usize,
    m: usize,
    k_limit: usize,
    filter: bool,
    rescale: Option<&MpReal>,
    ctx: &PrecisionCtx,
) -> Result<CancellationReport> {
    check_dims(m, k_limit)?;
    let ws = Workspace::new(f, m, n_max, ctx)?;
    let half_k = (k_limit / 2) as i64;
    let n_cols = (k_limit / 2 - 1).max(0);
    // per order: sum of |entries|^2 over the norm range, and the
    // truncated columns (rows |k| < K/2) for the symmetry defect
    let mut g_sumsq: Vec<MpReal> = (0..=n_max).map(|_| ctx.zero()).collect();
    let mut trunc: Vec<Vec<Vec<MpComplex>>> = (0..=n_max).map(|_| Vec::with_capacity(n_cols)).collect();
    let mut noise: Vec<Option<i32>> = vec![None; n_max + 1];
    let mut a_sumsq: Vec<MpReal> = (0..=n_max).map(|_| ctx.zero()).collect();
    let finite = !ws.depth.is_infinite();
    for j in 1..half_k {
        let orders = ws.column_orders(j, n_max, filter, ctx)?;
        for (n, col) in orders.iter().enumerate() {
            let mut tcol = Vec::with_capacity((2 * half_k - 1) as usize);
            for k in -half_k + 1..half_k {
                let z = &col[ws.grid.mode_to_bin(k)];
                g_sumsq[n] += z.clone().norm().into_real_imag().0;
                tcol.push(z.clone());
            }
            trunc[n].push(tcol);
            // outer-row noise probe, merged across columns by maximum
            let half_m = (m / 2) as i64;
            let outer_from = half_m - (half_m / 10).max(1);
            let probe = |range: Box<dyn Iterator<Item = i64>>| -> Option<i32> {
                let mut es: Vec<Option<i32>> = range
                    .map(|k| {
                        let z = &col[ws.grid.mode_to_bin(k)];
                        z.real()
                            .get_exp()
                            .into_iter()
                            .chain(z.imag().get_exp())
                            .max()
                    })
                    .collect();
                es.sort_unstable();
                es.get(es.len() / 2).copied().flatten()
            };
            let outer = probe(Box::new(
                (outer_from..half_m).flat_map(|k| [k, -k]),
            ));
            let inner = probe(Box::new(-half_m / 2..=half_m / 2));
            if let (Some(o), Some(i)) = (outer, inner) {
                let gap = o - i;
                noise[n] = Some(noise[n].map_or(gap, |g| g.max(gap)));
            }
        }
        if finite {
            for n in 1..=n_max {
                let col = ws.an_column(n, j, ctx);
                for k in -half_k + 1..half_k {
                    a_sumsq[n] += col[ws.grid.mode_to_bin(k)].clone().norm().into_real_imag().0;
                }
            }
        }
    }
    let a_norms = if finite {
        let mut v = vec![ctx.zero()];
        for n in 1..=n_max {
            let mut s = a_sumsq[n].clone();
            s <<= 1;
            v.push(s.sqrt());
        }
        v
    } else {
        let mut v = vec![ctx.zero()];
        v.extend(an_frobenius_exact(f, n_max, m, ctx)?);
        v
    };
    let mut rows = Vec::with_capacity(n_max + 1);
    let mut flagged = Vec::new();
    let mut eps_pow = ctx.one();
    for n in 0..=n_max {
        let mut g2 = g_sumsq[n].clone();
        g2 <<= 1;
        let g_norm = g2.sqrt();
        // symmetry defect from the truncated columns
        let mut worst = ctx.zero();
        let entry = |k: i64, j: i64| -> MpComplex {
            // truncated storage: trunc[n][j-1][k + half_k - 1]
            if j == 0 || k.abs() >= half_k {
                return ctx.complex_zero();
            }
            if j > 0 {
                trunc[n][(j - 1) as usize][(k + half_k - 1) as usize].clone()
            } else {
                trunc[n][(-j - 1) as usize][(-k + half_k - 1) as usize]
                    .clone()
                    .conj()
            }
        };
        for j in 1..half_k {
            for k in -half_k + 1..half_k {
                let d = (entry(k, j) - entry(j, k).conj()).abs().into_real_imag().0;
                if d > worst {
                    worst = d;
                }
            }
        }
        let r_sym = if g_norm.is_zero() {
            worst.clone()
        } else {
            worst / &g_norm
        };
        let (ar, gr) = match rescale {
            Some(_) => (
                Some(a_norms[n].clone() * &eps_pow),
                Some(g_norm.clone() * &eps_pow),
            ),
            None => (None, None),
        };
        if let Some(eps) = rescale {
            eps_pow *= eps;
        }
        if noise[n].is_some_and(|g| g > 0) {
            flagged.push(n);
        }
        rows.push(CancellationRow {
            order: n,
            a_norm: a_norms[n].clone(),
            g_norm,
            r_sym,
            a_norm_rescaled: ar,
            g_norm_rescaled: gr,
            noise_gap: noise[n],
        });
    }
    Ok(CancellationReport {
        rows,
        flagged_orders: flagged,
    })
}

/// Per-order terms `G_n(eta) D` computed directly as vectors (no
/// operator matrices): the first term acts through split convolutions,
/// the recursion through FFT products, exactly as the column path but
/// with the Dirichlet spectrum in place of a unit column.
pub fn apply_gn_terms(
    eta: &WaveProfile,
    dirichlet: &SurfaceField,
    n_max: usize,
    ctx: &PrecisionCtx,
) -> Result<Vec<SurfaceField>> {
    let grid = dirichlet.grid().clone();
    let m = grid.len();
    let ws = Workspace::new(eta, m, n_max, ctx)?;
    let half = (m / 2) as i64;
    // weighted Dirichlet spectra entering the first-term action
    let dhat = dirichlet.modes();
    let mut terms: Vec<SurfaceField> = Vec::with_capacity(n_max + 1);
    let u0 = spectral::apply_multiplier(dirichlet, ctx, |k| {
        ctx.complex_from_real(&ws.g0(k, ctx))
    })?;
    let mut real_terms: Vec<Vec<MpReal>> = vec![u0.values().to_vec()];
    terms.push(u0);
    // synthesized weighted spectra for the convolution products
    let make_synth = |weight: &dyn Fn(i64) -> MpReal| -> Result<Vec<MpComplex>> {
        let mut v: Vec<MpComplex> = (0..m)
            .map(|t| {
                let k = grid.bin_to_mode(t);
                dhat[t].clone() * ctx.complex_from_real(&weight(k))
            })
            .collect();
        spectral::inverse_complex(&mut v, ctx)?;
        Ok(v)
    };
    enum FirstTerm {
        /// synthesized `|j| D^_j` restricted to j>0 / j<0
        Split { pos: Vec<MpComplex>, neg: Vec<MpComplex> },
        /// synthesized `j D^_j` and `j tanh(jh) D^_j`
        Tanh { plain: Vec<MpComplex>, weighted: Vec<MpComplex> },
    }
    let first = match &ws.depth {
        Depth::Infinite => FirstTerm::Split {
            pos: make_synth(&|k| {
                if k > 0 {
                    ws.wavenumber(k, ctx).abs()
                } else {
                    ctx.zero()
                }
            })?,
            neg: make_synth(&|k| {
                if k < 0 && k.abs() < half {
                    ws.wavenumber(k, ctx).abs()
                } else {
                    ctx.zero()
                }
            })?,
        },
        Depth::Finite(h) => FirstTerm::Tanh {
            plain: make_synth(&|k| {
                if k.abs() < half {
                    ws.wavenumber(k, ctx)
                } else {
                    ctx.zero()
                }
            })?,
            weighted: make_synth(&|k| {
                // tanh(kappa_j h) is odd in j, so the product with
                // kappa_j is |kappa_j| tanh(|kappa_j| h)
                if k.abs() < half {
                    let t = (ws.wavenumber(k, ctx) * h).tanh();
                    ws.wavenumber(k, ctx) * t
                } else {
                    ctx.zero()
                }
            })?,
        },
    };
    let mut t = ctx.complex_zero();
    for n in 1..=n_max {
        // first-term action via convolution with (eta^n)^
        let fp = &ws.power_values[n - 1];
        let conv = |synth: &[MpComplex]| -> Result<Vec<MpComplex>> {
            let mut v: Vec<MpComplex> = synth
                .iter()
                .zip(fp)
                .map(|(a, b)| a.clone() * ctx.complex_from_real(b))
                .collect();
            spectral::forward_complex(&mut v, ctx)?;
            Ok(v)
        };
        let mut modes: Vec<MpComplex> = match &first {
            FirstTerm::Split { pos, neg } => {
                let cpos = conv(pos)?;
                let cneg = conv(neg)?;
                (0..m)
                    .map(|tt| {
                        let k = grid.bin_to_mode(tt);
                        if k == 0 || k.abs() >= half {
                            return ctx.complex_zero();
                        }
                        let c = if k < 0 { &cpos[tt] } else { &cneg[tt] };
                        let mut coef = ws.wavenumber(k, ctx).abs().pow(n as u32);
                        coef /= &ws.factorials[n];
                        coef *= ctx.real_from_i64(-2);
                        c.clone() * ctx.complex_from_real(&coef)
                    })
                    .collect()
            }
            FirstTerm::Tanh { plain, weighted } => {
                let c1 = conv(plain)?;
                let c2 = conv(weighted)?;
                let h = ws.depth.as_finite().unwrap().clone();
                (0..m)
                    .map(|tt| {
                        let k = grid.bin_to_mode(tt);
                        if k == 0 || k.abs() >= half {
                            return ctx.complex_zero();
                        }
                        // signed: tanh(kappa_k h) is odd in k
                        let tk = (ws.wavenumber(k, ctx) * &h).tanh();
                        let mut z = if n % 2 == 0 {
                            let mut z = c1[tt].clone() * ctx.complex_from_real(&tk);
                            z -= &c2[tt];
                            z
                        } else {
                            let mut z = c1[tt].clone();
                            z -= c2[tt].clone() * ctx.complex_from_real(&tk);
                            z
                        };
                        // signed k^n: |k|^n * sgn(k)^n
                        let mut coef = ws.wavenumber(k, ctx).pow(n as u32);
                        coef /= &ws.factorials[n];
                        z *= ctx.complex_from_real(&coef);
                        z
                    })
                    .collect()
            }
        };
        // recursion corrections
        for s in 1..n {
            let p = n - s;
            let mut v: Vec<MpComplex> = real_terms[s]
                .iter()
                .zip(&ws.power_values[p - 1])
                .map(|(g, f)| ctx.complex_from_real(&(g.clone() * f)))
                .collect();
            spectral::forward_complex(&mut v, ctx)?;
            for (tt, z) in v.iter_mut().enumerate() {
                let k = grid.bin_to_mode(tt);
                let mut y = ws.y_symbol(p, k, ctx);
                y /= &ws.factorials[p];
                t.assign(&*z * &ctx.complex_from_real(&y));
                modes[tt] -= &t;
            }
        }
        let field = SurfaceField::from_modes(grid.clone(), modes, ctx)?;
        real_terms.push(field.values().to_vec());
        terms.push(field);
    }
    Ok(terms)
}

/// Per-order RMS errors of the partial sums against exact Neumann data,
/// with corrections applied only below `mode_cutoff`; higher modes stay
/// frozen at the order-0 residual (they are dominated by aliasing noise
/// that successive corrections cannot recover).
pub fn partial_sum_errors(
    terms: &[SurfaceField],
    exact_neumann: &SurfaceField,
    mode_cutoff: usize,
    ctx: &PrecisionCtx,
) -> Result<Vec<MpReal>> {
    if terms.is_empty() {
        return Err(DnoError::Config("no expansion terms supplied".into()));
    }
    let grid = exact_neumann.grid().clone();
    let m = grid.len();
    if mode_cutoff >= m / 2 {
        return Err(DnoError::OutOfRange(format!(
            "mode cutoff {mode_cutoff} must be below M/2 = {}",
            m / 2
        )));
    }
    for t in terms {
        if t.grid().len() != m {
            return Err(DnoError::GridMismatch("partial_sum_errors".into()));
        }
    }
    // frozen residual from order 0
    let frozen: Vec<MpComplex> = (0..m)
        .map(|t| exact_neumann.modes()[t].clone() - &terms[0].modes()[t])
        .collect();
    let mut acc = frozen.clone();
    let mut out = Vec::with_capacity(terms.len());
    let push_rms = |acc: &[MpComplex], out: &mut Vec<MpReal>| {
        let mut s = ctx.zero();
        for (t, z) in acc.iter().enumerate() {
            let k = grid.bin_to_mode(t);
            let e = if (k.unsigned_abs() as usize) < mode_cutoff {
                z
            } else {
                &frozen[t]
            };
            s += e.clone().norm().into_real_imag().0;
        }
        out.push(s.sqrt());
    };
    push_rms(&acc, &mut out);
    for term in &terms[1..] {
        for (a, b) in acc.iter_mut().zip(term.modes()) {
            *a -= b;
        }
        push_rms(&acc, &mut out);
    }
    Ok(out)
}
