//! Transformed-field expansion: the operator is expanded in powers of
//! the surface deformation after a change of variables that flattens
//! the fluid layer onto a fixed strip.  Each order solves a stable
//! two-point boundary-value problem per Fourier mode, so no
//! catastrophic cancellation occurs between orders.
//!
//! Discretization: Fourier collocation in `x`, Chebyshev-Lobatto in the
//! flattened vertical variable `y` in `[-h, 0]`, with a Galerkin solve
//! in a basis `phi_p = T_p - T_0` that vanishes at the free surface;
//! the no-flux bottom condition is natural in the weak form.

use std::collections::HashMap;

use crate::error::{DnoError, Result};
use crate::linalg::{self, DenseMatrix, LuFactorization};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use crate::profiles::{Depth, WaveProfile};
use crate::spectral::cheb::{self, ChebCoeffs, ChebTable};
use crate::spectral::{self, Grid, SurfaceField};

/// Expansion of the Dirichlet-to-Neumann map in powers of the
/// deformation: `terms[n]` is the order-`n` contribution to the
/// Neumann trace.  `gamma[n][b]` is the coefficient energy of Fourier
/// bin `b` at order `n`; `kappa[n][j]` the energy of vertical
/// Chebyshev index `j`.  Both diagnose how well the bulk field is
/// resolved.
pub struct TfeExpansion {
    pub terms: Vec<SurfaceField>,
    pub gamma: Vec<Vec<MpReal>>,
    pub kappa: Vec<Vec<MpReal>>,
}

impl TfeExpansion {
    /// Partial sum of the Neumann trace through order `upto`
    /// (inclusive).
    pub fn neumann_partial(&self, upto: usize, ctx: &PrecisionCtx) -> Result<SurfaceField> {
        if upto >= self.terms.len() {
            return Err(DnoError::OutOfRange(format!(
                "partial sum through order {upto} but only {} terms",
                self.terms.len()
            )));
        }
        let grid = self.terms[0].grid().clone();
        let m = grid.len();
        let mut acc: Vec<MpReal> = (0..m).map(|_| ctx.zero()).collect();
        for term in &self.terms[..=upto] {
            for (a, v) in acc.iter_mut().zip(term.values()) {
                *a += v;
            }
        }
        SurfaceField::from_values(grid, acc, ctx)
    }
}

/// `int_{-1}^{1} T_a T_b ds` in closed form.
fn tt_integral(a: usize, b: usize, ctx: &PrecisionCtx) -> MpReal {
    (cheb::t_integral(a + b, ctx) + cheb::t_integral(a.abs_diff(b), ctx)) / ctx.real_from_i64(2)
}

/// One bulk field in nodal form: `rows[r][c]` is the value at Lobatto
/// node `r` (top is `r = 0`) and grid point `c`.
type Nodal = Vec<Vec<MpComplex>>;

struct Solver<'a> {
    grid: Grid,
    ctx: &'a PrecisionCtx,
    n_cheb: usize,
    h: MpReal,
    table: ChebTable,
    /// `1 + y_r / h` at each Lobatto node
    yfac: Vec<MpReal>,
    /// surface, slope, squared slope at the grid points
    fvals: Vec<MpReal>,
    fx: Vec<MpReal>,
    fx2: Vec<MpReal>,
    /// `(-f/h)^m` at the grid points, `m = 0..=n_max`
    powers: Vec<Vec<MpReal>>,
    basis: Vec<ChebCoeffs>,
    /// `Wint[q][j] = int T_j phi_q ds`, `Wder[q][j] = int T_j phi_q' ds`
    wint: Vec<Vec<MpReal>>,
    wder: Vec<Vec<MpReal>>,
    /// Galerkin matrix factorizations keyed by `|mode|`
    systems: HashMap<i64, LuFactorization>,
}

impl<'a> Solver<'a> {
    fn new(
        profile: &WaveProfile,
        grid: Grid,
        n_max: usize,
        n_cheb: usize,
        ctx: &'a PrecisionCtx,
    ) -> Result<Self> {
        let h = match profile.depth() {
            Depth::Finite(h) => h.clone(),
            Depth::Infinite => {
                return Err(DnoError::OutOfRange(
                    "the flattened-layer expansion requires a finite depth".into(),
                ))
            }
        };
        let m = grid.len();
        if m < 4 {
            return Err(DnoError::OutOfRange(format!("grid of {m} points is too small")));
        }
        let table = ChebTable::new(n_cheb, ctx)?;
        let nodes = cheb::lobatto_nodes(n_cheb, ctx);
        // y = h (s - 1) / 2, so 1 + y/h = (1 + s) / 2
        let yfac: Vec<MpReal> = nodes
            .iter()
            .map(|s| (s.clone() + ctx.one()) / ctx.real_from_i64(2))
            .collect();
        let points = grid.points(ctx);
        let fvals: Vec<MpReal> = points.iter().map(|x| profile.eval(x, ctx)).collect();
        let fx: Vec<MpReal> = points.iter().map(|x| profile.eval_slope(x, ctx)).collect();
        let fx2: Vec<MpReal> = fx.iter().map(|v| v.clone().square()).collect();
        let mut powers: Vec<Vec<MpReal>> = vec![(0..m).map(|_| ctx.one()).collect()];
        for _ in 1..=n_max {
            let prev = powers.last().unwrap();
            let next: Vec<MpReal> = prev
                .iter()
                .zip(&fvals)
                .map(|(p, f)| -(p.clone() * f) / &h)
                .collect();
            powers.push(next);
        }
        // basis phi_p = T_p - T_0 for p = 1..=N
        let mut basis = Vec::with_capacity(n_cheb);
        for p in 1..=n_cheb {
            let mut c = ChebCoeffs::zero(n_cheb, ctx);
            c.coeffs[0] = ctx.complex_from_f64(-1.0, 0.0);
            c.coeffs[p] = ctx.complex_from_f64(1.0, 0.0);
            basis.push(c);
        }
        let mut wint = Vec::with_capacity(n_cheb);
        let mut wder = Vec::with_capacity(n_cheb);
        for phi in &basis {
            let dphi = cheb::differentiate(phi, ctx);
            let mut wi = Vec::with_capacity(n_cheb + 1);
            let mut wd = Vec::with_capacity(n_cheb + 1);
            for j in 0..=n_cheb {
                let mut acc_i = ctx.zero();
                let mut acc_d = ctx.zero();
                for (l, (c, d)) in phi.coeffs.iter().zip(&dphi.coeffs).enumerate() {
                    acc_i += c.real().clone() * tt_integral(j, l, ctx);
                    acc_d += d.real().clone() * tt_integral(j, l, ctx);
                }
                wi.push(acc_i);
                wd.push(acc_d);
            }
            wint.push(wi);
            wder.push(wd);
        }
        // stiffness (2/h) int phi_p' phi_q' ds and mass (h/2) int
        // phi_p phi_q ds, both exact
        let dbasis: Vec<ChebCoeffs> = basis.iter().map(|p| cheb::differentiate(p, ctx)).collect();
        let two_over_h = ctx.real_from_i64(2) / &h;
        let h_over_two = h.clone() / ctx.real_from_i64(2);
        let mut stiff = DenseMatrix::zeros(n_cheb, n_cheb, ctx);
        let mut mass = DenseMatrix::zeros(n_cheb, n_cheb, ctx);
        for q in 0..n_cheb {
            for p in 0..n_cheb {
                let sp = cheb::integrate(&cheb::multiply(&dbasis[p], &dbasis[q], ctx), ctx);
                let mp = cheb::integrate(&cheb::multiply(&basis[p], &basis[q], ctx), ctx);
                *stiff.at_mut(q, p) = sp * ctx.complex_from_real(&two_over_h);
                *mass.at_mut(q, p) = mp * ctx.complex_from_real(&h_over_two);
            }
        }
        let mut systems = HashMap::new();
        for abs_mode in 0..=grid.len() as i64 / 2 {
            if grid.len() % 2 == 0 && abs_mode == grid.len() as i64 / 2 {
                continue; // Nyquist modes are dropped throughout
            }
            let kappa = grid.wavenumber(abs_mode, ctx);
            let k2 = ctx.complex_from_real(&kappa.clone().square());
            let a = DenseMatrix::from_fn(n_cheb, n_cheb, ctx, |q, p| {
                stiff.at(q, p).clone() + mass.at(q, p).clone() * &k2
            });
            systems.insert(abs_mode, linalg::lu_factor(&a)?);
        }
        Ok(Solver {
            grid,
            ctx,
            n_cheb,
            h,
            table,
            yfac,
            fvals,
            fx,
            fx2,
            powers,
            basis,
            wint,
            wder,
            systems,
        })
    }

    fn zeros(&self) -> Nodal {
        (0..=self.n_cheb)
            .map(|_| (0..self.grid.len()).map(|_| self.ctx.complex_zero()).collect())
            .collect()
    }

    fn is_nyquist(&self, bin: usize) -> bool {
        self.grid.len() % 2 == 0 && bin == self.grid.len() / 2
    }

    /// Fourier transform every Lobatto row of a nodal field, giving a
    /// mode-by-row layout; Nyquist bins are zeroed.
    fn rows_to_modes(&self, nodal: &Nodal) -> Result<Nodal> {
        let ctx = self.ctx;
        let mut out = Vec::with_capacity(nodal.len());
        for row in nodal {
            let mut v = row.clone();
            spectral::forward_complex(&mut v, ctx)?;
            if self.grid.len() % 2 == 0 {
                let ny = self.grid.len() / 2;
                v[ny] = ctx.complex_zero();
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Inverse of `rows_to_modes`.
    fn modes_to_rows(&self, modes: &Nodal) -> Result<Nodal> {
        let ctx = self.ctx;
        let mut out = Vec::with_capacity(modes.len());
        for row in modes {
            let mut v = row.clone();
            spectral::inverse_complex(&mut v, ctx)?;
            out.push(v);
        }
        Ok(out)
    }

    /// Chebyshev coefficients of one Fourier-mode column.
    fn column_coeffs(&self, modes: &Nodal, bin: usize) -> Result<ChebCoeffs> {
        let col: Vec<MpComplex> = modes.iter().map(|row| row[bin].clone()).collect();
        self.table.transform(&col, self.ctx)
    }

    /// Galerkin solve of `u'' - kappa^2 u = i kappa F1 + dF2/dy + F3`
    /// with a homogeneous Dirichlet top and natural no-flux bottom.
    fn solve_mode(
        &self,
        abs_mode: i64,
        kappa: &MpComplex,
        f1: &ChebCoeffs,
        f2: &ChebCoeffs,
        f3: &ChebCoeffs,
    ) -> Result<ChebCoeffs> {
        let ctx = self.ctx;
        let h_over_two = self.h.clone() / ctx.real_from_i64(2);
        let ik = kappa.clone() * ctx.imag_unit();
        let mut rhs = Vec::with_capacity(self.n_cheb);
        for q in 0..self.n_cheb {
            let mut acc = ctx.complex_zero();
            for j in 0..=self.n_cheb {
                let body = f1.coeffs[j].clone() * &ik + &f3.coeffs[j];
                acc -= body * ctx.complex_from_real(&(self.wint[q][j].clone() * &h_over_two));
                acc += f2.coeffs[j].clone() * ctx.complex_from_real(&self.wder[q][j]);
            }
            rhs.push(acc);
        }
        let lu = self
            .systems
            .get(&abs_mode)
            .ok_or_else(|| DnoError::OutOfRange(format!("no system for mode {abs_mode}")))?;
        let c = lu.solve(&rhs)?;
        let mut alpha = ChebCoeffs::zero(self.n_cheb, ctx);
        for (p, cp) in c.iter().enumerate() {
            alpha.coeffs[0] -= cp;
            alpha.coeffs[p + 1] = cp.clone();
        }
        let _ = &self.basis; // basis shape is fixed: phi_p = T_p - T_0
        Ok(alpha)
    }
}

/// Compute the deformation expansion of the Neumann trace through
/// order `n_max` with `n_cheb + 1` vertical Lobatto nodes.
pub fn tfe_expansion(
    profile: &WaveProfile,
    dirichlet: &SurfaceField,
    n_max: usize,
    n_cheb: usize,
    ctx: &PrecisionCtx,
) -> Result<TfeExpansion> {
    let grid = dirichlet.grid().clone();
    let sv = Solver::new(profile, grid.clone(), n_max, n_cheb, ctx)?;
    let m = grid.len();
    let two_over_h = ctx.real_from_i64(2) / &sv.h;

    // per-order nodal derivative fields
    let mut ux_hist: Vec<Nodal> = Vec::with_capacity(n_max + 1);
    let mut uy_hist: Vec<Nodal> = Vec::with_capacity(n_max + 1);
    let mut gamma = Vec::with_capacity(n_max + 1);
    let mut kappa_norms = Vec::with_capacity(n_max + 1);
    let mut terms = Vec::with_capacity(n_max + 1);

    let record_norms = |alphas: &[ChebCoeffs], gamma: &mut Vec<Vec<MpReal>>,
                        kappa_norms: &mut Vec<Vec<MpReal>>| {
        let mut g: Vec<MpReal> = (0..m).map(|_| ctx.zero()).collect();
        let mut k: Vec<MpReal> = (0..=n_cheb).map(|_| ctx.zero()).collect();
        for (b, a) in alphas.iter().enumerate() {
            for (j, c) in a.coeffs.iter().enumerate() {
                let e = c.clone().norm().into_real_imag().0;
                g[b] += &e;
                k[j] += &e;
            }
        }
        gamma.push(g.into_iter().map(|v| v.sqrt()).collect());
        kappa_norms.push(k.into_iter().map(|v| v.sqrt()).collect());
    };

    // order 0: explicit layer solution per mode
    {
        let nodes = cheb::lobatto_nodes(n_cheb, ctx);
        let ys: Vec<MpReal> = nodes
            .iter()
            .map(|s| (s.clone() - ctx.one()) * &sv.h / ctx.real_from_i64(2))
            .collect();
        let mut u_modes = sv.zeros();
        let mut uy_modes = sv.zeros();
        let mut alphas = Vec::with_capacity(m);
        for b in 0..m {
            if sv.is_nyquist(b) {
                alphas.push(ChebCoeffs::zero(n_cheb, ctx));
                continue;
            }
            let mode = grid.bin_to_mode(b);
            let dk = dirichlet.mode(mode, ctx);
            let kap = grid.wavenumber(mode, ctx);
            for (r, y) in ys.iter().enumerate() {
                if mode == 0 {
                    u_modes[r][b] = dk.clone();
                    // uy stays zero
                } else {
                    let arg = (y.clone() + &sv.h) * &kap;
                    let ch = arg.clone().cosh();
                    let sh = arg.sinh();
                    let denom = (sv.h.clone() * &kap).cosh();
                    u_modes[r][b] = dk.clone() * ctx.complex_from_real(&(ch / &denom));
                    uy_modes[r][b] =
                        dk.clone() * ctx.complex_from_real(&(sh * &kap / &denom));
                }
            }
            alphas.push(sv.column_coeffs(&u_modes, b)?);
        }
        record_norms(&alphas, &mut gamma, &mut kappa_norms);
        let mut ux_modes = sv.zeros();
        for b in 0..m {
            let kap = grid.wavenumber(grid.bin_to_mode(b), ctx);
            let ik = ctx.complex_from_real(&kap) * ctx.imag_unit();
            for r in 0..=n_cheb {
                ux_modes[r][b] = u_modes[r][b].clone() * &ik;
            }
        }
        let ux = sv.modes_to_rows(&ux_modes)?;
        let uy = sv.modes_to_rows(&uy_modes)?;
        // order-0 trace: the vertical derivative at the top
        let g0: Vec<MpReal> = (0..m).map(|c| uy[0][c].real().clone()).collect();
        terms.push(SurfaceField::from_values(grid.clone(), g0, ctx)?);
        ux_hist.push(ux);
        uy_hist.push(uy);
    }

    for n in 1..=n_max {
        // assemble the forcing fields in nodal form
        let mut f1 = sv.zeros();
        let mut f2 = sv.zeros();
        let mut f3 = sv.zeros();
        for r in 0..=n_cheb {
            for c in 0..m {
                let mut s1 = ctx.complex_zero(); // sum p_m u_{n-1-m,y}
                let mut s4 = ctx.complex_zero(); // sum p_m u_{n-1-m,x}
                let mut s2 = ctx.complex_zero(); // sum (m+2) p_m u_{n-1-m,y}
                let mut s5 = ctx.complex_zero(); // sum (m+1) p_m u_{n-2-m,y}
                for mi in 0..n {
                    let p = &sv.powers[mi][c];
                    let uy = &uy_hist[n - 1 - mi][r][c];
                    let ux = &ux_hist[n - 1 - mi][r][c];
                    s1 += uy.clone() * ctx.complex_from_real(p);
                    s4 += ux.clone() * ctx.complex_from_real(p);
                    s2 += uy.clone()
                        * ctx.complex_from_real(&(p.clone() * ctx.real_from_i64(mi as i64 + 2)));
                    if mi + 2 <= n {
                        let uy2 = &uy_hist[n - 2 - mi][r][c];
                        s5 += uy2.clone()
                            * ctx.complex_from_real(
                                &(sv.powers[mi][c].clone() * ctx.real_from_i64(mi as i64 + 1)),
                            );
                    }
                }
                let f4 = s4 * ctx.complex_from_real(&sv.fx[c]);
                let f5 = s5 * ctx.complex_from_real(&(sv.yfac[r].clone() * &sv.fx2[c]));
                f1[r][c] = s1 * ctx.complex_from_real(&(sv.yfac[r].clone() * &sv.fx[c]));
                f2[r][c] = (f4.clone() - &f5) * ctx.complex_from_real(&sv.yfac[r])
                    + s2 * ctx.complex_from_real(&(sv.fvals[c].clone() / &sv.h));
                f3[r][c] = (f5 - f4) / ctx.complex_from_real(&sv.h);
            }
        }
        let f1m = sv.rows_to_modes(&f1)?;
        let f2m = sv.rows_to_modes(&f2)?;
        let f3m = sv.rows_to_modes(&f3)?;
        let mut alphas = Vec::with_capacity(m);
        for b in 0..m {
            if sv.is_nyquist(b) {
                alphas.push(ChebCoeffs::zero(n_cheb, ctx));
                continue;
            }
            let mode = grid.bin_to_mode(b);
            let kap = ctx.complex_from_real(&grid.wavenumber(mode, ctx));
            let c1 = sv.column_coeffs(&f1m, b)?;
            let c2 = sv.column_coeffs(&f2m, b)?;
            let c3 = sv.column_coeffs(&f3m, b)?;
            alphas.push(sv.solve_mode(mode.abs(), &kap, &c1, &c2, &c3)?);
        }
        record_norms(&alphas, &mut gamma, &mut kappa_norms);
        // derivative fields of the new order
        let mut ux_modes = sv.zeros();
        let mut uy_modes = sv.zeros();
        for (b, alpha) in alphas.iter().enumerate() {
            let mode = grid.bin_to_mode(b);
            let ik = ctx.complex_from_real(&grid.wavenumber(mode, ctx)) * ctx.imag_unit();
            let beta = cheb::differentiate(alpha, ctx);
            let ucol = sv.table.synthesize(alpha, ctx);
            let dcol = sv.table.synthesize(&beta, ctx);
            for r in 0..=n_cheb {
                ux_modes[r][b] = ucol[r].clone() * &ik;
                uy_modes[r][b] = dcol[r].clone() * ctx.complex_from_real(&two_over_h);
            }
        }
        let ux = sv.modes_to_rows(&ux_modes)?;
        let uy = sv.modes_to_rows(&uy_modes)?;
        ux_hist.push(ux);
        uy_hist.push(uy);
        // surface trace of this order
        let mut gvals = Vec::with_capacity(m);
        for c in 0..m {
            let mut acc = ctx.complex_zero();
            acc -= ux_hist[n - 1][0][c].clone() * ctx.complex_from_real(&sv.fx[c]);
            for mi in 0..=n {
                acc += uy_hist[n - mi][0][c].clone() * ctx.complex_from_real(&sv.powers[mi][c]);
            }
            if n >= 2 {
                let mut tail = ctx.complex_zero();
                for mi in 0..=n - 2 {
                    tail +=
                        uy_hist[n - 2 - mi][0][c].clone() * ctx.complex_from_real(&sv.powers[mi][c]);
                }
                acc += tail * ctx.complex_from_real(&sv.fx2[c]);
            }
            gvals.push(acc.real().clone());
        }
        terms.push(SurfaceField::from_values(grid.clone(), gvals, ctx)?);
    }
    Ok(TfeExpansion {
        terms,
        gamma,
        kappa: kappa_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cs;
    use crate::bim;

    fn rms(values: &[MpReal], ctx: &PrecisionCtx) -> f64 {
        let mut acc = ctx.zero();
        for v in values {
            acc += v.clone().square();
        }
        acc /= ctx.real_from_i64(values.len() as i64);
        acc.sqrt().to_f64()
    }

    fn rms_diff(a: &SurfaceField, b: &SurfaceField, ctx: &PrecisionCtx) -> f64 {
        let d: Vec<MpReal> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x.clone() - y)
            .collect();
        rms(&d, ctx)
    }

    #[test]
    fn infinite_depth_rejected() {
        let ctx = PrecisionCtx::new(100).unwrap();
        let prof = WaveProfile::new(vec![], Depth::Infinite, ctx.two_pi(), &ctx).unwrap();
        let grid = Grid::standard(8, &ctx).unwrap();
        let d = SurfaceField::from_fn(grid, &ctx, |x| x.clone().cos()).unwrap();
        assert!(tfe_expansion(&prof, &d, 2, 8, &ctx).is_err());
    }

    #[test]
    fn flat_surface_reduces_to_symbol() {
        let ctx = PrecisionCtx::new(150).unwrap();
        let h = ctx.one();
        let prof = WaveProfile::new(
            vec![],
            Depth::finite(h.clone()).unwrap(),
            ctx.two_pi(),
            &ctx,
        )
        .unwrap();
        let grid = Grid::standard(16, &ctx).unwrap();
        let d = SurfaceField::from_fn(grid.clone(), &ctx, |x| x.clone().cos()).unwrap();
        let exp = tfe_expansion(&prof, &d, 4, 12, &ctx).unwrap();
        let t = h.tanh();
        let exact = SurfaceField::from_values(
            grid,
            d.values().iter().map(|v| v.clone() * &t).collect(),
            &ctx,
        )
        .unwrap();
        assert!(rms_diff(&exp.terms[0], &exact, &ctx) < 1e-40);
        for n in 1..=4 {
            assert!(rms(exp.terms[n].values(), &ctx) < 1e-40, "order {n}");
        }
    }

    #[test]
    fn constant_dirichlet_has_zero_neumann_at_all_orders() {
        let ctx = PrecisionCtx::new(150).unwrap();
        let h = ctx.real_from_f64(0.4);
        let prof = WaveProfile::new(
            vec![(1, ctx.complex_from_f64(0.02, 0.01))],
            Depth::finite(h).unwrap(),
            ctx.two_pi(),
            &ctx,
        )
        .unwrap();
        let grid = Grid::standard(16, &ctx).unwrap();
        let d = SurfaceField::from_fn(grid, &ctx, |_| ctx.real_from_f64(2.5)).unwrap();
        let exp = tfe_expansion(&prof, &d, 5, 16, &ctx).unwrap();
        for (n, t) in exp.terms.iter().enumerate() {
            assert!(rms(t.values(), &ctx) < 1e-38, "order {n}: {}", rms(t.values(), &ctx));
        }
    }

    #[test]
    fn shallow_terms_match_deformation_expansion() {
        // the strongest consistency test: every order of the flattened
        // expansion must match the operator expansion applied to the
        // same data, term by term
        let ctx = PrecisionCtx::new(150).unwrap();
        let h = ctx.real_from_f64(0.1);
        let prof = WaveProfile::new(
            vec![
                (1, ctx.complex_from_f64(4e-3, -2e-3)),
                (3, ctx.complex_from_f64(-1e-3, 5e-4)),
            ],
            Depth::finite(h).unwrap(),
            ctx.two_pi(),
            &ctx,
        )
        .unwrap();
        // M = 64 keeps every order alias-free: the largest mode at
        // order 5 is 3*5 + 2 = 17 < 32
        let grid = Grid::standard(64, &ctx).unwrap();
        let d = SurfaceField::from_fn(grid, &ctx, |x| {
            x.clone().cos() + (x.clone() * ctx.real_from_i64(2)).sin()
        })
        .unwrap();
        let n_max = 5;
        let tfe = tfe_expansion(&prof, &d, n_max, 24, &ctx).unwrap();
        let cs_terms = cs::apply_gn_terms(&prof, &d, n_max, &ctx).unwrap();
        for n in 0..=n_max {
            let err = rms_diff(&tfe.terms[n], &cs_terms[n], &ctx);
            let scale = rms(cs_terms[n].values(), &ctx).max(1e-30);
            assert!(
                err < 1e-25 * scale.max(1.0),
                "order {n}: err {err:.3e} scale {scale:.3e}"
            );
        }
    }

    #[test]
    fn partial_sums_converge_to_integral_solution() {
        // moderate deformation: partial sums must converge to the
        // trusted boundary-integral answer
        let ctx = PrecisionCtx::new(180).unwrap();
        let h = ctx.real_from_f64(0.5);
        let prof = WaveProfile::new(
            vec![(1, ctx.complex_from_f64(-0.02, 0.0))],
            Depth::finite(h).unwrap(),
            ctx.two_pi(),
            &ctx,
        )
        .unwrap();
        let grid = Grid::standard(64, &ctx).unwrap();
        let d = SurfaceField::from_fn(grid, &ctx, |x| x.clone().cos()).unwrap();
        let (reference, _) =
            bim::bim_dno(&prof, &d, bim::SolveMethod::Direct, &ctx).unwrap();
        let exp = tfe_expansion(&prof, &d, 10, 32, &ctx).unwrap();
        let mut errs = Vec::new();
        for upto in 0..=10 {
            let partial = exp.neumann_partial(upto, &ctx).unwrap();
            errs.push(rms_diff(&partial, &reference, &ctx));
        }
        assert!(errs[10] < 1e-14, "final error {:.3e}", errs[10]);
        for w in [0usize, 2, 4] {
            assert!(errs[w + 2] < errs[w], "errors {errs:?}");
        }
    }

    #[test]
    fn norm_diagnostics_have_expected_shape() {
        let ctx = PrecisionCtx::new(150).unwrap();
        let h = ctx.real_from_f64(0.3);
        let eps = 1e-2;
        let prof = WaveProfile::new(
            vec![(1, ctx.complex_from_f64(eps / 2.0, 0.0))],
            Depth::finite(h).unwrap(),
            ctx.two_pi(),
            &ctx,
        )
        .unwrap();
        let grid = Grid::standard(16, &ctx).unwrap();
        let d = SurfaceField::from_fn(grid, &ctx, |x| x.clone().cos()).unwrap();
        let exp = tfe_expansion(&prof, &d, 4, 12, &ctx).unwrap();
        // field orders scale like eps^n
        for n in 1..=4 {
            let total: f64 = exp.gamma[n].iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt();
            let prev: f64 = exp.gamma[n - 1]
                .iter()
                .map(|v| v.to_f64().powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(total < prev * eps * 10.0, "order {n}: {total:.3e} vs {prev:.3e}");
        }
        // vertical coefficients decay spectrally at order 0
        let k = &exp.kappa[0];
        assert!(k[8].to_f64() < 1e-6 * k[0].to_f64());
    }
}
