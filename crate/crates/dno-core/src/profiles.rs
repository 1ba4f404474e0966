//! Wave profiles and closed-form Dirichlet/Neumann test pairs, plus a
//! JSON coefficient-file format for externally computed wave data.

use crate::error::{DnoError, Result};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use crate::spectral::{self, Grid, SurfaceField};
use rug::Assign;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Fluid depth: finite `h > 0` below the mean level, or infinite.
#[derive(Debug, Clone)]
pub enum Depth {
    Finite(MpReal),
    Infinite,
}

impl Depth {
    pub fn finite(h: MpReal) -> Result<Self> {
        if !(h.is_finite() && h.is_sign_positive() && !h.is_zero()) {
            return Err(DnoError::Config("finite depth must be positive".into()));
        }
        Ok(Depth::Finite(h))
    }

    pub fn as_finite(&self) -> Option<&MpReal> {
        match self {
            Depth::Finite(h) => Some(h),
            Depth::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Depth::Infinite)
    }
}

/// Real periodic wave profile given by Fourier coefficients.
///
/// Only `k >= 0` is stored; negative modes are implied by conjugate
/// symmetry.  `eta_max` is located numerically on construction (the
/// scaling of the eigenfunction bases needs it).
#[derive(Debug, Clone)]
pub struct WaveProfile {
    /// (k, coefficient) with k >= 0, strictly increasing
    coeffs: Vec<(i64, MpComplex)>,
    depth: Depth,
    period: MpReal,
    eta_max: MpReal,
}

impl WaveProfile {
    pub fn new(
        mut coeffs: Vec<(i64, MpComplex)>,
        depth: Depth,
        period: MpReal,
        ctx: &PrecisionCtx,
    ) -> Result<Self> {
        coeffs.sort_by_key(|(k, _)| *k);
        for w in coeffs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DnoError::Config(format!("duplicate mode k={}", w[0].0)));
            }
        }
        for (k, c) in &coeffs {
            if *k < 0 {
                return Err(DnoError::Config(
                    "store only k >= 0; negative modes are implied".into(),
                ));
            }
            if !c.real().is_finite() || !c.imag().is_finite() {
                return Err(DnoError::NonFinite("profile coefficient"));
            }
            if *k == 0 && !c.imag().is_zero() {
                return Err(DnoError::Config(
                    "mean coefficient of a real profile must be real".into(),
                ));
            }
        }
        if !(period.is_finite() && period.is_sign_positive() && !period.is_zero()) {
            return Err(DnoError::Config("period must be positive".into()));
        }
        let eta_max = locate_max(&coeffs, &period, ctx);
        if let Depth::Finite(h) = &depth {
            // surface must stay above the bottom; a cheap necessary check
            let mut min_est = ctx.zero();
            for (k, c) in &coeffs {
                let a = c.clone().abs().into_real_imag().0;
                if *k == 0 {
                    min_est += c.real();
                } else {
                    min_est -= a * ctx.real_from_i64(2);
                }
            }
            if min_est <= -h.clone() {
                // fall back to sampled minimum before rejecting
                let m = sample_count(&coeffs);
                let grid = Grid::new(m, period.clone())?;
                let mut min_v = ctx.nan();
                for x in grid.points(ctx) {
                    let v = eval_profile(&coeffs, &x, &period, ctx);
                    if min_v.is_nan() || v < min_v {
                        min_v = v;
                    }
                }
                if min_v <= -h.clone() {
                    return Err(DnoError::Config(
                        "surface dips to or below the flat bottom".into(),
                    ));
                }
            }
        }
        Ok(WaveProfile {
            coeffs,
            depth,
            period,
            eta_max,
        })
    }

    pub fn depth(&self) -> &Depth {
        &self.depth
    }

    pub fn period(&self) -> &MpReal {
        &self.period
    }

    pub fn eta_max(&self) -> &MpReal {
        &self.eta_max
    }

    /// Stored coefficients, `k >= 0` ascending.
    pub fn coeffs(&self) -> &[(i64, MpComplex)] {
        &self.coeffs
    }

    pub fn max_mode(&self) -> i64 {
        self.coeffs.last().map_or(0, |(k, _)| *k)
    }

    /// Coefficient for any signed mode index.
    pub fn coeff(&self, k: i64, ctx: &PrecisionCtx) -> MpComplex {
        let idx = self.coeffs.binary_search_by_key(&k.abs(), |(q, _)| *q);
        match idx {
            Ok(i) => {
                if k >= 0 {
                    self.coeffs[i].1.clone()
                } else {
                    self.coeffs[i].1.clone().conj()
                }
            }
            Err(_) => ctx.complex_zero(),
        }
    }

    /// Evaluate the profile at a point by direct Fourier summation.
    pub fn eval(&self, x: &MpReal, ctx: &PrecisionCtx) -> MpReal {
        eval_profile(&self.coeffs, x, &self.period, ctx)
    }

    /// Slope at a point.
    pub fn eval_slope(&self, x: &MpReal, ctx: &PrecisionCtx) -> MpReal {
        eval_profile_derivative(&self.coeffs, x, &self.period, ctx, 1)
    }

    pub fn eval_curvature(&self, x: &MpReal, ctx: &PrecisionCtx) -> MpReal {
        eval_profile_derivative(&self.coeffs, x, &self.period, ctx, 2)
    }

    /// Sample onto a periodic grid (the grid must share the period).
    pub fn sample(&self, grid: &Grid, ctx: &PrecisionCtx) -> Result<SurfaceField> {
        let dp = (grid.period().clone() - &self.period).abs();
        let mut tol = self.period.clone();
        tol >>= ctx.bits() - 8;
        if dp > tol {
            return Err(DnoError::GridMismatch(
                "grid period differs from profile period".into(),
            ));
        }
        let values = grid
            .points(ctx)
            .iter()
            .map(|x| self.eval(x, ctx))
            .collect();
        SurfaceField::from_values(grid.clone(), values, ctx)
    }

    /// Profile scaled by a real factor (same depth and period).
    pub fn scaled(&self, lambda: &MpReal, ctx: &PrecisionCtx) -> Result<WaveProfile> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| (*k, c.clone() * ctx.complex_from_real(lambda)))
            .collect();
        WaveProfile::new(coeffs, self.depth.clone(), self.period.clone(), ctx)
    }
}

fn sample_count(coeffs: &[(i64, MpComplex)]) -> usize {
    let kmax = coeffs.last().map_or(0, |(k, _)| *k).max(1) as usize;
    (4 * kmax).next_power_of_two().max(64)
}

fn eval_profile(
    coeffs: &[(i64, MpComplex)],
    x: &MpReal,
    period: &MpReal,
    ctx: &PrecisionCtx,
) -> MpReal {
    let kappa = ctx.two_pi() / period;
    let mut acc = ctx.zero();
    for (k, c) in coeffs {
        if *k == 0 {
            acc += c.real();
        } else {
            let theta = kappa.clone() * ctx.real_from_i64(*k) * x;
            let (s, co) = theta.sin_cos(ctx.zero());
            // 2 Re{c e^{i theta}}
            let mut term = c.real().clone() * co;
            term -= c.imag().clone() * s;
            term <<= 1;
            acc += term;
        }
    }
    acc
}

/// `order`-th derivative (order 1 or 2) of the profile at `x`.
fn eval_profile_derivative(
    coeffs: &[(i64, MpComplex)],
    x: &MpReal,
    period: &MpReal,
    ctx: &PrecisionCtx,
    order: u32,
) -> MpReal {
    let kappa = ctx.two_pi() / period;
    let mut acc = ctx.zero();
    for (k, c) in coeffs {
        if *k == 0 {
            continue;
        }
        let kw = kappa.clone() * ctx.real_from_i64(*k);
        let theta = kw.clone() * x;
        let (s, co) = theta.sin_cos(ctx.zero());
        let term = match order {
            // 2 Re{i kw c e^{i theta}} = -2 kw (im c cos + re c sin)
            1 => {
                let mut t = c.imag().clone() * co;
                t += c.real().clone() * s;
                t *= -kw;
                t <<= 1;
                t
            }
            // 2 Re{-(kw)^2 c e^{i theta}}
            2 => {
                let mut t = c.real().clone() * co;
                t -= c.imag().clone() * s;
                t *= -(kw.clone().square());
                t <<= 1;
                t
            }
            _ => unreachable!(),
        };
        acc += term;
    }
    acc
}

/// Grid-scan plus Newton polish for the surface maximum.
fn locate_max(coeffs: &[(i64, MpComplex)], period: &MpReal, ctx: &PrecisionCtx) -> MpReal {
    if coeffs.is_empty() {
        return ctx.zero();
    }
    let m = sample_count(coeffs);
    let mut best_x = ctx.zero();
    let mut best = ctx.nan();
    for j in 0..m {
        let x = ctx.real_from_i64(j as i64) * period / ctx.real_from_i64(m as i64);
        let v = eval_profile(coeffs, &x, period, ctx);
        if best.is_nan() || v > best {
            best.assign(&v);
            best_x = x;
        }
    }
    // Newton on the slope; bail out if the curvature is too small
    let mut x = best_x;
    for _ in 0..ctx.bits() {
        let d1 = eval_profile_derivative(coeffs, &x, period, ctx, 1);
        let d2 = eval_profile_derivative(coeffs, &x, period, ctx, 2);
        if d2.is_zero() || !d2.is_sign_negative() {
            break;
        }
        let step = d1 / d2;
        let sabs = step.clone().abs();
        x -= step;
        let mut tiny = period.clone();
        tiny >>= ctx.bits() - 2;
        if sabs < tiny {
            break;
        }
    }
    let polished = eval_profile(coeffs, &x, period, ctx);
    if polished > best {
        polished
    } else {
        best
    }
}

/// The three running example profiles, all `2 pi`-periodic with unit
/// nominal amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `f = cos(x - pi/6)`: a single harmonic.
    BandLimited,
    /// `f_k = e^{-|k|}`: real analytic, closed form
    /// `sinh(1) / (cosh(1) - cos x)`.
    Analytic,
    /// `f_k = e^{-1.5 |k|^{2/3}}`: smooth but not analytic.
    Smooth,
}

/// Build one of the example profiles, truncated to `|k| <= kmax`.
pub fn example_profile(
    kind: ProfileKind,
    kmax: i64,
    depth: Depth,
    ctx: &PrecisionCtx,
) -> Result<WaveProfile> {
    match kind {
        ProfileKind::BandLimited => {
            // cos(x - pi/6): modes +-1 with coefficient e^{-+ i pi/6}/2
            let theta = ctx.pi() / ctx.real_from_i64(6);
            let (s, c) = theta.sin_cos(ctx.zero());
            let mut coef = ctx.complex(c, -s);
            coef /= 2u32;
            WaveProfile::new(vec![(1, coef)], depth, ctx.two_pi(), ctx)
        }
        ProfileKind::Analytic => decaying_profile(kmax, depth, ctx, |k| ctx.real_from_i64(k)),
        ProfileKind::Smooth => decaying_profile(kmax, depth, ctx, |k| {
            // 1.5 k^(2/3)
            let p = ctx.real_from_i64(k).root(3).square();
            p * ctx.real_ratio(3, 2)
        }),
    }
}

/// The general decaying family `f_k = e^{-alpha |k|^beta}`.
pub fn decaying_family_profile(
    alpha: &MpReal,
    beta: &MpReal,
    kmax: i64,
    depth: Depth,
    ctx: &PrecisionCtx,
) -> Result<WaveProfile> {
    decaying_profile(kmax, depth, ctx, |k| {
        use rug::ops::Pow;
        let p = ctx.real_from_i64(k).pow(beta);
        p * alpha
    })
}

fn decaying_profile(
    kmax: i64,
    depth: Depth,
    ctx: &PrecisionCtx,
    exponent: impl Fn(i64) -> MpReal,
) -> Result<WaveProfile> {
    if kmax < 1 {
        return Err(DnoError::Config("profile truncation needs kmax >= 1".into()));
    }
    let mut coeffs = vec![(0, ctx.complex_from_real(&ctx.one()))];
    for k in 1..=kmax {
        let c = (-exponent(k)).exp();
        coeffs.push((k, ctx.complex_from_real(&c)));
    }
    WaveProfile::new(coeffs, depth, ctx.two_pi(), ctx)
}

/// A profile together with closed-form Dirichlet and Neumann traces of a
/// known harmonic function, used as an exact oracle for every method.
pub struct ExactPair {
    pub profile: WaveProfile,
    epsilon: MpReal,
    offset: MpReal,
}

impl ExactPair {
    /// Dirichlet trace at a point.
    pub fn dirichlet_at(&self, x: &MpReal, ctx: &PrecisionCtx) -> Result<MpReal> {
        let y = self.profile.eval(x, ctx);
        let (phi, _, _) = self.potential(x, &y, ctx)?;
        Ok(phi)
    }

    /// Neumann trace `phi_y - eta_x phi_x` at a point.
    pub fn neumann_at(&self, x: &MpReal, ctx: &PrecisionCtx) -> Result<MpReal> {
        let y = self.profile.eval(x, ctx);
        let (_, phi_x, phi_y) = self.potential(x, &y, ctx)?;
        let slope = self.profile.eval_slope(x, ctx);
        Ok(phi_y - slope * phi_x)
    }

    pub fn dirichlet_field(&self, grid: &Grid, ctx: &PrecisionCtx) -> Result<SurfaceField> {
        let mut values = Vec::with_capacity(grid.len());
        for x in grid.points(ctx) {
            values.push(self.dirichlet_at(&x, ctx)?);
        }
        SurfaceField::from_values(grid.clone(), values, ctx)
    }

    pub fn neumann_field(&self, grid: &Grid, ctx: &PrecisionCtx) -> Result<SurfaceField> {
        let mut values = Vec::with_capacity(grid.len());
        for x in grid.points(ctx) {
            values.push(self.neumann_at(&x, ctx)?);
        }
        SurfaceField::from_values(grid.clone(), values, ctx)
    }

    /// `(phi, phi_x, phi_y)` at an interior/surface point, with a pole
    /// guard on the sampled location.
    fn potential(&self, x: &MpReal, y: &MpReal, ctx: &PrecisionCtx) -> Result<(MpReal, MpReal, MpReal)> {
        let z = ctx.complex(x.clone(), y.clone());
        let half = ctx.real_ratio(1, 2);
        let mut guard = ctx.one();
        guard >>= ctx.bits() / 2;
        match self.profile.depth() {
            Depth::Infinite => {
                // phi = Im{cot(z/2)}/2 + 1/2 ; F'(z) = -csc^2(z/2)/4
                let zh = z / &ctx.complex_from_f64(2.0, 0.0);
                let sin = zh.clone().sin();
                if sin.clone().abs().real() < &guard {
                    return Err(DnoError::PoleOnSurface(format!("{:.6}", x.to_f64())));
                }
                let cot = zh.cos() / &sin;
                let phi = cot.imag().clone() * &half + &half;
                let mut fp = ctx.complex_from_f64(-0.25, 0.0);
                fp /= sin.clone().square();
                Ok((phi, fp.imag().clone(), fp.real().clone()))
            }
            Depth::Finite(h) => {
                // phi = Im{cot(z/2) - cot((z+2ih)/2)}/2
                let two = ctx.complex_from_f64(2.0, 0.0);
                let zh = z.clone() / &two;
                let zi = (z + ctx.complex(ctx.zero(), h.clone() * ctx.real_from_i64(2))) / &two;
                let sin1 = zh.clone().sin();
                let sin2 = zi.clone().sin();
                if sin1.clone().abs().real() < &guard || sin2.clone().abs().real() < &guard {
                    return Err(DnoError::PoleOnSurface(format!("{:.6}", x.to_f64())));
                }
                let cot1 = zh.cos() / &sin1;
                let cot2 = zi.cos() / &sin2;
                let phi = (cot1 - cot2).imag().clone() * &half;
                // F' = -(csc^2(z/2) - csc^2((z+2ih)/2))/4
                let mut fp = ctx.complex_from_real(&ctx.one()) / sin1.square();
                fp -= ctx.complex_from_real(&ctx.one()) / sin2.square();
                fp /= -ctx.complex_from_f64(4.0, 0.0);
                Ok((phi, fp.imag().clone(), fp.real().clone()))
            }
        }
    }
}

/// Exact pair for the profile `eta(x) = offset - epsilon cos x` from a
/// periodic array of poles at `y = 0` (plus images at `y = -2h` when the
/// depth is finite).
pub fn polepair_exact(
    epsilon: &MpReal,
    offset: &MpReal,
    depth: Depth,
    ctx: &PrecisionCtx,
) -> Result<ExactPair> {
    let mut c1 = ctx.complex_from_real(epsilon);
    c1 /= -2i32;
    let mut coeffs = vec![(1, c1)];
    if !offset.is_zero() {
        coeffs.insert(0, (0, ctx.complex_from_real(offset)));
    }
    let profile = WaveProfile::new(coeffs, depth, ctx.two_pi(), ctx)?;
    let pair = ExactPair {
        profile,
        epsilon: epsilon.clone(),
        offset: offset.clone(),
    };
    // reject immediately if the surface passes through a pole
    let x0 = ctx.zero();
    pair.dirichlet_at(&x0, ctx)?;
    Ok(pair)
}

impl ExactPair {
    pub fn epsilon(&self) -> &MpReal {
        &self.epsilon
    }

    pub fn offset(&self) -> &MpReal {
        &self.offset
    }
}

/// Partial sums of the explicit (divergent) series representation of the
/// pole-pair Dirichlet and Neumann data for `eta = -epsilon cos x` at
/// infinite depth: `c_0 = 1`, `c_k = e^{|k| eta_max}/2`.  Converges where
/// `eta < 0`, diverges where `eta >= 0`.
pub fn divergent_series_demo(
    epsilon: &MpReal,
    truncation: i64,
    grid: &Grid,
    ctx: &PrecisionCtx,
) -> Result<(Vec<MpReal>, Vec<MpReal>)> {
    if truncation < 1 {
        return Err(DnoError::Config("series truncation must be >= 1".into()));
    }
    let points = grid.points(ctx);
    let mut d_out = Vec::with_capacity(points.len());
    let mut n_out = Vec::with_capacity(points.len());
    for x in &points {
        let eta = -(x.clone().cos() * epsilon);
        let eta_x = x.clone().sin() * epsilon;
        // D = 1 + sum_{k>=1} e^{k eta} cos kx
        // N = -i d/dx sum_k c_k sgn(k) e^{|k|(eta - eta_max)} e^{ikx}
        //   = sum_{k>=1} e^{k eta} [ k cos kx - k eta_x sin kx ]  (pairing +-k)
        let mut d = ctx.one();
        let mut n = ctx.zero();
        for k in 1..=truncation {
            let kk = ctx.real_from_i64(k);
            let growth = (eta.clone() * &kk).exp();
            let theta = x.clone() * &kk;
            let (s, c) = theta.sin_cos(ctx.zero());
            d += growth.clone() * &c;
            let mut term = c * &kk;
            term -= s * &kk * &eta_x;
            n += growth * term;
        }
        d_out.push(d);
        n_out.push(n);
    }
    Ok((d_out, n_out))
}

/// Residual of the discretized global relation for a single wavenumber:
/// zero (to quadrature accuracy) whenever `(D, N)` are the surface traces
/// of one harmonic function.
pub fn global_relation_residual(
    profile: &WaveProfile,
    dirichlet: &SurfaceField,
    neumann: &SurfaceField,
    k: i64,
    ctx: &PrecisionCtx,
) -> Result<MpReal> {
    let grid = dirichlet.grid().clone();
    if neumann.grid().len() != grid.len() {
        return Err(DnoError::GridMismatch("global_relation_residual".into()));
    }
    let dx = spectral::derivative(dirichlet, ctx)?;
    let eta = profile.sample(&grid, ctx)?;
    let kw = grid.wavenumber(k, ctx);
    let mut lhs = ctx.complex_zero();
    let mut rhs = ctx.complex_zero();
    for (j, x) in grid.points(ctx).iter().enumerate() {
        let theta = kw.clone() * x;
        let (s, c) = theta.sin_cos(ctx.zero());
        let phase = ctx.complex(c, s); // e^{+ikx}
        let (wn, wd) = match profile.depth() {
            Depth::Infinite => {
                // limit h -> inf with weights cosh(k(eta_max + h)):
                // e^{|k|(eta - eta_max)} on both sides, i sinh -> i sgn(k) * ...
                let arg = (eta.values()[j].clone() - profile.eta_max()) * kw.clone().abs();
                let w = arg.exp();
                let sg = ctx.real_from_i64(spectral::sgn(k));
                (
                    ctx.complex_from_real(&w),
                    ctx.complex(ctx.zero(), w * sg),
                )
            }
            Depth::Finite(h) => {
                let arg = (eta.values()[j].clone() + h) * &kw;
                let scale = ((profile.eta_max().clone() + h) * &kw).cosh();
                let (sh, ch) = (arg.clone().sinh(), arg.cosh());
                (
                    ctx.complex_from_real(&(ch / &scale)),
                    ctx.complex(ctx.zero(), sh / &scale),
                )
            }
        };
        lhs += phase.clone() * wn * &ctx.complex_from_real(&neumann.values()[j]);
        rhs += phase * wd * &ctx.complex_from_real(&dx.values()[j]);
    }
    let w = grid.period().clone() / ctx.real_from_i64(grid.len() as i64);
    let diff = (lhs - rhs) * ctx.complex_from_real(&w);
    Ok(diff.abs().into_real_imag().0)
}

#[derive(Serialize, Deserialize)]
struct SurfaceFileJson {
    #[serde(rename = "L")]
    period: String,
    depth: String,
    eta: Vec<(i64, String, String)>,
    dirichlet: Vec<(i64, String, String)>,
    #[serde(default)]
    meta: serde_json::Map<String, serde_json::Value>,
}

/// Surface data loaded from a coefficient file: profile, Dirichlet trace
/// modes (`k >= 0`, conjugate symmetry implied), opaque metadata.
pub struct SurfaceData {
    pub profile: WaveProfile,
    pub dirichlet_modes: Vec<(i64, MpComplex)>,
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl SurfaceData {
    /// Synthesize the Dirichlet trace on a grid.
    pub fn dirichlet_field(&self, grid: &Grid, ctx: &PrecisionCtx) -> Result<SurfaceField> {
        let m = grid.len();
        let mut modes: Vec<MpComplex> = (0..m).map(|_| ctx.complex_zero()).collect();
        for (k, c) in &self.dirichlet_modes {
            if (*k as usize) >= m / 2 {
                return Err(DnoError::GridMismatch(format!(
                    "dirichlet mode k={k} does not fit on an {m}-point grid"
                )));
            }
            modes[grid.mode_to_bin(*k)].assign(c);
            if *k > 0 {
                modes[grid.mode_to_bin(-k)].assign(&c.clone().conj());
            }
        }
        SurfaceField::from_modes(grid.clone(), modes, ctx)
    }
}

fn parse_mode_list(
    list: &[(i64, String, String)],
    what: &str,
    ctx: &PrecisionCtx,
) -> Result<Vec<(i64, MpComplex)>> {
    let mut out = Vec::with_capacity(list.len());
    let mut prev: Option<i64> = None;
    for (k, re, im) in list {
        if *k < 0 {
            return Err(DnoError::SurfaceFile(format!(
                "{what}: negative mode index {k} (store k >= 0 only)"
            )));
        }
        if let Some(p) = prev {
            if *k <= p {
                return Err(DnoError::SurfaceFile(format!(
                    "{what}: mode indices must be strictly increasing at k={k}"
                )));
            }
        }
        prev = Some(*k);
        let re = ctx.parse_real(re).map_err(|e| {
            DnoError::SurfaceFile(format!("{what} k={k}: {e}"))
        })?;
        let im = ctx.parse_real(im).map_err(|e| {
            DnoError::SurfaceFile(format!("{what} k={k}: {e}"))
        })?;
        if *k == 0 && !im.is_zero() {
            return Err(DnoError::SurfaceFile(format!(
                "{what}: k=0 coefficient must be real for a real field"
            )));
        }
        out.push((*k, ctx.complex(re, im)));
    }
    Ok(out)
}

pub fn load_surface_file(path: &Path, ctx: &PrecisionCtx) -> Result<SurfaceData> {
    let text = std::fs::read_to_string(path)?;
    let file: SurfaceFileJson = serde_json::from_str(&text)?;
    let period = ctx
        .parse_real(&file.period)
        .map_err(|e| DnoError::SurfaceFile(format!("period: {e}")))?;
    let depth = if file.depth == "inf" {
        Depth::Infinite
    } else {
        let h = ctx
            .parse_real(&file.depth)
            .map_err(|e| DnoError::SurfaceFile(format!("depth: {e}")))?;
        Depth::finite(h)?
    };
    let eta = parse_mode_list(&file.eta, "eta", ctx)?;
    let dirichlet_modes = parse_mode_list(&file.dirichlet, "dirichlet", ctx)?;
    let profile = WaveProfile::new(eta, depth, period, ctx)?;
    Ok(SurfaceData {
        profile,
        dirichlet_modes,
        meta: file.meta,
    })
}

pub fn save_surface_file(
    path: &Path,
    data: &SurfaceData,
    ctx: &PrecisionCtx,
) -> Result<()> {
    let fmt = |c: &MpComplex| {
        (
            ctx.format_real(&c.real().clone()),
            ctx.format_real(&c.imag().clone()),
        )
    };
    let eta = data
        .profile
        .coeffs()
        .iter()
        .map(|(k, c)| {
            let (re, im) = fmt(c);
            (*k, re, im)
        })
        .collect();
    let dirichlet = data
        .dirichlet_modes
        .iter()
        .map(|(k, c)| {
            let (re, im) = fmt(c);
            (*k, re, im)
        })
        .collect();
    let file = SurfaceFileJson {
        period: ctx.format_real(data.profile.period()),
        depth: match data.profile.depth() {
            Depth::Infinite => "inf".into(),
            Depth::Finite(h) => ctx.format_real(h),
        },
        eta,
        dirichlet,
        meta: data.meta.clone(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionCtx {
        PrecisionCtx::quad()
    }

    #[test]
    fn bandlimited_modes() {
        let ctx = ctx();
        let p = example_profile(ProfileKind::BandLimited, 1, Depth::Infinite, &ctx).unwrap();
        assert_eq!(p.coeffs().len(), 1);
        let c = p.coeff(1, &ctx);
        // e^{-i pi/6}/2
        let theta = ctx.pi() / ctx.real_from_i64(6);
        assert!((c.clone().abs().real().clone() - ctx.real_ratio(1, 2)).abs().to_f64() < 1e-30);
        assert!((c.imag().clone() + theta.sin() / ctx.real_from_i64(2)).abs().to_f64() < 1e-30);
        // f(pi/6) = 1 at the phase shift
        let x = ctx.pi() / ctx.real_from_i64(6);
        assert!((p.eval(&x, &ctx) - ctx.one()).abs().to_f64() < 1e-30);
    }

    #[test]
    fn analytic_closed_form() {
        let ctx = ctx();
        let p = example_profile(ProfileKind::Analytic, 300, Depth::Infinite, &ctx).unwrap();
        // sum e^{-|k|} e^{ikx} = sinh 1 / (cosh 1 - cos x)
        for xf in [0.0, 0.7, 2.0, 3.14] {
            let x = ctx.real_from_f64(xf);
            let got = p.eval(&x, &ctx);
            let expect = ctx.one().sinh() / (ctx.one().cosh() - x.cos());
            assert!((got - expect).abs().to_f64() < 1e-30, "x={xf}");
        }
        // value at 0: sinh(1)/(cosh(1)-1) ~ 2.163953
        let v = p.eval(&ctx.zero(), &ctx).to_f64();
        assert!((v - 2.163953).abs() < 1e-5);
    }

    #[test]
    fn smooth_profile_mode_8() {
        let ctx = ctx();
        let p = example_profile(ProfileKind::Smooth, 16, Depth::Infinite, &ctx).unwrap();
        // exponent 1.5 * 8^(2/3) = 6
        let c = p.coeff(8, &ctx);
        let expect = (-ctx.real_from_i64(6)).exp();
        assert!((c.real().clone() - &expect).abs().to_f64() < 1e-30);
        assert!((expect.to_f64() - 2.4788e-3).abs() < 1e-6);
    }

    #[test]
    fn general_family_matches_examples() {
        let ctx = ctx();
        let a = decaying_family_profile(&ctx.one(), &ctx.one(), 50, Depth::Infinite, &ctx).unwrap();
        let b = example_profile(ProfileKind::Analytic, 50, Depth::Infinite, &ctx).unwrap();
        for k in 0..=50 {
            let d = (a.coeff(k, &ctx) - b.coeff(k, &ctx)).abs().real().to_f64();
            assert!(d < 1e-32);
        }
    }

    #[test]
    fn eta_max_of_cosine() {
        let ctx = ctx();
        let eps = ctx.real_from_f64(0.5);
        let pair = polepair_exact(&eps, &ctx.zero(), Depth::Infinite, &ctx).unwrap();
        // max of -0.5 cos x is 0.5
        assert!((pair.profile.eta_max().clone() - &eps).abs().to_f64() < 1e-30);
    }

    #[test]
    fn eta_max_newton_polish_off_grid() {
        let ctx = ctx();
        // eta = cos x + 0.3 sin 2x has an off-grid maximum
        let half = ctx.complex_from_f64(0.5, 0.0);
        let coeffs = vec![
            (1, half),
            (2, ctx.complex_from_f64(0.0, -0.15)),
        ];
        let p = WaveProfile::new(coeffs, Depth::Infinite, ctx.two_pi(), &ctx).unwrap();
        // verify stationarity: slope at located maximum ~ 0 by dense scan
        let m = 1 << 14;
        let mut best = ctx.nan();
        for j in 0..m {
            let x = ctx.real_from_i64(j) * ctx.two_pi() / ctx.real_from_i64(m);
            let v = p.eval(&x, &ctx);
            if best.is_nan() || v > best {
                best = v;
            }
        }
        assert!((p.eta_max().clone() - &best).abs().to_f64() < 1e-7);
        assert!(p.eta_max() >= &best);
    }

    #[test]
    fn polepair_values_at_origin() {
        let ctx = ctx();
        let eps = ctx.real_from_f64(0.5);
        let pair = polepair_exact(&eps, &ctx.zero(), Depth::Infinite, &ctx).unwrap();
        let d0 = pair.dirichlet_at(&ctx.zero(), &ctx).unwrap();
        let n0 = pair.neumann_at(&ctx.zero(), &ctx).unwrap();
        // D(0) = (sinh(.5)/(cosh(.5)-1))/2 + 1/2 ; N(0) = 1/(2(cosh(.5)-1))
        let ch = ctx.real_from_f64(0.5).cosh();
        let sh = ctx.real_from_f64(0.5).sinh();
        let d_expect = sh / (ch.clone() - ctx.one()) / ctx.real_from_i64(2) + ctx.real_ratio(1, 2);
        let n_expect = ctx.one() / ((ch - ctx.one()) * ctx.real_from_i64(2));
        assert!((d0.clone() - d_expect).abs().to_f64() < 1e-30);
        assert!((n0.clone() - n_expect).abs().to_f64() < 1e-30);
        assert!((d0.to_f64() - 2.5414947).abs() < 1e-6);
        assert!((n0.to_f64() - 3.91766).abs() < 1e-4);
    }

    #[test]
    fn polepair_matches_closed_form_everywhere() {
        let ctx = ctx();
        let eps = ctx.real_from_f64(0.5);
        let pair = polepair_exact(&eps, &ctx.zero(), Depth::Infinite, &ctx).unwrap();
        for xf in [0.3, 1.1, 2.5, 4.0, 5.9] {
            let x = ctx.real_from_f64(xf);
            let ec = x.clone().cos() * &eps;
            let d_expect = (ec.clone().sinh() / (ec.clone().cosh() - x.clone().cos()) + ctx.one())
                / ctx.real_from_i64(2);
            let num = ec.clone().cosh() * x.clone().cos() - ctx.one()
                + x.clone().sin().square() * ec.clone().sinh() * &eps;
            let den = (ec.cosh() - x.clone().cos()).square() * ctx.real_from_i64(2);
            let n_expect = num / den;
            let d = pair.dirichlet_at(&x, &ctx).unwrap();
            let n = pair.neumann_at(&x, &ctx).unwrap();
            assert!((d - d_expect).abs().to_f64() < 1e-30, "D at {xf}");
            assert!((n - n_expect).abs().to_f64() < 1e-30, "N at {xf}");
        }
    }

    #[test]
    fn polepair_rejects_pole_on_surface() {
        let ctx = ctx();
        // offset = epsilon puts eta(0) = 0, exactly on the pole
        let eps = ctx.real_from_f64(0.5);
        assert!(matches!(
            polepair_exact(&eps, &eps, Depth::Infinite, &ctx),
            Err(DnoError::PoleOnSurface(_))
        ));
    }

    #[test]
    fn global_relation_infinite_depth() {
        let ctx = PrecisionCtx::new(200).unwrap();
        let eps = ctx.real_from_f64(0.5);
        let pair = polepair_exact(&eps, &ctx.zero(), Depth::Infinite, &ctx).unwrap();
        let mut prev = f64::MAX;
        for m in [64usize, 128, 256] {
            let grid = Grid::standard(m, &ctx).unwrap();
            let d = pair.dirichlet_field(&grid, &ctx).unwrap();
            let n = pair.neumann_field(&grid, &ctx).unwrap();
            let mut worst = 0f64;
            for k in [-3i64, -1, 0, 2, 5] {
                let r = global_relation_residual(&pair.profile, &d, &n, k, &ctx)
                    .unwrap()
                    .to_f64();
                worst = worst.max(r);
            }
            // spectral decay with M
            assert!(worst < prev.max(1e-10), "M={m}: {worst} !< {prev}");
            prev = worst;
        }
        assert!(prev < 1e-25, "finest-grid residual {prev}");
    }

    #[test]
    fn global_relation_finite_depth() {
        let ctx = PrecisionCtx::new(200).unwrap();
        let eps = ctx.real_from_f64(0.3);
        let h = ctx.one();
        let pair = polepair_exact(&eps, &ctx.zero(), Depth::finite(h).unwrap(), &ctx).unwrap();
        let grid = Grid::standard(256, &ctx).unwrap();
        let d = pair.dirichlet_field(&grid, &ctx).unwrap();
        let n = pair.neumann_field(&grid, &ctx).unwrap();
        for k in [-4i64, -1, 0, 1, 3] {
            let r = global_relation_residual(&pair.profile, &d, &n, k, &ctx)
                .unwrap()
                .to_f64();
            assert!(r < 1e-25, "k={k}: residual {r}");
        }
    }

    #[test]
    fn finite_depth_pair_approaches_infinite_depth() {
        let ctx = ctx();
        let eps = ctx.real_from_f64(0.4);
        let inf = polepair_exact(&eps, &ctx.zero(), Depth::Infinite, &ctx).unwrap();
        let deep = polepair_exact(
            &eps,
            &ctx.zero(),
            Depth::finite(ctx.real_from_i64(30)).unwrap(),
            &ctx,
        )
        .unwrap();
        let x = ctx.real_from_f64(1.2);
        let d_gap = (inf.dirichlet_at(&x, &ctx).unwrap() - deep.dirichlet_at(&x, &ctx).unwrap())
            .abs()
            .to_f64();
        let n_gap = (inf.neumann_at(&x, &ctx).unwrap() - deep.neumann_at(&x, &ctx).unwrap())
            .abs()
            .to_f64();
        // image terms decay like e^{-2h}
        assert!(d_gap < 1e-20 && n_gap < 1e-20);
    }

    #[test]
    fn flat_limit_neumann_is_abs_d_of_dirichlet() {
        let ctx = ctx();
        // tiny epsilon: N ~ |D| D with O(eps) error
        let eps = ctx.real_from_f64(1e-8);
        let off = ctx.real_from_f64(-0.7);
        let pair = polepair_exact(&eps, &off, Depth::Infinite, &ctx).unwrap();
        let grid = Grid::standard(128, &ctx).unwrap();
        let d = pair.dirichlet_field(&grid, &ctx).unwrap();
        let n = pair.neumann_field(&grid, &ctx).unwrap();
        let abs_d = spectral::apply_multiplier(&d, &ctx, |k| {
            ctx.complex_from_real(&grid.wavenumber(k, &ctx).abs())
        })
        .unwrap();
        let gap = n.sub(&abs_d, &ctx).unwrap().rms(&ctx).to_f64();
        assert!(gap < 1e-6, "gap {gap}");
    }

    #[test]
    fn divergent_series_coefficient_values() {
        let ctx = ctx();
        // c_0 = 1 and c_3 = e^{1.5}/2 for eps = 0.5 are fixed by eta_max = eps
        let eps = ctx.real_from_f64(0.5);
        let c3 = (ctx.real_from_f64(1.5)).exp() / ctx.real_from_i64(2);
        assert!((c3.to_f64() - 2.2408).abs() < 1e-4);
        // and the partial sums evaluate those coefficients implicitly:
        let grid = Grid::standard(128, &ctx).unwrap();
        let (d, _) = divergent_series_demo(&eps, 64, &grid, &ctx).unwrap();
        assert!(d.len() == 128);
    }

    #[test]
    fn divergent_series_converges_in_trough_diverges_at_crest() {
        let ctx = ctx();
        let eps = ctx.real_from_f64(0.5);
        let grid = Grid::standard(128, &ctx).unwrap();
        let pair = polepair_exact(&eps, &ctx.zero(), Depth::Infinite, &ctx).unwrap();
        let (d64, _) = divergent_series_demo(&eps, 64, &grid, &ctx).unwrap();
        let (d128, _) = divergent_series_demo(&eps, 128, &grid, &ctx).unwrap();
        // x = 0: eta = -0.5 < 0, series converges to the exact value
        let exact0 = pair.dirichlet_at(&ctx.zero(), &ctx).unwrap();
        assert!((d64[0].clone() - &exact0).abs().to_f64() < 1e-8);
        assert!((d128[0].clone() - exact0).abs().to_f64() < 1e-17);
        // x = pi (grid index 64): eta = +0.5, partial sums blow up with K
        let j_pi = 64;
        assert!(d128[j_pi].clone().abs() > d64[j_pi].clone().abs());
        assert!(d128[j_pi].to_f64().abs() > 1e10);
    }

    #[test]
    fn surface_file_roundtrip() {
        let ctx = PrecisionCtx::new(300).unwrap();
        let p = example_profile(ProfileKind::Analytic, 100, Depth::Infinite, &ctx).unwrap();
        let dirichlet_modes: Vec<(i64, MpComplex)> = (0..5)
            .map(|k| {
                (
                    k,
                    if k == 0 {
                        ctx.complex_from_f64(0.25, 0.0)
                    } else {
                        ctx.complex_from_f64(1.0 / (k as f64 + 1.0), 0.125 * k as f64)
                    },
                )
            })
            .collect();
        let mut meta = serde_json::Map::new();
        meta.insert("c".into(), serde_json::Value::String("0.27349".into()));
        let data = SurfaceData {
            profile: p,
            dirichlet_modes,
            meta,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surface.json");
        save_surface_file(&path, &data, &ctx).unwrap();
        let back = load_surface_file(&path, &ctx).unwrap();
        assert_eq!(back.profile.coeffs().len(), data.profile.coeffs().len());
        for ((k1, c1), (k2, c2)) in back.profile.coeffs().iter().zip(data.profile.coeffs()) {
            assert_eq!(k1, k2);
            assert_eq!(c1, c2);
        }
        for ((k1, c1), (k2, c2)) in back.dirichlet_modes.iter().zip(&data.dirichlet_modes) {
            assert_eq!(k1, k2);
            assert_eq!(c1, c2);
        }
        assert_eq!(
            back.meta.get("c").and_then(|v| v.as_str()),
            Some("0.27349")
        );
    }

    #[test]
    fn surface_file_empty_eta_is_flat() {
        let ctx = ctx();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.json");
        std::fs::write(
            &path,
            r#"{"L": "6.28318530717958647692528676655900577", "depth": "inf",
                "eta": [], "dirichlet": [[0, "1", "0"]], "meta": {}}"#,
        )
        .unwrap();
        let data = load_surface_file(&path, &ctx).unwrap();
        assert!(data.profile.coeffs().is_empty());
        assert!(data.profile.eta_max().is_zero());
        let x = ctx.real_from_f64(1.0);
        assert!(data.profile.eval(&x, &ctx).is_zero());
    }

    #[test]
    fn surface_file_rejects_malformed() {
        let ctx = ctx();
        let dir = tempfile::tempdir().unwrap();
        let bad_order = dir.path().join("a.json");
        std::fs::write(
            &bad_order,
            r#"{"L": "6.28", "depth": "inf", "eta": [[2, "1", "0"], [1, "1", "0"]],
                "dirichlet": [], "meta": {}}"#,
        )
        .unwrap();
        assert!(matches!(
            load_surface_file(&bad_order, &ctx),
            Err(DnoError::SurfaceFile(_))
        ));
        let bad_sym = dir.path().join("b.json");
        std::fs::write(
            &bad_sym,
            r#"{"L": "6.28", "depth": "inf", "eta": [[0, "1", "0.5"]],
                "dirichlet": [], "meta": {}}"#,
        )
        .unwrap();
        assert!(matches!(
            load_surface_file(&bad_sym, &ctx),
            Err(DnoError::SurfaceFile(_))
        ));
    }

    #[test]
    fn profile_scaling() {
        let ctx = ctx();
        let p = example_profile(ProfileKind::Analytic, 40, Depth::Infinite, &ctx).unwrap();
        let lam = ctx.real_from_f64(0.25);
        let q = p.scaled(&lam, &ctx).unwrap();
        let x = ctx.real_from_f64(0.9);
        let d = (q.eval(&x, &ctx) - p.eval(&x, &ctx) * &lam).abs().to_f64();
        assert!(d < 1e-32);
    }
}
