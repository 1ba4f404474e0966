//! Periodic Fourier analysis on uniform grids: transforms between nodal
//! values and Fourier modes, Fourier-multiplier application, and the
//! trapezoidal inner product.  Chebyshev machinery lives in [`cheb`].

pub mod cheb;
pub mod fft;

use crate::error::{DnoError, Result};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use rug::Assign;

/// Uniform periodic grid: `M` collocation points `x_j = L j / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    m: usize,
    period: MpReal,
}

impl Grid {
    pub fn new(m: usize, period: MpReal) -> Result<Self> {
        if m < 4 {
            return Err(DnoError::GridTooSmall(m));
        }
        Ok(Grid { m, period })
    }

    /// Standard 2*pi-periodic grid.
    pub fn standard(m: usize, ctx: &PrecisionCtx) -> Result<Self> {
        Self::new(m, ctx.two_pi())
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn period(&self) -> &MpReal {
        &self.period
    }

    pub fn point(&self, j: usize, ctx: &PrecisionCtx) -> MpReal {
        ctx.real_from_i64(j as i64) * &self.period / ctx.real_from_i64(self.m as i64)
    }

    pub fn points(&self, ctx: &PrecisionCtx) -> Vec<MpReal> {
        (0..self.m).map(|j| self.point(j, ctx)).collect()
    }

    /// Physical wavenumber of integer mode `k`: `2 pi k / L`.
    pub fn wavenumber(&self, k: i64, ctx: &PrecisionCtx) -> MpReal {
        ctx.real_from_i64(k) * ctx.two_pi() / &self.period
    }

    /// Signed mode index of FFT bin `t`, in `(-M/2, M/2]`.
    pub fn bin_to_mode(&self, t: usize) -> i64 {
        if t <= self.m / 2 {
            t as i64
        } else {
            t as i64 - self.m as i64
        }
    }

    /// FFT bin of signed mode index `k` (must satisfy `|k| <= M/2`).
    pub fn mode_to_bin(&self, k: i64) -> usize {
        if k >= 0 {
            k as usize
        } else {
            (self.m as i64 + k) as usize
        }
    }

    pub fn nyquist_bin(&self) -> Option<usize> {
        if self.m % 2 == 0 {
            Some(self.m / 2)
        } else {
            None
        }
    }
}

/// Real periodic scalar field with paired nodal and Fourier-mode views.
///
/// The forward transform is 1/M-normalized, the Nyquist mode is zeroed on
/// synthesis, and real fields keep conjugate symmetry by construction.
#[derive(Debug, Clone)]
pub struct SurfaceField {
    grid: Grid,
    values: Vec<MpReal>,
    modes: Vec<MpComplex>,
}

impl SurfaceField {
    /// Build from nodal values; modes computed by the forward FFT.
    pub fn from_values(grid: Grid, values: Vec<MpReal>, ctx: &PrecisionCtx) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(DnoError::GridMismatch(format!(
                "{} values on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        let modes = forward_real(&values, ctx)?;
        Ok(SurfaceField { grid, values, modes })
    }

    /// Build from modes in FFT bin order; values synthesized with the
    /// Nyquist bin zeroed and conjugate symmetry enforced.
    pub fn from_modes(grid: Grid, mut modes: Vec<MpComplex>, ctx: &PrecisionCtx) -> Result<Self> {
        if modes.len() != grid.len() {
            return Err(DnoError::GridMismatch(format!(
                "{} modes on a {}-point grid",
                modes.len(),
                grid.len()
            )));
        }
        if let Some(ny) = grid.nyquist_bin() {
            modes[ny].assign(ctx.complex_zero());
        }
        enforce_conjugate_symmetry(&mut modes, &grid, ctx);
        let values = synthesize_real(&modes, ctx)?;
        Ok(SurfaceField { grid, values, modes })
    }

    /// Zero field on the given grid.
    pub fn zero(grid: Grid, ctx: &PrecisionCtx) -> Self {
        let m = grid.len();
        SurfaceField {
            grid,
            values: (0..m).map(|_| ctx.zero()).collect(),
            modes: (0..m).map(|_| ctx.complex_zero()).collect(),
        }
    }

    /// Sample a closed-form function on the grid.
    pub fn from_fn(
        grid: Grid,
        ctx: &PrecisionCtx,
        f: impl Fn(&MpReal) -> MpReal,
    ) -> Result<Self> {
        let values: Vec<MpReal> = grid.points(ctx).iter().map(f).collect();
        Self::from_values(grid, values, ctx)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[MpReal] {
        &self.values
    }

    pub fn modes(&self) -> &[MpComplex] {
        &self.modes
    }

    /// Fourier mode for signed index `k`; zero outside `|k| < M/2`.
    pub fn mode(&self, k: i64, ctx: &PrecisionCtx) -> MpComplex {
        let half = (self.grid.len() / 2) as i64;
        if k.abs() >= half && self.grid.len() % 2 == 0 {
            return ctx.complex_zero();
        }
        if k.unsigned_abs() as usize > self.grid.len() / 2 {
            return ctx.complex_zero();
        }
        self.modes[self.grid.mode_to_bin(k)].clone()
    }

    /// Root-mean-square of nodal values.
    pub fn rms(&self, ctx: &PrecisionCtx) -> MpReal {
        let mut acc = ctx.zero();
        for v in &self.values {
            acc += v.clone().square();
        }
        acc /= ctx.real_from_i64(self.grid.len() as i64);
        acc.sqrt()
    }

    /// Pointwise difference on a shared grid.
    pub fn sub(&self, other: &SurfaceField, ctx: &PrecisionCtx) -> Result<SurfaceField> {
        if self.grid.len() != other.grid.len() {
            return Err(DnoError::GridMismatch("sub on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.clone() - b)
            .collect();
        SurfaceField::from_values(self.grid.clone(), values, ctx)
    }
}

/// 1/M-normalized forward transform of a real nodal vector.
pub fn forward_real(values: &[MpReal], ctx: &PrecisionCtx) -> Result<Vec<MpComplex>> {
    let m = values.len();
    let p = fft::plan(m, ctx)?;
    let mut data: Vec<MpComplex> = values.iter().map(|v| ctx.complex_from_real(v)).collect();
    p.forward_raw(&mut data);
    let mm = ctx.real_from_i64(m as i64);
    for z in data.iter_mut() {
        *z /= &mm;
    }
    Ok(data)
}

/// 1/M-normalized forward transform of a complex nodal vector.
pub fn forward_complex(values: &mut Vec<MpComplex>, ctx: &PrecisionCtx) -> Result<()> {
    let m = values.len();
    let p = fft::plan(m, ctx)?;
    p.forward_raw(values);
    let mm = ctx.real_from_i64(m as i64);
    for z in values.iter_mut() {
        *z /= &mm;
    }
    Ok(())
}

/// Synthesis (unit-normalized inverse transform) of a complex spectrum.
pub fn inverse_complex(modes: &mut Vec<MpComplex>, ctx: &PrecisionCtx) -> Result<()> {
    let m = modes.len();
    let p = fft::plan(m, ctx)?;
    p.inverse_raw_unscaled(modes);
    Ok(())
}

fn synthesize_real(modes: &[MpComplex], ctx: &PrecisionCtx) -> Result<Vec<MpReal>> {
    let mut data = modes.to_vec();
    inverse_complex(&mut data, ctx)?;
    Ok(data.into_iter().map(|z| z.into_real_imag().0).collect())
}

fn enforce_conjugate_symmetry(modes: &mut [MpComplex], grid: &Grid, ctx: &PrecisionCtx) {
    let m = grid.len();
    let half = m / 2;
    for k in 1..m.div_ceil(2) {
        if m % 2 == 0 && k == half {
            continue;
        }
        let c = modes[k].clone().conj();
        modes[m - k].assign(&c);
    }
    // the mean of a real field is real
    let re = modes[0].real().clone();
    modes[0].assign(ctx.complex_from_real(&re));
}

/// Apply a Fourier multiplier `symbol(k)` to a real field.  The symbol is
/// called for every represented mode index and must return finite values;
/// real output requires `symbol(-k) = conj(symbol(k))`.
pub fn apply_multiplier(
    field: &SurfaceField,
    ctx: &PrecisionCtx,
    symbol: impl Fn(i64) -> MpComplex,
) -> Result<SurfaceField> {
    let grid = field.grid().clone();
    let m = grid.len();
    let mut modes = Vec::with_capacity(m);
    for t in 0..m {
        let k = grid.bin_to_mode(t);
        let s = symbol(k);
        if !s.real().is_finite() || !s.imag().is_finite() {
            return Err(DnoError::NonFinite("multiplier symbol"));
        }
        modes.push(s * &field.modes()[t]);
    }
    SurfaceField::from_modes(grid, modes, ctx)
}

/// `sgn` with `sgn(0) = 0`, so `|D|` and the Hilbert transform treat the
/// mean consistently with the `k tanh(kh)` limit.
pub fn sgn(k: i64) -> i64 {
    k.signum()
}

/// Symbol of the flat-surface DNO `G_0`: `k tanh(kh)` at finite depth `h`,
/// `|k|` at infinite depth (`h = None`).
pub fn g0_symbol(k: i64, h: Option<&MpReal>, grid: &Grid, ctx: &PrecisionCtx) -> MpReal {
    let kw = grid.wavenumber(k, ctx);
    match h {
        Some(h) => {
            let t = (kw.clone() * h).tanh();
            kw * t
        }
        None => kw.abs(),
    }
}

/// Spectral derivative d/dx.
pub fn derivative(field: &SurfaceField, ctx: &PrecisionCtx) -> Result<SurfaceField> {
    let grid = field.grid().clone();
    apply_multiplier(field, ctx, |k| {
        let kw = grid.wavenumber(k, ctx);
        ctx.complex(ctx.zero(), kw)
    })
}

/// Hilbert transform, symbol `-i sgn(k)`.
pub fn hilbert(field: &SurfaceField, ctx: &PrecisionCtx) -> Result<SurfaceField> {
    apply_multiplier(field, ctx, |k| {
        ctx.complex(ctx.zero(), ctx.real_from_i64(-sgn(k)))
    })
}

/// Trapezoidal inner product `(L/M) sum_j f(x_j) conj(g(x_j))`.
/// Spectrally accurate for smooth periodic integrands.
pub fn trapezoid_ip(f: &SurfaceField, g: &SurfaceField, ctx: &PrecisionCtx) -> Result<MpComplex> {
    if f.grid().len() != g.grid().len() {
        return Err(DnoError::GridMismatch("trapezoid_ip".into()));
    }
    let mut acc = ctx.zero();
    for (a, b) in f.values().iter().zip(g.values()) {
        acc += a.clone() * b;
    }
    let w = f.grid().period().clone() / ctx.real_from_i64(f.grid().len() as i64);
    Ok(ctx.complex_from_real(&(acc * w)))
}

/// Complex trapezoidal quadrature weight helper for complex vectors.
pub fn trapezoid_ip_complex(
    f: &[MpComplex],
    g: &[MpComplex],
    grid: &Grid,
    ctx: &PrecisionCtx,
) -> MpComplex {
    let mut acc = ctx.complex_zero();
    let mut t = ctx.complex_zero();
    for (a, b) in f.iter().zip(g) {
        t.assign(a * &b.clone().conj());
        acc += &t;
    }
    let w = grid.period().clone() / ctx.real_from_i64(grid.len() as i64);
    acc * ctx.complex_from_real(&w)
}
