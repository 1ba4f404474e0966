//! Chebyshev machinery on `y` in `[-h, 0]` through the affine map
//! `s = 1 + 2y/h`, `s` in `[-1, 1]`.
//!
//! Nodal data lives on the Chebyshev-Lobatto grid `s_i = cos(pi i / N)`,
//! so `i = 0` is the top of the layer (`y = 0`) and `i = N` the bottom
//! (`y = -h`).  Coefficients are Chebyshev-T.

use crate::error::{DnoError, Result};
use crate::mpnum::{MpComplex, MpReal, PrecisionCtx};
use rug::Assign;

/// Chebyshev-T coefficients of one vertical profile.
#[derive(Debug, Clone)]
pub struct ChebCoeffs {
    pub coeffs: Vec<MpComplex>,
}

impl ChebCoeffs {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn zero(n: usize, ctx: &PrecisionCtx) -> Self {
        ChebCoeffs {
            coeffs: (0..=n).map(|_| ctx.complex_zero()).collect(),
        }
    }
}

/// Lobatto nodes `s_i = cos(pi i / N)`, `i = 0..=N`.
pub fn lobatto_nodes(n: usize, ctx: &PrecisionCtx) -> Vec<MpReal> {
    let pi = ctx.pi();
    (0..=n)
        .map(|i| (ctx.real_from_i64(i as i64) * &pi / ctx.real_from_i64(n as i64)).cos())
        .collect()
}

/// Cosine table `cos(pi m / N)` for `m = 0..2N`, shared by transform and
/// synthesis.
pub struct ChebTable {
    n: usize,
    cos: Vec<MpReal>,
}

impl ChebTable {
    pub fn new(n: usize, ctx: &PrecisionCtx) -> Result<Self> {
        if n < 2 {
            return Err(DnoError::OutOfRange(format!("Chebyshev degree N={n} < 2")));
        }
        let pi = ctx.pi();
        let cos = (0..2 * n)
            .map(|m| (ctx.real_from_i64(m as i64) * &pi / ctx.real_from_i64(n as i64)).cos())
            .collect();
        Ok(ChebTable { n, cos })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn cos_ij(&self, i: usize, j: usize) -> &MpReal {
        &self.cos[(i * j) % (2 * self.n)]
    }

    /// Nodal values at Lobatto nodes -> Chebyshev-T coefficients (DCT-I).
    pub fn transform(&self, nodal: &[MpComplex], ctx: &PrecisionCtx) -> Result<ChebCoeffs> {
        let n = self.n;
        if nodal.len() != n + 1 {
            return Err(DnoError::DimensionMismatch(format!(
                "cheb transform expects {} nodal values, got {}",
                n + 1,
                nodal.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut term = ctx.complex_zero();
        let two_over_n = ctx.real_ratio(2, n as i64);
        for j in 0..=n {
            let mut acc = ctx.complex_zero();
            for i in 0..=n {
                term.assign(&nodal[i] * self.cos_ij(i, j));
                if i == 0 || i == n {
                    term /= 2u32;
                }
                acc += &term;
            }
            acc *= ctx.complex_from_real(&two_over_n);
            if j == 0 || j == n {
                acc /= 2u32;
            }
            coeffs.push(acc);
        }
        Ok(ChebCoeffs { coeffs })
    }

    /// Chebyshev-T coefficients -> nodal values at Lobatto nodes.
    pub fn synthesize(&self, alpha: &ChebCoeffs, ctx: &PrecisionCtx) -> Vec<MpComplex> {
        let n = self.n;
        let deg = alpha.coeffs.len() - 1;
        let mut term = ctx.complex_zero();
        (0..=n)
            .map(|i| {
                let mut acc = ctx.complex_zero();
                for j in 0..=deg.min(n) {
                    term.assign(&alpha.coeffs[j] * self.cos_ij(i, j));
                    acc += &term;
                }
                acc
            })
            .collect()
    }
}

/// Coefficients of the `s`-derivative: `beta_N = 0`,
/// `beta_{N-1} = 2N alpha_N`, `beta_j = 2(j+1) alpha_{j+1} + beta_{j+2}`,
/// and `beta_0` halved at the end.  The chain factor `2/h` converting to
/// d/dy is applied at evaluation.
pub fn differentiate(alpha: &ChebCoeffs, ctx: &PrecisionCtx) -> ChebCoeffs {
    let n = alpha.coeffs.len() - 1;
    let mut beta: Vec<MpComplex> = (0..=n).map(|_| ctx.complex_zero()).collect();
    if n >= 1 {
        beta[n - 1].assign(&alpha.coeffs[n] * ctx.real_from_i64(2 * n as i64));
        for j in (0..n.saturating_sub(1)).rev() {
            let mut b = alpha.coeffs[j + 1].clone() * ctx.real_from_i64(2 * (j + 1) as i64);
            b += &beta[j + 2];
            beta[j].assign(&b);
        }
        beta[0] /= 2u32;
    }
    ChebCoeffs { coeffs: beta }
}

/// Evaluate `sum_j alpha_j T_j(s)` by the Clenshaw backward recurrence.
pub fn clenshaw_eval(alpha: &ChebCoeffs, s: &MpReal, ctx: &PrecisionCtx) -> Result<MpComplex> {
    let one = ctx.one();
    if *s > one || *s < -one {
        return Err(DnoError::OutOfRange(format!(
            "Clenshaw evaluation point s = {} outside [-1, 1]",
            s.to_f64()
        )));
    }
    let two_s = ctx.complex_from_real(&(s.clone() * ctx.real_from_i64(2)));
    let mut b1 = ctx.complex_zero();
    let mut b2 = ctx.complex_zero();
    for j in (1..alpha.coeffs.len()).rev() {
        let mut b0 = two_s.clone() * &b1;
        b0 -= &b2;
        b0 += &alpha.coeffs[j];
        b2 = std::mem::replace(&mut b1, b0);
    }
    let mut out = ctx.complex_from_real(s) * &b1;
    out -= &b2;
    out += &alpha.coeffs[0];
    Ok(out)
}

/// Product of two Chebyshev-T series:
/// `T_a T_b = (T_{a+b} + T_{|a-b|}) / 2`.
pub fn multiply(a: &ChebCoeffs, b: &ChebCoeffs, ctx: &PrecisionCtx) -> ChebCoeffs {
    let da = a.coeffs.len() - 1;
    let db = b.coeffs.len() - 1;
    let mut out: Vec<MpComplex> = (0..=da + db).map(|_| ctx.complex_zero()).collect();
    let mut t = ctx.complex_zero();
    for (i, ai) in a.coeffs.iter().enumerate() {
        for (j, bj) in b.coeffs.iter().enumerate() {
            t.assign(ai * bj);
            t /= 2u32;
            out[i + j] += &t;
            out[i.abs_diff(j)] += &t;
        }
    }
    ChebCoeffs { coeffs: out }
}

/// `int_{-1}^{1} T_j(s) ds`: `2/(1-j^2)` for even `j`, zero for odd `j`.
pub fn t_integral(j: usize, ctx: &PrecisionCtx) -> MpReal {
    if j % 2 == 1 {
        ctx.zero()
    } else {
        ctx.real_ratio(2, 1 - (j as i64) * (j as i64))
    }
}

/// Exact integral over `[-1, 1]` of a Chebyshev-T series.
pub fn integrate(alpha: &ChebCoeffs, ctx: &PrecisionCtx) -> MpComplex {
    let mut acc = ctx.complex_zero();
    let mut t = ctx.complex_zero();
    for (j, aj) in alpha.coeffs.iter().enumerate() {
        if j % 2 == 0 {
            t.assign(aj * &t_integral(j, ctx));
            acc += &t;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionCtx {
        PrecisionCtx::new(113).unwrap()
    }

    #[test]
    fn transform_recovers_t2() {
        let ctx = ctx();
        let n = 8;
        let table = ChebTable::new(n, &ctx).unwrap();
        let nodes = lobatto_nodes(n, &ctx);
        let nodal: Vec<MpComplex> = nodes
            .iter()
            .map(|s| {
                // T_2(s) = 2 s^2 - 1
                let v = s.clone().square() * ctx.real_from_i64(2) - ctx.one();
                ctx.complex_from_real(&v)
            })
            .collect();
        let alpha = table.transform(&nodal, &ctx).unwrap();
        for (j, a) in alpha.coeffs.iter().enumerate() {
            let expect = if j == 2 { 1.0 } else { 0.0 };
            assert!((a.clone() - ctx.complex_from_f64(expect, 0.0)).abs().real().to_f64() < 1e-30);
        }
    }

    #[test]
    fn constant_transforms_to_alpha0() {
        let ctx = ctx();
        let table = ChebTable::new(6, &ctx).unwrap();
        let nodal: Vec<MpComplex> = (0..=6).map(|_| ctx.complex_from_f64(3.5, 0.0)).collect();
        let alpha = table.transform(&nodal, &ctx).unwrap();
        assert!((alpha.coeffs[0].clone() - ctx.complex_from_f64(3.5, 0.0)).abs().real().to_f64() < 1e-30);
        for a in &alpha.coeffs[1..] {
            assert!(a.clone().abs().real().to_f64() < 1e-30);
        }
    }

    #[test]
    fn roundtrip_random_vector() {
        let ctx = ctx();
        let n = 16;
        let table = ChebTable::new(n, &ctx).unwrap();
        let nodal: Vec<MpComplex> = (0..=n)
            .map(|i| ctx.complex_from_f64((i as f64 * 1.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let alpha = table.transform(&nodal, &ctx).unwrap();
        let back = table.synthesize(&alpha, &ctx);
        let tol = (n as f64) * 2f64.powi(-113 + 8);
        for (a, b) in back.iter().zip(&nodal) {
            assert!((a.clone() - b).abs().real().to_f64() < tol);
        }
    }

    #[test]
    fn differentiate_t1() {
        let ctx = ctx();
        // alpha = (0, 1, 0): T_1, derivative in s is 1
        let alpha = ChebCoeffs {
            coeffs: vec![
                ctx.complex_zero(),
                ctx.complex_from_f64(1.0, 0.0),
                ctx.complex_zero(),
            ],
        };
        let beta = differentiate(&alpha, &ctx);
        assert!((beta.coeffs[0].clone() - ctx.complex_from_f64(1.0, 0.0)).abs().real().to_f64() < 1e-30);
        assert!(beta.coeffs[1].clone().abs().real().to_f64() < 1e-30);
        assert!(beta.coeffs[2].clone().abs().real().to_f64() < 1e-30);
    }

    #[test]
    fn differentiate_constant_is_zero() {
        let ctx = ctx();
        let alpha = ChebCoeffs {
            coeffs: vec![ctx.complex_from_f64(4.0, 0.0), ctx.complex_zero()],
        };
        let beta = differentiate(&alpha, &ctx);
        for b in &beta.coeffs {
            assert!(b.clone().abs().real().to_f64() < 1e-30);
        }
    }

    #[test]
    fn differentiate_cosh_profile() {
        // alpha of cosh(k(y+h)) on y in [-h,0], N=32, k=3, h=1:
        // d/dy should match k sinh(k(y+h)) at the nodes
        let ctx = PrecisionCtx::double();
        let n = 32;
        let k = ctx.real_from_i64(3);
        let h = ctx.one();
        let table = ChebTable::new(n, &ctx).unwrap();
        let nodes = lobatto_nodes(n, &ctx);
        // y = h (s - 1) / 2
        let ys: Vec<MpReal> = nodes
            .iter()
            .map(|s| (s.clone() - ctx.one()) * &h / ctx.real_from_i64(2))
            .collect();
        let nodal: Vec<MpComplex> = ys
            .iter()
            .map(|y| ctx.complex_from_real(&((y.clone() + &h) * &k).cosh()))
            .collect();
        let alpha = table.transform(&nodal, &ctx).unwrap();
        let beta = differentiate(&alpha, &ctx);
        let dvals = table.synthesize(&beta, &ctx);
        let chain = ctx.real_ratio(2, 1) / &h;
        for (dv, y) in dvals.iter().zip(&ys) {
            let got = dv.real().clone() * &chain;
            let expect = ((y.clone() + &h) * &k).sinh() * &k;
            // derivative values are O(30); 1e-10 is ~3e-12 relative at 53 bits
            assert!((got - expect).abs().to_f64() < 1e-10);
        }
    }

    #[test]
    fn clenshaw_matches_direct_sum() {
        let ctx = ctx();
        let alpha = ChebCoeffs {
            coeffs: (0..10)
                .map(|j| ctx.complex_from_f64((j as f64 * 0.77).sin(), (j as f64 * 0.21).cos()))
                .collect(),
        };
        let s = ctx.real_from_f64(0.3);
        let got = clenshaw_eval(&alpha, &s, &ctx).unwrap();
        // direct cos(j arccos s) summation
        let theta = s.clone().acos();
        let mut expect = ctx.complex_zero();
        for (j, a) in alpha.coeffs.iter().enumerate() {
            let t = (theta.clone() * ctx.real_from_i64(j as i64)).cos();
            expect += a.clone() * ctx.complex_from_real(&t);
        }
        assert!((got - expect).abs().real().to_f64() < 1e-30);
    }

    #[test]
    fn clenshaw_endpoints() {
        let ctx = ctx();
        // T_2 at 0 -> -1; T_3 at 1 -> 1
        let t2 = ChebCoeffs {
            coeffs: vec![
                ctx.complex_zero(),
                ctx.complex_zero(),
                ctx.complex_from_f64(1.0, 0.0),
            ],
        };
        let v = clenshaw_eval(&t2, &ctx.zero(), &ctx).unwrap();
        assert!((v + ctx.complex_from_f64(1.0, 0.0)).abs().real().to_f64() < 1e-30);
        let t3 = ChebCoeffs {
            coeffs: vec![
                ctx.complex_zero(),
                ctx.complex_zero(),
                ctx.complex_zero(),
                ctx.complex_from_f64(1.0, 0.0),
            ],
        };
        let v = clenshaw_eval(&t3, &ctx.one(), &ctx).unwrap();
        assert!((v - ctx.complex_from_f64(1.0, 0.0)).abs().real().to_f64() < 1e-30);
        assert!(clenshaw_eval(&t3, &ctx.real_from_f64(1.5), &ctx).is_err());
    }

    #[test]
    fn product_and_integral_are_exact() {
        let ctx = ctx();
        // int_{-1}^1 T_1 * T_1 ds = int s^2... T_1 T_1 = (T_2 + T_0)/2;
        // integral = (2/(1-4))/2 + 2/2 = -1/3 + 1 = 2/3
        let t1 = ChebCoeffs {
            coeffs: vec![ctx.complex_zero(), ctx.complex_from_f64(1.0, 0.0)],
        };
        let prod = multiply(&t1, &t1, &ctx);
        let v = integrate(&prod, &ctx);
        let expect = ctx.real_ratio(2, 3);
        assert!((v.real().clone() - expect).abs().to_f64() < 1e-30);
    }
}
