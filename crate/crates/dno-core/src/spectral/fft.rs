//! Mixed-radix 2/3/5 FFT over arbitrary-precision complex scalars,
//! with a Bluestein fallback for other sizes.
//!
//! Twiddle factors are computed fresh at context precision when a plan
//! is first built and cached per `(M, bits)`.  Plans are immutable and
//! shareable; transforms are pure functions of their input.

use crate::error::{DnoError, Result};
use crate::mpnum::{MpComplex, PrecisionCtx};
use rug::Assign;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Remove all factors of 2, 3, 5 from `n`; the residue is 1 iff `n` is
/// smooth enough for the direct mixed-radix path.
fn smooth_residue(mut n: usize) -> usize {
    for p in [2usize, 3, 5] {
        while n % p == 0 {
            n /= p;
        }
    }
    n
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

enum Kind {
    MixedRadix,
    Bluestein {
        conv_len: usize,
        /// chirp z_k = exp(-i pi k^2 / n)
        chirp: Vec<MpComplex>,
        /// forward FFT (length conv_len) of the reciprocal chirp filter
        filter_hat: Vec<MpComplex>,
        inner: Arc<FftPlan>,
    },
}

pub struct FftPlan {
    n: usize,
    bits: u32,
    /// twiddle[j] = exp(-2 pi i j / n)
    twiddle: Vec<MpComplex>,
    kind: Kind,
}

fn build_twiddles(n: usize, ctx: &PrecisionCtx) -> Vec<MpComplex> {
    let two_pi = ctx.two_pi();
    let nn = ctx.real_from_i64(n as i64);
    (0..n)
        .map(|j| {
            let theta = ctx.real_from_i64(j as i64) * &two_pi / &nn;
            let (sin, cos) = theta.sin_cos(ctx.zero());
            ctx.complex(cos, -sin)
        })
        .collect()
}

impl FftPlan {
    fn new(n: usize, ctx: &PrecisionCtx) -> Result<Self> {
        if n < 1 {
            return Err(DnoError::GridTooSmall(n));
        }
        let twiddle = build_twiddles(n, ctx);
        let kind = if smooth_residue(n) == 1 {
            Kind::MixedRadix
        } else {
            // Bluestein: convolution length >= 2n-1, power of two
            let conv_len = next_pow2(2 * n - 1);
            let inner = plan(conv_len, ctx)?;
            // chirp with exponent k^2 mod 2n (exp(-i pi k^2 / n) has period 2n in k^2)
            let two_pi = ctx.two_pi();
            let nn = ctx.real_from_i64(n as i64);
            let chirp: Vec<MpComplex> = (0..n)
                .map(|k| {
                    let e = ((k as u128 * k as u128) % (2 * n as u128)) as i64;
                    let theta = ctx.real_from_i64(e) * &two_pi / (ctx.real_from_i64(2) * &nn);
                    let (sin, cos) = theta.sin_cos(ctx.zero());
                    ctx.complex(cos, -sin)
                })
                .collect();
            // filter b_j = conj(chirp_j), wrapped at both ends, zero-padded
            let mut b = vec![ctx.complex_zero(); conv_len];
            for j in 0..n {
                let c = chirp[j].clone().conj();
                if j > 0 {
                    b[conv_len - j].assign(&c);
                }
                b[j] = c;
            }
            let mut filter_hat = b;
            inner.forward_raw(&mut filter_hat);
            Kind::Bluestein {
                conv_len,
                chirp,
                filter_hat,
                inner,
            }
        };
        Ok(FftPlan {
            n,
            bits: ctx.bits(),
            twiddle,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Unnormalized forward DFT in place: X_k = sum_j x_j e^{-2 pi i jk/n}.
    pub fn forward_raw(&self, data: &mut [MpComplex]) {
        assert_eq!(data.len(), self.n);
        match &self.kind {
            Kind::MixedRadix => {
                let src = data.to_vec();
                self.rec(&src, 0, 1, self.n, 1, data);
            }
            Kind::Bluestein {
                conv_len,
                chirp,
                filter_hat,
                inner,
            } => {
                let ctx = PrecisionCtx::new(self.bits).unwrap();
                let mut a = vec![ctx.complex_zero(); *conv_len];
                for j in 0..self.n {
                    a[j].assign(&data[j] * &chirp[j]);
                }
                inner.forward_raw(&mut a);
                for (ai, fi) in a.iter_mut().zip(filter_hat.iter()) {
                    let prod = ai.clone() * fi;
                    ai.assign(&prod);
                }
                inner.inverse_raw_unscaled(&mut a);
                let len = ctx.real_from_i64(*conv_len as i64);
                for k in 0..self.n {
                    data[k].assign(&a[k] * &chirp[k]);
                    data[k] /= &len;
                }
            }
        }
    }

    /// Unnormalized inverse DFT in place (no 1/n scale):
    /// x_j = sum_k X_k e^{+2 pi i jk/n}.
    pub fn inverse_raw_unscaled(&self, data: &mut [MpComplex]) {
        for z in data.iter_mut() {
            let c = z.clone().conj();
            z.assign(&c);
        }
        self.forward_raw(data);
        for z in data.iter_mut() {
            let c = z.clone().conj();
            z.assign(&c);
        }
    }

    /// Recursive mixed-radix decimation in time.
    ///
    /// Transforms `n` elements of `src` starting at `off` with the given
    /// `stride` into `dst[0..n]`.  `tw_stride` maps local twiddle indices
    /// onto the top-level table.
    fn rec(
        &self,
        src: &[MpComplex],
        off: usize,
        stride: usize,
        n: usize,
        tw_stride: usize,
        dst: &mut [MpComplex],
    ) {
        if n == 1 {
            dst[0].assign(&src[off]);
            return;
        }
        let p = [2usize, 3, 5]
            .into_iter()
            .find(|p| n % p == 0)
            .expect("mixed-radix plan with non-smooth size");
        let m = n / p;
        for r in 0..p {
            self.rec(
                src,
                off + r * stride,
                stride * p,
                m,
                tw_stride * p,
                &mut dst[r * m..(r + 1) * m],
            );
        }
        let ctx_bits = self.bits;
        if p == 2 {
            let mut t = MpComplex::new(ctx_bits);
            let mut a = MpComplex::new(ctx_bits);
            for k1 in 0..m {
                t.assign(&self.twiddle[k1 * tw_stride] * &dst[m + k1]);
                a.assign(&dst[k1]);
                dst[k1] += &t;
                dst[m + k1].assign(&a - &t);
            }
        } else {
            let mut y: Vec<MpComplex> = (0..p).map(|_| MpComplex::new(ctx_bits)).collect();
            let mut out: Vec<MpComplex> = (0..p).map(|_| MpComplex::new(ctx_bits)).collect();
            let mut t = MpComplex::new(ctx_bits);
            for k1 in 0..m {
                for r in 0..p {
                    y[r].assign(&dst[r * m + k1]);
                }
                for q in 0..p {
                    let k = q * m + k1;
                    out[q].assign(&y[0]);
                    for r in 1..p {
                        let idx = (r * k * tw_stride) % self.n;
                        t.assign(&self.twiddle[idx] * &y[r]);
                        out[q] += &t;
                    }
                }
                for q in 0..p {
                    dst[q * m + k1].assign(&out[q]);
                }
            }
        }
    }
}

static PLAN_CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<FftPlan>>>> = OnceLock::new();

/// Fetch (or build) the cached plan for size `n` at the context precision.
pub fn plan(n: usize, ctx: &PrecisionCtx) -> Result<Arc<FftPlan>> {
    let cache = PLAN_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    {
        let guard = cache.lock().unwrap();
        if let Some(p) = guard.get(&(n, ctx.bits())) {
            return Ok(p.clone());
        }
    }
    // built outside the lock so concurrent first-time builders don't serialize
    let built = Arc::new(FftPlan::new(n, ctx)?);
    let mut guard = cache.lock().unwrap();
    Ok(guard.entry((n, ctx.bits())).or_insert(built).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpnum::MpReal;

    fn naive_dft(x: &[MpComplex], ctx: &PrecisionCtx) -> Vec<MpComplex> {
        let n = x.len();
        let two_pi = ctx.two_pi();
        (0..n)
            .map(|k| {
                let mut acc = ctx.complex_zero();
                for j in 0..n {
                    let theta: MpReal =
                        ctx.real_from_i64((j * k) as i64) * &two_pi / ctx.real_from_i64(n as i64);
                    let (sin, cos) = theta.sin_cos(ctx.zero());
                    let w = ctx.complex(cos, -sin);
                    acc += w * &x[j];
                }
                acc
            })
            .collect()
    }

    fn max_err(a: &[MpComplex], b: &[MpComplex]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x.clone() - y;
                d.abs().real().to_f64()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_naive_dft_on_smooth_sizes() {
        let ctx = PrecisionCtx::new(113).unwrap();
        for n in [4usize, 6, 8, 10, 12, 15, 30, 32] {
            let x: Vec<MpComplex> = (0..n)
                .map(|j| ctx.complex_from_f64((j as f64).sin(), (j as f64 * 0.7).cos()))
                .collect();
            let expect = naive_dft(&x, &ctx);
            let p = plan(n, &ctx).unwrap();
            let mut got = x.clone();
            p.forward_raw(&mut got);
            assert!(max_err(&got, &expect) < 1e-28, "n={n}");
        }
    }

    #[test]
    fn bluestein_matches_naive_dft() {
        let ctx = PrecisionCtx::new(113).unwrap();
        for n in [7usize, 11, 13, 14] {
            let x: Vec<MpComplex> = (0..n)
                .map(|j| ctx.complex_from_f64((j as f64 * 1.3).cos(), (j as f64).sin()))
                .collect();
            let expect = naive_dft(&x, &ctx);
            let p = plan(n, &ctx).unwrap();
            let mut got = x.clone();
            p.forward_raw(&mut got);
            assert!(max_err(&got, &expect) < 1e-27, "n={n}");
        }
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let ctx = PrecisionCtx::new(113).unwrap();
        let n = 320; // 2^6 * 5
        let x: Vec<MpComplex> = (0..n)
            .map(|j| ctx.complex_from_f64((j as f64 * 0.11).sin(), 0.0))
            .collect();
        let p = plan(n, &ctx).unwrap();
        let mut y = x.clone();
        p.forward_raw(&mut y);
        p.inverse_raw_unscaled(&mut y);
        let nn = ctx.real_from_i64(n as i64);
        for z in y.iter_mut() {
            *z /= &nn;
        }
        // round-trip error < M * 2^(-bits+8)
        let tol = (n as f64) * 2f64.powi(-113 + 8);
        assert!(max_err(&y, &x) < tol);
    }
}
