//! Arbitrary-precision scalars with explicit precision contexts.
//!
//! All numeric code in this library goes through [`PrecisionCtx`], which
//! fixes the mantissa width of every scalar it creates.  Arithmetic is
//! round-to-nearest-even, delegated to MPFR/MPC via the `rug` crate, so
//! elementary functions (`exp`, `sinh`, `cosh`, `tanh`, complex `sin`,
//! `cos`, ...) are correctly rounded at the context precision.  Results
//! are deterministic and independent of thread schedule.

use crate::error::{DnoError, Result};
use rug::float::Special;
use rug::ops::CompleteRound;
use rug::{Assign, Complex, Float};

/// Real scalar at context precision (MPFR, round-to-nearest-even).
pub type MpReal = Float;
/// Complex scalar at context precision (MPC, round-to-nearest-even).
pub type MpComplex = Complex;

/// Binary floating-point context: mantissa width in bits.
///
/// 53 bits corresponds to IEEE double, 113 to quadruple.  Contexts are
/// immutable and freely copyable; every scalar a context creates carries
/// the context's precision, and `rug` propagates that precision through
/// arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrecisionCtx {
    bits: u32,
}

impl PrecisionCtx {
    pub const MIN_BITS: u32 = 24;

    pub fn new(bits: u32) -> Result<Self> {
        if bits < Self::MIN_BITS {
            return Err(DnoError::PrecisionTooLow(bits));
        }
        Ok(PrecisionCtx { bits })
    }

    /// Double-equivalent context (53 bits).
    pub fn double() -> Self {
        PrecisionCtx { bits: 53 }
    }

    /// Quadruple-equivalent context (113 bits).
    pub fn quad() -> Self {
        PrecisionCtx { bits: 113 }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Decimal digits needed for a lossless round trip of a scalar at
    /// this precision: `ceil(bits*log10(2)) + 2`.
    pub fn decimal_digits(&self) -> usize {
        (self.bits as f64 * std::f64::consts::LOG10_2).ceil() as usize + 2
    }

    /// Machine epsilon of this context, `2^(1-bits)`.
    pub fn epsilon(&self) -> MpReal {
        let mut e = Float::with_val(self.bits, 1);
        e >>= self.bits - 1;
        e
    }

    pub fn zero(&self) -> MpReal {
        Float::with_val(self.bits, 0)
    }

    pub fn one(&self) -> MpReal {
        Float::with_val(self.bits, 1)
    }

    pub fn real_from_f64(&self, v: f64) -> MpReal {
        Float::with_val(self.bits, v)
    }

    pub fn real_from_i64(&self, v: i64) -> MpReal {
        Float::with_val(self.bits, v)
    }

    /// `num / den` rounded once at context precision.
    pub fn real_ratio(&self, num: i64, den: i64) -> MpReal {
        Float::with_val(self.bits, num) / Float::with_val(self.bits, den)
    }

    pub fn pi(&self) -> MpReal {
        Float::with_val(self.bits, rug::float::Constant::Pi)
    }

    pub fn two_pi(&self) -> MpReal {
        let mut p = self.pi();
        p <<= 1;
        p
    }

    pub fn complex_zero(&self) -> MpComplex {
        Complex::with_val(self.bits, (0, 0))
    }

    pub fn complex(&self, re: MpReal, im: MpReal) -> MpComplex {
        Complex::with_val(self.bits, (re, im))
    }

    pub fn complex_from_real(&self, re: &MpReal) -> MpComplex {
        Complex::with_val(self.bits, (re, &self.zero()))
    }

    pub fn complex_from_f64(&self, re: f64, im: f64) -> MpComplex {
        Complex::with_val(self.bits, (re, im))
    }

    pub fn imag_unit(&self) -> MpComplex {
        Complex::with_val(self.bits, (0, 1))
    }

    /// Re-round `x` into this context (used when mixing precisions;
    /// rounds to the destination context).
    pub fn round_real(&self, x: &MpReal) -> MpReal {
        Float::with_val(self.bits, x)
    }

    pub fn round_complex(&self, z: &MpComplex) -> MpComplex {
        Complex::with_val(self.bits, z)
    }

    /// Format a real scalar as a decimal string that parses back
    /// bit-exactly at this precision.
    pub fn format_real(&self, x: &MpReal) -> String {
        if x.is_zero() {
            // preserve the sign of zero
            return if x.is_sign_negative() { "-0".into() } else { "0".into() };
        }
        x.to_string_radix(10, Some(self.decimal_digits()))
    }

    /// Parse a decimal scalar (optional sign, digits, optional fraction,
    /// optional `e` exponent).  NaN and infinity are rejected; `inf` is
    /// reserved for the depth descriptor in surface files.
    pub fn parse_real(&self, text: &str) -> Result<MpReal> {
        let parsed = Float::parse(text).map_err(|e| DnoError::ScalarParse {
            text: text.to_string(),
            reason: e.to_string(),
        })?;
        let v = parsed.complete(self.bits);
        if !v.is_finite() {
            return Err(DnoError::ScalarParse {
                text: text.to_string(),
                reason: "non-finite value".into(),
            });
        }
        Ok(v)
    }

    pub fn nan(&self) -> MpReal {
        Float::with_val(self.bits, Special::Nan)
    }
}

/// Round-trip a real through its decimal representation.  Identity at
/// context precision for finite inputs.
pub fn scalar_roundtrip(x: &MpReal, ctx: &PrecisionCtx) -> Result<MpReal> {
    if !x.is_finite() {
        return Err(DnoError::NonFinite("scalar_roundtrip"));
    }
    ctx.parse_real(&ctx.format_real(x))
}

/// In-place complex multiply-accumulate: `acc += a * b` without
/// allocating temporaries beyond the provided scratch value.
#[inline]
pub fn cmul_acc(acc: &mut MpComplex, a: &MpComplex, b: &MpComplex, scratch: &mut MpComplex) {
    scratch.assign(a * b);
    *acc += &*scratch;
}
