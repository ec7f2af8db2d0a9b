//! Scalar abstraction over `f64` and a double-double type (~106-bit
//! significand), used where a computation has to be repeated at higher
//! precision than the model runs at.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

pub trait Real:
    Copy + fmt::Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn sigmoid(self) -> Self {
        if self.to_f64() >= 0.0 {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const LN_2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

/// `1/1!, 1/2!, …, 1/10!` in double-double.
fn inverse_factorials() -> &'static [DoubleDouble; 10] {
    static COEFFS: OnceLock<[DoubleDouble; 10]> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let mut out = [DoubleDouble::one(); 10];
        for n in 1..10 {
            out[n] = out[n - 1] / DoubleDouble::from_f64((n + 1) as f64);
        }
        out
    })
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        DoubleDouble { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn scale_pow2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        DoubleDouble {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    /// `e^x - 1` for `|x| <= ln 2 / 2`, without cancellation.
    fn expm1_reduced(self) -> Self {
        // x / 2^10, Taylor series, then undo the scaling with
        // expm1(2y) = expm1(y) * (2 + expm1(y)).
        let r = self.scale_pow2(-10);
        // |r| < 3.4e-4, so terms past r^10 / 10! are below 1e-40
        let coeffs = inverse_factorials();
        let mut sum = coeffs[coeffs.len() - 1];
        for &c in coeffs[..coeffs.len() - 1].iter().rev() {
            sum = sum * r + c;
        }
        let mut sum = sum * r;
        for _ in 0..10 {
            sum = sum * (sum + DoubleDouble::from_f64(2.0));
        }
        sum
    }

    pub fn expm1(self) -> Self {
        if self.hi.abs() <= 0.34 {
            self.expm1_reduced()
        } else {
            self.exp() - DoubleDouble::one()
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;

    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for DoubleDouble {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * DoubleDouble::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DoubleDouble::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo } + DoubleDouble::from_f64(q3)
    }
}

impl Real for DoubleDouble {
    fn from_f64(v: f64) -> Self {
        DoubleDouble { hi: v, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Self {
        if self.hi > 709.0 {
            return DoubleDouble::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return DoubleDouble::zero();
        }
        let k = (self.hi / LN_2.hi).round();
        let r = self - LN_2 * DoubleDouble::from_f64(k);
        (r.expm1_reduced() + DoubleDouble::one()).scale_pow2(k as i32)
    }

    fn ln(self) -> Self {
        // Newton on exp(y) = x; each step doubles the correct digits.
        let mut y = DoubleDouble::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - DoubleDouble::one();
        }
        y
    }

    fn tanh(self) -> Self {
        // tanh(a) = -m / (2 + m) with m = expm1(-2|a|)
        let neg = self.hi < 0.0;
        let a = if neg { -self } else { self };
        let m = (a * DoubleDouble::from_f64(-2.0)).expm1();
        let t = -m / (m + DoubleDouble::from_f64(2.0));
        if neg { -t } else { t }
    }
}
