//! Double-double arithmetic: an unevaluated sum `hi + lo` carrying about
//! 32 significant digits. Only what the precise reference forward needs.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

const LN2: DD = DD {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

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

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> DD {
        DD { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn ldexp(self, k: i32) -> DD {
        let s = 2f64.powi(k);
        DD {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// `exp(x) = 2^k · (1 + p)`, with `p` accurate in relative terms even
    /// when it is tiny.
    fn exp_parts(self) -> (i32, DD) {
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * DD::new(k);
        let r = r.ldexp(-10);
        // Taylor series of expm1 on |r| < 3.4e-4.
        let mut term = r;
        let mut p = r;
        for n in 2..=12 {
            term = term * r / DD::new(n as f64);
            p = p + term;
        }
        for _ in 0..10 {
            p = p * DD::new(2.0) + p * p;
        }
        (k as i32, p)
    }

    pub fn exp(self) -> DD {
        if self.hi > 709.0 {
            return DD::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return DD::ZERO;
        }
        let (k, p) = self.exp_parts();
        (DD::ONE + p).ldexp(k)
    }

    pub fn ln(self) -> DD {
        assert!(self.hi > 0.0, "logarithm of a non-positive value");
        let mut y = DD::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - DD::ONE;
        }
        y
    }

    pub fn tanh(self) -> DD {
        let ax = if self.hi < 0.0 { -self } else { self };
        let t = if ax.hi > 40.0 {
            DD::ONE
        } else if ax.hi < 0.17 {
            let (k, p) = (ax * DD::new(2.0)).exp_parts();
            debug_assert_eq!(k, 0);
            p / (p + DD::new(2.0))
        } else {
            let e = (ax * DD::new(2.0)).exp();
            (e - DD::ONE) / (e + DD::ONE)
        };
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }

    pub fn sigmoid(self) -> DD {
        if self.hi >= 0.0 {
            DD::ONE / (DD::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (DD::ONE + e)
        }
    }
}

impl From<f64> for DD {
    fn from(x: f64) -> DD {
        DD::new(x)
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, o: DD) -> DD {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, o: DD) -> DD {
        self + (-o)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, o: DD) -> DD {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, o: DD) -> DD {
        let q1 = self.hi / o.hi;
        let r = self - o * DD::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DD::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo } + DD::new(q3)
    }
}
