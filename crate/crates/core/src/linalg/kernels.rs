//! Elementwise transcendental kernels.
//!
//! Every function is straight-line `f64` arithmetic with selects instead of
//! branches, so slice loops vectorize. Only plain `+ − × ÷` are used (no fused
//! multiply-add): a lane computes the same roundings whether the loop runs
//! scalar, 256-bit or 512-bit wide, and the scalar entry points return the
//! exact bits of the slice kernels.

use std::f64::consts::LOG2_E;

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
/// 1.5·2⁵²: adding it rounds to an integer held in the low mantissa bits.
const SHIFT: f64 = 6_755_399_441_055_744.0;
const TWO52: f64 = 4_503_599_627_370_496.0;
const SQRT2: f64 = std::f64::consts::SQRT_2;

const EXP_MAX: f64 = 709.0;
const EXP_MIN: f64 = -708.0;
/// tanh rounds to ±1 beyond this.
const TANH_SAT: f64 = 20.0;

// 1/k! for k = 13 down to 2.
const INV_FACT: [f64; 12] = [
    1.0 / 6_227_020_800.0,
    1.0 / 479_001_600.0,
    1.0 / 39_916_800.0,
    1.0 / 3_628_800.0,
    1.0 / 362_880.0,
    1.0 / 40_320.0,
    1.0 / 5_040.0,
    1.0 / 720.0,
    1.0 / 120.0,
    1.0 / 24.0,
    1.0 / 6.0,
    0.5,
];

/// Splits `x = k·ln2 + r` with `|r| ≤ ln2/2`; returns `(2^k, r)`.
/// Requires `k + 1023` in `1..=2046`.
#[inline(always)]
fn reduce(x: f64) -> (f64, f64) {
    let t = x * LOG2_E + SHIFT;
    let k = t - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    (scale, r)
}

/// `(e^r − 1 − r) / r²` by Horner.
#[inline(always)]
fn expm1_tail(r: f64) -> f64 {
    let mut p = INV_FACT[0];
    for &c in &INV_FACT[1..] {
        p = p * r + c;
    }
    p
}

/// `e^x` for `x` already clamped to `[EXP_MIN, EXP_MAX]`.
#[inline(always)]
fn exp_clamped(x: f64) -> f64 {
    let (scale, r) = reduce(x);
    let em1 = r + r * r * expm1_tail(r);
    (1.0 + em1) * scale
}

/// `e^x − 1` for `x` in `[−2·TANH_SAT, 0]`, accurate near zero.
#[inline(always)]
fn expm1_small(x: f64) -> f64 {
    let (scale, r) = reduce(x);
    let q = r + r * r * expm1_tail(r);
    scale * q + (scale - 1.0)
}

#[inline(always)]
fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    // NaN passes through both comparisons.
    let x = if x < lo { lo } else { x };
    if x > hi {
        hi
    } else {
        x
    }
}

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    exp_clamped(clamp(x, EXP_MIN, EXP_MAX))
}

/// Logistic function. Saturates at `e^−708` below and `1` above.
#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    let e = exp_clamped(clamp(-x.abs(), EXP_MIN, 0.0));
    let s = 1.0 / (1.0 + e);
    if x >= 0.0 {
        s
    } else {
        e * s
    }
}

#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    let a = clamp(x.abs(), 0.0, TANH_SAT);
    let em1 = expm1_small(-2.0 * a);
    (-em1 / (2.0 + em1)).copysign(x)
}

/// Natural log for positive normal `x`.
#[inline(always)]
pub fn ln(x: f64) -> f64 {
    let bits = x.to_bits();
    let m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    let e = f64::from_bits((bits >> 52) | 0x4330_0000_0000_0000) - TWO52 - 1023.0;
    let big = m > SQRT2;
    let m = if big { 0.5 * m } else { m };
    let e = if big { e + 1.0 } else { e };
    let f = (m - 1.0) / (m + 1.0);
    let s = f * f;
    let mut p = 1.0 / 25.0;
    for c in [23.0, 21.0, 19.0, 17.0, 15.0, 13.0, 11.0, 9.0, 7.0, 5.0, 3.0] {
        p = p * s + 1.0 / c;
    }
    let f2 = f + f;
    e * LN2_HI + (f2 + (f2 * s * p + e * LN2_LO))
}

/// Generates a public slice function plus `avx512f` and `avx2` clones of
/// its body, selected at run time.
macro_rules! multiversion {
    ($(#[$meta:meta])* $vis:vis fn $name:ident($($arg:ident: $ty:ty),* $(,)?) $body:block) => {
        $(#[$meta])*
        $vis fn $name($($arg: $ty),*) {
            #[inline(always)]
            fn imp($($arg: $ty),*) $body

            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx512f,avx512dq,avx2")]
                unsafe fn wide($($arg: $ty),*) {
                    imp($($arg),*)
                }
                #[target_feature(enable = "avx2")]
                unsafe fn mid($($arg: $ty),*) {
                    imp($($arg),*)
                }
                if std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("avx512dq") {
                    // SAFETY: the features were detected at run time.
                    return unsafe { wide($($arg),*) };
                }
                if std::is_x86_feature_detected!("avx2") {
                    // SAFETY: as above.
                    return unsafe { mid($($arg),*) };
                }
            }
            imp($($arg),*)
        }
    };
}
pub(crate) use multiversion;

multiversion! {
    /// `dst = σ(src)`.
    pub fn sigmoid_into(src: &[f64], dst: &mut [f64]) {
        assert_eq!(src.len(), dst.len());
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = sigmoid(s);
        }
    }
}

multiversion! {
    /// `dst = σ(src / tau)`.
    pub fn sigmoid_div_into(src: &[f64], tau: f64, dst: &mut [f64]) {
        assert_eq!(src.len(), dst.len());
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = sigmoid(s / tau);
        }
    }
}

multiversion! {
    /// `dst = σ((src + noise) / tau)`.
    pub fn sigmoid_noisy_into(src: &[f64], noise: &[f64], tau: f64, dst: &mut [f64]) {
        assert_eq!(src.len(), dst.len());
        assert_eq!(noise.len(), dst.len());
        for ((d, &s), &z) in dst.iter_mut().zip(src).zip(noise) {
            *d = sigmoid((s + z) / tau);
        }
    }
}

multiversion! {
    /// `dst = tanh(src)`.
    pub fn tanh_into(src: &[f64], dst: &mut [f64]) {
        assert_eq!(src.len(), dst.len());
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = tanh(s);
        }
    }
}

multiversion! {
    /// LSTM state update over one row: `c = f·c_prev + i·g`,
    /// `tanh_c = tanh(c)`, `h = o·tanh_c`. `gates` is `[i, f, o, g]`.
    pub fn lstm_update(gates: &[f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
        let n = c.len();
        assert!(gates.len() == 4 * n && c_prev.len() == n && tanh_c.len() == n && h.len() == n);
        let (i, rest) = gates.split_at(n);
        let (f, rest) = rest.split_at(n);
        let (o, g) = rest.split_at(n);
        for k in 0..n {
            let ct = f[k] * c_prev[k] + i[k] * g[k];
            let tc = tanh(ct);
            c[k] = ct;
            tanh_c[k] = tc;
            h[k] = o[k] * tc;
        }
    }
}
