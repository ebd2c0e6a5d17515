//! Seedable counter-based randomness and the binary-concrete gate sampler.
//!
//! `G(α, τ) = σ((α + log U − log(1 − U)) / τ)` relaxes a Bernoulli(σ(α))
//! draw; as `τ → 0⁺` its mass moves onto {0, 1}. The k-category
//! Gumbel-Softmax sampler is kept alongside it, and [`verify_prop1`]
//! measures how closely the relaxation tracks the Bernoulli it imitates.

use crate::error::{Error, Result};
use crate::linalg::{kernels, sigmoid_scalar, Vector};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x6A09_E667_F3BC_C909;
const DERIVE_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer.
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: output `n` is a keyed hash of `n`, so streams
/// are cheap to split and independent of evaluation order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    key: u64,
    counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            key: mix64(seed ^ SEED_SALT),
            counter: 0,
        }
    }

    /// Seed of the root stream this state descends from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit outputs consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent child stream identified by `id`. Does not advance `self`.
    pub fn derive(&self, id: u64) -> RngState {
        RngState {
            seed: self.seed,
            key: mix64(self.key ^ mix64(id.wrapping_add(DERIVE_SALT))),
            counter: 0,
        }
    }

    /// Two-level derivation, e.g. `(layer, timestep)`.
    pub fn derive2(&self, a: u64, b: u64) -> RngState {
        self.derive(a).derive(b)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        hash_counter(self.key, c)
    }

    /// Uniform draw strictly inside (0, 1): `((x >> 12) + 0.5) · 2⁻⁵²`.
    ///
    /// 52 bits rather than 53 so that `k + 0.5` is exact for every `k`; the
    /// largest draw is `1 − 2⁻⁵³`, not a rounded 1.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    /// Standard logistic draw `log U − log(1 − U)`.
    #[inline]
    pub fn logistic_noise(&mut self) -> f64 {
        logistic_from_uniform(self.uniform())
    }

    /// Standard Gumbel draw `−log(−log U)`.
    #[inline]
    pub fn gumbel_noise(&mut self) -> f64 {
        -(-self.uniform().ln()).ln()
    }

    /// Fills `out` with independent logistic draws.
    pub fn fill_logistic(&mut self, out: &mut [f64]) {
        fill_logistic_from(self.key, self.counter, out);
        self.counter = self.counter.wrapping_add(out.len() as u64);
    }

    /// Fills `out` with independent uniform draws.
    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        fill_uniform_from(self.key, self.counter, out);
        self.counter = self.counter.wrapping_add(out.len() as u64);
    }
}

#[inline(always)]
fn hash_counter(key: u64, c: u64) -> u64 {
    let z = mix64(c.wrapping_mul(GOLDEN_GAMMA) ^ key);
    mix64(z.wrapping_add(key.rotate_left(29)))
}

#[inline(always)]
fn to_unit(x: u64) -> f64 {
    // (x >> 12) as f64, written so that it vectorizes without AVX-512DQ.
    let k = f64::from_bits((x >> 12) | 0x4330_0000_0000_0000) - TWO52;
    (k + 0.5) * (1.0 / TWO52)
}

const TWO52: f64 = 4_503_599_627_370_496.0;

kernels::multiversion! {
    fn fill_logistic_from(key: u64, start: u64, out: &mut [f64]) {
        for (j, x) in out.iter_mut().enumerate() {
            let u = to_unit(hash_counter(key, start.wrapping_add(j as u64)));
            *x = logistic_from_uniform(u);
        }
    }
}

kernels::multiversion! {
    fn fill_uniform_from(key: u64, start: u64, out: &mut [f64]) {
        for (j, x) in out.iter_mut().enumerate() {
            *x = to_unit(hash_counter(key, start.wrapping_add(j as u64)));
        }
    }
}

#[inline(always)]
pub fn logistic_from_uniform(u: f64) -> f64 {
    kernels::ln(u / (1.0 - u))
}

pub fn uniform(rng: &mut RngState) -> f64 {
    rng.uniform()
}

pub fn logistic_noise(rng: &mut RngState) -> f64 {
    rng.logistic_noise()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive, got {tau}")))
    }
}

/// Samples `G(α, τ)` elementwise. Returns the gate values and the logistic
/// noise that produced them, for reuse in a backward pass.
pub fn binary_concrete(alpha: &Vector, tau: f64, rng: &mut RngState) -> Result<(Vector, Vector)> {
    check_tau(tau)?;
    let mut noise = Vector::zeros(alpha.len());
    rng.fill_logistic(noise.as_mut_slice());
    let g = binary_concrete_with_noise(alpha, &noise, tau)?;
    Ok((g, noise))
}

/// `σ((α + noise) / τ)` with the noise supplied by the caller.
pub fn binary_concrete_with_noise(alpha: &Vector, noise: &Vector, tau: f64) -> Result<Vector> {
    check_tau(tau)?;
    alpha.zip_map(noise, |a, n| sigmoid_scalar((a + n) / tau))
}

/// Pathwise derivative `∂G/∂α = G(1 − G)/τ` at frozen noise.
pub fn binary_concrete_grad(g: &Vector, tau: f64) -> Vector {
    g.map(|v| v * (1.0 - v) / tau)
}

/// Gumbel-Softmax sample over `k = log_pi.len()` categories.
pub fn gumbel_softmax_k(log_pi: &Vector, tau: f64, rng: &mut RngState) -> Result<Vector> {
    check_tau(tau)?;
    let q = Vector::from((0..log_pi.len()).map(|_| rng.gumbel_noise()).collect::<Vec<_>>());
    gumbel_softmax_with_noise(log_pi, &q, tau)
}

/// `softmax((log π + q) / τ)` with caller-supplied Gumbel noise `q`.
pub fn gumbel_softmax_with_noise(log_pi: &Vector, q: &Vector, tau: f64) -> Result<Vector> {
    check_tau(tau)?;
    if log_pi.len() < 2 {
        return Err(Error::invalid("gumbel softmax needs at least two categories"));
    }
    let z = log_pi.zip_map(q, |l, g| (l + g) / tau)?;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - max).exp());
    let sum: f64 = e.iter().sum();
    Ok(e.map(|v| v / sum))
}

/// Closed-form `P(G(α, τ) ≥ 1 − ε) = σ(α − τ log(1/ε − 1))`.
pub fn exact_upper_tail(alpha: f64, tau: f64, epsilon: f64) -> f64 {
    sigmoid_scalar(alpha - tau * (1.0 / epsilon - 1.0).ln())
}

/// Closed-form `P(G(α, τ) ≤ ε) = σ(−α − τ log(1/ε − 1))`.
pub fn exact_lower_tail(alpha: f64, tau: f64, epsilon: f64) -> f64 {
    sigmoid_scalar(-alpha - tau * (1.0 / epsilon - 1.0).ln())
}

/// Tolerance applied to the sandwich comparisons.
pub const SANDWICH_TOL: f64 = 1e-12;

/// Monte-Carlo and closed-form tail masses of `G(α, τ)` against the
/// Bernoulli(σ(α)) it approximates.
#[derive(Clone, Debug, PartialEq)]
pub struct Prop1Report {
    pub alpha: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub n_samples: usize,
    pub empirical_upper_tail: f64,
    pub empirical_lower_tail: f64,
    pub exact_upper_tail: f64,
    pub exact_lower_tail: f64,
    pub bernoulli_p: f64,
    pub bound_slack: f64,
    pub upper_bound_holds: bool,
    pub lower_bound_holds: bool,
}

impl Prop1Report {
    pub const CSV_HEADER: &'static str =
        "alpha,tau,epsilon,n,empirical_upper,exact_upper,empirical_lower,exact_lower,p,slack,holds";

    pub fn holds(&self) -> bool {
        self.upper_bound_holds && self.lower_bound_holds
    }

    /// Both empirical tails lie within four binomial standard errors of the
    /// closed forms.
    pub fn monte_carlo_consistent(&self) -> bool {
        let n = self.n_samples as f64;
        let within = |emp: f64, exact: f64| {
            let se = (emp * (1.0 - emp) / n).sqrt();
            (emp - exact).abs() <= 4.0 * se
        };
        within(self.empirical_upper_tail, self.exact_upper_tail)
            && within(self.empirical_lower_tail, self.exact_lower_tail)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{}",
            self.alpha,
            self.tau,
            self.epsilon,
            self.n_samples,
            self.empirical_upper_tail,
            self.exact_upper_tail,
            self.empirical_lower_tail,
            self.exact_lower_tail,
            self.bernoulli_p,
            self.bound_slack,
            self.holds()
        )
    }
}

/// Minimum sample count accepted by [`verify_prop1`].
pub const PROP1_MIN_SAMPLES: usize = 10_000;

/// Draws `n` samples of `G(α, τ)`, tallies both ε-tails and checks the exact
/// tails against `[p − (τ/4)·log(1/ε), p]` and its mirror for the lower tail.
pub fn verify_prop1(alpha: f64, tau: f64, epsilon: f64, n: usize, rng: &mut RngState) -> Result<Prop1Report> {
    check_tau(tau)?;
    if !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be finite, got {alpha}")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    if n < PROP1_MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {PROP1_MIN_SAMPLES} samples, got {n}"
        )));
    }

    let (mut upper, mut lower) = (0usize, 0usize);
    for _ in 0..n {
        let g = sigmoid_scalar((alpha + rng.logistic_noise()) / tau);
        if g >= 1.0 - epsilon {
            upper += 1;
        }
        if g <= epsilon {
            lower += 1;
        }
    }

    let p = sigmoid_scalar(alpha);
    let q = sigmoid_scalar(-alpha);
    let slack = tau / 4.0 * (1.0 / epsilon).ln();
    let exact_upper = exact_upper_tail(alpha, tau, epsilon);
    let exact_lower = exact_lower_tail(alpha, tau, epsilon);
    let sandwich = |tail: f64, target: f64| tail <= target + SANDWICH_TOL && target - tail <= slack + SANDWICH_TOL;

    Ok(Prop1Report {
        alpha,
        tau,
        epsilon,
        n_samples: n,
        empirical_upper_tail: upper as f64 / n as f64,
        empirical_lower_tail: lower as f64 / n as f64,
        exact_upper_tail: exact_upper,
        exact_lower_tail: exact_lower,
        bernoulli_p: p,
        bound_slack: slack,
        upper_bound_holds: sandwich(exact_upper, p),
        lower_bound_holds: sandwich(exact_lower, q),
    })
}

/// The 5 × 4 × 3 `(α, τ, ε)` grid used by `verify-gumbel --grid default`.
pub fn prop1_default_grid() -> Vec<(f64, f64, f64)> {
    let mut grid = Vec::with_capacity(60);
    for &alpha in &[-2.0, -0.5, 0.0, 0.5, 2.0] {
        for &tau in &[0.1, 0.5, 0.9, 2.0] {
            for &eps in &[0.01, 0.05, 0.1] {
                grid.push((alpha, tau, eps));
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seeded_stream_is_reproducible() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        let first: Vec<f64> = (0..3).map(|_| a.uniform()).collect();
        let again: Vec<f64> = (0..3).map(|_| b.uniform()).collect();
        assert_eq!(first, again);
        assert_ne!(first[0], first[1]);
        assert_ne!(RngState::new(43).uniform(), first[0]);
    }

    #[test]
    fn derived_streams_differ_and_do_not_advance_parent() {
        let root = RngState::new(9);
        let mut c1 = root.derive(1);
        let mut c2 = root.derive(2);
        assert_ne!(c1.next_u64(), c2.next_u64());
        assert_eq!(root, RngState::new(9));
        assert_eq!(root.derive2(3, 4), root.derive(3).derive(4));
    }

    #[test]
    fn uniform_moments_and_open_interval() {
        let mut rng = RngState::new(1);
        let n = 1_000_000;
        let (mut sum, mut lo, mut hi) = (0.0, 1.0f64, 0.0f64);
        for _ in 0..n {
            let u = rng.uniform();
            sum += u;
            lo = lo.min(u);
            hi = hi.max(u);
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "{mean}");
        assert!(lo > 0.0 && hi < 1.0);
    }

    #[test]
    fn extreme_uniforms_stay_open() {
        let smallest = 0.5 * (1.0 / (1u64 << 52) as f64);
        let largest = ((u64::MAX >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64);
        assert!(smallest > 0.0 && largest < 1.0);
        assert_eq!(largest, 1.0 - f64::EPSILON / 2.0);
        assert!(logistic_from_uniform(smallest).is_finite());
        assert!(logistic_from_uniform(largest).is_finite());
    }

    #[test]
    fn logistic_median_and_cdf() {
        assert_eq!(logistic_from_uniform(0.5), 0.0);
        let mut rng = RngState::new(2);
        let n = 1_000_000;
        let (mut below0, mut below2) = (0usize, 0usize);
        for _ in 0..n {
            let x = rng.logistic_noise();
            below0 += (x <= 0.0) as usize;
            below2 += (x <= 2.0) as usize;
        }
        let f0 = below0 as f64 / n as f64;
        let f2 = below2 as f64 / n as f64;
        assert!((f0 - 0.5).abs() < 0.002, "{f0}");
        assert!((f2 - sigmoid_scalar(2.0)).abs() < 0.0013, "{f2}");
    }

    #[test]
    fn binary_concrete_closed_forms() {
        let zero = Vector::zeros(1);
        let g = binary_concrete_with_noise(&zero, &zero, 1.0).unwrap();
        assert_eq!(g[0], 0.5);
        let g = binary_concrete_with_noise(&Vector::from(vec![0.9]), &zero, 0.9).unwrap();
        assert!((g[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!(binary_concrete(&zero, 0.0, &mut RngState::new(0)).is_err());
        assert!(binary_concrete(&zero, -1.0, &mut RngState::new(0)).is_err());
    }

    #[test]
    fn binary_concrete_upper_tail_frequency() {
        // α = 0, τ = 0.1, ε = 0.05: P(G ≥ 0.95) = σ(−0.1·log 19) ≈ 0.42692
        let mut rng = RngState::new(3);
        let alpha = Vector::zeros(1000);
        let mut hits = 0usize;
        for _ in 0..1000 {
            let (g, noise) = binary_concrete(&alpha, 0.1, &mut rng).unwrap();
            assert!(noise.iter().all(|n| n.is_finite()));
            hits += g.iter().filter(|&&v| v >= 0.95).count();
        }
        let frac = hits as f64 / 1e6;
        assert!((frac - 0.42692).abs() < 0.002, "{frac}");
    }

    #[test]
    fn pathwise_gradient_values() {
        assert_eq!(binary_concrete_grad(&Vector::from(vec![0.5]), 1.0)[0], 0.25);
        let g = binary_concrete_grad(&Vector::from(vec![0.5]), 0.9)[0];
        assert!((g - 0.277_777_777_777_777_8).abs() < 1e-15);
    }

    #[test]
    fn pathwise_gradient_matches_central_difference() {
        let mut rng = RngState::new(4);
        let tau = 0.7;
        let h = 1e-6;
        let mut checked = 0;
        while checked < 50 {
            let a = 4.0 * rng.uniform() - 2.0;
            let noise = Vector::from(vec![rng.logistic_noise()]);
            // Past |z| ≈ 3 the sample sits so close to 0 or 1 that float
            // spacing, not slope, dominates a difference at h = 1e-6.
            if ((a + noise[0]) / tau).abs() > 3.0 {
                continue;
            }
            checked += 1;
            let f = |x: f64| binary_concrete_with_noise(&Vector::from(vec![x]), &noise, tau).unwrap()[0];
            let numeric = (f(a + h) - f(a - h)) / (2.0 * h);
            let analytic = binary_concrete_grad(&Vector::from(vec![f(a)]), tau)[0];
            let rel = (numeric - analytic).abs() / analytic.abs().max(1e-12);
            assert!(rel < 1e-8, "rel {rel}");
        }
    }

    #[test]
    fn gumbel_softmax_symmetry_and_normalisation() {
        let log_pi = Vector::filled(4, (0.25f64).ln());
        let y = gumbel_softmax_with_noise(&log_pi, &Vector::filled(4, 0.3), 0.5).unwrap();
        for &v in y.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let mut rng = RngState::new(5);
        let y = gumbel_softmax_k(&Vector::from(vec![0.1, -2.0, 1.3]), 0.7, &mut rng).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gumbel_softmax_k(&Vector::zeros(1), 1.0, &mut rng).is_err());
        assert!(gumbel_softmax_k(&log_pi, 0.0, &mut rng).is_err());
    }

    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn two_category_gumbel_softmax_is_binary_concrete() {
        let log_pi = Vector::from(vec![(0.7f64).ln(), (0.3f64).ln()]);
        let tau = 0.6;
        let alpha = Vector::from(vec![log_pi[0] - log_pi[1]]);
        let mut r1 = RngState::new(6);
        let mut r2 = RngState::new(7);
        let n = 100_000;
        let soft: Vec<f64> = (0..n)
            .map(|_| gumbel_softmax_k(&log_pi, tau, &mut r1).unwrap()[0])
            .collect();
        let concrete: Vec<f64> = (0..n)
            .map(|_| binary_concrete(&alpha, tau, &mut r2).unwrap().0[0])
            .collect();
        let d = ks_statistic(soft, concrete);
        assert!(d < 0.01, "KS statistic {d}");
    }

    /// Fraction of draws whose largest coordinate exceeds 0.99.
    fn one_hot_fraction(log_pi: &Vector, tau: f64, n: usize, rng: &mut RngState) -> f64 {
        let hits = (0..n)
            .filter(|_| {
                let y = gumbel_softmax_k(log_pi, tau, rng).unwrap();
                y.iter().copied().fold(0.0, f64::max) > 0.99
            })
            .count();
        hits as f64 / n as f64
    }

    /// With uniform π over k categories the gap between the two largest
    /// perturbed logits satisfies `P(gap > δ) = k / (k + (k − 1)(e^δ − 1))`.
    /// The top coordinate exceeds 0.99 when the gap exceeds τ·log(99(k − 1))
    /// and only if it exceeds τ·log 99, which brackets the one-hot fraction.
    #[test]
    fn one_hot_fraction_matches_spacing_law() {
        let k = 4.0;
        let tail = |delta: f64| k / (k + (k - 1.0) * (delta.exp() - 1.0));
        let tau = 0.01;
        let lo = tail(tau * (99.0 * (k - 1.0)).ln());
        let hi = tail(tau * 99f64.ln());
        let n = 100_000;
        let frac = one_hot_fraction(&Vector::filled(4, 0.25f64.ln()), tau, n, &mut RngState::new(8));
        let se = (frac * (1.0 - frac) / n as f64).sqrt();
        assert!(frac > lo - 4.0 * se && frac < hi + 4.0 * se, "{lo} {frac} {hi}");
    }

    #[test]
    fn low_temperature_is_nearly_one_hot() {
        let mut rng = RngState::new(9);
        for _ in 0..5 {
            let logits: Vec<f64> = (0..4).map(|_| 4.0 * rng.uniform() - 2.0).collect();
            let lse = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
            let log_pi = Vector::from(logits.iter().map(|v| v - lse).collect::<Vec<_>>());
            let frac = one_hot_fraction(&log_pi, 0.001, 10_000, &mut rng);
            assert!(frac >= 0.99, "{frac}");
        }
    }

    #[test]
    fn prop1_reference_point() {
        let r = verify_prop1(0.0, 0.1, 0.05, 100_000, &mut RngState::new(10)).unwrap();
        assert_eq!(r.bernoulli_p, 0.5);
        assert!((r.bound_slack - 0.074_893).abs() < 1e-6);
        assert!((r.exact_upper_tail - 0.42692).abs() < 1e-5);
        assert!(r.holds());
        assert!(r.monte_carlo_consistent());
    }

    #[test]
    fn prop1_saturated_alpha() {
        let r = verify_prop1(30.0, 0.5, 0.1, 10_000, &mut RngState::new(11)).unwrap();
        assert!((r.exact_upper_tail - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prop1_rejects_bad_domain() {
        let mut rng = RngState::new(0);
        assert!(verify_prop1(0.0, 0.0, 0.1, 10_000, &mut rng).is_err());
        assert!(verify_prop1(0.0, 1.0, 0.5, 10_000, &mut rng).is_err());
        assert!(verify_prop1(0.0, 1.0, 0.0, 10_000, &mut rng).is_err());
        assert!(verify_prop1(0.0, 1.0, 0.1, 9_999, &mut rng).is_err());
    }

    #[test]
    fn sandwich_holds_on_grid() {
        for (alpha, tau, eps) in prop1_default_grid() {
            let p = sigmoid_scalar(alpha);
            let slack = tau / 4.0 * (1.0 / eps).ln();
            let up = exact_upper_tail(alpha, tau, eps);
            let lo = exact_lower_tail(alpha, tau, eps);
            assert!(up <= p && p - up <= slack, "{alpha} {tau} {eps}");
            assert!(lo <= 1.0 - p && (1.0 - p) - lo <= slack + 1e-15);
        }
    }

    proptest! {
        #[test]
        fn smaller_temperature_sharpens(alpha in 0.01f64..5.0, t1 in 0.05f64..2.0, dt in 0.01f64..2.0, eps in 0.01f64..0.49) {
            prop_assert!(exact_upper_tail(alpha, t1, eps) > exact_upper_tail(alpha, t1 + dt, eps));
        }

        #[test]
        fn concrete_samples_stay_open(seed in any::<u64>(), a in -5.0f64..5.0, tau in 0.5f64..3.0) {
            let mut rng = RngState::new(seed);
            let (g, _) = binary_concrete(&Vector::filled(64, a), tau, &mut rng).unwrap();
            prop_assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}
