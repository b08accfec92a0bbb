//! Special functions, confidence intervals and the random-walk bound checks.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::SquareWalk;
use crate::rng;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Inverse of [`erf`] on `(−1, 1)` by bisection.
pub fn erf_inv(y: f64) -> Result<f64> {
    if !(y > -1.0 && y < 1.0) {
        return Err(invalid(format!("erf_inv needs y in (-1, 1), got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-6.0f64, 6.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erf(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two-sided normal quantile for a confidence level, `√2 · erf⁻¹(level)`.
pub fn z_for_level(level: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf_inv(level).expect("confidence level must lie in (0, 1)")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, trials: u64, level: f64) -> Result<Interval> {
    if trials == 0 || successes > trials {
        return Err(invalid(format!("need 0 ≤ successes ≤ trials and trials ≥ 1, got {successes}/{trials}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z_for_level(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(Interval { lo: (center - half).max(0.0).min(p), hi: (center + half).min(1.0).max(p) })
}

/// Sample mean and normal-approximation half-width at `level`.
pub fn mean_ci(xs: &[f64], level: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, z_for_level(level) * (var / n).sqrt())
}

/// An analytic bound against a Monte Carlo estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub label: String,
    pub analytic: f64,
    pub empirical: f64,
    pub ci_half_width: f64,
    pub successes: u64,
    pub trials: u64,
    pub pass: bool,
}

impl BoundReport {
    pub fn new(label: impl Into<String>, analytic: f64, successes: u64, trials: u64) -> Result<Self> {
        let ci = wilson_ci(successes, trials, 0.95)?;
        let empirical = successes as f64 / trials as f64;
        let half = ci.half_width();
        Ok(BoundReport {
            label: label.into(),
            analytic,
            empirical,
            ci_half_width: half,
            successes,
            trials,
            pass: empirical - 3.0 * half <= analytic,
        })
    }
}

/// `erf(a) + √(50³k/T)`.
pub fn berry_esseen_bound(c: f64, k: usize, a: f64, t: usize) -> Result<f64> {
    if k == 0 || t <= 2 * k {
        return Err(Error::Regime(format!("need k ≥ 1 and T > 2k, got k={k}, T={t}")));
    }
    if !(a >= 0.0) || !(c > 0.0) {
        return Err(invalid(format!("need a ≥ 0 and c > 0, got a={a}, c={c}")));
    }
    Ok(erf(a) + (50f64.powi(3) * k as f64 / t as f64).sqrt())
}

/// Draws `x ∈ {1, −1, 0}` with probabilities ¼, ¼, ½ from bit pairs.
struct TernaryBits<'a, R: Rng> {
    rng: &'a mut R,
    word: u64,
    left: u32,
}

impl<'a, R: Rng> TernaryBits<'a, R> {
    fn new(rng: &'a mut R) -> Self {
        TernaryBits { rng, word: 0, left: 0 }
    }

    #[inline]
    fn next(&mut self) -> i64 {
        if self.left == 0 {
            self.word = self.rng.random();
            self.left = 32;
        }
        let x = (self.word & 1) as i64 - (self.word >> 1 & 1) as i64;
        self.word >>= 2;
        self.left -= 1;
        x
    }
}

/// One grid point of the Berry–Esseen check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeParams {
    pub c: f64,
    pub k: usize,
    pub a: f64,
}

/// Monte Carlo estimate of `P(|T^{-1/2} Σ_{t≤T/k} c(T−t)/T x_t| < a c/√(50k))`
/// for every grid point, sharing one simulated sequence per trial.
///
/// After multiplying through by `T^{3/2}/c` the event reads
/// `|Σ (T−t) x_t| < a T^{3/2}/√(50k)`, so the partial sums are integers.
pub fn be_empirical_grid(grid: &[BeParams], t: usize, trials: usize, seed: u64) -> Result<Vec<BoundReport>> {
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let mut cutoffs = Vec::with_capacity(grid.len());
    for p in grid {
        berry_esseen_bound(p.c, p.k, p.a, t)?;
        cutoffs.push(t / p.k);
    }
    let mut checkpoints: Vec<usize> = cutoffs.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let thresholds: Vec<f64> = grid.iter().map(|p| p.a * (t as f64).powf(1.5) / (50.0 * p.k as f64).sqrt()).collect();

    let hits = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::trial(seed, i as u64);
            let mut bits = TernaryBits::new(&mut rng);
            let mut sums = Vec::with_capacity(checkpoints.len());
            let mut acc: i64 = 0;
            let mut step = 1;
            for &cp in &checkpoints {
                while step <= cp {
                    acc += (t - step) as i64 * bits.next();
                    step += 1;
                }
                sums.push(acc);
            }
            let mut out = vec![0u64; grid.len()];
            for (g, o) in out.iter_mut().enumerate() {
                let s = sums[checkpoints.binary_search(&cutoffs[g]).expect("checkpoint present")];
                *o = u64::from(((s.unsigned_abs()) as f64) < thresholds[g]);
            }
            out
        })
        .reduce(
            || vec![0u64; grid.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    grid.iter()
        .zip(hits)
        .map(|(p, h)| {
            let bound = berry_esseen_bound(p.c, p.k, p.a, t)?;
            BoundReport::new(format!("c={} k={} a={}", p.c, p.k, p.a), bound, h, trials as u64)
        })
        .collect()
}

pub fn be_empirical_check(c: f64, k: usize, a: f64, t: usize, trials: usize, seed: u64) -> Result<BoundReport> {
    let mut v = be_empirical_grid(&[BeParams { c, k, a }], t, trials, seed)?;
    Ok(v.remove(0))
}

/// `Σ_{t≤T/k} (c(T−t)/T)² / 2`, the exact variance of the lemma's sum.
pub fn be_variance(c: f64, k: usize, t: usize) -> f64 {
    let tf = t as f64;
    (1..=t / k).map(|s| (c * (tf - s as f64) / tf).powi(2) / 2.0).sum()
}

/// `8 e^{−αc/32}`.
pub fn hoeffding_exit_bound(alpha: f64, c: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(c > 0.0) {
        return Err(invalid(format!("need α > 0 and c > 0, got α={alpha}, c={c}")));
    }
    Ok(8.0 * (-alpha * c / 32.0).exp())
}

/// Fraction of square-walk SGD runs (step `η = c/√T`) whose iterate leaves the
/// square before step `T/(αc)`.
pub fn exit_time_empirical(alpha: f64, c: f64, t: usize, trials: usize, seed: u64) -> Result<BoundReport> {
    let bound = hoeffding_exit_bound(alpha, c)?;
    let eta = c / (t as f64).sqrt();
    let horizon = t as f64 / (alpha * c);
    let exits = count_exits(eta, horizon, trials, seed)?;
    BoundReport::new(format!("alpha={alpha} c={c}"), bound, exits, trials as u64)
}

pub(crate) fn count_exits(eta: f64, horizon: f64, trials: usize, seed: u64) -> Result<u64> {
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    // steps t = 1, 2, ... with t < horizon; w⁽¹⁾ = 0 is inside
    let last = horizon.ceil() as usize - 1;
    Ok((0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::trial(seed, i as u64);
            let mut w = [0.0f64, 0.0];
            let mut word = 0u64;
            let mut left = 0;
            for _ in 2..=last {
                if left == 0 {
                    word = rng.random();
                    left = 32;
                }
                let z = crate::objectives::SquareZ::from_bits(word);
                word >>= 2;
                left -= 1;
                let g = SquareWalk::grad_at(w, z);
                w[0] -= eta * g[0];
                w[1] -= eta * g[1];
                if !SquareWalk::in_square(w) {
                    return 1u64;
                }
            }
            0
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Maclaurin series, summed until terms stop changing the total.
    fn erf_series(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut power = x;
        let mut fact = 1.0;
        let mut n = 0;
        loop {
            let term = power / (fact * (2 * n + 1) as f64);
            let signed = if n % 2 == 0 { term } else { -term };
            if sum + signed == sum {
                break;
            }
            sum += signed;
            n += 1;
            fact *= n as f64;
            power *= x * x;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn erf_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(10.0) - 1.0).abs() < 1e-7);
        assert!((erf(1.0) - 0.8427007929).abs() < 1e-7);
        for x in [0.1, 0.5, 1.0, 1.7677669529663689, 2.5] {
            assert!((erf(x) - erf_series(x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn erf_inv_round_trip() {
        for y in [-0.99, -0.5, 0.0061, 0.3, 0.95] {
            let x = erf_inv(y).unwrap();
            assert!((erf(x) - y).abs() < 1e-10);
        }
        assert!(erf_inv(1.0).is_err());
        assert!((z_for_level(0.95) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn wilson_examples() {
        let ci = wilson_ci(0, 100, 0.95).unwrap();
        assert_eq!(ci.lo, 0.0);
        let ci = wilson_ci(50, 100, 0.95).unwrap();
        // independent evaluation of the score formula
        let z: f64 = 1.959963984540054;
        let n = 100.0;
        let c = (0.5 + z * z / (2.0 * n)) / (1.0 + z * z / n);
        let h = z / (1.0 + z * z / n) * (0.25 / n + z * z / (4.0 * n * n)).sqrt();
        assert!((ci.lo - (c - h)).abs() < 1e-12 && (ci.hi - (c + h)).abs() < 1e-12);
        assert!((ci.lo - 0.404).abs() < 1e-3 && (ci.hi - 0.596).abs() < 1e-3);
        assert_eq!(wilson_ci(1, 1, 0.95).unwrap().hi, 1.0);
        assert!(wilson_ci(3, 2, 0.95).is_err());
    }

    #[test]
    fn berry_esseen_formula() {
        assert!((berry_esseen_bound(1.0, 1, 0.0, 10_000).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        let b = berry_esseen_bound(3.0, 1, 0.7, 125_000).unwrap();
        assert!((b - (erf(0.7) + 1.0)).abs() < 1e-15);
        let a = 50f64.sqrt() / 4.0;
        let direct = erf_series(a) + (125000.0f64 / 10000.0).sqrt();
        assert!((berry_esseen_bound(1.0, 1, a, 10_000).unwrap() - direct).abs() < 1e-12);
        assert!(berry_esseen_bound(1.0, 5, 0.5, 10).is_err());
    }

    #[test]
    fn be_variance_floor_and_k_monotonicity() {
        let (c, t) = (1.3, 10_000);
        for k in [1, 2, 4] {
            assert!(be_variance(c, k, t) >= c * c * t as f64 / (50.0 * k as f64));
        }
        assert!(be_variance(c, 2, t) < be_variance(c, 1, t));
        // fewer terms means a less spread sum, so the small-ball probability grows
        let p1 = be_empirical_check(1.0, 1, 0.5, 2000, 4000, 5).unwrap().empirical;
        let p4 = be_empirical_check(1.0, 4, 0.5, 2000, 4000, 5).unwrap().empirical;
        assert!(p4 > p1 - 0.05);
    }

    #[test]
    fn be_large_a_is_certain() {
        let r = be_empirical_check(1.0, 1, 100.0, 1000, 2000, 1).unwrap();
        assert_eq!(r.empirical, 1.0);
        assert!(r.analytic > 1.0 && r.pass);
    }

    #[test]
    fn hoeffding_examples() {
        let b = hoeffding_exit_bound(32.0 * 8f64.ln(), 1.0).unwrap();
        assert!((b - 1.0).abs() < 1e-14);
        assert_eq!(count_exits(0.0, 500.0, 100, 3).unwrap(), 0);
        let r = exit_time_empirical(64.0, 1.0, 10_000, 2000, 9).unwrap();
        assert!(r.pass);
    }

    proptest! {
        #[test]
        fn erf_odd_monotone_bounded(x in -8.0f64..8.0, dx in 1e-6f64..1.0) {
            prop_assert_eq!(erf(-x), -erf(x));
            prop_assert!(erf(x + dx) >= erf(x));
            prop_assert!(erf(x).abs() <= 1.0);
        }

        #[test]
        fn be_bound_monotone(a in 0.0f64..3.0, da in 0.0f64..1.0, k in 1usize..8, t in 100usize..100_000) {
            let base = berry_esseen_bound(1.0, k, a, t).unwrap();
            prop_assert!(berry_esseen_bound(1.0, k, a + da, t).unwrap() >= base);
            prop_assert!(berry_esseen_bound(1.0, k + 1, a, t.max(2 * k + 3)).unwrap() >= berry_esseen_bound(1.0, k, a, t.max(2 * k + 3)).unwrap());
            prop_assert!(berry_esseen_bound(1.0, k, a, t + 10).unwrap() <= base);
        }

        #[test]
        fn wilson_contains_estimate(n in 1u64..10_000, frac in 0.0f64..=1.0) {
            let s = ((n as f64) * frac).floor() as u64;
            let ci = wilson_ci(s, n, 0.95).unwrap();
            prop_assert!(ci.contains(s as f64 / n as f64));
            prop_assert!(ci.lo >= 0.0 && ci.hi <= 1.0);
        }
    }
}
