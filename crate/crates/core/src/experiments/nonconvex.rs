//! Square-walk event study: SGD on the plane without projection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegimeCheck;
use crate::error::{Error, Result};
use crate::geometry::{dist2, Vec2};
use crate::objectives::{SquareWalk, SquareZ};
use crate::optimizers::{sgd_summary, RunConfig};
use crate::regularizers::Regularizer;
use crate::regularizers::F_TOLERANCE;
use crate::rng::{self, LabRng};
use crate::stats::{erf, erf_inv, exit_time_empirical, wilson_ci, BoundReport, Interval};

/// Trials re-run through the generic optimizer to cross-check the fast loop.
const VERIFIED_TRIALS: usize = 4;

const PURPOSE_EXIT: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexParams {
    pub steps: usize,
    /// `c = η√T`.
    pub c: f64,
    pub trials: usize,
    pub seed: u64,
    /// `α` of the exit-time event `τ > T/(αc)`.
    pub alpha: f64,
}

impl NonconvexParams {
    pub fn new(steps: usize, c: f64, trials: usize, seed: u64) -> Self {
        NonconvexParams { steps, c, trials, seed, alpha: 200.0 }
    }

    pub fn eta(&self) -> f64 {
        self.c / (self.steps as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!("need T ≥ 2, got {}", self.steps)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("need c = η√T > 0, got {}", self.c)));
        }
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("need α > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Largest `β` with `erf(β) ≤ √e − e`, `e = erf(√50/(4c))`.
pub fn solve_beta(c: f64) -> Result<f64> {
    let e = erf(50f64.sqrt() / (4.0 * c));
    let target = e.sqrt() - e;
    if !(target > 0.0) {
        return Err(Error::Config(format!("no positive β for c = {c}: √e − e = {target} with e = {e}")));
    }
    // bisection on erf, started from the inverse
    let (mut lo, mut hi) = (0.0, erf_inv(target)? * 1.01 + 1e-12);
    while erf(hi) <= target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erf(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `erf(√50/(4c)) + √(50³/T)`.
pub fn e1_bound(c: f64, steps: usize) -> f64 {
    erf(50f64.sqrt() / (4.0 * c)) + (50f64.powi(3) / steps as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexTrial {
    pub w: Vec2,
    pub counts: [u64; 4],
    pub e1: bool,
    pub e2: bool,
}

/// Label stream: 32 two-bit labels per `u64`.
struct Labels {
    rng: LabRng,
    word: u64,
    left: u32,
}

impl Labels {
    fn new(rng: LabRng) -> Self {
        Labels { rng, word: 0, left: 0 }
    }

    #[inline]
    fn next(&mut self) -> SquareZ {
        if self.left == 0 {
            self.word = self.rng.random();
            self.left = 32;
        }
        let z = SquareZ::from_bits(self.word);
        self.word >>= 2;
        self.left -= 1;
        z
    }
}

/// The sample of trial `index`, as consumed by the fast loop.
pub fn trial_sample(p: &NonconvexParams, index: usize) -> Vec<SquareZ> {
    let mut labels = Labels::new(rng::trial(p.seed, index as u64));
    (0..p.steps).map(|_| labels.next()).collect()
}

/// Averaged SGD output and label counts, same arithmetic as the generic
/// optimizer.
fn fast_run(eta: f64, steps: usize, rng: LabRng) -> (Vec2, [u64; 4]) {
    let mut labels = Labels::new(rng);
    let mut w = [0.0f64, 0.0];
    let mut sum = [0.0f64, 0.0];
    let mut counts = [0u64; 4];
    for _ in 0..steps {
        let z = labels.next();
        counts[(z.get() - 1) as usize] += 1;
        let g = SquareWalk::grad_at(w, z);
        sum[0] += 1.0 * w[0];
        sum[1] += 1.0 * w[1];
        w[0] += -eta * g[0];
        w[1] += -eta * g[1];
    }
    let inv = 1.0 / steps as f64;
    ([sum[0] * inv, sum[1] * inv], counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexReport {
    pub params: NonconvexParams,
    pub eta: f64,
    pub beta: f64,
    pub e2_threshold: f64,
    pub regularizer: String,
    pub regime_checks: Vec<RegimeCheck>,
    pub not_e1: BoundReport,
    pub e1_frequency: f64,
    pub e2_frequency: f64,
    pub e_count: u64,
    pub e_frequency: f64,
    pub e_ci: Interval,
    /// `1 − √erf(√50/(4c))`, the claimed lower bound on `P(E)` for large `T`.
    pub e_claimed_lower: f64,
    pub max_f_gap: f64,
    pub f_equal: bool,
    pub midpoint_exact: bool,
    pub distance_ok: bool,
    pub violations: u64,
    pub violation_fraction: f64,
    pub exit_time: BoundReport,
    pub fast_path_deviation: f64,
    #[serde(skip)]
    pub trials: Vec<NonconvexTrial>,
}

impl NonconvexReport {
    pub fn passed(&self) -> bool {
        self.not_e1.pass
            && self.f_equal
            && self.midpoint_exact
            && self.distance_ok
            && self.violation_fraction >= 0.99
            && self.fast_path_deviation <= 1e-12
    }
}

pub fn experiment_nonconvex(p: &NonconvexParams, r: &Regularizer) -> Result<NonconvexReport> {
    p.validate()?;
    let beta = solve_beta(p.c)?;
    let eta = p.eta();
    let e2_threshold = eta * (p.steps as f64).sqrt() * beta / 2.0;

    let trials: Vec<NonconvexTrial> = (0..p.trials)
        .into_par_iter()
        .map(|i| {
            let (w, counts) = fast_run(eta, p.steps, rng::trial(p.seed, i as u64));
            NonconvexTrial { w, counts, e1: w[1].abs() > 0.25, e2: w[0].abs() > e2_threshold }
        })
        .collect();

    let cfg = RunConfig::unbounded(eta, p.steps)?;
    let mut fast_dev: f64 = 0.0;
    for (i, t) in trials.iter().enumerate().take(VERIFIED_TRIALS) {
        let slow = sgd_summary(&SquareWalk, &trial_sample(p, i), &cfg)?;
        fast_dev = fast_dev.max(dist2(slow.output, t.w));
    }

    let (mut max_gap, mut midpoint_exact, mut distance_ok, mut violations) = (0.0f64, true, true, 0u64);
    for t in trials.iter().filter(|t| t.e1 && t.e2) {
        let w = t.w;
        let w0 = [0.0, w[1]];
        let wm = [-w[0], w[1]];
        let f = |x: Vec2| SquareWalk::empirical_from_counts(x, t.counts);
        let fs = f(w);
        max_gap = max_gap.max((fs - f(w0)).abs()).max((fs - f(wm)).abs());
        midpoint_exact &= [0.5 * w[0] + 0.5 * wm[0], 0.5 * w[1] + 0.5 * wm[1]] == w0;
        distance_ok &= dist2(w, w0) >= e2_threshold;
        if r.value2(w0) < r.value2(w).max(r.value2(wm)) {
            violations += 1;
        }
    }

    let n = trials.len() as u64;
    let not_e1 = trials.iter().filter(|t| !t.e1).count() as u64;
    let e_count = trials.iter().filter(|t| t.e1 && t.e2).count() as u64;
    let exit_seed = rng::substream(p.seed, 0, PURPOSE_EXIT).random::<u64>();
    let exit_time = exit_time_empirical(p.alpha, p.c, p.steps, p.trials, exit_seed)?;
    let e = erf(50f64.sqrt() / (4.0 * p.c));

    Ok(NonconvexReport {
        params: p.clone(),
        eta,
        beta,
        e2_threshold,
        regularizer: r.name.clone(),
        regime_checks: vec![
            RegimeCheck::new("β > 0 exists for c", true),
            RegimeCheck::new("W = ℝ² (no projection)", true),
            RegimeCheck::new("E₁ bound non-vacuous", e1_bound(p.c, p.steps) < 1.0),
        ],
        not_e1: BoundReport::new("P(not E1)", e1_bound(p.c, p.steps), not_e1, n)?,
        e1_frequency: (n - not_e1) as f64 / n as f64,
        e2_frequency: trials.iter().filter(|t| t.e2).count() as f64 / n as f64,
        e_count,
        e_frequency: e_count as f64 / n as f64,
        e_ci: wilson_ci(e_count, n, 0.95)?,
        e_claimed_lower: 1.0 - e.sqrt(),
        max_f_gap: max_gap,
        f_equal: max_gap <= F_TOLERANCE,
        midpoint_exact,
        distance_ok,
        violations,
        violation_fraction: if e_count == 0 { 0.0 } else { violations as f64 / e_count as f64 },
        exit_time,
        fast_path_deviation: fast_dev,
        trials,
    })
}

/// Per-trial rows `w1,w2,n1,n2,n3,n4,e1,e2`.
pub fn trials_csv(report: &NonconvexReport) -> String {
    let mut out = String::from("trial,w1,w2,n1,n2,n3,n4,e1,e2\n");
    for (i, t) in report.trials.iter().enumerate() {
        out.push_str(&format!(
            "{i},{:e},{:e},{},{},{},{},{},{}\n",
            t.w[0], t.w[1], t.counts[0], t.counts[1], t.counts[2], t.counts[3], t.e1, t.e2
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted() -> Regularizer {
        Regularizer::shifted(vec![0.3, 0.0])
    }

    #[test]
    fn beta_at_unit_c() {
        let b = solve_beta(1.0).unwrap();
        let e = erf(50f64.sqrt() / 4.0);
        assert!(erf(b) <= e.sqrt() - e);
        assert!(erf(b + 1e-9) > e.sqrt() - e);
        assert!((b - 0.0055).abs() < 5e-4, "{b}");
    }

    #[test]
    fn beta_fails_for_tiny_c() {
        // erf(√50/(4c)) rounds to 1 and √e − e vanishes
        assert!(matches!(solve_beta(0.01), Err(Error::Config(_))));
    }

    #[test]
    fn fast_loop_matches_optimizer() {
        let p = NonconvexParams::new(3000, 1.0, 8, 4);
        let cfg = RunConfig::unbounded(p.eta(), p.steps).unwrap();
        for i in 0..8 {
            let (w, counts) = fast_run(p.eta(), p.steps, rng::trial(p.seed, i as u64));
            let sample = trial_sample(&p, i);
            let slow = sgd_summary(&SquareWalk, &sample, &cfg).unwrap();
            assert_eq!(slow.output, w);
            let mut c = [0u64; 4];
            for z in &sample {
                c[(z.get() - 1) as usize] += 1;
            }
            assert_eq!(c, counts);
        }
    }

    #[test]
    fn small_study() {
        let p = NonconvexParams::new(2000, 1.0, 2000, 9);
        let rep = experiment_nonconvex(&p, &shifted()).unwrap();
        assert!(rep.f_equal && rep.midpoint_exact && rep.distance_ok);
        assert_eq!(rep.fast_path_deviation, 0.0);
        assert!(rep.e_count > 0);
        assert!(rep.violation_fraction >= 0.99);
        assert!(rep.exit_time.pass);
        assert_eq!(trials_csv(&rep).lines().count(), 2001);
    }

    #[test]
    fn deterministic() {
        let p = NonconvexParams::new(500, 1.0, 50, 3);
        let a = experiment_nonconvex(&p, &shifted()).unwrap();
        let b = experiment_nonconvex(&p, &shifted()).unwrap();
        assert_eq!(a, b);
    }
}
