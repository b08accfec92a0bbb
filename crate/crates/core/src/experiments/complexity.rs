//! Monte Carlo probe of statistical complexity on hypercube sets.
//!
//! A trial draws a sign mask and `m` instances of the masked hard
//! distribution and looks for a point of `K` with zero empirical loss and
//! population excess at least ¼. Only preimages of uncovered codewords are
//! searched: they are exactly the cube points whose zero empirical loss
//! follows from the packing separation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::{FeldmanHard, SampleSource, MAX_FELDMAN_DIM};
use crate::rng;
use crate::stats::{wilson_ci, Interval};

/// Largest dimension for which exact probabilities are enumerated.
pub const EXACT_MAX_DIM: usize = 20;

/// Required population excess of a witness.
pub const WITNESS_EXCESS: f64 = 0.25;

/// A subset of `{±1/√d}^d`, points given by sign bits (bit set = positive).
pub trait CubeSet: Send + Sync {
    fn dim(&self) -> usize;
    fn contains(&self, bits: u64) -> bool;
    /// The members, when the set is stored explicitly.
    fn explicit(&self) -> Option<&[u64]> {
        None
    }
    fn is_full(&self) -> bool {
        false
    }
}

pub(crate) fn full_mask(d: usize) -> u64 {
    if d >= 64 {
        u64::MAX
    } else {
        (1u64 << d) - 1
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FullCube(pub usize);

impl CubeSet for FullCube {
    fn dim(&self) -> usize {
        self.0
    }
    fn contains(&self, bits: u64) -> bool {
        bits & !full_mask(self.0) == 0
    }
    fn is_full(&self) -> bool {
        true
    }
}

/// A sorted, deduplicated list of members.
#[derive(Clone, Debug)]
pub struct ExplicitSet {
    d: usize,
    members: Vec<u64>,
}

impl ExplicitSet {
    pub fn new(d: usize, mut members: Vec<u64>) -> Result<Self> {
        if members.iter().any(|&x| x & !full_mask(d) != 0) {
            return Err(invalid(format!("member outside the {d}-cube")));
        }
        members.sort_unstable();
        members.dedup();
        Ok(ExplicitSet { d, members })
    }

    pub fn singleton(d: usize, x: u64) -> Result<Self> {
        Self::new(d, vec![x])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl CubeSet for ExplicitSet {
    fn dim(&self) -> usize {
        self.d
    }
    fn contains(&self, bits: u64) -> bool {
        self.members.binary_search(&bits).is_ok()
    }
    fn explicit(&self) -> Option<&[u64]> {
        Some(&self.members)
    }
}

/// Membership by predicate.
pub struct ImplicitSet<F> {
    d: usize,
    pred: F,
}

impl<F: Fn(u64) -> bool + Send + Sync> ImplicitSet<F> {
    pub fn new(d: usize, pred: F) -> Self {
        ImplicitSet { d, pred }
    }
}

impl<F: Fn(u64) -> bool + Send + Sync> CubeSet for ImplicitSet<F> {
    fn dim(&self) -> usize {
        self.d
    }
    fn contains(&self, bits: u64) -> bool {
        bits & !full_mask(self.d) == 0 && (self.pred)(bits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub d: usize,
    pub m: usize,
    pub trials: usize,
    pub codewords: usize,
    pub witnesses: u64,
    pub probability: f64,
    pub ci: Interval,
    /// Smallest population excess among witnesses (`None` without witnesses).
    pub epsilon: Option<f64>,
    /// Every witness had zero empirical loss on every instance.
    pub zero_empirical: bool,
    pub exact: Option<f64>,
    pub mc_exact_gap: Option<f64>,
}

impl ComplexityReport {
    /// Probability at least `target − slack·halfwidth`.
    pub fn meets(&self, target: f64, slack: f64) -> bool {
        self.probability >= target - slack * self.ci.half_width()
    }
}

struct TrialOutcome {
    witness: bool,
    excess: f64,
    zero: bool,
}

/// Estimates `P(∃ w ∈ K: F̂_m(w) = 0 ∧ F(w) ≥ ¼)` over `trials` seeded
/// trials. With `exact` the probability is also computed exactly, which
/// needs `d ≤ 20` unless `K` is the full cube.
pub fn feldman_complexity_probe(
    k: &dyn CubeSet,
    m: usize,
    trials: usize,
    seed: u64,
    exact: bool,
) -> Result<ComplexityReport> {
    let d = k.dim();
    if d == 0 || d > MAX_FELDMAN_DIM {
        return Err(Error::Unsupported(format!("cube dimension {d} outside 1..={MAX_FELDMAN_DIM}")));
    }
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    if let Some(members) = k.explicit() {
        if members.is_empty() {
            return Err(invalid("the probed set is empty"));
        }
    }
    if exact && d > EXACT_MAX_DIM && !k.is_full() {
        return Err(Error::Unsupported(format!(
            "exact mode enumerates the cube and needs d ≤ {EXACT_MAX_DIM}, got {d}"
        )));
    }
    let base = FeldmanHard::new(d)?;
    let full = full_mask(d);
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::trial(seed, i as u64);
            let hard = base.clone().with_mask(rng.random::<u64>() & full);
            let instances: Vec<_> = (0..m).map(|_| hard.sample(&mut rng)).collect();
            let mut covered = vec![0u64; hard.packing.len().div_ceil(64)];
            for v in &instances {
                for (c, b) in covered.iter_mut().zip(&v.included) {
                    *c |= b;
                }
            }
            let found = (0..hard.packing.len())
                .filter(|&j| covered[j / 64] >> (j % 64) & 1 == 0)
                .map(|j| hard.preimage_of_codeword(j))
                .find(|&x| k.contains(x));
            match found {
                Some(x) => TrialOutcome {
                    witness: true,
                    excess: hard.population_excess_bits(x),
                    zero: instances.iter().all(|v| hard.value_bits(x, v) == 0.0),
                },
                None => TrialOutcome { witness: false, excess: f64::INFINITY, zero: true },
            }
        })
        .collect();

    let witnesses = outcomes.iter().filter(|o| o.witness).count() as u64;
    let epsilon = outcomes.iter().filter(|o| o.witness).map(|o| o.excess).reduce(f64::min);
    let zero_empirical = outcomes.iter().all(|o| o.zero);
    let probability = witnesses as f64 / trials as f64;
    let ci = wilson_ci(witnesses, trials as u64, 0.95)?;
    let exact_p = if exact { Some(exact_probability(k, &base, m)?) } else { None };
    Ok(ComplexityReport {
        d,
        m,
        trials,
        codewords: base.packing.len(),
        witnesses,
        probability,
        ci,
        epsilon,
        zero_empirical,
        exact: exact_p,
        mc_exact_gap: exact_p.map(|p| (p - probability).abs()),
    })
}

/// `2^{-d} Σ_mask [1 − (1 − 2^{-m})^{n(mask)}]` with `n(mask)` the number of
/// codewords whose preimage under `mask` lies in `K`.
fn exact_probability(k: &dyn CubeSet, hard: &FeldmanHard, m: usize) -> Result<f64> {
    let d = k.dim();
    let q = 1.0 - 0.5f64.powi(m as i32);
    let words = hard.packing.words();
    if k.is_full() {
        return Ok(1.0 - q.powi(words.len() as i32));
    }
    if d > EXACT_MAX_DIM {
        return Err(Error::Unsupported(format!("exact mode needs d ≤ {EXACT_MAX_DIM}, got {d}")));
    }
    let full = full_mask(d);
    let members: Vec<u64> = match k.explicit() {
        Some(xs) => xs.to_vec(),
        None => (0..=full).filter(|&x| k.contains(x)).collect(),
    };
    let mut counts = vec![0u32; 1usize << d];
    for &x in &members {
        for &p in words {
            counts[(!(x ^ p) & full) as usize] += 1;
        }
    }
    let total: f64 = counts.iter().map(|&n| 1.0 - q.powi(n as i32)).sum();
    Ok(total / (1u64 << d) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_samples_make_every_set_complex() {
        let r = feldman_complexity_probe(&FullCube(12), 0, 200, 1, true).unwrap();
        assert_eq!(r.witnesses, 200);
        assert_eq!(r.exact, Some(1.0));
        let s = ExplicitSet::singleton(8, 0b1011_0110).unwrap();
        let r = feldman_complexity_probe(&s, 0, 500, 1, true).unwrap();
        // only the masks mapping some codeword onto the singleton give a witness
        let expect = r.codewords as f64 / 256.0;
        assert!((r.exact.unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn witnesses_are_certified() {
        let r = feldman_complexity_probe(&FullCube(12), 2, 2000, 3, true).unwrap();
        assert!(r.zero_empirical);
        assert!(r.epsilon.unwrap() >= WITNESS_EXCESS - 1e-12);
        assert!(r.meets(0.5, 1.0));
    }

    #[test]
    fn implicit_and_explicit_agree() {
        let d = 10;
        let pred = |x: u64| x.count_ones().is_multiple_of(2);
        let members: Vec<u64> = (0..1u64 << d).filter(|&x| pred(x)).collect();
        let a = feldman_complexity_probe(&ExplicitSet::new(d, members).unwrap(), 3, 400, 9, true).unwrap();
        let b = feldman_complexity_probe(&ImplicitSet::new(d, pred), 3, 400, 9, true).unwrap();
        assert_eq!(a.witnesses, b.witnesses);
        assert_eq!(a.exact, b.exact);
    }

    // direct sum over masks and codewords, without the count table
    fn brute_exact(members: &[u64], d: usize, m: usize) -> f64 {
        let hard = FeldmanHard::new(d).unwrap();
        let q = 1.0 - 0.5f64.powi(m as i32);
        let full = full_mask(d);
        let mut total = 0.0;
        for mask in 0..=full {
            let h = hard.clone().with_mask(mask);
            let n = (0..h.packing.len()).filter(|&j| members.contains(&h.preimage_of_codeword(j))).count();
            total += 1.0 - q.powi(n as i32);
        }
        total / (full + 1) as f64
    }

    #[test]
    fn exact_matches_mask_enumeration_and_monte_carlo() {
        let d = 8;
        let members = vec![0u64, 0b1111_0000, 0b1010_1010];
        let set = ExplicitSet::new(d, members.clone()).unwrap();
        let r = feldman_complexity_probe(&set, 2, 20_000, 4, true).unwrap();
        assert!((r.exact.unwrap() - brute_exact(&members, d, 2)).abs() < 1e-12);
        assert!(r.mc_exact_gap.unwrap() <= 3.0 * r.ci.half_width());
    }

    #[test]
    fn exact_mode_limits() {
        let k = ImplicitSet::new(24, |_| true);
        assert!(matches!(feldman_complexity_probe(&k, 4, 10, 0, true), Err(Error::Unsupported(_))));
        assert!(feldman_complexity_probe(&FullCube(24), 4, 10, 0, true).is_ok());
        assert!(feldman_complexity_probe(&ExplicitSet::new(4, vec![]).unwrap(), 1, 10, 0, false).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = feldman_complexity_probe(&FullCube(16), 3, 300, 77, false).unwrap();
        let b = feldman_complexity_probe(&FullCube(16), 3, 300, 77, false).unwrap();
        assert_eq!(a, b);
    }
}
