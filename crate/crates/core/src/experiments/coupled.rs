//! Coupled samples: `S` and the copy `S′` with signs flipped at good positions.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{dist2, Vec2, VecD};
use crate::objectives::{ProductDistribution, ProductInstance, SampleSource, Sign};
use crate::rng;

/// A position `(t, ℓ)`: step `t` (1-based) and term `ℓ` (0-based) of the
/// instance drawn at that step.
pub type Position = (usize, usize);

/// `S`, `S′` and the good ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledSample {
    pub s: Vec<ProductInstance>,
    pub s_prime: Vec<ProductInstance>,
    pub good: Vec<Position>,
    /// A position is good only if `t · divisor < T`.
    pub cutoff_divisor: usize,
}

impl CoupledSample {
    /// Builds the ledger for `s` and flips every good sign.
    pub fn from_sample(s: Vec<ProductInstance>, cutoff_divisor: usize) -> Result<Self> {
        if cutoff_divisor == 0 {
            return Err(invalid("cutoff divisor must be positive"));
        }
        let good = good_positions(&s, cutoff_divisor);
        let mut s_prime = s.clone();
        for &(t, l) in &good {
            let term = &mut s_prime[t - 1].terms[l];
            term.0 = term.0.flip();
        }
        Ok(CoupledSample { s, s_prime, good, cutoff_divisor })
    }

    pub fn steps(&self) -> usize {
        self.s.len()
    }

    /// Swaps the roles of `S` and `S′`; the ledger is unchanged because the
    /// index multiset is.
    pub fn flipped(&self) -> CoupledSample {
        CoupledSample {
            s: self.s_prime.clone(),
            s_prime: self.s.clone(),
            good: self.good.clone(),
            cutoff_divisor: self.cutoff_divisor,
        }
    }

    /// `S` with the good signs set from `bits` (bit `g` set = `+1` at the
    /// `g`-th good position).
    pub fn with_good_signs(&self, bits: u64) -> Vec<ProductInstance> {
        let pattern: Vec<bool> = (0..self.good.len()).map(|g| g < 64 && bits >> g & 1 == 1).collect();
        self.with_good_pattern(&pattern)
    }

    /// `S` with good position `g` set to `+1` iff `pattern[g]`.
    pub fn with_good_pattern(&self, pattern: &[bool]) -> Vec<ProductInstance> {
        let mut out = self.s.clone();
        for (&(t, l), &plus) in self.good.iter().zip(pattern) {
            out[t - 1].terms[l].0 = if plus { Sign::Plus } else { Sign::Minus };
        }
        out
    }

    /// Sign pattern of `S` on the good positions.
    pub fn good_bits(&self) -> u64 {
        self.good
            .iter()
            .enumerate()
            .filter(|(_, &(t, l))| self.s[t - 1].terms[l].0 == Sign::Plus)
            .fold(0u64, |acc, (g, _)| acc | 1 << g)
    }
}

/// Positions with `t · divisor < T` whose pair index occurs exactly once in
/// the whole sample.
pub fn good_positions(s: &[ProductInstance], cutoff_divisor: usize) -> Vec<Position> {
    let t_total = s.len();
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for z in s {
        for &(_, i) in &z.terms {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    let mut good = Vec::new();
    for (idx, z) in s.iter().enumerate() {
        let t = idx + 1;
        if t * cutoff_divisor >= t_total {
            continue;
        }
        for (l, &(_, i)) in z.terms.iter().enumerate() {
            if counts[&i] == 1 {
                good.push((t, l));
            }
        }
    }
    good
}

pub fn draw_coupled_with<R: Rng + ?Sized>(
    steps: usize,
    dist: &ProductDistribution,
    cutoff_divisor: usize,
    rng: &mut R,
) -> Result<CoupledSample> {
    if steps < 2 {
        return Err(invalid(format!("coupled samples need T ≥ 2, got {steps}")));
    }
    let s = (0..steps).map(|_| dist.sample(rng)).collect();
    CoupledSample::from_sample(s, cutoff_divisor)
}

/// Draws `S` from the master stream of `seed`.
pub fn draw_coupled(steps: usize, dist: &ProductDistribution, seed: u64) -> Result<CoupledSample> {
    draw_coupled_with(steps, dist, 2, &mut rng::master(seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairIdentity {
    pub checked: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Expected averaged value of the pair first set at step `t` with sign `z`:
/// `−((T−t)/(kT)) η ∇f(0; z)`.
pub fn averaged_pair_value(dist: &ProductDistribution, eta: f64, steps: usize, t: usize, z: Sign) -> Vec2 {
    let factor = (steps - t) as f64 / (dist.k as f64 * steps as f64);
    let g = dist.hinge.grad([0.0, 0.0], z);
    [-factor * eta * g[0], -factor * eta * g[1]]
}

/// Checks every good pair of the averaged output against
/// [`averaged_pair_value`] to `10⁻¹²`. `sample` is the one the run used.
pub fn averaged_pair_identity_check(
    output: &VecD,
    sample: &[ProductInstance],
    good: &[Position],
    dist: &ProductDistribution,
    eta: f64,
) -> Result<PairIdentity> {
    let steps = sample.len();
    let mut max_dev: f64 = 0.0;
    for &(t, l) in good {
        let (z, i) = sample[t - 1].terms[l];
        let expect = averaged_pair_value(dist, eta, steps, t, z);
        max_dev = max_dev.max(dist2(output.pair_view(i)?, expect));
    }
    Ok(PairIdentity { checked: good.len(), max_deviation: max_dev, pass: max_dev <= 1e-12 })
}
