//! Hard distribution over hypercube points: zero empirical risk for many
//! points that have population risk ¼.
//!
//! Instances are random subsets `V` of a fixed packing `P ⊂ {±1/√d}^d` whose
//! codewords pairwise differ in at least `⌈d/4⌉` signs, so distinct codewords
//! have inner product at most ½. The loss is
//! `f(w; V) = max{½, max_{p∈V} ⟨p, v̄ ⊙ w⟩} − ½` with an optional sign mask
//! `v̄`. A codeword missing from every sampled `V` has zero empirical loss;
//! its population loss is exactly ¼.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PopulationRisk, SampleSource, StochasticObjective};
use crate::error::{Error, Result};
use crate::geometry::{Iterate, VecD};
use crate::rng;

/// Codewords are stored as `u64` sign patterns.
pub const MAX_FELDMAN_DIM: usize = 64;

const MAX_CODEWORDS: usize = 256;
const MAX_REJECTIONS: usize = 20_000;

fn full_mask(d: usize) -> u64 {
    if d == 64 {
        u64::MAX
    } else {
        (1u64 << d) - 1
    }
}

/// Point of `{±1/√d}^d` whose bit `i` set means coordinate `i` is positive.
pub fn cube_point(bits: u64, d: usize) -> VecD {
    let s = 1.0 / (d as f64).sqrt();
    let coords = (0..d).map(|i| if bits >> i & 1 == 1 { s } else { -s }).collect();
    VecD::Dense { coords }
}

/// Deterministic packing of sign patterns with minimum Hamming distance
/// `⌈d/4⌉`, built by seeded greedy insertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    d: usize,
    words: Vec<u64>,
}

impl Packing {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("cube dimension must be at least 1".into()));
        }
        if d > MAX_FELDMAN_DIM {
            return Err(Error::Unsupported(format!("cube dimension {d} exceeds {MAX_FELDMAN_DIM}")));
        }
        let full = full_mask(d);
        let min_dist = d.div_ceil(4) as u32;
        let target = if d / 2 >= 8 { MAX_CODEWORDS } else { (1usize << (d / 2)).min(MAX_CODEWORDS) };
        let mut rng = ChaCha8Rng::seed_from_u64(0xFE1D_4A11_0000_0000 ^ d as u64);
        let mut words = vec![rng.random::<u64>() & full];
        let mut rejections = 0;
        while words.len() < target && rejections < MAX_REJECTIONS {
            let cand = rng.random::<u64>() & full;
            if words.iter().all(|&w| (w ^ cand).count_ones() >= min_dist) {
                words.push(cand);
                rejections = 0;
            } else {
                rejections += 1;
            }
        }
        Ok(Packing { d, words })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn min_distance(&self) -> Option<u32> {
        let mut best = None;
        for (a, &x) in self.words.iter().enumerate() {
            for &y in &self.words[a + 1..] {
                let h = (x ^ y).count_ones();
                best = Some(best.map_or(h, |b: u32| b.min(h)));
            }
        }
        best
    }

    /// `⟨p̂_j, x̂⟩` for a sign pattern `x`.
    #[inline]
    pub fn inner_bits(&self, j: usize, x: u64) -> f64 {
        let h = ((self.words[j] ^ x) & full_mask(self.d)).count_ones() as f64;
        (self.d as f64 - 2.0 * h) / self.d as f64
    }
}

/// A sampled subset of the packing, as a bitset over codeword indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeldmanInstance {
    pub included: Vec<u64>,
}

impl FeldmanInstance {
    pub fn contains(&self, j: usize) -> bool {
        self.included.get(j / 64).is_some_and(|b| b >> (j % 64) & 1 == 1)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.included
            .iter()
            .enumerate()
            .flat_map(|(blk, &b)| (0..64).filter(move |i| b >> i & 1 == 1).map(move |i| blk * 64 + i))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeldmanHard {
    pub packing: Packing,
    /// Sign mask `v̄` as a bit pattern (bit set = +1).
    pub mask: u64,
    /// Offset subtracted after clipping at ½.
    pub shift: f64,
}

impl FeldmanHard {
    pub fn new(d: usize) -> Result<Self> {
        let packing = Packing::new(d)?;
        Ok(FeldmanHard { mask: full_mask(d), packing, shift: 0.5 })
    }

    pub fn with_mask(mut self, mask: u64) -> Self {
        self.mask = mask & full_mask(self.packing.d);
        self
    }

    pub fn dim_cube(&self) -> usize {
        self.packing.d
    }

    /// `⟨p̂_j, v̄ ⊙ w⟩` for every codeword.
    fn inner_products(&self, w: &VecD) -> Vec<f64> {
        let d = self.packing.d;
        let s = 1.0 / (d as f64).sqrt();
        let signed: Vec<f64> = (0..d).map(|i| if self.mask >> i & 1 == 1 { w.get(i) } else { -w.get(i) }).collect();
        self.packing
            .words
            .iter()
            .map(|&p| {
                let mut acc = 0.0;
                for (i, x) in signed.iter().enumerate() {
                    acc += if p >> i & 1 == 1 { x * s } else { -x * s };
                }
                acc
            })
            .collect()
    }

    /// Sign pattern of `v̄ ⊙ w` for a cube point `w` given by its bits.
    pub fn masked_bits(&self, w_bits: u64) -> u64 {
        !(self.mask ^ w_bits) & full_mask(self.packing.d)
    }

    /// Cube point `w` whose masked image is codeword `j`.
    pub fn preimage_of_codeword(&self, j: usize) -> u64 {
        !(self.mask ^ self.packing.words[j]) & full_mask(self.packing.d)
    }

    /// Loss of a cube point on an instance, using integer inner products.
    pub fn value_bits(&self, w_bits: u64, v: &FeldmanInstance) -> f64 {
        let x = self.masked_bits(w_bits);
        let best = v.indices().map(|j| self.packing.inner_bits(j, x)).fold(self.shift, f64::max);
        best - self.shift
    }

    /// Exact `E_V f(w; V)` with independent ½-inclusion of each codeword.
    pub fn population_excess(&self, w: &VecD) -> Result<f64> {
        if w.dim() != self.packing.d {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {}, cube has {}",
                w.dim(),
                self.packing.d
            )));
        }
        let mut s = self.inner_products(w);
        s.sort_by(|a, b| b.total_cmp(a));
        let mut weight = 0.5;
        let mut total = 0.0;
        for v in s {
            total += weight * (v - self.shift).max(0.0);
            weight *= 0.5;
        }
        Ok(total)
    }

    pub fn population_excess_bits(&self, w_bits: u64) -> f64 {
        self.population_excess(&cube_point(w_bits, self.packing.d)).expect("dimension matches by construction")
    }
}

impl StochasticObjective for FeldmanHard {
    type Point = VecD;
    type Sample = FeldmanInstance;

    fn dim(&self) -> usize {
        self.packing.d
    }

    fn value(&self, w: &VecD, v: &FeldmanInstance) -> f64 {
        let s = self.inner_products(w);
        let best = v.indices().map(|j| s[j]).fold(self.shift, f64::max);
        best - self.shift
    }

    /// `v̄ ⊙ p̂` for the first maximising included codeword; zero on the flat part.
    fn grad(&self, w: &VecD, v: &FeldmanInstance) -> VecD {
        let d = self.packing.d;
        let s = self.inner_products(w);
        let mut best: Option<(usize, f64)> = None;
        for j in v.indices() {
            if s[j] > self.shift && best.is_none_or(|(_, b)| s[j] > b) {
                best = Some((j, s[j]));
            }
        }
        match best {
            Some((j, _)) => cube_point(self.preimage_of_codeword(j), d),
            None => VecD::zeros_dense(d),
        }
    }

    fn validate_sample(&self, v: &FeldmanInstance) -> Result<()> {
        if v.included.len() != self.packing.len().div_ceil(64) {
            return Err(Error::InvalidInstance("inclusion bitset has the wrong length".into()));
        }
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

impl SampleSource for FeldmanHard {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FeldmanInstance {
        let n = self.packing.len();
        let mut included = vec![0u64; n.div_ceil(64)];
        for (blk, slot) in included.iter_mut().enumerate() {
            let live = (n - 64 * blk).min(64);
            let bits: u64 = rng.random();
            *slot = if live == 64 { bits } else { bits & ((1u64 << live) - 1) };
        }
        FeldmanInstance { included }
    }
}

impl PopulationRisk for FeldmanHard {
    fn population_value(&self, w: &VecD) -> f64 {
        self.population_excess(w).expect("point dimension checked by caller")
    }
}

/// One instance of the unmasked distribution in dimension `d`, from `seed`.
pub fn feldman_sample(d: usize, seed: u64) -> Result<FeldmanInstance> {
    let dist = FeldmanHard::new(d)?;
    Ok(dist.sample(&mut rng::master(seed)))
}
