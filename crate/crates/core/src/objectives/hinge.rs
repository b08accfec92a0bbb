//! The two-function hinge pair and the product distributions built from it.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PopulationRisk, SampleSource, StochasticObjective};
use crate::error::{invalid, Error, Result};
use crate::geometry::{dot2, norm2, scale2, sub2, Vec2, VecD};

pub const V_PLUS: Vec2 = [-0.25, -0.75];
pub const V_MINUS: Vec2 = [0.0, -0.75];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Sign {
        if rng.random::<bool>() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// `f(w; z) = ρ max{0, −v_zᵀw + c‖v_z‖²}` on the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingePair {
    pub c: f64,
    pub rho: f64,
}

impl HingePair {
    pub fn new(c: f64, rho: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("hinge needs c > 0 and ρ > 0, got c={c}, ρ={rho}")));
        }
        Ok(HingePair { c, rho })
    }

    pub fn anchor(z: Sign) -> Vec2 {
        match z {
            Sign::Plus => V_PLUS,
            Sign::Minus => V_MINUS,
        }
    }

    fn margin(&self, w: Vec2, z: Sign) -> f64 {
        let v = Self::anchor(z);
        -dot2(v, w) + self.c * dot2(v, v)
    }

    pub fn value(&self, w: Vec2, z: Sign) -> f64 {
        self.rho * self.margin(w, z).max(0.0)
    }

    /// `−ρ v_z` where the hinge is active, exactly zero where it is flat.
    pub fn grad(&self, w: Vec2, z: Sign) -> Vec2 {
        if self.margin(w, z) > 0.0 {
            scale2(-self.rho, Self::anchor(z))
        } else {
            [0.0, 0.0]
        }
    }

    /// `v_{z,η} = −η ∇f(0; z)`: the point one step from the origin reaches.
    pub fn step_point(&self, eta: f64, z: Sign) -> Vec2 {
        scale2(-eta, self.grad([0.0, 0.0], z))
    }

    /// Largest `‖∇f‖`, i.e. `ρ‖v₁‖`.
    pub fn lipschitz(&self) -> f64 {
        self.rho * norm2(V_PLUS)
    }

    /// Distance between the two anchors, `‖v₁ − v₋₁‖`.
    pub fn anchor_gap() -> f64 {
        norm2(sub2(V_PLUS, V_MINUS))
    }
}

/// The plane distribution: `z` uniform on `{−1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingeDistribution {
    pub hinge: HingePair,
}

impl StochasticObjective for HingeDistribution {
    type Point = Vec2;
    type Sample = Sign;

    fn dim(&self) -> usize {
        2
    }
    fn value(&self, w: &Vec2, z: &Sign) -> f64 {
        self.hinge.value(*w, *z)
    }
    fn grad(&self, w: &Vec2, z: &Sign) -> Vec2 {
        self.hinge.grad(*w, *z)
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.hinge.lipschitz())
    }
}

impl SampleSource for HingeDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sign {
        Sign::random(rng)
    }
}

impl PopulationRisk for HingeDistribution {
    fn population_value(&self, w: &Vec2) -> f64 {
        0.5 * (self.hinge.value(*w, Sign::Plus) + self.hinge.value(*w, Sign::Minus))
    }
}

/// One draw of a product distribution: `k` (sign, pair index) terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductInstance {
    pub terms: Vec<(Sign, usize)>,
}

impl ProductInstance {
    pub fn single(z: Sign, index: usize) -> Self {
        ProductInstance { terms: vec![(z, index)] }
    }
}

/// `f(w; z) = (1/k) Σ_ℓ f_hinge((w_{2i_ℓ−1}, w_{2i_ℓ}); z_ℓ)` over `k`
/// distinct pairs drawn uniformly from `pairs` available pairs.
///
/// With `k = 1` and `5T` pairs this is the paired construction; with large
/// `k` and `d/2` pairs it is the averaged one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductDistribution {
    pub pairs: usize,
    pub k: usize,
    pub hinge: HingePair,
}

impl ProductDistribution {
    pub fn new(pairs: usize, k: usize, hinge: HingePair) -> Result<Self> {
        if pairs == 0 || k == 0 || k > pairs {
            return Err(invalid(format!("need 1 ≤ k ≤ pairs, got k={k}, pairs={pairs}")));
        }
        Ok(ProductDistribution { pairs, k, hinge })
    }

    /// `d = 10T`, one pair per instance.
    pub fn paired(t: usize, hinge: HingePair) -> Result<Self> {
        Self::new(5 * t, 1, hinge)
    }

    /// `k` pairs per instance in dimension `dim` (the construction uses
    /// `dim = 10⁵·T`).
    pub fn averaged(k: usize, dim: usize, hinge: HingePair) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(invalid(format!("dimension must be even, got {dim}")));
        }
        Self::new(dim / 2, k, hinge)
    }

    pub fn pair_value(&self, w: &VecD, z: Sign, i: usize) -> f64 {
        self.hinge.value(w.pair_unchecked(i), z)
    }
}

impl StochasticObjective for ProductDistribution {
    type Point = VecD;
    type Sample = ProductInstance;

    fn dim(&self) -> usize {
        2 * self.pairs
    }

    fn value(&self, w: &VecD, z: &ProductInstance) -> f64 {
        let total: f64 = z.terms.iter().map(|&(s, i)| self.pair_value(w, s, i)).sum();
        total / self.k as f64
    }

    fn grad(&self, w: &VecD, z: &ProductInstance) -> VecD {
        let mut g = VecD::zeros(self.dim());
        let inv_k = 1.0 / self.k as f64;
        for &(s, i) in &z.terms {
            let gi = self.hinge.grad(w.pair_unchecked(i), s);
            if gi != [0.0, 0.0] {
                g.pair_add(i, scale2(inv_k, gi));
            }
        }
        g
    }

    fn validate_sample(&self, z: &ProductInstance) -> Result<()> {
        if z.terms.len() != self.k {
            return Err(Error::InvalidInstance(format!("instance has {} terms, expected k={}", z.terms.len(), self.k)));
        }
        let mut seen = BTreeSet::new();
        for &(_, i) in &z.terms {
            if i == 0 || i > self.pairs {
                return Err(Error::IndexOutOfRange { index: i, max: self.pairs });
            }
            if !seen.insert(i) {
                return Err(Error::InvalidInstance(format!("pair index {i} repeated within one instance")));
            }
        }
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        // each of the k pair gradients has norm ≤ ρ‖v₁‖/k and they are orthogonal
        Some(self.hinge.lipschitz() / (self.k as f64).sqrt())
    }
}

impl SampleSource for ProductDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ProductInstance {
        let mut terms = Vec::with_capacity(self.k);
        while terms.len() < self.k {
            let i = rng.random_range(1..=self.pairs);
            if terms.iter().any(|&(_, j)| j == i) {
                continue;
            }
            terms.push((Sign::random(rng), i));
        }
        ProductInstance { terms }
    }
}

impl PopulationRisk for ProductDistribution {
    /// Exact for `k = 1`; for `k > 1` the expectation over distinct index
    /// tuples equals the `k = 1` value because the average is linear.
    fn population_value(&self, w: &VecD) -> f64 {
        let zero_pair = 0.5 * (self.hinge.value([0.0, 0.0], Sign::Plus) + self.hinge.value([0.0, 0.0], Sign::Minus));
        let touched = w.touched_pairs();
        let mut total = zero_pair * (self.pairs - touched.len()) as f64;
        for i in touched {
            let p = w.pair_unchecked(i);
            total += 0.5 * (self.hinge.value(p, Sign::Plus) + self.hinge.value(p, Sign::Minus));
        }
        total / self.pairs as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Iterate;

    #[test]
    fn anchor_identities() {
        let h = HingePair::new(0.01, 1.0).unwrap();
        assert_eq!(h.grad([0.0, 0.0], Sign::Plus), [0.25, 0.75]);
        assert_eq!(HingePair::anchor_gap(), 0.25);
        let p = h.step_point(0.5, Sign::Plus);
        assert_eq!(h.value(p, Sign::Plus), 0.0);
        assert_eq!(h.grad(p, Sign::Plus), [0.0, 0.0]);
    }

    #[test]
    fn paired_gradient_is_sparse() {
        let h = HingePair::new(0.001, 2.0).unwrap();
        let dist = ProductDistribution::paired(1, h).unwrap();
        assert_eq!(dist.dim(), 10);
        let w = VecD::zeros(10);
        let g = dist.grad(&w, &ProductInstance::single(Sign::Plus, 3));
        assert_eq!(g.touched_pairs(), vec![3]);
        assert_eq!(g.pair_view(3).unwrap(), [0.5, 1.5]);
    }

    #[test]
    fn averaged_value_at_origin() {
        let h = HingePair::new(0.01, 1.5).unwrap();
        let dist = ProductDistribution::new(10, 2, h).unwrap();
        let z = ProductInstance { terms: vec![(Sign::Plus, 1), (Sign::Minus, 4)] };
        let w = VecD::zeros(20);
        let expect = 1.5 * 0.01 * (10.0 / 16.0 + 9.0 / 16.0) / 2.0;
        assert!((dist.value(&w, &z) - expect).abs() < 1e-15);
        // independent dense oracle
        let dense = w.clone().into_dense();
        let oracle: f64 = z
            .terms
            .iter()
            .map(|&(s, i)| {
                let v = HingePair::anchor(s);
                let p = [dense.get(2 * i - 2), dense.get(2 * i - 1)];
                1.5 * (-(v[0] * p[0] + v[1] * p[1]) + 0.01 * (v[0] * v[0] + v[1] * v[1])).max(0.0)
            })
            .sum::<f64>()
            / 2.0;
        assert!((dist.value(&w, &z) - oracle).abs() < 1e-15);
    }

    #[test]
    fn instance_validation() {
        let h = HingePair::new(0.01, 1.0).unwrap();
        let dist = ProductDistribution::new(10, 2, h).unwrap();
        let dup = ProductInstance { terms: vec![(Sign::Plus, 3), (Sign::Minus, 3)] };
        assert!(matches!(dist.validate_sample(&dup), Err(Error::InvalidInstance(_))));
        let far = ProductInstance { terms: vec![(Sign::Plus, 3), (Sign::Minus, 11)] };
        assert!(matches!(dist.validate_sample(&far), Err(Error::IndexOutOfRange { .. })));
    }
}
