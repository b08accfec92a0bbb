//! The non-convex square-walk family on the plane.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PopulationRisk, SampleSource, StochasticObjective};
use crate::error::{invalid, Result};
use crate::geometry::Vec2;

pub const SQUARE_HALF_WIDTH: f64 = 0.25;

/// Sample label in `1..=4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SquareZ(u8);

impl SquareZ {
    pub fn new(z: u8) -> Result<Self> {
        if (1..=4).contains(&z) {
            Ok(SquareZ(z))
        } else {
            Err(invalid(format!("square-walk label must be in 1..=4, got {z}")))
        }
    }

    /// Label from two random bits; `bits` is taken modulo 4.
    pub fn from_bits(bits: u64) -> Self {
        SquareZ((bits & 3) as u8 + 1)
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

/// `f(w;1) = w₁·1{w∈A}`, `f(w;2) = −w₁·1{w∈A}`, `f(w;3) = w₂`, `f(w;4) = −w₂`
/// with `A = {|w₁| ≤ ¼, |w₂| ≤ ¼}` (closed).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SquareWalk;

impl SquareWalk {
    #[inline]
    pub fn in_square(w: Vec2) -> bool {
        w[0].abs() <= SQUARE_HALF_WIDTH && w[1].abs() <= SQUARE_HALF_WIDTH
    }

    #[inline]
    pub fn value_at(w: Vec2, z: SquareZ) -> f64 {
        match z.0 {
            1 if Self::in_square(w) => w[0],
            2 if Self::in_square(w) => -w[0],
            3 => w[1],
            4 => -w[1],
            _ => 0.0,
        }
    }

    #[inline]
    pub fn grad_at(w: Vec2, z: SquareZ) -> Vec2 {
        match z.0 {
            1 if Self::in_square(w) => [1.0, 0.0],
            2 if Self::in_square(w) => [-1.0, 0.0],
            3 => [0.0, 1.0],
            4 => [0.0, -1.0],
            _ => [0.0, 0.0],
        }
    }

    /// `F_S(w)` from label counts `[n₁, n₂, n₃, n₄]` over a sample of size `n`.
    pub fn empirical_from_counts(w: Vec2, counts: [u64; 4]) -> f64 {
        let n = counts.iter().sum::<u64>();
        if n == 0 {
            return 0.0;
        }
        let inside = if Self::in_square(w) { 1.0 } else { 0.0 };
        let first = inside * w[0] * (counts[0] as f64 - counts[1] as f64);
        let second = w[1] * (counts[2] as f64 - counts[3] as f64);
        (first + second) / n as f64
    }
}

impl StochasticObjective for SquareWalk {
    type Point = Vec2;
    type Sample = SquareZ;

    fn dim(&self) -> usize {
        2
    }
    fn value(&self, w: &Vec2, z: &SquareZ) -> f64 {
        Self::value_at(*w, *z)
    }
    fn grad(&self, w: &Vec2, z: &SquareZ) -> Vec2 {
        Self::grad_at(*w, *z)
    }
    /// Instances 1 and 2 jump across the boundary of `A`, so there is none.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

impl SampleSource for SquareWalk {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SquareZ {
        SquareZ(rng.random_range(1..=4))
    }
}

impl PopulationRisk for SquareWalk {
    fn population_value(&self, _w: &Vec2) -> f64 {
        0.0
    }
}
