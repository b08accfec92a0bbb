//! Objective families with value/gradient oracles and samplers.

use std::fmt::Debug;

use rand::Rng;

use crate::error::Result;
use crate::geometry::Iterate;

pub mod check;
mod feldman;
mod hinge;
mod segment;
mod square;

pub use check::{gradient_consistency, GradientCheck};
pub use feldman::{cube_point, feldman_sample, FeldmanHard, FeldmanInstance, Packing, MAX_FELDMAN_DIM};
pub use hinge::{HingeDistribution, HingePair, ProductDistribution, ProductInstance, Sign, V_MINUS, V_PLUS};
pub use segment::{SegmentObjective, SegmentQuadratic, EUCLIDEAN_SCALE, RESCALE};
pub use square::{SquareWalk, SquareZ, SQUARE_HALF_WIDTH};

/// A deterministic objective `F(w)`.
pub trait Objective: Send + Sync {
    type Point: Iterate;

    fn dim(&self) -> usize;
    fn value(&self, w: &Self::Point) -> f64;
    fn grad(&self, w: &Self::Point) -> Self::Point;
}

/// A family `f(w; z)` indexed by samples `z`.
pub trait StochasticObjective: Send + Sync {
    type Point: Iterate;
    type Sample: Clone + Debug + Send + Sync;

    fn dim(&self) -> usize;
    fn value(&self, w: &Self::Point, z: &Self::Sample) -> f64;
    fn grad(&self, w: &Self::Point, z: &Self::Sample) -> Self::Point;

    /// Rejects samples the oracles cannot evaluate.
    fn validate_sample(&self, _z: &Self::Sample) -> Result<()> {
        Ok(())
    }

    /// Declared Lipschitz constant of every `f(·; z)` on the working domain.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// `F_S(w) = (1/|S|) Σ f(w; z)`, summed in sample order.
    fn empirical_value(&self, w: &Self::Point, sample: &[Self::Sample]) -> f64 {
        if sample.is_empty() {
            return 0.0;
        }
        let total: f64 = sample.iter().map(|z| self.value(w, z)).sum();
        total / sample.len() as f64
    }
}

pub trait SampleSource: StochasticObjective {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Sample;
}

/// Exact population risk `F(w) = E_z f(w; z)`.
pub trait PopulationRisk: StochasticObjective {
    fn population_value(&self, w: &Self::Point) -> f64;
}

/// The distribution concentrated on a single deterministic objective.
#[derive(Clone, Debug)]
pub struct PointMass<O>(pub O);

impl<O: Objective> StochasticObjective for PointMass<O> {
    type Point = O::Point;
    type Sample = ();

    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, w: &O::Point, _z: &()) -> f64 {
        self.0.value(w)
    }
    fn grad(&self, w: &O::Point, _z: &()) -> O::Point {
        self.0.grad(w)
    }
}

impl<O: Objective> SampleSource for PointMass<O> {
    fn sample<R: Rng + ?Sized>(&self, _rng: &mut R) {}
}

impl<O: Objective> PopulationRisk for PointMass<O> {
    fn population_value(&self, w: &O::Point) -> f64 {
        self.0.value(w)
    }
}

impl<O: Objective> Objective for &O {
    type Point = O::Point;
    fn dim(&self) -> usize {
        (*self).dim()
    }
    fn value(&self, w: &Self::Point) -> f64 {
        (*self).value(w)
    }
    fn grad(&self, w: &Self::Point) -> Self::Point {
        (*self).grad(w)
    }
}

/// Central finite-difference gradient of `f` at `w` (dense coordinates).
pub fn finite_difference<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], step: f64) -> Vec<f64> {
    let mut x = w.to_vec();
    (0..w.len())
        .map(|j| {
            let orig = x[j];
            x[j] = orig + step;
            let up = f(&x);
            x[j] = orig - step;
            let down = f(&x);
            x[j] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}
