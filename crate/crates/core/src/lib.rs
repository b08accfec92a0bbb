//! Counterexample laboratory for implicit regularization in stochastic convex
//! optimization.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod objectives;
pub mod optimizers;
pub mod regularizers;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use experiments::{ComplexityReport, CoupledSample, RegimeCheck};
pub use geometry::{project_ball, project_segment_metric, Iterate, Metric2, Orthogonal2, Vec2, VecD};
pub use objectives::{
    FeldmanHard, HingeDistribution, HingePair, Objective, PopulationRisk, ProductDistribution, ProductInstance,
    SampleSource, SegmentObjective, SegmentQuadratic, Sign, SquareWalk, SquareZ, StochasticObjective,
};
pub use optimizers::{run_gd, run_sgd, run_sgd_on_sample, OutputMode, RunConfig, Trace};
pub use regularizers::{Regularizer, ViolationCertificate};
pub use stats::{BoundReport, Interval};
