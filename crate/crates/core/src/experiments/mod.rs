//! Distribution-dependent and non-convex experiments.

use serde::{Deserialize, Serialize};

pub mod complexity;
pub mod coupled;
pub mod nonconvex;
pub mod nouc;
pub mod sgdr;

pub use complexity::{feldman_complexity_probe, ComplexityReport, CubeSet, ExplicitSet, FullCube, ImplicitSet};
pub use coupled::{averaged_pair_identity_check, draw_coupled, CoupledSample, PairIdentity};
pub use nonconvex::{experiment_nonconvex, NonconvexParams, NonconvexReport};
pub use nouc::{experiment_nouc, NoucParams, NoucReport};
pub use sgdr::{experiment_sgdr, SgdrParams, SgdrReport};

/// A parameter-regime condition a run checked, with its outcome.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub condition: String,
    pub pass: bool,
}

impl RegimeCheck {
    pub fn new(condition: impl Into<String>, pass: bool) -> Self {
        RegimeCheck { condition: condition.into(), pass }
    }
}
