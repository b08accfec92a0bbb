//! Closed-form GD trajectory on the canonical segment objective.
//!
//! With `Σ = [[1, ½], [½, 1]]`, `M = I − ηΣ` has eigenvalues
//! `α = 1 − 3η/2` on `(1, 1)` and `β = 1 − η/2` on `(1, −1)`, so
//! `Mⁿ = ½ [[αⁿ+βⁿ, αⁿ−βⁿ], [αⁿ−βⁿ, αⁿ+βⁿ]]`.
//!
//! GD from the origin passes through three regimes, split by
//! `t₀ = min{t : w₁ + ½w₂ ≥ ½θ₂}` and `t₁ = min{t ≥ t₀ : w₁ + ½w₂ ≥ ½θ₂ + θ₁}`:
//! pulled toward `ξ₀ = (0, θ₂)`, then sliding with `w₁` frozen, then pulled
//! toward `ξ₁ = (θ₁, θ₂)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{dist2, Vec2};
use crate::objectives::{SegmentQuadratic, RESCALE};
use crate::optimizers::{run_gd, RunConfig};

/// Largest `θ₁/θ₂` for which the phase bounds are proved.
pub const PROVEN_RATIO: f64 = 0.025;

/// Stated lower bound on `w₁⁽ᵗ⁰⁾/θ₂`.
pub const STATED_W1_FLOOR: f64 = 0.03;

/// Cap on the phase search, far beyond `t₀ + 7/η` for any admissible step.
const MAX_SEARCH: usize = 100_000_000;

pub fn matrix_power(eta: f64, n: usize) -> [[f64; 2]; 2] {
    let a = (1.0 - 1.5 * eta).powi(n as i32);
    let b = (1.0 - 0.5 * eta).powi(n as i32);
    [[0.5 * (a + b), 0.5 * (a - b)], [0.5 * (a - b), 0.5 * (a + b)]]
}

fn apply(m: &[[f64; 2]; 2], v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `(I − Mⁿ) ξ + Mⁿ w`.
fn pull(eta: f64, n: usize, xi: Vec2, w: Vec2) -> Vec2 {
    let m = matrix_power(eta, n);
    let mx = apply(&m, xi);
    let mw = apply(&m, w);
    [xi[0] - mx[0] + mw[0], xi[1] - mx[1] + mw[1]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub theta1: f64,
    pub theta2: f64,
    pub eta: f64,
    pub t0: usize,
    /// `None` when `w₁⁽ᵗ⁰⁾ ≤ θ₁`: the slide ends inside the segment and the
    /// iterates converge to `(w₁⁽ᵗ⁰⁾, θ₂)`.
    pub t1: Option<usize>,
    pub w_t0: Vec2,
    pub w_t1: Option<Vec2>,
    pub xi0: Vec2,
    pub xi1: Vec2,
    /// `0 < θ₁ ≤ 0.025 θ₂`.
    pub in_proven_regime: bool,
}

impl PhaseTimes {
    /// Where the iterates converge.
    pub fn limit(&self) -> Vec2 {
        match self.t1 {
            Some(_) => self.xi1,
            None => [self.w_t0[0], self.theta2],
        }
    }
}

fn phase1(eta: f64, theta2: f64, t: usize) -> Vec2 {
    pull(eta, t - 1, [0.0, theta2], [0.0, 0.0])
}

fn phase2(eta: f64, theta2: f64, t0: usize, w_t0: Vec2, t: usize) -> Vec2 {
    let decay = (1.0 - 0.75 * eta).powi((t - t0) as i32);
    [w_t0[0], decay * (w_t0[1] - theta2) + theta2]
}

/// Finds the phase times by stepping the closed forms (`η` is the effective
/// step on the unit-scale objective).
pub fn detect_phases(theta1: f64, theta2: f64, eta: f64) -> Result<PhaseTimes> {
    if !(eta > 0.0 && eta < 1.0 / 3.0) {
        return Err(Error::Regime(format!("closed forms need 0 < η < 1/3, got η={eta}")));
    }
    if !(theta1 >= 0.0 && theta1.is_finite()) || !(theta2 > 0.0 && theta2.is_finite()) {
        return Err(invalid(format!("need θ1 ≥ 0 and θ2 > 0, got ({theta1}, {theta2})")));
    }
    let boundary = |w: Vec2| w[0] + 0.5 * w[1];
    let mut t0 = 1;
    while boundary(phase1(eta, theta2, t0)) < 0.5 * theta2 {
        t0 += 1;
        if t0 > MAX_SEARCH {
            return Err(Error::NotFound("first boundary never crossed".into()));
        }
    }
    let w_t0 = phase1(eta, theta2, t0);
    // while sliding, w₁ + ½(w₂ − θ₂) rises to w₁⁽ᵗ⁰⁾ from below
    let (t1, w_t1) = if theta1 > 0.0 && w_t0[0] <= theta1 {
        (None, None)
    } else {
        let mut t = t0;
        loop {
            let w = phase2(eta, theta2, t0, w_t0, t);
            if boundary(w) >= 0.5 * theta2 + theta1 {
                break (Some(t), Some(w));
            }
            t += 1;
            if t > t0 + MAX_SEARCH {
                return Err(Error::NotFound("second boundary never crossed".into()));
            }
        }
    };
    Ok(PhaseTimes {
        theta1,
        theta2,
        eta,
        t0,
        t1,
        w_t0,
        w_t1,
        xi0: [0.0, theta2],
        xi1: [theta1, theta2],
        in_proven_regime: theta1 > 0.0 && theta1 <= PROVEN_RATIO * theta2,
    })
}

/// `w⁽ᵗ⁾` from the closed forms.
pub fn closed_form_iterate(t: usize, phases: &PhaseTimes) -> Result<Vec2> {
    if t < 1 {
        return Err(invalid("iterates are indexed from t = 1"));
    }
    let PhaseTimes { eta, theta2, t0, w_t0, .. } = *phases;
    if t <= t0 {
        return Ok(phase1(eta, theta2, t));
    }
    match (phases.t1, phases.w_t1) {
        (Some(t1), Some(w_t1)) if t > t1 => Ok(pull(eta, t - t1, phases.xi1, w_t1)),
        _ => Ok(phase2(eta, theta2, t0, w_t0, t)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Unit-scale objective, `0 < η < 1/3`.
    Raw,
    /// Objective scaled by 1/22, `0 < η < 1`; equivalent to the raw objective
    /// with step `η/22`.
    Rescaled,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::Raw => 1.0,
            Scale::Rescaled => RESCALE,
        }
    }

    /// Numerator of the averaged-iterate bound `K/(ηT)`.
    pub fn bound_constant(self) -> f64 {
        match self {
            Scale::Raw => 120.0,
            Scale::Rescaled => 2640.0,
        }
    }

    fn check_step(self, eta: f64) -> Result<()> {
        let ok = match self {
            Scale::Raw => eta > 0.0 && eta < 1.0 / 3.0,
            Scale::Rescaled => eta > 0.0 && eta < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Regime(format!("step η={eta} outside the {self:?} regime")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub scale: Scale,
    pub eta: f64,
    pub steps: usize,
    pub phases: PhaseTimes,
    /// `max_t ‖w⁽ᵗ⁾_sim − w⁽ᵗ⁾_closed‖`.
    pub max_deviation: f64,
    pub t0_lower: usize,
    pub t0_upper: usize,
    pub t0_in_range: bool,
    pub t1_gap_ok: bool,
    pub w1_t0_ratio: f64,
    pub w1_t0_ok: bool,
    pub frozen_deviation: f64,
    pub boundary2_persists: bool,
    pub averaged_distance: f64,
    pub averaged_bound: f64,
    pub averaged_ok: bool,
    pub last_distance: f64,
    pub projection_events: usize,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.t0_in_range
            && self.t1_gap_ok
            && self.w1_t0_ok
            && self.boundary2_persists
            && self.averaged_ok
            && self.max_deviation <= 1e-9
            && self.frozen_deviation <= 1e-12
            && self.projection_events == 0
    }
}

/// Runs GD (radius 5) and checks it against the closed forms and the phase
/// and convergence bounds.
pub fn verify_bounds(theta1: f64, theta2: f64, eta: f64, steps: usize, scale: Scale) -> Result<BoundsReport> {
    scale.check_step(eta)?;
    let effective = eta * scale.factor();
    let phases = detect_phases(theta1, theta2, effective)?;
    let obj = SegmentQuadratic::new(theta1, theta2, crate::geometry::Metric2::canonical(), scale.factor())?;
    let trace = run_gd(&obj, &RunConfig::new(eta, steps, 5.0)?)?;

    let mut max_dev: f64 = 0.0;
    let mut frozen_dev: f64 = 0.0;
    let mut persists = true;
    for (idx, w) in trace.iterates.iter().enumerate() {
        let t = idx + 1;
        max_dev = max_dev.max(dist2(*w, closed_form_iterate(t, &phases)?));
        let in_slide = t >= phases.t0 && phases.t1.is_none_or(|t1| t <= t1);
        if in_slide {
            frozen_dev = frozen_dev.max((w[0] - phases.w_t0[0]).abs());
        }
        if let Some(t1) = phases.t1 {
            if t > t1 && w[0] + 0.5 * w[1] < 0.5 * theta2 + theta1 {
                persists = false;
            }
        }
    }

    let t0_lower = (1.0 / (2.0 * effective)).ceil() as usize;
    let t0_upper = (3.0 / effective).floor() as usize;
    let t1_gap_ok = phases.t1.is_some_and(|t1| (t1 - phases.t0) as f64 <= 7.0 / effective);
    let ratio = phases.w_t0[0] / theta2;
    let bound = scale.bound_constant() / (eta * steps as f64);
    let averaged_distance = dist2(trace.output, phases.xi1);
    Ok(BoundsReport {
        scale,
        eta,
        steps,
        t0_lower,
        t0_upper,
        t0_in_range: t0_lower <= phases.t0 && phases.t0 <= t0_upper,
        t1_gap_ok,
        w1_t0_ratio: ratio,
        w1_t0_ok: ratio >= STATED_W1_FLOOR,
        max_deviation: max_dev,
        frozen_deviation: frozen_dev,
        boundary2_persists: persists,
        averaged_distance,
        averaged_bound: bound,
        averaged_ok: averaged_distance <= bound,
        last_distance: dist2(*trace.last(), phases.limit()),
        projection_events: trace.projection_events,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric2;

    // repeated multiplication, the naive route
    fn naive_power(eta: f64, n: usize) -> [[f64; 2]; 2] {
        let m = [[1.0 - eta, -0.5 * eta], [-0.5 * eta, 1.0 - eta]];
        let mut out = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..n {
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = out[i][0] * m[0][j] + out[i][1] * m[1][j];
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn eigen_power_matches_multiplication() {
        for n in [0, 1, 2, 7, 40] {
            let a = matrix_power(0.17, n);
            let b = naive_power(0.17, n);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn first_two_iterates() {
        let p = detect_phases(0.02, 1.0, 0.2).unwrap();
        assert_eq!(closed_form_iterate(1, &p).unwrap(), [0.0, 0.0]);
        let w2 = closed_form_iterate(2, &p).unwrap();
        assert!((w2[0] - 0.1).abs() < 1e-15 && (w2[1] - 0.2).abs() < 1e-15);
        assert!(closed_form_iterate(0, &p).is_err());
    }

    #[test]
    fn phase_bounds_at_step_two_tenths() {
        let p = detect_phases(0.02, 1.0, 0.2).unwrap();
        assert!((3..=15).contains(&p.t0));
        assert!(p.t1.unwrap() - p.t0 <= 35);
        assert!(p.w_t0[0] >= 0.03125);
        assert_eq!(p.t0, 6);
        assert!((p.w_t0[0] - 0.5 * (0.9f64.powi(5) - 0.7f64.powi(5))).abs() < 1e-15);
    }

    #[test]
    fn regime_errors() {
        assert!(matches!(detect_phases(0.02, 1.0, 0.4), Err(Error::Regime(_))));
        assert!(matches!(detect_phases(0.02, 1.0, 0.0), Err(Error::Regime(_))));
        assert!(!detect_phases(0.5, 1.0, 0.1).unwrap().in_proven_regime);
    }

    #[test]
    fn closed_form_matches_gd_and_limits() {
        for (theta1, eta) in [(0.02, 0.1), (0.0, 0.2), (0.25, 0.2), (0.05, 0.3)] {
            let p = detect_phases(theta1, 1.0, eta).unwrap();
            let f = SegmentQuadratic::new(theta1, 1.0, Metric2::canonical(), 1.0).unwrap();
            let tr = run_gd(&f, &RunConfig::new(eta, 3000, 5.0).unwrap()).unwrap();
            for (i, w) in tr.iterates.iter().enumerate() {
                assert!(dist2(*w, closed_form_iterate(i + 1, &p).unwrap()) < 1e-12);
            }
            assert!(dist2(*tr.last(), p.limit()) < 1e-9);
        }
        let p = detect_phases(0.0, 1.0, 0.2).unwrap();
        assert_eq!(p.limit(), [0.0, 1.0]);
    }

    #[test]
    fn averaged_bound_examples() {
        let r = verify_bounds(0.02, 1.0, 0.1, 10_000, Scale::Raw).unwrap();
        assert!(r.averaged_distance <= 0.12);
        assert!(r.all_pass(), "{r:?}");
        let r = verify_bounds(0.02, 1.0, 0.5, 100_000, Scale::Rescaled).unwrap();
        assert!(r.all_pass(), "{r:?}");
    }
}
