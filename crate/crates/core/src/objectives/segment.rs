//! Half squared metric distance to a segment.

use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{invalid, Result};
use crate::geometry::{add2, norm2, project_onto_segment, project_segment_metric, scale2, sub2, Metric2, Vec2};

/// Scale used when the raw objective is shrunk to keep the gradients small.
pub const RESCALE: f64 = 1.0 / 22.0;

/// Scale of the Euclidean segment variant. With the ½ in the value this gives
/// `F(w) = (1/5280) min_v ‖w − v‖²`.
pub const EUCLIDEAN_SCALE: f64 = 1.0 / 2640.0;

/// `F(w) = γ · ½ (w − v(w))ᵀ Σ (w − v(w))` where `v(w)` is the `Σ`-projection
/// of `w` onto `A = {(α, θ₂) : 0 ≤ α ≤ θ₁}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentQuadratic {
    pub theta1: f64,
    pub theta2: f64,
    pub metric: Metric2,
    pub scale: f64,
}

impl SegmentQuadratic {
    pub fn new(theta1: f64, theta2: f64, metric: Metric2, scale: f64) -> Result<Self> {
        if !(theta1 >= 0.0 && theta1.is_finite()) {
            return Err(invalid(format!("θ1 must be finite and ≥ 0, got {theta1}")));
        }
        if !(theta2 > 0.0 && theta2.is_finite()) {
            return Err(invalid(format!("θ2 must be finite and > 0, got {theta2}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("scale must be positive, got {scale}")));
        }
        Ok(SegmentQuadratic { theta1, theta2, metric, scale })
    }

    /// Canonical metric, unit scale.
    pub fn raw(theta1: f64, theta2: f64) -> Result<Self> {
        Self::new(theta1, theta2, Metric2::canonical(), 1.0)
    }

    /// Canonical metric, scale 1/22.
    pub fn rescaled(theta1: f64, theta2: f64) -> Result<Self> {
        Self::new(theta1, theta2, Metric2::canonical(), RESCALE)
    }

    pub fn xi0(&self) -> Vec2 {
        [0.0, self.theta2]
    }

    pub fn xi1(&self) -> Vec2 {
        [self.theta1, self.theta2]
    }

    pub fn project(&self, w: Vec2) -> Vec2 {
        let alpha = w[0] + self.metric.entries()[0][1] / self.metric.entries()[0][0] * (w[1] - self.theta2);
        [alpha.clamp(0.0, self.theta1), self.theta2]
    }

    /// Checked version of [`SegmentQuadratic::project`].
    pub fn try_project(&self, w: Vec2) -> Result<Vec2> {
        project_segment_metric(w, self.theta1, self.theta2, &self.metric)
    }

    pub fn as_segment(&self) -> SegmentObjective {
        SegmentObjective { start: self.xi0(), end: self.xi1(), metric: self.metric, scale: self.scale }
    }
}

impl Objective for SegmentQuadratic {
    type Point = Vec2;

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, w: &Vec2) -> f64 {
        let d = sub2(*w, self.project(*w));
        self.scale * 0.5 * self.metric.quad(d)
    }

    fn grad(&self, w: &Vec2) -> Vec2 {
        let d = sub2(*w, self.project(*w));
        scale2(self.scale, self.metric.apply(d))
    }
}

/// Same family over an arbitrary segment `[start, end]`; used for the
/// Euclidean variant and for rotated constructions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentObjective {
    pub start: Vec2,
    pub end: Vec2,
    pub metric: Metric2,
    pub scale: f64,
}

impl SegmentObjective {
    pub fn new(start: Vec2, end: Vec2, metric: Metric2, scale: f64) -> Result<Self> {
        if !(start.iter().chain(end.iter()).all(|v| v.is_finite())) {
            return Err(invalid("segment endpoints must be finite"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("scale must be positive, got {scale}")));
        }
        Ok(SegmentObjective { start, end, metric, scale })
    }

    /// `F(w) = (1/5280) min_{v ∈ [start, end]} ‖w − v‖²`.
    pub fn euclidean(start: Vec2, end: Vec2) -> Result<Self> {
        Self::new(start, end, Metric2::identity(), EUCLIDEAN_SCALE)
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        add2(self.start, scale2(s, sub2(self.end, self.start)))
    }

    pub fn project(&self, w: Vec2) -> Vec2 {
        self.point_at(project_onto_segment(w, self.start, self.end, &self.metric))
    }

    pub fn length(&self) -> f64 {
        norm2(sub2(self.end, self.start))
    }
}

impl Objective for SegmentObjective {
    type Point = Vec2;

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, w: &Vec2) -> f64 {
        let d = sub2(*w, self.project(*w));
        self.scale * 0.5 * self.metric.quad(d)
    }

    fn grad(&self, w: &Vec2) -> Vec2 {
        let d = sub2(*w, self.project(*w));
        scale2(self.scale, self.metric.apply(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::finite_difference;

    #[test]
    fn vanishes_on_segment_endpoints() {
        let f = SegmentQuadratic::raw(0.25, 1.0).unwrap();
        assert_eq!(f.value(&[0.0, 1.0]), 0.0);
        assert_eq!(f.value(&[0.25, 1.0]), 0.0);
        let e = SegmentObjective::euclidean([0.0, 1.0], [0.024, 1.0]).unwrap();
        assert_eq!(e.value(&[0.0, 1.0]), 0.0);
        assert_eq!(e.value(&[0.024, 1.0]), 0.0);
        assert!((e.value(&[0.0, 0.0]) - 1.0 / 5280.0).abs() < 1e-18);
    }

    #[test]
    fn gradient_at_origin() {
        let f = SegmentQuadratic::raw(0.25, 1.0).unwrap();
        let g = f.grad(&[0.0, 0.0]);
        assert_eq!(g, [-0.5, -1.0]);
        assert!((norm2(g) - 5f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = SegmentQuadratic::raw(0.25, 1.0).unwrap();
        let w = [0.1, 0.5];
        let fd = finite_difference(|x| f.value(&[x[0], x[1]]), &w, 1e-6);
        let g = f.grad(&w);
        assert!((fd[0] - -0.15).abs() < 1e-8 && (fd[1] - -0.45).abs() < 1e-8);
        assert!((g[0] - -0.15).abs() < 1e-14 && (g[1] - -0.45).abs() < 1e-14);
    }

    #[test]
    fn quadratic_matches_general_segment() {
        let f = SegmentQuadratic::new(0.3, 0.8, Metric2::new(1.4, 0.2, 0.9).unwrap(), 0.5).unwrap();
        let s = f.as_segment();
        for w in [[0.0, 0.0], [1.0, -1.0], [0.2, 0.8], [-0.5, 2.0]] {
            assert!((f.value(&w) - s.value(&w)).abs() < 1e-14);
            let (a, b) = (f.grad(&w), s.grad(&w));
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }
}
