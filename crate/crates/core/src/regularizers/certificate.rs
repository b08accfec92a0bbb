use serde::{Deserialize, Serialize};

use super::Regularizer;
use crate::error::{invalid, Result};
use crate::geometry::{Iterate, Vec2, VecD};
use crate::objectives::StochasticObjective;
use crate::optimizers::Trace;

/// Tolerance on empirical-loss comparisons.
pub const F_TOLERANCE: f64 = 1e-12;

/// Copies any iterate into a [`VecD`], keeping sparse storage for large `d`.
pub fn to_vecd<P: Iterate>(w: &P) -> VecD {
    let mut out = VecD::zeros(w.dim());
    w.for_each_nonzero(|j, v| {
        out.set(j, v).expect("iterate coordinates are finite and in range");
    });
    out
}

/// `u ∈ K_{S,r}(w_S)`: weakly better in both empirical loss and penalty.
pub fn k_membership(u: &VecD, w_s: &VecD, f_s: impl Fn(&VecD) -> f64, r: &Regularizer) -> bool {
    f_s(u) <= f_s(w_s) + F_TOLERANCE && r.value_of(u) <= r.value_of(w_s) + F_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateContext {
    pub construction: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
}

impl CertificateContext {
    pub fn new(construction: impl Into<String>, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        CertificateContext { construction: construction.into(), parameters, seed }
    }
}

/// A witness `w*` at least as good as `w_S` empirically with strictly smaller
/// penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationCertificate {
    pub w_s: VecD,
    pub w_star: VecD,
    /// `F_S(w_S) − F_S(w*)`
    pub f_gap: f64,
    /// `r(w_S) − r(w*)`
    pub r_gap: f64,
    pub margin: f64,
    pub valid: bool,
    pub context: CertificateContext,
}

impl ViolationCertificate {
    pub fn from_gaps(
        w_s: VecD,
        w_star: VecD,
        f_gap: f64,
        r_gap: f64,
        margin: f64,
        context: CertificateContext,
    ) -> Self {
        let valid = f_gap >= -F_TOLERANCE && r_gap > margin;
        ViolationCertificate { w_s, w_star, f_gap, r_gap, margin, valid, context }
    }

    pub fn is_valid(&self) -> bool {
        self.f_gap >= -F_TOLERANCE && self.r_gap > self.margin
    }
}

/// Evaluates both gaps of `w*` against the output of `trace`, with `F_S`
/// the empirical risk over the trace's own sample.
pub fn violation_certificate<O>(
    trace: &Trace<O::Point, O::Sample>,
    obj: &O,
    r: &Regularizer,
    w_star: &O::Point,
    margin: f64,
    context: CertificateContext,
) -> ViolationCertificate
where
    O: StochasticObjective + ?Sized,
{
    let f_gap = obj.empirical_value(&trace.output, &trace.samples) - obj.empirical_value(w_star, &trace.samples);
    let r_gap = r.value_of(&trace.output) - r.value_of(w_star);
    ViolationCertificate::from_gaps(to_vecd(&trace.output), to_vecd(w_star), f_gap, r_gap, margin, context)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMin {
    /// Segment parameter, the point is `a + s(b − a)`.
    pub s: f64,
    pub point: VecD,
    pub value: f64,
}

/// Minimises `r` over the segment `[a, b]`.
///
/// Ternary search when `r` is declared strongly convex or strictly
/// quasi-convex, otherwise a scan at resolution `tol` followed by golden
/// section refinement around the best scan point. Ties go to the smaller
/// parameter.
pub fn min_over_segment(r: &Regularizer, a: &VecD, b: &VecD, tol: f64) -> Result<SegmentMin> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    if a.dim() != b.dim() {
        return Err(invalid(format!("segment endpoints differ in dimension ({} vs {})", a.dim(), b.dim())));
    }
    let point = |s: f64| {
        let mut p = a.clone();
        p.add_scaled(-s, a);
        p.add_scaled(s, b);
        p
    };
    let f = |s: f64| r.value_of(&point(s));
    let s = if r.lambda.is_some() || r.strictly_quasi_convex {
        ternary(&f, 0.0, 1.0, tol)
    } else {
        scan_then_golden(&f, tol)
    };
    let p = point(s);
    let value = r.value_of(&p);
    Ok(SegmentMin { s, point: p, value })
}

/// Planar convenience wrapper.
pub fn min_over_segment2(r: &Regularizer, a: Vec2, b: Vec2, tol: f64) -> Result<(f64, Vec2)> {
    let m = min_over_segment(r, &VecD::from_vec2(a), &VecD::from_vec2(b), tol)?;
    Ok((m.s, [m.point.get(0), m.point.get(1)]))
}

fn argmin_leftmost(f: &impl Fn(f64) -> f64, candidates: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, candidates[0]);
    for &s in candidates {
        let v = f(s);
        if v < best.0 || (v == best.0 && s < best.1) {
            best = (v, s);
        }
    }
    best.1
}

fn ternary(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    argmin_leftmost(f, &[0.0, lo, 0.5 * (lo + hi), hi, 1.0])
}

fn scan_then_golden(f: &impl Fn(f64) -> f64, tol: f64) -> f64 {
    let n = ((1.0 / tol).ceil() as usize).clamp(1_000, 2_000_000);
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let s0 = argmin_leftmost(f, &grid);
    let h = 1.0 / n as f64;
    let (mut lo, mut hi) = ((s0 - h).max(0.0), (s0 + h).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-3 * tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    argmin_leftmost(f, &[s0, lo, 0.5 * (lo + hi), hi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::Regularizer;

    const E2: Vec2 = [0.0, 1.0];
    const C: Vec2 = [0.024, 1.0];

    // dense grid oracle at step 1e-6 in the segment parameter
    fn grid_oracle(r: &Regularizer, a: Vec2, b: Vec2) -> Vec2 {
        let n = 1_000_000;
        let mut best = (f64::INFINITY, a);
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let v = r.value2(p);
            if v < best.0 {
                best = (v, p);
            }
        }
        best.1
    }

    #[test]
    fn segment_minimum_examples() {
        let (_, p) = min_over_segment2(&Regularizer::sq_norm(), E2, C, 1e-9).unwrap();
        assert_eq!(p, [0.0, 1.0]);
        let (_, p) = min_over_segment2(&Regularizer::shifted(C.to_vec()), E2, C, 1e-9).unwrap();
        assert_eq!(p, C);
        let r = Regularizer::shifted(vec![0.012, 1.0]);
        let (_, p) = min_over_segment2(&r, E2, C, 1e-9).unwrap();
        let oracle = grid_oracle(&r, E2, C);
        assert!((p[0] - oracle[0]).abs() < 1e-6 * 0.024 + 1e-9);
        assert!((p[0] - 0.012).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn scan_branch_beats_grid_probes() {
        let r = Regularizer::custom("wiggle", |w: &[f64]| (w[0] * 40.0).sin().abs() + (w[0] - 0.3).powi(2))
            .with_lipschitz(Some(50.0));
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        let tol = 1e-6;
        let (_, p) = min_over_segment2(&r, a, b, tol).unwrap();
        let probes = (0..=1000).map(|i| r.value2([i as f64 / 1000.0, 0.0])).fold(f64::INFINITY, f64::min);
        assert!(r.value2(p) <= probes + tol * 50.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn ties_go_left() {
        let r = Regularizer::custom("flat", |_| 0.0);
        let (s, _) = min_over_segment2(&r, [0.0, 0.0], [1.0, 0.0], 1e-6).unwrap();
        assert_eq!(s, 0.0);
        let r = Regularizer::custom("flat", |_| 0.0).with_strictly_quasi_convex(true);
        let (s, _) = min_over_segment2(&r, [0.0, 0.0], [1.0, 0.0], 1e-6).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn membership_examples() {
        let r = Regularizer::sq_norm();
        let zero = |_: &VecD| 0.0;
        let ws = VecD::from_vec2([1.0, 0.0]);
        assert!(k_membership(&ws, &ws, zero, &r));
        assert!(k_membership(&VecD::from_vec2([0.0, 0.0]), &ws, zero, &r));
        assert!(!k_membership(&VecD::from_vec2([2.0, 0.0]), &ws, zero, &r));
    }

    #[test]
    fn self_certificate_is_invalid() {
        let w = VecD::from_vec2([0.3, 0.4]);
        let ctx = CertificateContext::new("self", serde_json::json!({}), None);
        let c = ViolationCertificate::from_gaps(w.clone(), w, 0.0, 0.0, 0.0, ctx);
        assert!(!c.valid);
        assert!(!c.is_valid());
    }
}
