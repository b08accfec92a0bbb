//! Deterministic constructions that defeat a given regularizer under GD.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::certificate::{min_over_segment2, CertificateContext, ViolationCertificate};
use super::{verify_regularizer, Regularizer};
use crate::error::{invalid, Error, Result};
use crate::geometry::{add2, dist2, norm2, perp, scale2, Metric2, Orthogonal2, Vec2, VecD};
use crate::objectives::{Objective, SegmentObjective, SegmentQuadratic, RESCALE};
use crate::optimizers::{gd_summary, RunConfig};

pub const WARMUP_START: Vec2 = [0.0, 1.0];
pub const WARMUP_END: Vec2 = [0.024, 1.0];

/// Radius of the domain used by the warmup runs.
const WARMUP_RADIUS: f64 = 5.0;

/// Numerator of the averaged-iterate bound for the 1/22-scaled objective.
const AVERAGED_CONSTANT: f64 = 2640.0;

/// Planar objective used by the constructions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PlanarObjective {
    Segment(SegmentObjective),
    Quadratic(SegmentQuadratic),
}

impl PlanarObjective {
    pub fn as_segment(&self) -> SegmentObjective {
        match self {
            PlanarObjective::Segment(s) => *s,
            PlanarObjective::Quadratic(q) => q.as_segment(),
        }
    }
}

impl Objective for PlanarObjective {
    type Point = Vec2;

    fn dim(&self) -> usize {
        2
    }
    fn value(&self, w: &Vec2) -> f64 {
        match self {
            PlanarObjective::Segment(s) => s.value(w),
            PlanarObjective::Quadratic(q) => q.value(w),
        }
    }
    fn grad(&self, w: &Vec2) -> Vec2 {
        match self {
            PlanarObjective::Segment(s) => s.grad(w),
            PlanarObjective::Quadratic(q) => q.grad(w),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupCase {
    /// `r` is minimised far from `e₂`: Euclidean segment, witness `c`.
    Euclidean,
    /// `r` is minimised near `e₂`: scaled quadratic, witness `e₂`.
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupConstruction {
    pub case: WarmupCase,
    pub objective: PlanarObjective,
    /// Minimiser of `r` over `[e₂, c]`.
    pub segment_minimizer: Vec2,
    pub w_r: Vec2,
    pub lambda: f64,
}

impl WarmupConstruction {
    /// `−2640/(Tη) + 0.5·10⁻⁴ λ`.
    pub fn predicted_gap(&self, eta: f64, steps: usize) -> f64 {
        -AVERAGED_CONSTANT / (steps as f64 * eta) + 0.5e-4 * self.lambda
    }
}

pub fn build_warmup_construction(r: &Regularizer) -> Result<WarmupConstruction> {
    let lambda = match r.lambda {
        Some(l) if l > 0.0 => l,
        _ => return Err(invalid(format!("{} has no positive strong-convexity modulus", r.name))),
    };
    verify_regularizer(r, WARMUP_RADIUS, 0)?;
    let (_, w_star) = min_over_segment2(r, WARMUP_START, WARMUP_END, 1e-12)?;
    if dist2(w_star, WARMUP_START) >= 0.012 {
        Ok(WarmupConstruction {
            case: WarmupCase::Euclidean,
            objective: PlanarObjective::Segment(SegmentObjective::euclidean(WARMUP_START, WARMUP_END)?),
            segment_minimizer: w_star,
            w_r: WARMUP_END,
            lambda,
        })
    } else {
        Ok(WarmupConstruction {
            case: WarmupCase::Quadratic,
            objective: PlanarObjective::Quadratic(SegmentQuadratic::rescaled(WARMUP_END[0], WARMUP_END[1])?),
            segment_minimizer: w_star,
            w_r: WARMUP_START,
            lambda,
        })
    }
}

/// Minimises `r` over the sublevel set `{F ≤ level}` of a segment objective.
///
/// The set is the union of `Σ`-balls of radius `√(2·level/γ)` centred on the
/// segment; it is swept by `(s, ρ, φ) ↦ p(s) + ρ·R·L(cos φ, sin φ)` with
/// `L Lᵀ = Σ⁻¹`, first on a grid and then by a compass search. The radius is
/// shrunk by `1 − 10⁻⁹` and the returned point is checked by evaluation.
pub fn sublevel_witness(seg: &SegmentObjective, level: f64, r: &Regularizer) -> Option<Vec2> {
    if !(level > 0.0 && level.is_finite()) {
        return None;
    }
    let radius = (2.0 * level / seg.scale).sqrt() * (1.0 - 1e-9);
    let l = seg.metric.inverse_sqrt();
    let at = |s: f64, rho: f64, phi: f64| {
        let u = [rho * radius * phi.cos(), rho * radius * phi.sin()];
        add2(seg.point_at(s), [l[0][0] * u[0] + l[0][1] * u[1], l[1][0] * u[0] + l[1][1] * u[1]])
    };
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for i in 0..=40 {
        let s = i as f64 / 40.0;
        for k in 0..360 {
            let phi = 2.0 * PI * k as f64 / 360.0;
            for rho in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let v = r.value2(at(s, rho, phi));
                if v < best.0 {
                    best = (v, s, rho, phi);
                }
            }
        }
    }
    let (mut v, mut s, mut rho, mut phi) = best;
    let mut steps = [1.0 / 40.0, 0.25, 2.0 * PI / 360.0];
    while steps[0] > 1e-14 {
        let mut moved = false;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut cand = [s, rho, phi];
                cand[axis] += sign * steps[axis];
                cand[0] = cand[0].clamp(0.0, 1.0);
                cand[1] = cand[1].clamp(0.0, 1.0);
                let cv = r.value2(at(cand[0], cand[1], cand[2]));
                if cv < v {
                    v = cv;
                    [s, rho, phi] = cand;
                    moved = true;
                }
            }
        }
        if !moved {
            for st in steps.iter_mut() {
                *st *= 0.5;
            }
        }
    }
    let p = at(s, rho, phi);
    (seg.value(&p) <= level).then_some(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// The construction's own `w_r`.
    Construction,
    /// The `r`-minimiser over `{F ≤ F(w_S)}`.
    Sublevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupReport {
    pub construction: WarmupConstruction,
    pub eta: f64,
    pub steps: usize,
    pub w_s: Vec2,
    pub f_s: f64,
    pub construction_r_gap: f64,
    pub construction_f_gap: f64,
    pub witness_kind: WitnessKind,
    pub predicted_gap: f64,
    pub projection_events: usize,
    pub certificate: ViolationCertificate,
}

/// Builds the construction for `r`, runs GD for `steps` iterations at step
/// `eta` (radius-5 ball) and certifies the output.
///
/// The witness is whichever of `w_r` and the sublevel minimiser has the
/// smaller penalty among those with `F ≤ F(w_S)`.
pub fn run_warmup(r: &Regularizer, eta: f64, steps: usize) -> Result<WarmupReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Regime(format!("warmup needs 0 < η < 1, got {eta}")));
    }
    let construction = build_warmup_construction(r)?;
    let obj = construction.objective;
    let run = gd_summary(&obj, &RunConfig::new(eta, steps, WARMUP_RADIUS)?)?;
    let w_s = run.output;
    let f_s = obj.value(&w_s);
    let r_s = r.value2(w_s);

    let w_r = construction.w_r;
    let mut witness = (WitnessKind::Construction, w_r);
    if let Some(p) = sublevel_witness(&obj.as_segment(), f_s, r) {
        if obj.value(&p) <= f_s && r.value2(p) < r.value2(w_r) {
            witness = (WitnessKind::Sublevel, p);
        }
    }
    let (kind, w_star) = witness;
    let context = CertificateContext::new(
        "warmup",
        serde_json::json!({
            "regularizer": r.name,
            "case": construction.case,
            "eta": eta,
            "steps": steps,
            "witness": kind,
        }),
        None,
    );
    let certificate = ViolationCertificate::from_gaps(
        VecD::from_vec2(w_s),
        VecD::from_vec2(w_star),
        f_s - obj.value(&w_star),
        r_s - r.value2(w_star),
        0.0,
        context,
    );
    Ok(WarmupReport {
        predicted_gap: construction.predicted_gap(eta, steps),
        construction_r_gap: r_s - r.value2(w_r),
        construction_f_gap: f_s - obj.value(&w_r),
        construction,
        eta,
        steps,
        w_s,
        f_s,
        witness_kind: kind,
        projection_events: run.projection_events,
        certificate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fichs1Pair {
    pub w1: Vec2,
    pub w2: Vec2,
    /// `w₂ = w₁ + δ·w₁⊥`
    pub delta: f64,
    pub r1: f64,
    pub r2: f64,
}

/// Scans spheres of radius `0.1 j` (`j = 1..9`) at angular step `resolution`
/// and tangential offsets `δ ∈ ±{0.999, 0.5, 0.25}·0.005‖w₁‖`, returning the
/// pair with the largest `|r(w₁) − r(w₂)|` above `10⁻⁹`.
pub fn fichs1_search(r: &Regularizer, resolution: f64) -> Result<Fichs1Pair> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(invalid(format!("resolution must be positive, got {resolution}")));
    }
    let angles = (2.0 * PI / resolution).ceil() as usize;
    let best = (0..angles)
        .into_par_iter()
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / angles as f64;
            let mut local: Option<(f64, usize, Fichs1Pair)> = None;
            for j in 1..=9 {
                let a = 0.1 * j as f64;
                let w1 = [a * theta.cos(), a * theta.sin()];
                let r1 = r.value2(w1);
                for (m, frac) in [0.999, -0.999, 0.5, -0.5, 0.25, -0.25].into_iter().enumerate() {
                    let delta = frac * 0.005 * a;
                    let w2 = add2(w1, scale2(delta, perp(w1)));
                    let r2 = r.value2(w2);
                    let gap = (r1 - r2).abs();
                    let idx = (k * 9 + j - 1) * 6 + m;
                    if gap > 1e-9 && local.as_ref().is_none_or(|b| gap > b.0) {
                        local = Some((gap, idx, Fichs1Pair { w1, w2, delta, r1, r2 }));
                    }
                }
            }
            local
        })
        .reduce(
            || None,
            |x, y| match (x, y) {
                (Some(a), Some(b)) => Some(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
                (a, None) => a,
                (None, b) => b,
            },
        );
    best.map(|b| b.2)
        .ok_or_else(|| Error::NotFound(format!("{} is numerically constant at resolution {resolution}", r.name)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdrCase {
    /// `r(w₁) > r(w₂)`: GD drifts to `w₁`, witness `w₂`.
    Euclidean,
    /// `r(w₁) < r(w₂)`: GD is biased to `w₂`, witness `w₁`.
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdrConstruction {
    pub case: GdrCase,
    pub pair: Fichs1Pair,
    /// Maps original coordinates to the frame where `w₁ = ‖w₁‖e₂` and `w₂`
    /// has a nonnegative first coordinate.
    pub rotation: Orthogonal2,
    /// The objective in the rotated frame.
    pub rotated: PlanarObjective,
    /// The same objective in original coordinates.
    pub objective: SegmentObjective,
    /// Point GD converges to.
    pub limit: Vec2,
    pub w_r: Vec2,
    pub c_r: f64,
}

pub fn build_gdr_construction(r: &Regularizer, pair: &Fichs1Pair) -> Result<GdrConstruction> {
    let a = norm2(pair.w1);
    if !(a > 0.0) || pair.delta.abs() > 0.005 * a + 1e-15 {
        return Err(invalid("pair does not satisfy 0 < ‖w₁‖ and |δ| ≤ 0.005‖w₁‖"));
    }
    let r1 = r.value2(pair.w1);
    let r2 = r.value2(pair.w2);
    if (r1 - r2).abs() <= 1e-9 {
        return Err(invalid("pair has no penalty gap"));
    }
    // rotate w₁ onto the positive second axis, then mirror if δ < 0
    let angle = PI / 2.0 - pair.w1[1].atan2(pair.w1[0]);
    let mut q = Orthogonal2::rotation(angle);
    if pair.delta < 0.0 {
        q = Orthogonal2::mirror_vertical().compose(&q);
    }
    let c_r = 0.5 * (r1 - r2).abs();
    if r1 > r2 {
        let rotated = SegmentObjective::euclidean(q.apply(pair.w1), q.apply(pair.w2))?;
        Ok(GdrConstruction {
            case: GdrCase::Euclidean,
            pair: *pair,
            rotation: q,
            rotated: PlanarObjective::Segment(rotated),
            objective: SegmentObjective::euclidean(pair.w1, pair.w2)?,
            limit: pair.w1,
            w_r: pair.w2,
            c_r,
        })
    } else {
        let rotated = SegmentQuadratic::rescaled(pair.delta.abs() * a, a)?;
        let metric = Metric2::canonical().conjugate(&q);
        Ok(GdrConstruction {
            case: GdrCase::Quadratic,
            pair: *pair,
            rotation: q,
            rotated: PlanarObjective::Quadratic(rotated),
            objective: SegmentObjective::new(pair.w1, pair.w2, metric, RESCALE)?,
            limit: pair.w2,
            w_r: pair.w1,
            c_r,
        })
    }
}

/// Radial probe of the upper-semicontinuity neighbourhood: the largest
/// `δ̂ = 0.1·2⁻ᵏ` with `r(center + ρu) ≥ floor` on 64 directions `u` and
/// radii `ρ ∈ δ̂·{1/8, 2/8, …, 1}`.
pub fn estimate_neighborhood(r: &Regularizer, center: Vec2, floor: f64) -> Result<f64> {
    let mut delta = 0.1;
    for _ in 0..60 {
        let ok = (0..64).all(|k| {
            let phi = 2.0 * PI * k as f64 / 64.0;
            (1..=8).all(|m| {
                let rho = delta * m as f64 / 8.0;
                r.value2(add2(center, [rho * phi.cos(), rho * phi.sin()])) >= floor
            })
        });
        if ok {
            return Ok(delta);
        }
        delta *= 0.5;
    }
    Err(Error::NotFound(format!("no neighbourhood of {center:?} keeps r above {floor}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdrReport {
    pub construction: GdrConstruction,
    pub eta: f64,
    pub neighborhood: f64,
    /// `⌈2640/(η δ̂)⌉`
    pub t_r: u64,
    pub steps: usize,
    pub capped: bool,
    pub w_s: Vec2,
    pub distance_to_limit: f64,
    pub within_neighborhood: bool,
    pub meets_c_r: bool,
    pub certificate: ViolationCertificate,
}

/// Finds a pair, builds the construction, estimates `δ̂` and `T_r`, and runs
/// GD (unit ball) for `min(T_r, max_steps)` iterations.
pub fn run_gdr(r: &Regularizer, resolution: f64, eta: f64, max_steps: usize) -> Result<GdrReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Regime(format!("construction needs 0 < η < 1, got {eta}")));
    }
    let pair = fichs1_search(r, resolution)?;
    let construction = build_gdr_construction(r, &pair)?;
    let floor = r.value2(construction.w_r) + construction.c_r;
    let neighborhood = estimate_neighborhood(r, construction.limit, floor)?;
    let t_r = (AVERAGED_CONSTANT / (eta * neighborhood)).ceil() as u64;
    let steps = (t_r.min(max_steps as u64) as usize).max(1);
    let obj = construction.objective;
    let run = gd_summary(&obj, &RunConfig::new(eta, steps, 1.0)?)?;
    let w_s = run.output;
    let distance = dist2(w_s, construction.limit);
    let r_gap = r.value2(w_s) - r.value2(construction.w_r);
    let context = CertificateContext::new(
        "gdr",
        serde_json::json!({
            "regularizer": r.name,
            "case": construction.case,
            "resolution": resolution,
            "eta": eta,
            "steps": steps,
            "t_r": t_r,
            "neighborhood": neighborhood,
            "c_r": construction.c_r,
        }),
        None,
    );
    let certificate = ViolationCertificate::from_gaps(
        VecD::from_vec2(w_s),
        VecD::from_vec2(construction.w_r),
        obj.value(&w_s) - obj.value(&construction.w_r),
        r_gap,
        0.0,
        context,
    );
    Ok(GdrReport {
        eta,
        neighborhood,
        t_r,
        steps,
        capped: (steps as u64) < t_r,
        w_s,
        distance_to_limit: distance,
        within_neighborhood: distance <= neighborhood,
        meets_c_r: r_gap >= construction.c_r,
        certificate,
        construction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Iterate;
    use crate::optimizers::run_gd;
    use crate::regularizers::k_membership;
    use rand::Rng;

    #[test]
    fn warmup_case_selection() {
        let sq = build_warmup_construction(&Regularizer::sq_norm()).unwrap();
        assert_eq!(sq.case, WarmupCase::Quadratic);
        assert_eq!(sq.segment_minimizer, WARMUP_START);
        let shifted = build_warmup_construction(&Regularizer::shifted(WARMUP_END.to_vec())).unwrap();
        assert_eq!(shifted.case, WarmupCase::Euclidean);
        assert!(dist2(shifted.segment_minimizer, WARMUP_START) >= 0.012);
        assert_eq!(shifted.objective.value(&WARMUP_START), 0.0);
        assert_eq!(shifted.objective.value(&WARMUP_END), 0.0);
    }

    #[test]
    fn warmup_rejects_non_convex_regularizer() {
        assert!(build_warmup_construction(&Regularizer::l1_normalized()).is_err());
        let liar = Regularizer::l1_normalized().with_lambda(Some(1.0));
        assert!(build_warmup_construction(&liar).is_err());
    }

    #[test]
    fn warmup_branches_cover_the_segment() {
        for p in [0.0, 0.006, 0.012, 0.018, 0.024] {
            let c = build_warmup_construction(&Regularizer::shifted(vec![p, 1.0])).unwrap();
            let w = c.segment_minimizer;
            assert!(dist2(w, WARMUP_START) + dist2(w, WARMUP_END) >= 0.024 - 1e-12);
        }
    }

    #[test]
    fn short_warmup_certificate_is_sound() {
        let r = Regularizer::sq_norm();
        let rep = run_warmup(&r, 0.5, 20_000).unwrap();
        let c = &rep.certificate;
        if c.valid {
            let obj = rep.construction.objective;
            let f = |u: &VecD| obj.value(&[u.get(0), u.get(1)]);
            assert!(k_membership(&c.w_star, &c.w_s, f, &r));
        }
    }

    #[test]
    fn sublevel_witness_stays_in_the_set() {
        let seg = SegmentQuadratic::rescaled(0.024, 1.0).unwrap().as_segment();
        let r = Regularizer::sq_norm();
        let level = seg.value(&[0.02, 0.99]);
        let p = sublevel_witness(&seg, level, &r).unwrap();
        assert!(seg.value(&p) <= level);
        assert!(r.value2(p) < r.value2([0.0, 1.0]));
    }

    #[test]
    fn fichs1_examples() {
        let pair = fichs1_search(&Regularizer::l1_normalized(), 1e-3).unwrap();
        assert!((pair.r1 - pair.r2).abs() > 1e-9);
        assert!(pair.delta.abs() <= 0.005 * norm2(pair.w1));
        let d = [pair.w2[0] - pair.w1[0], pair.w2[1] - pair.w1[1]];
        assert!((d[0] * pair.w1[0] + d[1] * pair.w1[1]).abs() < 1e-15);
        let radial =
            Regularizer::custom("radial-constant", |w: &[f64]| if w[0] == 0.0 && w[1] == 0.0 { 0.0 } else { 1.0 });
        assert!(matches!(fichs1_search(&radial, 1e-2), Err(Error::NotFound(_))));
    }

    #[test]
    fn gdr_objectives_vanish_on_pair_and_match_rotated_frame() {
        let r = Regularizer::l1_normalized();
        let pair = fichs1_search(&r, 1e-2).unwrap();
        let c = build_gdr_construction(&r, &pair).unwrap();
        assert!(c.objective.value(&pair.w1).abs() < 1e-20);
        assert!(c.objective.value(&pair.w2).abs() < 1e-20);
        let rotated = c.rotated;
        let w1r = c.rotation.apply(pair.w1);
        assert!(dist2(w1r, [0.0, norm2(pair.w1)]) < 1e-14);
        assert!(c.rotation.apply(pair.w2)[0] >= -1e-15);
        if let PlanarObjective::Quadratic(q) = rotated {
            assert!(q.theta1 / q.theta2 <= 0.005 + 1e-15);
        }
        let mut rng = crate::rng::master(3);
        for _ in 0..1000 {
            let w = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let a = c.objective.value(&w);
            let b = rotated.value(&c.rotation.apply(w));
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = crate::rng::master(5);
        for _ in 0..10_000 {
            let q = Orthogonal2::rotation(rng.random_range(-PI..PI));
            let w = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            assert!((norm2(q.apply(w)) - norm2(w)).abs() < 1e-12);
        }
    }

    #[test]
    fn gd_commutes_with_rotation() {
        // a pair with δ < 0 exercises the mirror as well
        for delta in [0.002, -0.002] {
            let w1: Vec2 = [0.3, -0.5];
            let pair = Fichs1Pair { w1, w2: add2(w1, scale2(delta, perp(w1))), delta, r1: 0.0, r2: 1.0 };
            let r = Regularizer::custom("probe", move |w: &[f64]| if w == pair.w2 { 1.0 } else { 0.0 });
            let c = build_gdr_construction(&r, &pair).unwrap();
            let cfg = RunConfig::new(0.5, 2000, 5.0).unwrap();
            let original = run_gd(&c.objective, &cfg).unwrap();
            let rotated = run_gd(&c.rotated, &cfg).unwrap();
            let back = c.rotation.transpose();
            let dev = original
                .iterates
                .iter()
                .zip(&rotated.iterates)
                .map(|(a, b)| dist2(*a, back.apply(*b)))
                .fold(0.0, f64::max);
            assert!(dev <= 1e-12, "δ={delta}: {dev}");
        }
    }

    #[test]
    fn neighborhood_shrinks_near_a_jump() {
        let r = Regularizer::custom("step", |w: &[f64]| if w[0] > 0.0 { 1.0 } else { 0.0 });
        let d = estimate_neighborhood(&r, [0.01, 0.0], 0.5).unwrap();
        assert!(d <= 0.01 && d > 0.0025, "{d}");
    }
}
