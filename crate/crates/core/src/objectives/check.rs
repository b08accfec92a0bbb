//! Analytic gradients against central finite differences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    finite_difference, FeldmanHard, HingePair, Objective, ProductDistribution, SampleSource, SegmentObjective,
    SegmentQuadratic, Sign, SquareWalk, SquareZ, StochasticObjective, SQUARE_HALF_WIDTH,
};
use crate::geometry::{dot2, sub2, Iterate, Metric2, Vec2, VecD};
use crate::rng;

pub const FD_STEP: f64 = 1e-6;

/// Points closer than this to a kink are not smooth enough to test.
const KINK_MARGIN: f64 = 1e-3;

const MAX_ATTEMPTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub family: String,
    pub points: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `‖g − fd‖/‖g‖`, or `‖fd‖` where the analytic gradient vanishes.
pub fn relative_error(g: &[f64], fd: &[f64]) -> f64 {
    let diff = g.iter().zip(fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

fn run_family<R: Rng>(
    family: &str,
    points: usize,
    tolerance: f64,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> Option<(Vec<f64>, Vec<f64>)>,
) -> GradientCheck {
    let mut worst: f64 = 0.0;
    let mut taken = 0;
    let mut attempts = 0;
    while taken < points && attempts < MAX_ATTEMPTS {
        attempts += 1;
        if let Some((g, fd)) = draw(rng) {
            worst = worst.max(relative_error(&g, &fd));
            taken += 1;
        }
    }
    GradientCheck {
        family: family.into(),
        points: taken,
        max_rel_err: worst,
        tolerance,
        pass: taken == points && worst <= tolerance,
    }
}

fn planar<O: Objective<Point = Vec2>>(obj: &O, w: Vec2) -> (Vec<f64>, Vec<f64>) {
    let fd = finite_difference(|x| obj.value(&[x[0], x[1]]), &w, FD_STEP);
    (obj.grad(&w).to_vec(), fd)
}

fn segment_param(w: Vec2, a: Vec2, b: Vec2, m: &Metric2) -> f64 {
    let ab = sub2(b, a);
    m.inner(sub2(w, a), ab) / m.quad(ab)
}

fn hinge_margin(h: &HingePair, w: Vec2, z: Sign) -> f64 {
    let v = HingePair::anchor(z);
    -dot2(v, w) + h.c * dot2(v, v)
}

/// Finite-difference check of every objective family at `points` random
/// points away from kinks.
pub fn gradient_consistency(points: usize, seed: u64) -> Vec<GradientCheck> {
    let tol = 1e-6;
    let mut out = Vec::new();
    let mut rng = rng::master(seed);

    for (name, quad) in [
        ("segment-quadratic raw", SegmentQuadratic::raw(0.02, 1.0).expect("valid segment")),
        ("segment-quadratic rescaled", SegmentQuadratic::rescaled(0.01, 0.5).expect("valid segment")),
    ] {
        out.push(run_family(name, points, tol, &mut rng, |r| {
            let w = [r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)];
            let s = segment_param(w, quad.xi0(), quad.xi1(), &quad.metric);
            let smooth = s.abs() > 1e-2 && (s - 1.0).abs() > 1e-2;
            smooth.then(|| planar(&quad, w))
        }));
    }

    let seg = SegmentObjective::euclidean([0.0, 1.0], [0.024, 1.0]).expect("valid segment");
    out.push(run_family("segment euclidean", points, tol, &mut rng, |r| {
        let w = [r.random_range(-0.5..0.5), r.random_range(0.0..2.0)];
        let s = segment_param(w, seg.start, seg.end, &seg.metric);
        (s.abs() > 1e-2 && (s - 1.0).abs() > 1e-2).then(|| planar(&seg, w))
    }));

    let hinge = HingePair::new(0.01, 1.0).expect("valid hinge");
    out.push(run_family("hinge pair", points, tol, &mut rng, |r| {
        let w = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let z = Sign::random(r);
        if hinge_margin(&hinge, w, z).abs() <= KINK_MARGIN {
            return None;
        }
        let fd = finite_difference(|x| hinge.value([x[0], x[1]], z), &w, FD_STEP);
        Some((hinge.grad(w, z).to_vec(), fd))
    }));

    let product = ProductDistribution::new(4, 3, HingePair::new(0.05, 0.5).expect("valid hinge")).expect("valid");
    out.push(run_family("product hinge", points, tol, &mut rng, |r| {
        let z = product.sample(r);
        let coords: Vec<f64> = (0..product.dim()).map(|_| r.random_range(-0.5..0.5)).collect();
        let w = VecD::from_vec(coords.clone()).expect("finite");
        let smooth = z.terms.iter().all(|&(s, i)| {
            let p = [coords[2 * i - 2], coords[2 * i - 1]];
            hinge_margin(&product.hinge, p, s).abs() > KINK_MARGIN
        });
        if !smooth {
            return None;
        }
        let fd =
            finite_difference(|x| product.value(&VecD::from_vec(x.to_vec()).expect("finite"), &z), &coords, FD_STEP);
        Some((product.grad(&w, &z).to_dense(), fd))
    }));

    let d = 8;
    let base = FeldmanHard::new(d).expect("valid dimension");
    out.push(run_family("feldman", points, tol, &mut rng, |r| {
        let hard = base.clone().with_mask(r.random());
        let v = hard.sample(r);
        let coords: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let w = VecD::from_vec(coords.clone()).expect("finite");
        let s = 1.0 / (d as f64).sqrt();
        let mut inner: Vec<f64> = v
            .indices()
            .map(|j| {
                let p = hard.packing.words()[j];
                (0..d)
                    .map(|i| {
                        let sp = if p >> i & 1 == 1 { s } else { -s };
                        let sm = if hard.mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                        sp * sm * coords[i]
                    })
                    .sum()
            })
            .collect();
        inner.sort_by(|a, b| b.total_cmp(a));
        let top = inner.first().copied().unwrap_or(f64::NEG_INFINITY);
        let second = inner.get(1).copied().unwrap_or(f64::NEG_INFINITY);
        if (top - hard.shift).abs() <= KINK_MARGIN || (top - second).abs() <= KINK_MARGIN {
            return None;
        }
        let fd = finite_difference(|x| hard.value(&VecD::from_vec(x.to_vec()).expect("finite"), &v), &coords, FD_STEP);
        Some((hard.grad(&w, &v).to_dense(), fd))
    }));

    out.push(run_family("square walk", points, tol, &mut rng, |r| {
        let w: Vec2 = [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)];
        let z = SquareZ::from_bits(r.random());
        if w.iter().any(|x| (x.abs() - SQUARE_HALF_WIDTH).abs() <= KINK_MARGIN) {
            return None;
        }
        let fd = finite_difference(|x| SquareWalk.value(&[x[0], x[1]], &z), &w, FD_STEP);
        Some((SquareWalk.grad(&w, &z).to_vec(), fd))
    }));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[3.0, 4.0], &[3.0, 4.0]), 0.0);
        assert!((relative_error(&[3.0, 4.0], &[3.0, 4.5]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let mut rng = rng::master(0);
        let c = run_family("bad", 10, 1e-6, &mut rng, |r| {
            let x: f64 = r.random_range(-1.0..1.0);
            let fd = finite_difference(|y| y[0] * y[0], &[x], FD_STEP);
            Some((vec![2.0 * x + 1e-3], fd))
        });
        assert!(!c.pass);
    }
}
