//! Points, the 2×2 metric, ball projection and metric projection onto a
//! horizontal segment.
//!
//! Two point types are used. [`Vec2`] is a plain `[f64; 2]` for the planar
//! constructions. [`VecD`] holds points of arbitrary dimension and switches to
//! a pair-keyed sparse map above [`SPARSE_THRESHOLD`] coordinates, which keeps
//! the product constructions (dimension up to `1e5 * T`) cheap: an SGD run
//! only ever touches `O(kT)` coordinate pairs.
//!
//! Pair indices are 1-based: pair `i` is the coordinate pair `(2i-1, 2i)` in
//! 1-based numbering, i.e. 0-based coordinates `2i-2` and `2i-1`. Plain
//! coordinate indices are 0-based.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vec2 = [f64; 2];

/// Dimensions above this are stored sparsely.
pub const SPARSE_THRESHOLD: usize = 64;

/// Common arithmetic needed by the optimizers and regularizers.
pub trait Iterate: Clone + fmt::Debug + Send + Sync {
    fn zeros(dim: usize) -> Self;
    fn dim(&self) -> usize;
    fn get(&self, j: usize) -> f64;
    fn norm_sq(&self) -> f64;
    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
    /// `self += alpha * other`
    fn add_scaled(&mut self, alpha: f64, other: &Self);
    fn scale(&mut self, s: f64);
    fn is_finite(&self) -> bool;
    /// Visits every stored coordinate that is not exactly zero, in increasing
    /// coordinate order.
    fn for_each_nonzero<F: FnMut(usize, f64)>(&self, f: F);

    fn dist(&self, other: &Self) -> f64 {
        let mut d = self.clone();
        d.add_scaled(-1.0, other);
        d.norm()
    }

    fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.for_each_nonzero(|j, v| out[j] = v);
        out
    }
}

impl Iterate for Vec2 {
    fn zeros(dim: usize) -> Self {
        debug_assert_eq!(dim, 2);
        [0.0, 0.0]
    }
    fn dim(&self) -> usize {
        2
    }
    fn get(&self, j: usize) -> f64 {
        self[j]
    }
    fn norm_sq(&self) -> f64 {
        self[0] * self[0] + self[1] * self[1]
    }
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self[0] += alpha * other[0];
        self[1] += alpha * other[1];
    }
    fn scale(&mut self, s: f64) {
        self[0] *= s;
        self[1] *= s;
    }
    fn is_finite(&self) -> bool {
        self[0].is_finite() && self[1].is_finite()
    }
    fn for_each_nonzero<F: FnMut(usize, f64)>(&self, mut f: F) {
        for (j, &v) in self.iter().enumerate() {
            if v != 0.0 {
                f(j, v);
            }
        }
    }
}

pub fn sub2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn scale2(s: f64, a: Vec2) -> Vec2 {
    [s * a[0], s * a[1]]
}

pub fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm2(a: Vec2) -> f64 {
    dot2(a, a).sqrt()
}

pub fn dist2(a: Vec2, b: Vec2) -> f64 {
    norm2(sub2(a, b))
}

/// `w⊥ = (w₂, −w₁)`: `w` turned a quarter clockwise.
pub fn perp(w: Vec2) -> Vec2 {
    [w[1], -w[0]]
}

/// A point of `ℝ^d`, dense or pair-sparse.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "repr", rename_all = "lowercase")]
pub enum VecD {
    Dense { coords: Vec<f64> },
    Sparse { dim: usize, pairs: BTreeMap<usize, Vec2> },
}

impl VecD {
    /// Zero vector in the representation chosen by the dimension.
    pub fn zeros(dim: usize) -> Self {
        if dim > SPARSE_THRESHOLD {
            Self::zeros_sparse(dim)
        } else {
            Self::zeros_dense(dim)
        }
    }

    pub fn zeros_dense(dim: usize) -> Self {
        VecD::Dense { coords: vec![0.0; dim] }
    }

    pub fn zeros_sparse(dim: usize) -> Self {
        VecD::Sparse { dim, pairs: BTreeMap::new() }
    }

    pub fn from_vec(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("vector dimension must be at least 1"));
        }
        if let Some(j) = coords.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("coordinate {j} is not finite")));
        }
        Ok(VecD::Dense { coords })
    }

    pub fn from_vec2(w: Vec2) -> Self {
        VecD::Dense { coords: w.to_vec() }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, VecD::Sparse { .. })
    }

    /// Number of pairs addressable by [`VecD::pair_view`].
    pub fn pair_count(&self) -> usize {
        self.dim() / 2
    }

    pub fn set(&mut self, j: usize, value: f64) -> Result<()> {
        let dim = self.dim();
        if j >= dim {
            return Err(invalid(format!("coordinate {j} out of range for dimension {dim}")));
        }
        if !value.is_finite() {
            return Err(invalid("non-finite coordinate value"));
        }
        match self {
            VecD::Dense { coords } => coords[j] = value,
            VecD::Sparse { pairs, .. } => {
                let key = j / 2 + 1;
                let slot = pairs.entry(key).or_insert([0.0, 0.0]);
                slot[j % 2] = value;
                if *slot == [0.0, 0.0] {
                    pairs.remove(&key);
                }
            }
        }
        Ok(())
    }

    fn check_pair(&self, i: usize) -> Result<()> {
        let max = self.pair_count();
        if i == 0 || i > max {
            return Err(Error::IndexOutOfRange { index: i, max });
        }
        Ok(())
    }

    /// Reads pair `i` (1-based).
    pub fn pair_view(&self, i: usize) -> Result<Vec2> {
        self.check_pair(i)?;
        Ok(self.pair_unchecked(i))
    }

    pub(crate) fn pair_unchecked(&self, i: usize) -> Vec2 {
        match self {
            VecD::Dense { coords } => [coords[2 * i - 2], coords[2 * i - 1]],
            VecD::Sparse { pairs, .. } => pairs.get(&i).copied().unwrap_or([0.0, 0.0]),
        }
    }

    /// Writes pair `i` (1-based). On a sparse vector writing exactly `(0,0)`
    /// removes the entry.
    pub fn pair_write(&mut self, i: usize, value: Vec2) -> Result<()> {
        self.check_pair(i)?;
        if !value.is_finite() {
            return Err(invalid("non-finite pair value"));
        }
        match self {
            VecD::Dense { coords } => {
                coords[2 * i - 2] = value[0];
                coords[2 * i - 1] = value[1];
            }
            VecD::Sparse { pairs, .. } => {
                if value == [0.0, 0.0] {
                    pairs.remove(&i);
                } else {
                    pairs.insert(i, value);
                }
            }
        }
        Ok(())
    }

    /// Adds `delta` to pair `i` without range checks.
    pub(crate) fn pair_add(&mut self, i: usize, delta: Vec2) {
        match self {
            VecD::Dense { coords } => {
                coords[2 * i - 2] += delta[0];
                coords[2 * i - 1] += delta[1];
            }
            VecD::Sparse { pairs, .. } => {
                let slot = pairs.entry(i).or_insert([0.0, 0.0]);
                slot[0] += delta[0];
                slot[1] += delta[1];
                if *slot == [0.0, 0.0] {
                    pairs.remove(&i);
                }
            }
        }
    }

    pub fn dot(&self, other: &VecD) -> f64 {
        let mut acc = 0.0;
        if let VecD::Sparse { pairs, .. } = other {
            if !self.is_sparse() {
                for (&i, p) in pairs {
                    acc += dot2(self.pair_or_tail(i), *p);
                }
                return acc;
            }
        }
        self.for_each_nonzero(|j, v| acc += v * other.get(j));
        acc
    }

    // Pair `i` where the second slot may fall past an odd dimension.
    fn pair_or_tail(&self, i: usize) -> Vec2 {
        let a = self.get(2 * i - 2);
        let b = if 2 * i - 1 < self.dim() { self.get(2 * i - 1) } else { 0.0 };
        [a, b]
    }

    /// Exact coordinatewise equality, independent of representation.
    pub fn canonical_eq(&self, other: &VecD) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        self.for_each_nonzero(|j, v| a.push((j, v)));
        other.for_each_nonzero(|j, v| b.push((j, v)));
        a == b
    }

    pub fn to_sparse(&self) -> VecD {
        let mut out = VecD::zeros_sparse(self.dim());
        self.for_each_nonzero(|j, v| {
            out.set(j, v).expect("coordinate copied from a valid vector");
        });
        out
    }

    pub fn into_dense(self) -> VecD {
        VecD::Dense { coords: Iterate::to_dense(&self) }
    }

    /// Pair indices that hold a nonzero value.
    pub fn touched_pairs(&self) -> Vec<usize> {
        match self {
            VecD::Sparse { pairs, .. } => pairs.keys().copied().collect(),
            VecD::Dense { coords } => {
                (1..=coords.len() / 2).filter(|&i| coords[2 * i - 2] != 0.0 || coords[2 * i - 1] != 0.0).collect()
            }
        }
    }
}

impl PartialEq for VecD {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_eq(other)
    }
}

impl Iterate for VecD {
    fn zeros(dim: usize) -> Self {
        VecD::zeros(dim)
    }

    fn dim(&self) -> usize {
        match self {
            VecD::Dense { coords } => coords.len(),
            VecD::Sparse { dim, .. } => *dim,
        }
    }

    fn get(&self, j: usize) -> f64 {
        match self {
            VecD::Dense { coords } => coords[j],
            VecD::Sparse { pairs, .. } => pairs.get(&(j / 2 + 1)).map_or(0.0, |p| p[j % 2]),
        }
    }

    fn norm_sq(&self) -> f64 {
        match self {
            VecD::Dense { coords } => coords.iter().map(|v| v * v).sum(),
            VecD::Sparse { pairs, .. } => pairs.values().map(|p| p[0] * p[0] + p[1] * p[1]).sum(),
        }
    }

    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        match (self, other) {
            (VecD::Dense { coords }, VecD::Dense { coords: o }) => {
                for (a, b) in coords.iter_mut().zip(o) {
                    *a += alpha * b;
                }
            }
            (VecD::Dense { coords }, VecD::Sparse { pairs, .. }) => {
                for (&i, p) in pairs {
                    coords[2 * i - 2] += alpha * p[0];
                    if 2 * i - 1 < coords.len() {
                        coords[2 * i - 1] += alpha * p[1];
                    }
                }
            }
            (me @ VecD::Sparse { .. }, VecD::Sparse { pairs: o, .. }) => {
                for (&i, p) in o {
                    me.pair_add(i, [alpha * p[0], alpha * p[1]]);
                }
            }
            (me @ VecD::Sparse { .. }, dense @ VecD::Dense { .. }) => {
                dense.for_each_nonzero(|j, v| {
                    let cur = me.get(j);
                    me.set(j, cur + alpha * v).expect("finite update");
                });
            }
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            VecD::Dense { coords } => coords.iter_mut().for_each(|v| *v *= s),
            VecD::Sparse { pairs, .. } => {
                for p in pairs.values_mut() {
                    p[0] *= s;
                    p[1] *= s;
                }
                pairs.retain(|_, p| *p != [0.0, 0.0]);
            }
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            VecD::Dense { coords } => coords.iter().all(|v| v.is_finite()),
            VecD::Sparse { pairs, .. } => pairs.values().all(|p| p.is_finite()),
        }
    }

    fn for_each_nonzero<F: FnMut(usize, f64)>(&self, mut f: F) {
        match self {
            VecD::Dense { coords } => {
                for (j, &v) in coords.iter().enumerate() {
                    if v != 0.0 {
                        f(j, v);
                    }
                }
            }
            VecD::Sparse { pairs, .. } => {
                for (&i, p) in pairs {
                    if p[0] != 0.0 {
                        f(2 * i - 2, p[0]);
                    }
                    if p[1] != 0.0 {
                        f(2 * i - 1, p[1]);
                    }
                }
            }
        }
    }
}

/// Symmetric positive definite 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric2 {
    a: f64,
    b: f64,
    c: f64,
}

impl Metric2 {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if ![a, b, c].iter().all(|v| v.is_finite()) {
            return Err(invalid("metric entries must be finite"));
        }
        let m = Metric2 { a, b, c };
        let (lo, _) = m.eigenvalues();
        if lo <= 0.0 {
            return Err(invalid(format!("metric is not positive definite (smallest eigenvalue {lo})")));
        }
        Ok(m)
    }

    /// `[[1, ½], [½, 1]]`.
    pub fn canonical() -> Self {
        Metric2 { a: 1.0, b: 0.5, c: 1.0 }
    }

    pub fn identity() -> Self {
        Metric2 { a: 1.0, b: 0.0, c: 1.0 }
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.b, self.c]]
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a + self.c);
        let half_gap = (0.25 * (self.a - self.c).powi(2) + self.b * self.b).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
    }

    /// `vᵀ Σ v`
    pub fn quad(&self, v: Vec2) -> f64 {
        dot2(v, self.apply(v))
    }

    /// `uᵀ Σ v`
    pub fn inner(&self, u: Vec2, v: Vec2) -> f64 {
        dot2(u, self.apply(v))
    }

    /// `Qᵀ Σ Q` for an orthogonal `Q` given by rows.
    pub fn conjugate(&self, q: &Orthogonal2) -> Metric2 {
        let m = q.rows;
        // column j of Q is (m[0][j], m[1][j])
        let col = |j: usize| [m[0][j], m[1][j]];
        let e = |i: usize, j: usize| self.inner(col(i), col(j));
        Metric2 { a: e(0, 0), b: 0.5 * (e(0, 1) + e(1, 0)), c: e(1, 1) }
    }

    /// A matrix `L` with `L Lᵀ = Σ⁻¹`, used to walk the boundary of a
    /// `Σ`-ellipse: `{ L u : ‖u‖ = 1 }` is the unit sphere of the `Σ`-norm.
    pub fn inverse_sqrt(&self) -> [[f64; 2]; 2] {
        // Σ⁻¹ = [[c, -b], [-b, a]] / det; its Cholesky factor.
        let det = self.a * self.c - self.b * self.b;
        let ia = self.c / det;
        let ib = -self.b / det;
        let ic = self.a / det;
        let l00 = ia.sqrt();
        let l10 = ib / l00;
        let l11 = (ic - l10 * l10).sqrt();
        [[l00, 0.0], [l10, l11]]
    }
}

/// A 2×2 orthogonal map stored by rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orthogonal2 {
    pub rows: [[f64; 2]; 2],
}

impl Orthogonal2 {
    pub fn identity() -> Self {
        Orthogonal2 { rows: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Orthogonal2 { rows: [[c, -s], [s, c]] }
    }

    /// Mirror across the vertical axis, `(x, y) ↦ (−x, y)`.
    pub fn mirror_vertical() -> Self {
        Orthogonal2 { rows: [[-1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [dot2(self.rows[0], v), dot2(self.rows[1], v)]
    }

    pub fn transpose(&self) -> Self {
        let r = self.rows;
        Orthogonal2 { rows: [[r[0][0], r[1][0]], [r[0][1], r[1][1]]] }
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Orthogonal2) -> Self {
        let a = self.rows;
        let b = other.rows;
        let mut rows = [[0.0; 2]; 2];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Orthogonal2 { rows }
    }
}

/// Euclidean projection onto the centred ball of the given radius.
pub fn project_ball<P: Iterate>(w: &P, radius: f64) -> Result<P> {
    if !(radius > 0.0) {
        return Err(invalid(format!("ball radius must be positive, got {radius}")));
    }
    if !w.is_finite() {
        return Err(invalid("cannot project a non-finite point"));
    }
    let mut out = w.clone();
    project_ball_in_place(&mut out, radius);
    Ok(out)
}

/// Projects in place; returns whether the point was moved.
pub(crate) fn project_ball_in_place<P: Iterate>(w: &mut P, radius: f64) -> bool {
    let n = w.norm();
    if n > radius {
        w.scale(radius / n);
        true
    } else {
        false
    }
}

/// `Σ`-metric projection of `w` onto `A = {(α, θ₂) : 0 ≤ α ≤ θ₁}`.
///
/// The objective `(w − (α, θ₂))ᵀ Σ (w − (α, θ₂))` is a 1-D quadratic in `α`
/// with minimiser `α* = w₁ + (Σ₁₂/Σ₁₁)(w₂ − θ₂)`, clamped to `[0, θ₁]`.
pub fn project_segment_metric(w: Vec2, theta1: f64, theta2: f64, metric: &Metric2) -> Result<Vec2> {
    if !(theta1 >= 0.0) || !theta1.is_finite() || !theta2.is_finite() {
        return Err(invalid(format!("segment needs finite θ1 ≥ 0 and θ2, got ({theta1}, {theta2})")));
    }
    if !w.is_finite() {
        return Err(invalid("cannot project a non-finite point"));
    }
    let alpha = w[0] + metric.b / metric.a * (w[1] - theta2);
    Ok([alpha.clamp(0.0, theta1), theta2])
}

/// `Σ`-metric projection onto the segment `[p, q]`, returned as the
/// segment parameter `s ∈ [0, 1]` (point `p + s(q − p)`).
pub fn project_onto_segment(w: Vec2, p: Vec2, q: Vec2, metric: &Metric2) -> f64 {
    let dir = sub2(q, p);
    let len = metric.quad(dir);
    if len == 0.0 {
        return 0.0;
    }
    (metric.inner(sub2(w, p), dir) / len).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Σ-distance grid oracle over α ∈ [0, θ1].
    fn grid_projection(w: Vec2, theta1: f64, theta2: f64, m: &Metric2, step: f64) -> Vec2 {
        let n = (theta1 / step).round() as usize;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=n {
            let alpha = (k as f64 * step).min(theta1);
            let d = m.quad(sub2(w, [alpha, theta2]));
            if d < best.0 {
                best = (d, alpha);
            }
        }
        [best.1, theta2]
    }

    #[test]
    fn ball_projection_examples() {
        let w = VecD::from_vec(vec![3.0, 4.0]).unwrap();
        assert_eq!(project_ball(&w, 5.0).unwrap(), w);
        let w = VecD::from_vec(vec![6.0, 8.0]).unwrap();
        let p = project_ball(&w, 5.0).unwrap();
        assert!((p.get(0) - 3.0).abs() < 1e-15 && (p.get(1) - 4.0).abs() < 1e-15);
        let z = VecD::zeros(2);
        assert_eq!(project_ball(&z, 1.0).unwrap(), z);
    }

    #[test]
    fn ball_projection_rejects_bad_input() {
        assert!(project_ball(&[f64::NAN, 0.0], 1.0).is_err());
        assert!(project_ball(&[1.0, 0.0], 0.0).is_err());
        assert!(VecD::from_vec(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn segment_projection_examples() {
        let m = Metric2::canonical();
        assert_eq!(project_segment_metric([0.0, 0.0], 0.25, 1.0, &m).unwrap(), [0.0, 1.0]);
        for (w, expect) in [([0.5, 1.0], [0.25, 1.0]), ([0.1, 1.0], [0.1, 1.0])] {
            let got = project_segment_metric(w, 0.25, 1.0, &m).unwrap();
            let oracle = grid_projection(w, 0.25, 1.0, &m, 1e-5);
            assert!((got[0] - expect[0]).abs() < 1e-12);
            assert!((got[0] - oracle[0]).abs() < 1e-5);
        }
    }

    #[test]
    fn metric_validation_and_spectrum() {
        let (lo, hi) = Metric2::canonical().eigenvalues();
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 1.5).abs() < 1e-15);
        assert!(Metric2::new(1.0, 1.0, 1.0).is_err());
        assert!(Metric2::new(1.0, 0.0, -1.0).is_err());
        assert!(Metric2::new(2.0, 0.3, 1.0).is_ok());
    }

    #[test]
    fn inverse_sqrt_walks_the_unit_sigma_sphere() {
        let m = Metric2::new(2.0, 0.7, 1.3).unwrap();
        let l = m.inverse_sqrt();
        for k in 0..16 {
            let phi = k as f64 * 0.4;
            let u = [phi.cos(), phi.sin()];
            let v = [l[0][0] * u[0] + l[0][1] * u[1], l[1][0] * u[0] + l[1][1] * u[1]];
            assert!((m.quad(v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_access() {
        let w = VecD::from_vec(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(w.pair_view(2).unwrap(), [3.0, 4.0]);
        assert!(matches!(w.pair_view(3), Err(Error::IndexOutOfRange { .. })));
        assert!(w.pair_view(0).is_err());

        let mut z = VecD::zeros(4);
        z.pair_write(1, [5.0, 6.0]).unwrap();
        assert_eq!(z.pair_view(1).unwrap(), [5.0, 6.0]);

        let mut big = VecD::zeros(2_000_000);
        assert!(big.is_sparse());
        assert_eq!(big.pair_view(100_000).unwrap(), [0.0, 0.0]);
        big.pair_write(7, [1.0, -1.0]).unwrap();
        assert_eq!(big.touched_pairs(), vec![7]);
        big.pair_write(7, [0.0, 0.0]).unwrap();
        assert!(big.touched_pairs().is_empty());
    }

    #[test]
    fn segment_projection_general_metric_matches_oracle() {
        let m = Metric2::new(1.7, -0.4, 0.9).unwrap();
        for w in [[0.3, 0.2], [-1.0, 2.0], [0.05, 0.8], [2.0, -1.0]] {
            let got = project_segment_metric(w, 0.5, 0.6, &m).unwrap();
            let oracle = grid_projection(w, 0.5, 0.6, &m, 1e-5);
            assert!((got[0] - oracle[0]).abs() <= 1e-5, "{w:?}: {got:?} vs {oracle:?}");
        }
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, dim)
    }

    proptest! {
        #[test]
        fn ball_projection_idempotent_nonexpansive(u in vec_strategy(5), v in vec_strategy(5), r in 0.1f64..8.0) {
            let u = VecD::from_vec(u).unwrap();
            let v = VecD::from_vec(v).unwrap();
            let pu = project_ball(&u, r).unwrap();
            let pv = project_ball(&v, r).unwrap();
            prop_assert!(pu.norm() <= r * (1.0 + 1e-15));
            prop_assert!(project_ball(&pu, r).unwrap().dist(&pu) <= 1e-15 * r);
            prop_assert!(pu.dist(&pv) <= u.dist(&v) + 1e-12);
        }

        #[test]
        fn segment_projection_is_optimal(w0 in -3.0f64..3.0, w1 in -3.0f64..3.0,
                                         t1 in 0.0f64..1.0, t2 in -1.0f64..1.0,
                                         probes in proptest::collection::vec(0.0f64..1.0, 1000)) {
            let m = Metric2::canonical();
            let w = [w0, w1];
            let v = project_segment_metric(w, t1, t2, &m).unwrap();
            prop_assert!(v[0] >= 0.0 && v[0] <= t1 && v[1] == t2);
            let best = m.quad(sub2(w, v));
            for s in probes {
                prop_assert!(best <= m.quad(sub2(w, [s * t1, t2])) + 1e-12);
            }
        }

        #[test]
        fn dense_sparse_duality(ops in proptest::collection::vec((1usize..40, -5.0f64..5.0, -5.0f64..5.0, -2.0f64..2.0), 1..30)) {
            let mut dense = VecD::zeros_dense(80);
            let mut sparse = VecD::zeros_sparse(80);
            for (i, a, b, s) in ops {
                dense.pair_write(i, [a, b]).unwrap();
                sparse.pair_write(i, [a, b]).unwrap();
                let mut step = VecD::zeros_sparse(80);
                step.pair_write(41 - i, [s, -s]).unwrap();
                dense.add_scaled(0.5, &step);
                sparse.add_scaled(0.5, &step);
                dense.scale(0.9);
                sparse.scale(0.9);
                prop_assert!(dense.canonical_eq(&sparse));
                prop_assert!((dense.norm_sq() - sparse.norm_sq()).abs() <= 1e-9);
                prop_assert!((dense.dot(&step) - sparse.dot(&step)).abs() <= 1e-9);
            }
            prop_assert!(sparse.to_sparse().canonical_eq(&dense.clone().into_dense()));
        }
    }
}
