//! Regularizer oracles, their desk-scale admissibility probes, Pareto
//! certificates, and the two deterministic constructions.

mod certificate;
mod constructions;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Iterate, Vec2};
use crate::objectives::finite_difference;
use crate::rng;

pub use certificate::{
    k_membership, min_over_segment, min_over_segment2, to_vecd, violation_certificate, CertificateContext, SegmentMin,
    ViolationCertificate, F_TOLERANCE,
};
pub use constructions::{
    build_gdr_construction, build_warmup_construction, estimate_neighborhood, fichs1_search, run_gdr, run_warmup,
    sublevel_witness, Fichs1Pair, GdrCase, GdrConstruction, GdrReport, WarmupCase, WarmupConstruction, WarmupReport,
    WitnessKind, WARMUP_END, WARMUP_START,
};

/// Finite-difference step used by the probes.
pub const FD_STEP: f64 = 1e-5;
/// Slack allowed on the strong-convexity inequality.
pub const CONVEXITY_SLACK: f64 = 1e-6;

/// Bilinear interpolation of a value table over `[−half_width, half_width]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub half_width: f64,
    /// `values[i][j]` sits at `x = −h + i·step`, `y = −h + j·step`.
    pub values: Vec<Vec<f64>>,
}

impl GridTable {
    pub fn new(half_width: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if n < 2 || values.iter().any(|row| row.len() != n) {
            return Err(invalid("grid table must be square with at least 2×2 nodes"));
        }
        if !(half_width > 0.0) {
            return Err(invalid(format!("grid half width must be positive, got {half_width}")));
        }
        if values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("grid values must be finite and nonnegative"));
        }
        Ok(GridTable { half_width, values })
    }

    /// Tabulates `f` on an `n × n` grid.
    pub fn tabulate(half_width: f64, n: usize, f: impl Fn(Vec2) -> f64) -> Result<Self> {
        let step = 2.0 * half_width / (n as f64 - 1.0);
        let values = (0..n)
            .map(|i| (0..n).map(|j| f([-half_width + i as f64 * step, -half_width + j as f64 * step])).collect())
            .collect();
        Self::new(half_width, values)
    }

    fn step(&self) -> f64 {
        2.0 * self.half_width / (self.values.len() as f64 - 1.0)
    }

    pub fn eval(&self, w: Vec2) -> f64 {
        let n = self.values.len();
        let step = self.step();
        let locate = |x: f64| {
            let u = ((x + self.half_width) / step).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n - 2);
            (i, u - i as f64)
        };
        let (i, fx) = locate(w[0]);
        let (j, fy) = locate(w[1]);
        let v = &self.values;
        (1.0 - fx) * (1.0 - fy) * v[i][j]
            + fx * (1.0 - fy) * v[i + 1][j]
            + (1.0 - fx) * fy * v[i][j + 1]
            + fx * fy * v[i + 1][j + 1]
    }
}

/// A user-supplied penalty oracle.
pub type Oracle = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum RegularizerKind {
    /// `‖w‖²`
    SqNorm,
    /// `‖w − p‖²`, with `p` padded by zeros.
    Shifted(Vec<f64>),
    /// `‖w‖₁ / (5√2)`
    L1Normalized,
    /// Planar table, reads the first two coordinates.
    Grid(GridTable),
    Custom(Oracle),
}

impl fmt::Debug for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegularizerKind::SqNorm => write!(f, "SqNorm"),
            RegularizerKind::Shifted(p) => write!(f, "Shifted({p:?})"),
            RegularizerKind::L1Normalized => write!(f, "L1Normalized"),
            RegularizerKind::Grid(g) => write!(f, "Grid({}x{})", g.values.len(), g.values.len()),
            RegularizerKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Serializable description of a regularizer and what is known about it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerInfo {
    pub name: String,
    pub lambda: Option<f64>,
    pub lipschitz: Option<f64>,
    pub strictly_quasi_convex: bool,
    pub admissibility: String,
}

#[derive(Clone, Debug)]
pub struct Regularizer {
    pub name: String,
    pub kind: RegularizerKind,
    /// Modulus in `r(u) ≥ r(w) + ⟨∇r(w), u − w⟩ + λ‖u − w‖²`.
    pub lambda: Option<f64>,
    /// Lipschitz constant on the radius-5 ball, when known.
    pub lipschitz: Option<f64>,
    pub strictly_quasi_convex: bool,
}

impl Regularizer {
    pub fn sq_norm() -> Self {
        Regularizer {
            name: "sq-norm".into(),
            kind: RegularizerKind::SqNorm,
            lambda: Some(1.0),
            lipschitz: Some(10.0),
            strictly_quasi_convex: true,
        }
    }

    pub fn shifted(center: Vec<f64>) -> Self {
        let reach = 5.0 + center.iter().map(|v| v * v).sum::<f64>().sqrt();
        Regularizer {
            name: format!("shifted-sq-norm({})", center.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")),
            kind: RegularizerKind::Shifted(center),
            lambda: Some(1.0),
            lipschitz: Some(2.0 * reach),
            strictly_quasi_convex: true,
        }
    }

    pub fn l1_normalized() -> Self {
        Regularizer {
            name: "l1-normalized".into(),
            kind: RegularizerKind::L1Normalized,
            lambda: None,
            lipschitz: Some(1.0 / 5.0),
            strictly_quasi_convex: false,
        }
    }

    pub fn grid(table: GridTable) -> Self {
        Regularizer {
            name: "custom-grid".into(),
            kind: RegularizerKind::Grid(table),
            lambda: None,
            lipschitz: None,
            strictly_quasi_convex: false,
        }
    }

    /// The registry's default table: `0.3|w₁| + w₂²` on a 41×41 grid.
    pub fn default_grid() -> Self {
        let table = GridTable::tabulate(5.0, 41, |w| 0.3 * w[0].abs() + w[1] * w[1]).expect("static table");
        Self::grid(table)
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Regularizer {
            name: name.into(),
            kind: RegularizerKind::Custom(Arc::new(f)),
            lambda: None,
            lipschitz: None,
            strictly_quasi_convex: false,
        }
    }

    pub fn with_lambda(mut self, lambda: Option<f64>) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_lipschitz(mut self, lipschitz: Option<f64>) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn with_strictly_quasi_convex(mut self, flag: bool) -> Self {
        self.strictly_quasi_convex = flag;
        self
    }

    /// Looks up a built-in regularizer: `sq-norm`, `l1-normalized`,
    /// `custom-grid` or `shifted-sq-norm(x,y,...)`.
    pub fn by_name(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "sq-norm" => Ok(Self::sq_norm()),
            "l1-normalized" => Ok(Self::l1_normalized()),
            "custom-grid" => Ok(Self::default_grid()),
            _ => {
                let args = name
                    .strip_prefix("shifted-sq-norm(")
                    .and_then(|s| s.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown regularizer '{name}'")))?;
                let center = args
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Config(format!("bad center in '{name}': {e}")))?;
                if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!("bad center in '{name}'")));
                }
                Ok(Self::shifted(center))
            }
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        match &self.kind {
            RegularizerKind::SqNorm => w.iter().map(|v| v * v).sum(),
            RegularizerKind::Shifted(p) => {
                let mut total = 0.0;
                for (j, v) in w.iter().enumerate() {
                    let d = v - p.get(j).copied().unwrap_or(0.0);
                    total += d * d;
                }
                total + p.iter().skip(w.len()).map(|v| v * v).sum::<f64>()
            }
            RegularizerKind::L1Normalized => w.iter().map(|v| v.abs()).sum::<f64>() / (5.0 * 2f64.sqrt()),
            RegularizerKind::Grid(g) => g.eval([w.first().copied().unwrap_or(0.0), w.get(1).copied().unwrap_or(0.0)]),
            RegularizerKind::Custom(f) => f(w),
        }
    }

    pub fn value2(&self, w: Vec2) -> f64 {
        self.value(&w)
    }

    /// Same as [`Regularizer::value`] without densifying sparse iterates for
    /// the built-in kinds.
    pub fn value_of<P: Iterate>(&self, w: &P) -> f64 {
        match &self.kind {
            RegularizerKind::SqNorm => w.norm_sq(),
            RegularizerKind::Shifted(p) => {
                // exact differences on the centre's coordinates, the rest from ‖w‖²
                let mut near = 0.0;
                let mut head = 0.0;
                for (j, pj) in p.iter().enumerate() {
                    let wj = if j < w.dim() { w.get(j) } else { 0.0 };
                    near += (wj - pj) * (wj - pj);
                    head += wj * wj;
                }
                near + (w.norm_sq() - head).max(0.0)
            }
            RegularizerKind::L1Normalized => {
                let mut total = 0.0;
                w.for_each_nonzero(|_, v| total += v.abs());
                total / (5.0 * 2f64.sqrt())
            }
            RegularizerKind::Grid(g) => g.eval([w.get(0), if w.dim() > 1 { w.get(1) } else { 0.0 }]),
            RegularizerKind::Custom(f) => f(&w.to_dense()),
        }
    }

    pub fn fd_grad(&self, w: &[f64]) -> Vec<f64> {
        finite_difference(|x| self.value(x), w, FD_STEP)
    }

    /// Points where the minimum is known to sit, added to the probe grid.
    fn hints(&self) -> Vec<Vec2> {
        match &self.kind {
            RegularizerKind::Shifted(p) => vec![[p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0)]],
            _ => vec![],
        }
    }

    pub fn info(&self, admissibility: impl Into<String>) -> RegularizerInfo {
        RegularizerInfo {
            name: self.name.clone(),
            lambda: self.lambda,
            lipschitz: self.lipschitz,
            strictly_quasi_convex: self.strictly_quasi_convex,
            admissibility: admissibility.into(),
        }
    }
}

/// Result of the normalization and non-constancy grid probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationProbe {
    pub points: usize,
    pub min: f64,
    /// Extremes over the punctured ball.
    pub punctured_min: f64,
    pub punctured_max: f64,
    pub min_ok: bool,
    pub nonconstant: bool,
}

impl NormalizationProbe {
    pub fn pass(&self) -> bool {
        self.min_ok && self.nonconstant
    }
}

/// Evaluates `r` on a 35×35 grid of `[−radius, radius]²` restricted to the
/// ball (about 950 points including the origin).
pub fn normalization_probe(r: &Regularizer, radius: f64) -> NormalizationProbe {
    let n = 35;
    let step = 2.0 * radius / (n as f64 - 1.0);
    let mut points = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = [-radius + i as f64 * step, -radius + j as f64 * step];
            if w[0] * w[0] + w[1] * w[1] <= radius * radius * (1.0 + 1e-12) {
                points.push(w);
            }
        }
    }
    points.extend(r.hints().into_iter().filter(|h| h[0] * h[0] + h[1] * h[1] <= radius * radius));
    let mut min = f64::INFINITY;
    let mut pmin = f64::INFINITY;
    let mut pmax = f64::NEG_INFINITY;
    for w in &points {
        let v = r.value2(*w);
        min = min.min(v);
        if w[0] != 0.0 || w[1] != 0.0 {
            pmin = pmin.min(v);
            pmax = pmax.max(v);
        }
    }
    NormalizationProbe {
        points: points.len(),
        min,
        punctured_min: pmin,
        punctured_max: pmax,
        min_ok: (0.0..=1e-6).contains(&min),
        nonconstant: pmax - pmin > 1e-6,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    pub lambda: f64,
    pub pairs: usize,
    pub min_slack: f64,
    pub pass: bool,
}

/// Checks `r(u) ≥ r(w) + ⟨∇̂r(w), u − w⟩ + λ‖u − w‖²` on random planar pairs
/// in the ball, with a finite-difference gradient.
pub fn strong_convexity_probe(r: &Regularizer, lambda: f64, pairs: usize, radius: f64, seed: u64) -> ConvexityProbe {
    let mut rng = rng::master(seed);
    let point = |rng: &mut rng::LabRng| loop {
        let w = [rng.random_range(-radius..radius), rng.random_range(-radius..radius)];
        if w[0] * w[0] + w[1] * w[1] <= radius * radius {
            return w;
        }
    };
    let mut min_slack = f64::INFINITY;
    for _ in 0..pairs {
        let u = point(&mut rng);
        let w = point(&mut rng);
        let g = r.fd_grad(&w);
        let d = [u[0] - w[0], u[1] - w[1]];
        let slack = r.value2(u) - r.value2(w) - (g[0] * d[0] + g[1] * d[1]) - lambda * (d[0] * d[0] + d[1] * d[1]);
        min_slack = min_slack.min(slack);
    }
    ConvexityProbe { lambda, pairs, min_slack, pass: min_slack >= -CONVEXITY_SLACK }
}

/// Runs the grid probe and, when `λ` is declared, the convexity probe;
/// rejects the regularizer if either fails.
pub fn verify_regularizer(
    r: &Regularizer,
    radius: f64,
    seed: u64,
) -> Result<(NormalizationProbe, Option<ConvexityProbe>)> {
    let norm = normalization_probe(r, radius);
    if !norm.pass() {
        return Err(invalid(format!(
            "{} fails the grid probe (min {:.3e}, spread {:.3e})",
            r.name,
            norm.min,
            norm.punctured_max - norm.punctured_min
        )));
    }
    let convex = match r.lambda {
        Some(lambda) => {
            let p = strong_convexity_probe(r, lambda, 10_000, radius, seed);
            if !p.pass {
                return Err(invalid(format!(
                    "{} fails the λ={} strong-convexity probe (slack {:.3e})",
                    r.name, lambda, p.min_slack
                )));
            }
            Some(p)
        }
        None => None,
    };
    Ok((norm, convex))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VecD;

    #[test]
    fn registry_names() {
        assert_eq!(Regularizer::by_name("sq-norm").unwrap().value(&[3.0, 4.0]), 25.0);
        let s = Regularizer::by_name("shifted-sq-norm(0.3, 0)").unwrap();
        assert!((s.value(&[0.3, 1.0]) - 1.0).abs() < 1e-15);
        assert!(matches!(Regularizer::by_name("nope"), Err(Error::Config(_))));
        assert!(Regularizer::by_name("custom-grid").unwrap().value(&[0.0, 0.0]).abs() < 1e-15);
    }

    #[test]
    fn builtins_pass_probes() {
        for name in ["sq-norm", "l1-normalized", "custom-grid", "shifted-sq-norm(0.024,1)"] {
            let r = Regularizer::by_name(name).unwrap();
            let probes = verify_regularizer(&r, 5.0, 1);
            assert!(probes.is_ok(), "{name}: {probes:?}");
        }
    }

    #[test]
    fn probe_grid_size_is_about_a_thousand() {
        let p = normalization_probe(&Regularizer::sq_norm(), 1.0);
        assert!((800..=1200).contains(&p.points), "{}", p.points);
        assert_eq!(p.min, 0.0);
    }

    #[test]
    fn constant_regularizer_is_rejected() {
        let r = Regularizer::custom("flat", |_| 0.0);
        assert!(!normalization_probe(&r, 1.0).nonconstant);
        assert!(verify_regularizer(&r, 1.0, 0).is_err());
    }

    #[test]
    fn overstated_lambda_is_rejected() {
        let r = Regularizer::sq_norm().with_lambda(Some(1.5));
        assert!(verify_regularizer(&r, 1.0, 0).is_err());
        let l1 = Regularizer::l1_normalized().with_lambda(Some(0.1));
        assert!(verify_regularizer(&l1, 1.0, 0).is_err());
    }

    #[test]
    fn sparse_values_match_dense() {
        let mut w = VecD::zeros(200);
        w.set(3, 0.5).unwrap();
        w.set(150, -0.25).unwrap();
        let dense = w.to_dense();
        for r in [Regularizer::sq_norm(), Regularizer::shifted(vec![0.1, 0.2, 0.3, 0.4]), Regularizer::l1_normalized()]
        {
            assert!((r.value_of(&w) - r.value(&dense)).abs() < 1e-14, "{}", r.name);
        }
    }

    #[test]
    fn grid_interpolates_nodes_exactly() {
        let g = GridTable::tabulate(5.0, 11, |w| w[0] * w[0] + 2.0 * w[1].abs()).unwrap();
        assert!((g.eval([1.0, -2.0]) - 5.0).abs() < 1e-12);
        // bilinear in each cell
        let mid = g.eval([0.5, 0.0]);
        assert!((mid - 0.5).abs() < 1e-12);
    }
}
