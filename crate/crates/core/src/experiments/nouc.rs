//! Flip classes on the averaged product distribution and their image on the
//! hypercube.
//!
//! One sample `S` is drawn. Members of the flip class (all sign patterns on
//! the good positions) are sampled and run through SGD; their outputs differ
//! from `w_S` only on good pairs, so an affine map sends them onto
//! `{±1/√n}^n` with `n = |S_g|`. The set kept is the one whose penalty does
//! not exceed `r(w_S)`, probed for statistical complexity on the cube.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::complexity::{feldman_complexity_probe, ComplexityReport, ImplicitSet};
use super::coupled::{averaged_pair_value, draw_coupled_with, CoupledSample};
use super::RegimeCheck;
use crate::error::{Error, Result};
use crate::geometry::{dot2, sub2, Iterate, Vec2, VecD};
use crate::objectives::{HingePair, ProductDistribution, Sign, StochasticObjective, MAX_FELDMAN_DIM};
use crate::optimizers::{sgd_summary, RunConfig};
use crate::regularizers::Regularizer;
use crate::regularizers::F_TOLERANCE;
use crate::rng;

const PURPOSE_PATTERN: u64 = 1;
const PURPOSE_PROBE: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoucParams {
    pub steps: usize,
    pub constant: f64,
    pub eta: f64,
    pub k: usize,
    pub dim: usize,
    /// Monte Carlo trials of the cube probe.
    pub trials: usize,
    pub subset_samples: usize,
    pub seed: u64,
    pub cutoff_divisor: usize,
}

impl NoucParams {
    /// `η = 1/√T`, `d = 10⁵·T`, 256 sampled class members.
    pub fn new(steps: usize, constant: f64, k: usize, trials: usize, seed: u64) -> Self {
        NoucParams {
            steps,
            constant,
            eta: 1.0 / (steps as f64).sqrt(),
            k,
            dim: 100_000 * steps,
            trials,
            subset_samples: 256,
            seed,
            cutoff_divisor: 2,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_subset_samples(mut self, n: usize) -> Self {
        self.subset_samples = n;
        self
    }

    pub fn rho(&self) -> f64 {
        1.0 / self.constant
    }

    pub fn hinge_c(&self) -> f64 {
        1.0 / (2.0 * self.k as f64 * (self.steps * self.steps) as f64)
    }

    /// Lipschitz factor `g = 24k/(ηρ√T)` of the cube embedding.
    pub fn embedding_lipschitz(&self) -> f64 {
        24.0 * self.k as f64 / (self.eta * self.rho() * (self.steps as f64).sqrt())
    }

    /// The theorem's `(m, ε) = (2T, 10⁻⁴·√T·η/C)`.
    pub fn theorem_target(&self) -> (usize, f64) {
        (2 * self.steps, 1e-4 * (self.steps as f64).sqrt() * self.eta / self.constant)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.steps as f64;
        if self.steps < 2 {
            return Err(Error::Config(format!("need T ≥ 2, got {}", self.steps)));
        }
        if !(self.constant > 2.0 && self.constant.is_finite()) {
            return Err(Error::Config(format!("need C > 2, got {}", self.constant)));
        }
        if !(self.eta > 1.0 / (t * t) && self.eta < self.constant / t.sqrt()) {
            return Err(Error::Config(format!(
                "step size {} outside (1/T², C/√T) = ({}, {})",
                self.eta,
                1.0 / (t * t),
                self.constant / t.sqrt()
            )));
        }
        if self.k == 0 || !self.dim.is_multiple_of(2) || self.k > self.dim / 2 {
            return Err(Error::Config(format!("need 1 ≤ k ≤ d/2 with d even, got k={}, d={}", self.k, self.dim)));
        }
        if self.trials == 0 || self.subset_samples == 0 {
            return Err(Error::Config("need at least one probe trial and one sampled member".into()));
        }
        if self.cutoff_divisor == 0 {
            return Err(Error::Config("cutoff divisor must be positive".into()));
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<ProductDistribution> {
        ProductDistribution::averaged(self.k, self.dim, HingePair::new(self.hinge_c(), self.rho())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoucReport {
    pub params: NoucParams,
    pub regularizer: String,
    pub regime_checks: Vec<RegimeCheck>,
    pub good: usize,
    pub members_sampled: usize,
    pub projection_events: usize,
    /// `max |F_S(w_S′) − F_S(w_S)|` and `max |F_S′(w_S′) − F_S(w_S)|`.
    pub max_loss_gap: f64,
    pub max_own_loss_gap: f64,
    pub loss_equal: bool,
    /// Largest deviation between SGD outputs and the closed-form flip map.
    pub closed_form_deviation: f64,
    /// Largest distance of an embedded point from its cube vertex.
    pub cube_deviation: f64,
    pub embedding_lipschitz: f64,
    /// `max ‖u(w) − u(w′)‖ / ‖w − w′‖` over sampled pairs.
    pub max_embedding_ratio: f64,
    pub lipschitz_ok: bool,
    /// Fraction of sampled members with `r(w_S′) ≤ r(w_S)`.
    pub k_density: f64,
    /// `k_density ≥ ½`, the class-size condition the complexity argument uses.
    pub large_class: bool,
    pub probe: Option<ComplexityReport>,
    pub diagnostics: Vec<String>,
    pub epsilon_cube: Option<f64>,
    pub epsilon_pulled_back: Option<f64>,
    pub theorem_m: usize,
    pub theorem_epsilon: f64,
}

impl NoucReport {
    /// Loss equality, embedding and, when the probe ran, probability at
    /// least ½ − CI.
    pub fn passed(&self) -> bool {
        let probe_ok = self.probe.as_ref().is_none_or(|p| p.meets(0.5, 1.0) && p.zero_empirical);
        self.loss_equal && self.lipschitz_ok && self.cube_deviation <= 1e-9 && probe_ok
    }
}

/// The pair values a flip-class member takes at good position `g`.
struct GoodPair {
    index: usize,
    plus: Vec2,
    minus: Vec2,
}

fn good_pairs(c: &CoupledSample, dist: &ProductDistribution, eta: f64) -> Vec<GoodPair> {
    let steps = c.steps();
    c.good
        .iter()
        .map(|&(t, l)| GoodPair {
            index: c.s[t - 1].terms[l].1,
            plus: averaged_pair_value(dist, eta, steps, t, Sign::Plus),
            minus: averaged_pair_value(dist, eta, steps, t, Sign::Minus),
        })
        .collect()
}

/// `w_S` with every good pair replaced by its value under `pattern`.
fn flip_map(w_s: &VecD, pairs: &[GoodPair], pattern: impl Fn(usize) -> bool) -> VecD {
    let mut out = w_s.clone();
    for (g, p) in pairs.iter().enumerate() {
        let v = if pattern(g) { p.plus } else { p.minus };
        out.pair_write(p.index, v).expect("good pair index lies inside the dimension");
    }
    out
}

/// `u(w)_g = (2⟨w(i_g) − m_g, a_g − b_g⟩/‖a_g − b_g‖²)/√n`, sending the
/// `+1` value `a_g` to `1/√n` and the `−1` value `b_g` to `−1/√n`.
fn embed(w: &VecD, pairs: &[GoodPair]) -> Result<Vec<f64>> {
    let scale = 1.0 / (pairs.len() as f64).sqrt();
    pairs
        .iter()
        .map(|p| {
            let diff = sub2(p.plus, p.minus);
            let mid = [0.5 * (p.plus[0] + p.minus[0]), 0.5 * (p.plus[1] + p.minus[1])];
            let x = sub2(w.pair_view(p.index)?, mid);
            Ok(2.0 * dot2(x, diff) / dot2(diff, diff) * scale)
        })
        .collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn experiment_nouc(p: &NoucParams, r: &Regularizer) -> Result<NoucReport> {
    p.validate()?;
    let dist = p.distribution()?;
    let cfg = RunConfig::new(p.eta, p.steps, 1.0)?;
    let coupled = draw_coupled_with(p.steps, &dist, p.cutoff_divisor, &mut rng::master(p.seed))?;
    let run_s = sgd_summary(&dist, &coupled.s, &cfg)?;
    let w_s = run_s.output;
    let f_ref = dist.empirical_value(&w_s, &coupled.s);
    let pairs = good_pairs(&coupled, &dist, p.eta);
    let n = pairs.len();
    let mut diagnostics = Vec::new();

    let mut projections = run_s.projection_events;
    let (mut loss_gap, mut own_gap, mut cf_dev, mut cube_dev) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let s_pattern: Vec<bool> = (0..n)
        .map(|g| {
            let (t, l) = coupled.good[g];
            coupled.s[t - 1].terms[l].0 == Sign::Plus
        })
        .collect();
    let mut members: Vec<(VecD, Vec<f64>)> = vec![(w_s.clone(), embed(&w_s, &pairs)?)];
    let mut in_k = 0usize;
    let r_ref = r.value_of(&flip_map(&w_s, &pairs, |g| s_pattern[g]));
    for j in 0..p.subset_samples {
        let mut prng = rng::substream(p.seed, j as u64, PURPOSE_PATTERN);
        let pattern: Vec<bool> = (0..n).map(|_| prng.random::<bool>()).collect();
        let s_prime = coupled.with_good_pattern(&pattern);
        let run = sgd_summary(&dist, &s_prime, &cfg)?;
        projections += run.projection_events;
        let w = run.output;
        loss_gap = loss_gap.max((dist.empirical_value(&w, &coupled.s) - f_ref).abs());
        own_gap = own_gap.max((dist.empirical_value(&w, &s_prime) - f_ref).abs());
        cf_dev = cf_dev.max(w.dist(&flip_map(&w_s, &pairs, |g| pattern[g])));
        let u = embed(&w, &pairs)?;
        let scale = 1.0 / (n as f64).sqrt();
        for (x, &plus) in u.iter().zip(&pattern) {
            cube_dev = cube_dev.max((x - if plus { scale } else { -scale }).abs());
        }
        if r.value_of(&w) <= r_ref + F_TOLERANCE {
            in_k += 1;
        }
        members.push((w, u));
    }

    let g = p.embedding_lipschitz();
    let mut max_ratio = 0.0f64;
    let mut lipschitz_ok = true;
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            let du = euclid(&members[a].1, &members[b].1);
            let dw = members[a].0.dist(&members[b].0);
            if dw > 0.0 {
                max_ratio = max_ratio.max(du / dw);
            }
            lipschitz_ok &= du <= g * dw + 1e-12;
        }
    }

    let probe = if n < 6 {
        diagnostics.push(format!("probe skipped: |S_g| = {n} < 6 gives m = |S_g|/6 < 1"));
        None
    } else if n > MAX_FELDMAN_DIM {
        diagnostics.push(format!("probe skipped: |S_g| = {n} exceeds the cube dimension limit {MAX_FELDMAN_DIM}"));
        None
    } else {
        let k_set = ImplicitSet::new(n, |bits: u64| {
            r.value_of(&flip_map(&w_s, &pairs, |g| bits >> g & 1 == 1)) <= r_ref + F_TOLERANCE
        });
        let exact = n <= super::complexity::EXACT_MAX_DIM;
        let seed = rng::substream(p.seed, 0, PURPOSE_PROBE).random::<u64>();
        Some(feldman_complexity_probe(&k_set, n / 6, p.trials, seed, exact)?)
    };
    let epsilon_cube = probe.as_ref().and_then(|x| x.epsilon);
    let (theorem_m, theorem_epsilon) = p.theorem_target();
    diagnostics.push(format!(
        "desk scale: d = {} kept exactly with sparse iterates; cube probe at d = |S_g| = {n} with m = ⌊|S_g|/6⌋",
        p.dim
    ));

    let t = p.steps as f64;
    let rho = p.rho();
    let regime_checks = vec![
        RegimeCheck::new("1/T² < η < C/√T", true),
        RegimeCheck::new("C > 2", true),
        RegimeCheck::new("η²Tρ²/k ≤ 1 (no projection)", p.eta * p.eta * t * rho * rho / p.k as f64 <= 1.0),
        RegimeCheck::new(
            "η'ρ ≥ 10c/9 at every good step (flat anchors)",
            p.eta * rho / (p.cutoff_divisor as f64 * p.k as f64) >= 10.0 * p.hinge_c() / 9.0,
        ),
    ];

    Ok(NoucReport {
        params: p.clone(),
        regularizer: r.name.clone(),
        regime_checks,
        good: n,
        members_sampled: p.subset_samples,
        projection_events: projections,
        max_loss_gap: loss_gap,
        max_own_loss_gap: own_gap,
        loss_equal: loss_gap <= F_TOLERANCE && own_gap <= F_TOLERANCE,
        closed_form_deviation: cf_dev,
        cube_deviation: cube_dev,
        embedding_lipschitz: g,
        max_embedding_ratio: max_ratio,
        lipschitz_ok,
        k_density: in_k as f64 / p.subset_samples as f64,
        large_class: 2 * in_k >= p.subset_samples,
        epsilon_cube,
        epsilon_pulled_back: epsilon_cube.map(|e| e / g),
        probe,
        diagnostics,
        theorem_m,
        theorem_epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_class_is_consistent() {
        let p = NoucParams::new(8, 3.0, 8, 400, 3).with_subset_samples(32);
        let rep = experiment_nouc(&p, &Regularizer::sq_norm()).unwrap();
        assert!(rep.good >= 12, "{}", rep.good);
        assert!(rep.loss_equal, "{} {}", rep.max_loss_gap, rep.max_own_loss_gap);
        assert!(rep.closed_form_deviation <= 1e-12);
        assert!(rep.cube_deviation <= 1e-9);
        assert!(rep.lipschitz_ok);
        assert_eq!(rep.projection_events, 0);
        assert!(rep.probe.is_some());
        assert!(rep.passed());
    }

    #[test]
    fn tiny_class_skips_probe() {
        let p = NoucParams::new(4, 3.0, 2, 10, 1).with_subset_samples(4).with_dim(2_000);
        let rep = experiment_nouc(&p, &Regularizer::sq_norm()).unwrap();
        assert!(rep.good < 6);
        assert!(rep.probe.is_none());
        assert!(rep.diagnostics[0].contains("skipped"));
    }

    #[test]
    fn step_gate() {
        let p = NoucParams::new(8, 3.0, 8, 10, 1);
        let at_edge = p.clone().with_eta(3.0 / 8f64.sqrt());
        assert!(matches!(experiment_nouc(&at_edge, &Regularizer::sq_norm()), Err(Error::Config(_))));
    }

    #[test]
    fn embedding_hits_vertices() {
        let p = NoucParams::new(8, 3.0, 4, 10, 2).with_dim(4_000);
        let dist = p.distribution().unwrap();
        let c = draw_coupled_with(8, &dist, 2, &mut rng::master(2)).unwrap();
        let pairs = good_pairs(&c, &dist, p.eta);
        let w = flip_map(&VecD::zeros(p.dim), &pairs, |g| g % 3 == 0);
        let u = embed(&w, &pairs).unwrap();
        let s = 1.0 / (pairs.len() as f64).sqrt();
        for (g, x) in u.iter().enumerate() {
            let want = if g % 3 == 0 { s } else { -s };
            assert!((x - want).abs() < 1e-12);
        }
    }
}
