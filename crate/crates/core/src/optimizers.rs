//! Fixed-step projected GD and SGD.
//!
//! `w⁽¹⁾ = 0`, `w⁽ᵗ⁺¹⁾ = Π_W(w⁽ᵗ⁾ − η ∇f(w⁽ᵗ⁾; z_t))`, and the averaged output is
//! `(1/T) Σ_{t=1..T} w⁽ᵗ⁾`, summed sequentially in `t`.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{project_ball_in_place, Iterate};
use crate::objectives::{Objective, PointMass, PopulationRisk, SampleSource, StochasticObjective};
use crate::rng;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Ball { radius: f64 },
    Unbounded,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    #[default]
    Average,
    Last,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub eta: f64,
    pub steps: usize,
    pub domain: Domain,
    pub output_mode: OutputMode,
    pub seed: u64,
    pub record_grads: bool,
}

impl RunConfig {
    pub fn new(eta: f64, steps: usize, radius: f64) -> Result<Self> {
        let cfg = RunConfig {
            eta,
            steps,
            domain: Domain::Ball { radius },
            output_mode: OutputMode::Average,
            seed: 0,
            record_grads: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn unbounded(eta: f64, steps: usize) -> Result<Self> {
        let cfg = RunConfig { domain: Domain::Unbounded, ..RunConfig::new(eta, steps, 1.0)? };
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_output(mut self, mode: OutputMode) -> Self {
        self.output_mode = mode;
        self
    }

    pub fn with_grads(mut self, record: bool) -> Self {
        self.record_grads = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {}", self.eta)));
        }
        if self.steps == 0 {
            return Err(invalid("iteration count must be at least 1"));
        }
        if let Domain::Ball { radius } = self.domain {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(invalid(format!("ball radius must be positive, got {radius}")));
            }
        }
        Ok(())
    }

    pub fn radius(&self) -> Option<f64> {
        match self.domain {
            Domain::Ball { radius } => Some(radius),
            Domain::Unbounded => None,
        }
    }
}

/// A full run: iterates `w⁽¹⁾..w⁽ᵀ⁾`, the next point `w⁽ᵀ⁺¹⁾`, and the output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace<P, Z> {
    pub config: RunConfig,
    pub iterates: Vec<P>,
    pub next: P,
    pub output: P,
    pub grads: Option<Vec<P>>,
    pub samples: Vec<Z>,
    pub projection_events: usize,
}

/// What a run leaves behind when the iterates are not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary<P> {
    pub output: P,
    pub last: P,
    pub next: P,
    pub projection_events: usize,
    pub max_norm: f64,
}

impl<P: Iterate, Z> Trace<P, Z> {
    /// Averages the stored iterates again, in the same order.
    pub fn reaverage(&self) -> P {
        average(&self.iterates)
    }

    pub fn last(&self) -> &P {
        self.iterates.last().expect("a trace holds at least one iterate")
    }
}

fn average<P: Iterate>(iterates: &[P]) -> P {
    let mut sum = P::zeros(iterates[0].dim());
    for w in iterates {
        sum.add_scaled(1.0, w);
    }
    sum.scale(1.0 / iterates.len() as f64);
    sum
}

/// The shared recurrence; `visit(t, w⁽ᵗ⁾, ∇f(w⁽ᵗ⁾; z_t))` sees every iterate.
fn drive<O, V>(obj: &O, samples: &[O::Sample], cfg: &RunConfig, mut visit: V) -> Result<RunSummary<O::Point>>
where
    O: StochasticObjective + ?Sized,
    V: FnMut(usize, &O::Point, &O::Point),
{
    cfg.validate()?;
    if samples.len() != cfg.steps {
        return Err(invalid(format!("sample has {} entries, run needs T={}", samples.len(), cfg.steps)));
    }
    for z in samples {
        obj.validate_sample(z)?;
    }
    let radius = cfg.radius();
    let mut w = O::Point::zeros(obj.dim());
    let mut sum = O::Point::zeros(obj.dim());
    let mut projections = 0;
    let mut max_norm: f64 = 0.0;
    let mut last = w.clone();
    for (idx, z) in samples.iter().enumerate() {
        let t = idx + 1;
        let g = obj.grad(&w, z);
        if !g.is_finite() {
            return Err(Error::NonFinite { step: t, iterate: format!("{:?}", w) });
        }
        visit(t, &w, &g);
        sum.add_scaled(1.0, &w);
        max_norm = max_norm.max(w.norm());
        if t == cfg.steps {
            last = w.clone();
        }
        w.add_scaled(-cfg.eta, &g);
        if let Some(r) = radius {
            if project_ball_in_place(&mut w, r) {
                projections += 1;
            }
        }
        if !w.is_finite() {
            return Err(Error::NonFinite { step: t + 1, iterate: format!("{:?}", w) });
        }
    }
    let output = match cfg.output_mode {
        OutputMode::Average => {
            sum.scale(1.0 / cfg.steps as f64);
            sum
        }
        OutputMode::Last => last.clone(),
    };
    Ok(RunSummary { output, last, next: w, projection_events: projections, max_norm })
}

/// SGD over a fixed ordered sample, recording the trace.
pub fn run_sgd_on_sample<O>(obj: &O, sample: &[O::Sample], cfg: &RunConfig) -> Result<Trace<O::Point, O::Sample>>
where
    O: StochasticObjective + ?Sized,
{
    let mut iterates = Vec::with_capacity(cfg.steps);
    let mut grads = cfg.record_grads.then(|| Vec::with_capacity(cfg.steps));
    let summary = drive(obj, sample, cfg, |_, w, g| {
        iterates.push(w.clone());
        if let Some(gs) = grads.as_mut() {
            gs.push(g.clone());
        }
    })?;
    Ok(Trace {
        config: *cfg,
        iterates,
        next: summary.next,
        output: summary.output,
        grads,
        samples: sample.to_vec(),
        projection_events: summary.projection_events,
    })
}

/// Same recurrence without storing iterates.
pub fn sgd_summary<O>(obj: &O, sample: &[O::Sample], cfg: &RunConfig) -> Result<RunSummary<O::Point>>
where
    O: StochasticObjective + ?Sized,
{
    drive(obj, sample, cfg, |_, _, _| {})
}

pub fn draw_sample<D: SampleSource, R: Rng + ?Sized>(dist: &D, steps: usize, rng: &mut R) -> Vec<D::Sample> {
    (0..steps).map(|_| dist.sample(rng)).collect()
}

/// Draws `T` samples from the stream seeded by `cfg.seed`, then runs SGD.
pub fn run_sgd<D: SampleSource>(dist: &D, cfg: &RunConfig) -> Result<Trace<D::Point, D::Sample>> {
    let sample = draw_sample(dist, cfg.steps, &mut rng::master(cfg.seed));
    run_sgd_on_sample(dist, &sample, cfg)
}

/// Full-gradient descent on a deterministic objective.
pub fn run_gd<O: Objective>(obj: &O, cfg: &RunConfig) -> Result<Trace<O::Point, ()>> {
    let sample = vec![(); cfg.steps];
    run_sgd_on_sample(&PointMass(obj), &sample, cfg)
}

pub fn gd_summary<O: Objective>(obj: &O, cfg: &RunConfig) -> Result<RunSummary<O::Point>> {
    let sample = vec![(); cfg.steps];
    sgd_summary(&PointMass(obj), &sample, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub trials: usize,
    pub steps: usize,
    pub mean_excess: f64,
    pub ci_half_width: f64,
    pub min_excess: f64,
    /// `Bρ/√T`
    pub bound: f64,
    /// The 95% lower confidence limit exceeds the bound.
    pub violation: bool,
}

/// Monte Carlo estimate of `E[F(w_S)] − F(w*)` over independent samples,
/// compared with `Bρ/√T`.
pub fn sgd_regret_check<D>(
    dist: &D,
    cfg: &RunConfig,
    w_star: &D::Point,
    b: f64,
    rho: f64,
    trials: usize,
) -> Result<RegretReport>
where
    D: SampleSource + PopulationRisk,
{
    cfg.validate()?;
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let f_star = dist.population_value(w_star);
    let excess: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let sample = draw_sample(dist, cfg.steps, &mut rng::trial(cfg.seed, i as u64));
            sgd_summary(dist, &sample, cfg).map(|s| dist.population_value(&s.output) - f_star)
        })
        .collect::<Result<_>>()?;
    let (mean, half) = stats::mean_ci(&excess, 0.95);
    let bound = b * rho / (cfg.steps as f64).sqrt();
    Ok(RegretReport {
        trials,
        steps: cfg.steps,
        mean_excess: mean,
        ci_half_width: half,
        min_excess: excess.iter().copied().fold(f64::INFINITY, f64::min),
        bound,
        violation: mean - half > bound,
    })
}

impl<P: Iterate + Serialize, Z: Serialize> Trace<P, Z> {
    /// One row per stored coordinate: `t,coord,value` for sparse iterates,
    /// `t,x0,x1,...` for dense ones.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let dim = self.iterates.first().map_or(0, |w| w.dim());
        if dim <= crate::geometry::SPARSE_THRESHOLD {
            out.push('t');
            for j in 0..dim {
                let _ = write!(out, ",x{j}");
            }
            out.push('\n');
            for (idx, w) in self.iterates.iter().enumerate() {
                let _ = write!(out, "{}", idx + 1);
                for j in 0..dim {
                    let _ = write!(out, ",{:e}", w.get(j));
                }
                out.push('\n');
            }
        } else {
            out.push_str("t,coord,value\n");
            for (idx, w) in self.iterates.iter().enumerate() {
                w.for_each_nonzero(|j, v| {
                    let _ = writeln!(out, "{},{},{:e}", idx + 1, j, v);
                });
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "samples": self.samples,
            "output": self.output,
            "projection_events": self.projection_events,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Vec2, VecD};
    use crate::objectives::{HingeDistribution, HingePair, ProductDistribution, ProductInstance, Sign};

    struct Zero;
    impl Objective for Zero {
        type Point = Vec2;
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, _: &Vec2) -> f64 {
            0.0
        }
        fn grad(&self, _: &Vec2) -> Vec2 {
            [0.0, 0.0]
        }
    }

    struct Tilt;
    impl Objective for Tilt {
        type Point = Vec2;
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, w: &Vec2) -> f64 {
            -10.0 * w[0]
        }
        fn grad(&self, _: &Vec2) -> Vec2 {
            [-10.0, 0.0]
        }
    }

    struct Blowup;
    impl Objective for Blowup {
        type Point = Vec2;
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, _: &Vec2) -> f64 {
            0.0
        }
        fn grad(&self, w: &Vec2) -> Vec2 {
            if w[0] > 0.5 {
                [f64::NAN, 0.0]
            } else {
                [-1.0, 0.0]
            }
        }
    }

    #[test]
    fn zero_objective_stays_at_origin() {
        let tr = run_gd(&Zero, &RunConfig::new(0.3, 5, 1.0).unwrap()).unwrap();
        assert!(tr.iterates.iter().all(|w| *w == [0.0, 0.0]));
        assert_eq!(tr.output, [0.0, 0.0]);
        assert_eq!(tr.iterates.len(), 5);
    }

    #[test]
    fn projection_saturates() {
        let tr = run_gd(&Tilt, &RunConfig::new(0.5, 6, 1.0).unwrap()).unwrap();
        assert_eq!(tr.iterates[0], [0.0, 0.0]);
        for w in &tr.iterates[1..] {
            assert_eq!(w.norm(), 1.0);
        }
        assert_eq!(tr.projection_events, 6);
    }

    #[test]
    fn non_finite_gradient_aborts_with_context() {
        let err = run_gd(&Blowup, &RunConfig::new(0.3, 10, 5.0).unwrap()).unwrap_err();
        match err {
            Error::NonFinite { step, iterate } => {
                assert_eq!(step, 3);
                assert!(iterate.contains("0.6"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn averaging_excludes_the_final_step() {
        let cfg = RunConfig::unbounded(1.0, 3).unwrap();
        let tr = run_gd(&Tilt, &cfg).unwrap();
        // iterates 0, 10, 20; next is 30
        assert_eq!(tr.output, [10.0, 0.0]);
        assert_eq!(tr.next, [30.0, 0.0]);
        assert_eq!(tr.reaverage(), tr.output);
        let last = run_gd(&Tilt, &cfg.with_output(OutputMode::Last)).unwrap();
        assert_eq!(last.output, [20.0, 0.0]);
    }

    #[test]
    fn paired_steps_from_origin() {
        let h = HingePair::new(1e-4, 1.0).unwrap();
        let dist = ProductDistribution::paired(4, h).unwrap();
        let sample = vec![
            ProductInstance::single(Sign::Plus, 3),
            ProductInstance::single(Sign::Minus, 7),
            ProductInstance::single(Sign::Minus, 1),
            ProductInstance::single(Sign::Plus, 20),
        ];
        let eta = 0.1;
        let tr = run_sgd_on_sample(&dist, &sample, &RunConfig::new(eta, 4, 1.0).unwrap()).unwrap();
        for (t, z) in sample.iter().enumerate().take(3) {
            let (s, i) = z.terms[0];
            let expect = h.step_point(eta, s);
            assert_eq!(tr.iterates[t + 1].pair_view(i).unwrap(), expect);
        }
        assert_eq!(tr.next.pair_view(20).unwrap(), h.step_point(eta, Sign::Plus));
    }

    #[test]
    fn sgd_is_seed_deterministic() {
        let dist = HingeDistribution { hinge: HingePair::new(0.01, 1.0).unwrap() };
        let cfg = RunConfig::new(0.1, 50, 1.0).unwrap().with_seed(17);
        let a = run_sgd(&dist, &cfg).unwrap();
        let b = run_sgd(&dist, &cfg).unwrap();
        assert_eq!(a.iterates, b.iterates);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples.len(), 50);
    }

    #[test]
    fn csv_and_json_export() {
        let tr = run_gd(&Tilt, &RunConfig::new(0.05, 3, 1.0).unwrap()).unwrap();
        let csv = tr.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("t,x0,x1\n"));
        let json = tr.to_json();
        assert_eq!(json["config"]["steps"], 3);

        let dist = ProductDistribution::paired(40, HingePair::new(1e-4, 1.0).unwrap()).unwrap();
        let sample = vec![ProductInstance::single(Sign::Plus, 9), ProductInstance::single(Sign::Minus, 2)];
        let tr = run_sgd_on_sample(&dist, &sample, &RunConfig::new(0.1, 2, 1.0).unwrap()).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,coord,value\n"));
        assert_eq!(csv.lines().count(), 1 + 2);
        let _: &VecD = &tr.output;
    }

    #[test]
    fn regret_trivial_cases() {
        let dist = PointMass(Zero);
        let cfg = RunConfig::new(0.1, 1, 1.0).unwrap();
        let rep = sgd_regret_check(&dist, &cfg, &[0.0, 0.0], 1.0, 1.0, 4).unwrap();
        assert_eq!(rep.mean_excess, 0.0);
        assert!(!rep.violation);
    }
}
