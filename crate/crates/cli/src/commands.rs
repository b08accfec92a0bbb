//! One function per subcommand. Each checks its regime before computing,
//! writes its artifacts through [`Output`] and returns a [`CommandReport`].

use std::fmt::Write;

use biaslab_core::experiments::complexity::EXACT_MAX_DIM;
use biaslab_core::experiments::nonconvex::{solve_beta, trials_csv};
use biaslab_core::experiments::{
    experiment_nonconvex, experiment_nouc, experiment_sgdr, feldman_complexity_probe, FullCube, NonconvexParams,
    NoucParams, SgdrParams, SgdrReport,
};
use biaslab_core::objectives::{Objective, SegmentQuadratic, MAX_FELDMAN_DIM};
use biaslab_core::optimizers::{run_gd, RunConfig};
use biaslab_core::regularizers::{run_gdr, run_warmup, Regularizer};
use biaslab_core::stats::{be_empirical_grid, berry_esseen_bound, BeParams};
use biaslab_core::trajectory::{closed_form_iterate, detect_phases};
use biaslab_core::{Error, RegimeCheck, Vec2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{Format, Output};
use crate::svg::{num, Plot};
use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CommandReport {
    pub subcommand: String,
    pub params: Value,
    pub seed: Option<u64>,
    pub regime_checks: Vec<RegimeCheck>,
    pub checks: Vec<Check>,
    pub data: Value,
}

impl CommandReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "params": self.params,
            "regime_checks": self.regime_checks,
            "passed": self.passed(),
            "failures": self.failures(),
            "checks": self.checks,
            "report": self.data,
        })
    }
}

fn config_error(e: Error) -> Failure {
    match e {
        Error::Config(m) => Failure::Config(m),
        other => Failure::Config(other.to_string()),
    }
}

fn runtime_error(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Fails with a configuration error unless every check passed.
fn gate(checks: &[RegimeCheck]) -> Result<(), Failure> {
    match checks.iter().find(|c| !c.pass) {
        Some(c) => Err(Failure::Config(format!("regime violated: {}", c.condition))),
        None => Ok(()),
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn require_seed(seed: Option<u64>, subcommand: &str) -> Result<u64, Failure> {
    seed.ok_or_else(|| Failure::Config(format!("{subcommand} is stochastic and needs --seed (or seed in the config)")))
}

fn regularizer(name: &str, lambda: Option<f64>) -> Result<Regularizer, Failure> {
    let r = Regularizer::by_name(name).map_err(config_error)?;
    Ok(match lambda {
        Some(l) => r.with_lambda(Some(l)),
        None => r,
    })
}

fn tag(b: f64) -> String {
    format!("b{}", num(b))
}

// ---------------------------------------------------------------- field

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldParams {
    pub b: Vec<f64>,
    pub theta: f64,
    pub grid: usize,
    pub half_width: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams { b: vec![0.0, 0.05, 0.1, 0.25], theta: 1.0, grid: 25, half_width: 1.2 }
    }
}

/// Grid coordinates `−h + i·2h/(n−1)`.
fn axis(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| -h + 2.0 * h * i as f64 / (n - 1) as f64).collect()
}

pub fn cmd_field(p: &FieldParams, out: &mut Output) -> Result<CommandReport, Failure> {
    let regime = vec![
        RegimeCheck::new("θ > 0", p.theta > 0.0 && p.theta.is_finite()),
        RegimeCheck::new("b ≥ 0 for every panel", !p.b.is_empty() && p.b.iter().all(|b| *b >= 0.0 && b.is_finite())),
        RegimeCheck::new("grid ≥ 2", p.grid >= 2),
        RegimeCheck::new("half width > 0", p.half_width > 0.0 && p.half_width.is_finite()),
    ];
    gate(&regime)?;
    let xs = axis(p.grid, p.half_width);
    let mut panels = Vec::new();
    let mut checks = Vec::new();
    for &b in &p.b {
        let obj = SegmentQuadratic::raw(b, p.theta).map_err(config_error)?;
        let mut csv = String::from("x,y,grad_x,grad_y\n");
        let mut rows = 0;
        let mut grads = Vec::with_capacity(p.grid * p.grid);
        for &y in &xs {
            for &x in &xs {
                let g = obj.grad(&[x, y]);
                let _ = writeln!(csv, "{x},{y},{},{}", g[0], g[1]);
                grads.push(([x, y], g));
                rows += 1;
            }
        }
        // below the segment on the vertical axis the projection is ξ₀ = (0, θ)
        let probe: Vec2 = [0.0, 0.5 * p.theta];
        let g = obj.grad(&probe);
        let expect = obj.metric.apply([probe[0], probe[1] - p.theta]);
        let dev = (g[0] - expect[0]).abs().max((g[1] - expect[1]).abs());
        checks.push(Check::new(
            format!("{}: ∇f(0, θ/2) = Σ((0, θ/2) − (0, θ))", tag(b)),
            dev <= 1e-15,
            format!("{dev:e}"),
        ));
        checks.push(Check::new(format!("{}: CSV rows = grid²", tag(b)), rows == p.grid * p.grid, rows.to_string()));

        let name = format!("field_{}", tag(b));
        out.write(&format!("{name}.csv"), Format::Csv, &csv)?;
        out.write(&format!("{name}.svg"), Format::Svg, &field_svg(p, b, &grads))?;
        let max = grads.iter().map(|(_, g)| g[0].hypot(g[1])).fold(0.0, f64::max);
        panels.push(json!({"b": b, "rows": rows, "max_gradient_norm": max}));
    }
    Ok(CommandReport {
        subcommand: "field".into(),
        params: to_value(p),
        seed: None,
        regime_checks: regime,
        checks,
        data: json!({ "panels": panels }),
    })
}

fn field_svg(p: &FieldParams, b: f64, grads: &[(Vec2, Vec2)]) -> String {
    let h = p.half_width;
    let mut plot = Plot::new((-h, h), (-h, h), 520.0);
    plot.axes();
    plot.title(&format!("−∇f, b = {}, θ = {}", num(b), num(p.theta)));
    let cell = 2.0 * h / (p.grid - 1) as f64;
    let max = grads.iter().map(|(_, g)| g[0].hypot(g[1])).fold(0.0, f64::max);
    for (w, g) in grads {
        let n = g[0].hypot(g[1]);
        if n == 0.0 || max == 0.0 {
            continue;
        }
        // square-root scaling keeps the weak arrows near the segment visible
        let len = 0.9 * cell * (n / max).sqrt();
        plot.arrow(*w, [-g[0] / n * len, -g[1] / n * len], "#1f4e9c");
    }
    plot.line([0.0, p.theta], [b, p.theta], "#c0392b", 3.0);
    plot.finish()
}

// ----------------------------------------------------------- trajectory

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryParams {
    pub b: Vec<f64>,
    pub theta: f64,
    pub eta: f64,
    pub steps: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams { b: vec![0.0, 0.05, 0.1, 0.25], theta: 1.0, eta: 0.2, steps: 10_000 }
    }
}

/// Iterates drawn in the figure; later ones sit on the limit.
const DRAWN_ITERATES: usize = 200;

pub fn cmd_trajectory(p: &TrajectoryParams, out: &mut Output) -> Result<CommandReport, Failure> {
    let regime = vec![
        RegimeCheck::new("0 < η < 1/3", p.eta > 0.0 && p.eta < 1.0 / 3.0),
        RegimeCheck::new("θ > 0", p.theta > 0.0 && p.theta.is_finite()),
        RegimeCheck::new("b ≥ 0 for every panel", !p.b.is_empty() && p.b.iter().all(|b| *b >= 0.0 && b.is_finite())),
        RegimeCheck::new("T ≥ 1", p.steps >= 1),
    ];
    gate(&regime)?;
    let mut checks = Vec::new();
    let mut panels = Vec::new();
    let mut finals: Vec<(f64, Vec2)> = Vec::new();
    for &b in &p.b {
        let phases = detect_phases(b, p.theta, p.eta).map_err(runtime_error)?;
        let obj = SegmentQuadratic::raw(b, p.theta).map_err(config_error)?;
        let trace = run_gd(&obj, &RunConfig::new(p.eta, p.steps, 5.0).map_err(config_error)?).map_err(runtime_error)?;
        let mut csv = String::from("t,w1,w2,oracle_w1,oracle_w2\n");
        let mut oracle = Vec::with_capacity(trace.iterates.len());
        let mut gap: f64 = 0.0;
        for (i, w) in trace.iterates.iter().enumerate() {
            let o = closed_form_iterate(i + 1, &phases).map_err(runtime_error)?;
            gap = gap.max((w[0] - o[0]).hypot(w[1] - o[1]));
            let _ = writeln!(csv, "{},{},{},{},{}", i + 1, w[0], w[1], o[0], o[1]);
            oracle.push(o);
        }
        checks.push(Check::new(format!("{}: simulation matches closed form", tag(b)), gap <= 1e-9, format!("{gap:e}")));
        let name = format!("trajectory_{}", tag(b));
        out.write(&format!("{name}.csv"), Format::Csv, &csv)?;
        let svg = trajectory_svg(p, b, &trace.iterates, &oracle, &phases, trace.output);
        out.write(&format!("{name}.svg"), Format::Svg, &svg)?;
        finals.push((b, trace.output));
        panels.push(json!({
            "b": b,
            "t0": phases.t0,
            "t1": phases.t1,
            "w_t0": phases.w_t0,
            "limit": phases.limit(),
            "averaged": trace.output,
            "last": trace.last(),
            "max_oracle_gap": gap,
            "projection_events": trace.projection_events,
        }));
    }

    let mut positive: Vec<(f64, Vec2)> = finals.iter().copied().filter(|(b, _)| *b > 0.0).collect();
    positive.sort_by(|x, y| x.0.total_cmp(&y.0));
    let increasing = positive.windows(2).all(|w| w[1].1[0] > w[0].1[0]);
    checks.push(Check::new(
        "averaged w₁ strictly increasing in b > 0",
        increasing,
        positive.iter().map(|(b, w)| format!("{}→{}", num(*b), num(w[0]))).collect::<Vec<_>>().join(" "),
    ));
    if let Some((_, w)) = finals.iter().find(|(b, _)| *b == 0.0) {
        let d = w[0].hypot(w[1] - p.theta);
        checks.push(Check::new("b = 0 output within 1e-3 of (0, θ)", d <= 1e-3, format!("{d:e}")));
    }
    Ok(CommandReport {
        subcommand: "trajectory".into(),
        params: to_value(p),
        seed: None,
        regime_checks: regime,
        checks,
        data: json!({ "panels": panels }),
    })
}

fn trajectory_svg(
    p: &TrajectoryParams,
    b: f64,
    sim: &[Vec2],
    oracle: &[Vec2],
    phases: &biaslab_core::trajectory::PhaseTimes,
    averaged: Vec2,
) -> String {
    let hi = 1.2 * p.theta.max(b);
    let mut plot = Plot::new((-0.1 * hi, hi), (-0.1 * hi, hi), 520.0);
    plot.axes();
    plot.title(&format!("GD, η = {}, b = {}, θ = {}", num(p.eta), num(b), num(p.theta)));
    plot.line([0.0, p.theta], [b, p.theta], "#c0392b", 3.0);
    let n = DRAWN_ITERATES.min(sim.len());
    let mut path = vec![[0.0, 0.0]];
    path.extend_from_slice(&sim[..n]);
    plot.polyline(&path, "#1f4e9c", false);
    let mut closed = vec![[0.0, 0.0]];
    closed.extend_from_slice(&oracle[..n]);
    plot.polyline(&closed, "#e67e22", true);
    plot.marker(phases.w_t0, "#2c3e50", &format!("t0 = {}", phases.t0));
    if let (Some(t1), Some(w)) = (phases.t1, phases.w_t1) {
        plot.marker(w, "#8e44ad", &format!("t1 = {t1}"));
    }
    plot.marker([b, p.theta], "#c0392b", "(b, θ)");
    plot.marker(averaged, "#27ae60", "");
    plot.text([0.3 * hi, 0.05 * hi], "solid: simulated, dashed: closed form, green: average", 0.0, 0.0);
    plot.finish()
}

// --------------------------------------------------------------- warmup

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmupParams {
    pub regularizer: String,
    pub lambda: Option<f64>,
    pub eta: f64,
    pub steps: usize,
    /// Smallest penalty gap asserted on the certificate.
    pub min_r_gap: f64,
}

impl Default for WarmupParams {
    fn default() -> Self {
        WarmupParams { regularizer: "sq-norm".into(), lambda: None, eta: 0.5, steps: 100_000, min_r_gap: 1e-5 }
    }
}

pub fn cmd_warmup(p: &WarmupParams, _out: &mut Output) -> Result<CommandReport, Failure> {
    let r = regularizer(&p.regularizer, p.lambda)?;
    let regime = vec![
        RegimeCheck::new("0 < η < 1", p.eta > 0.0 && p.eta < 1.0),
        RegimeCheck::new("T ≥ 1", p.steps >= 1),
        RegimeCheck::new("λ > 0 declared", r.lambda.is_some_and(|l| l > 0.0)),
    ];
    gate(&regime)?;
    let rep = run_warmup(&r, p.eta, p.steps).map_err(runtime_error)?;
    let c = &rep.certificate;
    let checks = vec![
        Check::new("certificate valid", c.valid, format!("f_gap={:e} r_gap={:e}", c.f_gap, c.r_gap)),
        Check::new("F gap ≥ 0", c.f_gap >= 0.0, format!("{:e}", c.f_gap)),
        Check::new("r gap ≥ min_r_gap", c.r_gap >= p.min_r_gap, format!("{:e}", c.r_gap)),
        Check::new("no projection", rep.projection_events == 0, rep.projection_events.to_string()),
    ];
    Ok(CommandReport {
        subcommand: "warmup".into(),
        params: to_value(p),
        seed: None,
        regime_checks: regime,
        checks,
        data: to_value(&rep),
    })
}

// ------------------------------------------------------------------ gdr

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdrParams {
    pub regularizer: String,
    pub lambda: Option<f64>,
    pub resolution: f64,
    pub eta: f64,
    pub max_steps: usize,
}

impl Default for GdrParams {
    fn default() -> Self {
        GdrParams {
            regularizer: "l1-normalized".into(),
            lambda: None,
            resolution: 1e-3,
            eta: 0.5,
            max_steps: 2_000_000,
        }
    }
}

pub fn cmd_gdr(p: &GdrParams, _out: &mut Output) -> Result<CommandReport, Failure> {
    let r = regularizer(&p.regularizer, p.lambda)?;
    let regime = vec![
        RegimeCheck::new("0 < η < 1", p.eta > 0.0 && p.eta < 1.0),
        RegimeCheck::new("resolution > 0", p.resolution > 0.0 && p.resolution.is_finite()),
        RegimeCheck::new("max_steps ≥ 1", p.max_steps >= 1),
    ];
    gate(&regime)?;
    let rep = run_gdr(&r, p.resolution, p.eta, p.max_steps).map_err(runtime_error)?;
    let c = &rep.certificate;
    let checks = vec![
        Check::new("certificate valid", c.valid, format!("f_gap={:e} r_gap={:e}", c.f_gap, c.r_gap)),
        Check::new("output within δ̂ of the limit", rep.within_neighborhood, format!("{:e}", rep.distance_to_limit)),
        Check::new("r gap ≥ c_r", rep.meets_c_r, format!("{:e}", c.r_gap)),
    ];
    Ok(CommandReport {
        subcommand: "gdr".into(),
        params: to_value(p),
        seed: None,
        regime_checks: regime,
        checks,
        data: to_value(&rep),
    })
}

// ----------------------------------------------------------------- sgdr

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdrCmdParams {
    pub steps: usize,
    pub constant: f64,
    /// Defaults to `C/√T`.
    pub eta: Option<f64>,
    pub trials: usize,
    pub cutoff_divisor: usize,
    pub regularizer: String,
}

impl Default for SgdrCmdParams {
    fn default() -> Self {
        SgdrCmdParams {
            steps: 200,
            constant: 3.0,
            eta: None,
            trials: 1000,
            cutoff_divisor: 2,
            regularizer: "sq-norm".into(),
        }
    }
}

impl SgdrCmdParams {
    pub fn core(&self, seed: u64) -> SgdrParams {
        let mut p = SgdrParams::new(self.steps, self.constant, self.trials, seed);
        if let Some(eta) = self.eta {
            p = p.with_eta(eta);
        }
        p.cutoff_divisor = self.cutoff_divisor;
        p
    }
}

fn sgdr_checks(rep: &SgdrReport) -> Vec<Check> {
    vec![
        Check::new("(a) F_S(w_S) = F_S(w_S′)", rep.all_a, format!("max gap {:e}", rep.max_f_gap)),
        Check::new(
            "(b) ‖w_S − w_S′‖² ≥ |S_g|(ηρ)²/64",
            rep.all_b,
            format!("{} trials with projection", rep.projection_trials),
        ),
        Check::new("averaged pair identity", rep.all_pair_identity, String::new()),
        Check::new(
            "(c) distance frequency ≥ 0.1",
            rep.check_c(),
            format!("{} [{}, {}]", rep.distance_frequency, rep.distance_ci.lo, rep.distance_ci.hi),
        ),
        Check::new(
            "(d) mean |S_g| ≥ T/5",
            rep.check_d(),
            format!("{} ± {} vs {}", rep.mean_good, rep.mean_good_half_width, rep.good_target),
        ),
    ]
}

pub fn cmd_sgdr(p: &SgdrCmdParams, seed: Option<u64>, out: &mut Output) -> Result<CommandReport, Failure> {
    let seed = require_seed(seed, "sgdr")?;
    let r = regularizer(&p.regularizer, None)?;
    let core = p.core(seed);
    core.validate().map_err(config_error)?;
    let rep = experiment_sgdr(&core, &r).map_err(runtime_error)?;
    if out.wants(Format::Csv) {
        let mut csv = String::from("trial,good,f_gap,distance_sq,good_bound,projection_events,check_a,check_b,check_c,pair_identity,certificate_valid,r_gap\n");
        for t in &rep.trials {
            let b = t.check_b.map_or("na".to_string(), |b| b.to_string());
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                t.index,
                t.good,
                t.f_gap,
                t.distance_sq,
                t.good_bound,
                t.projection_events,
                t.check_a,
                b,
                t.check_c,
                t.pair_identity,
                t.certificate_valid,
                t.r_gap
            );
        }
        out.write("sgdr_trials.csv", Format::Csv, &csv)?;
    }
    Ok(CommandReport {
        subcommand: "sgdr".into(),
        params: to_value(&core),
        seed: Some(seed),
        regime_checks: rep.regime_checks.clone(),
        checks: sgdr_checks(&rep),
        data: to_value(&rep),
    })
}

// ----------------------------------------------------------------- nouc

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoucCmdParams {
    pub steps: usize,
    pub constant: f64,
    /// Defaults to `1/√T`.
    pub eta: Option<f64>,
    pub k: usize,
    /// Defaults to `10⁵·T`.
    pub dim: Option<usize>,
    pub trials: usize,
    pub subset_samples: usize,
    pub cutoff_divisor: usize,
    pub regularizer: String,
}

impl Default for NoucCmdParams {
    fn default() -> Self {
        NoucCmdParams {
            steps: 8,
            constant: 3.0,
            eta: None,
            k: 8,
            dim: None,
            trials: 2000,
            subset_samples: 256,
            cutoff_divisor: 2,
            regularizer: "sq-norm".into(),
        }
    }
}

impl NoucCmdParams {
    pub fn core(&self, seed: u64) -> NoucParams {
        let mut p = NoucParams::new(self.steps, self.constant, self.k, self.trials, seed)
            .with_subset_samples(self.subset_samples);
        if let Some(eta) = self.eta {
            p = p.with_eta(eta);
        }
        if let Some(d) = self.dim {
            p = p.with_dim(d);
        }
        p.cutoff_divisor = self.cutoff_divisor;
        p
    }
}

pub fn cmd_nouc(p: &NoucCmdParams, seed: Option<u64>, _out: &mut Output) -> Result<CommandReport, Failure> {
    let seed = require_seed(seed, "nouc")?;
    let r = regularizer(&p.regularizer, None)?;
    let core = p.core(seed);
    core.validate().map_err(config_error)?;
    let rep = experiment_nouc(&core, &r).map_err(runtime_error)?;
    let mut checks = vec![
        Check::new("flip class shares the empirical loss", rep.loss_equal, format!("{:e}", rep.max_loss_gap)),
        Check::new(
            "embedding Lipschitz factor g",
            rep.lipschitz_ok,
            format!("{} ≤ {}", rep.max_embedding_ratio, rep.embedding_lipschitz),
        ),
        Check::new("images on the cube", rep.cube_deviation <= 1e-9, format!("{:e}", rep.cube_deviation)),
    ];
    if let Some(probe) = &rep.probe {
        checks.push(Check::new(
            "witness probability ≥ ½ − CI",
            probe.meets(0.5, 1.0) && probe.zero_empirical,
            format!("{} ± {} (d={}, m={})", probe.probability, probe.ci.half_width(), probe.d, probe.m),
        ));
    }
    Ok(CommandReport {
        subcommand: "nouc".into(),
        params: to_value(&core),
        seed: Some(seed),
        regime_checks: rep.regime_checks.clone(),
        checks,
        data: to_value(&rep),
    })
}

// ------------------------------------------------------------ nonconvex

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonconvexCmdParams {
    pub steps: usize,
    pub c: f64,
    pub trials: usize,
    pub alpha: f64,
    pub regularizer: String,
}

impl Default for NonconvexCmdParams {
    fn default() -> Self {
        NonconvexCmdParams {
            steps: 10_000,
            c: 1.0,
            trials: 100_000,
            alpha: 200.0,
            regularizer: "shifted-sq-norm(0.3,0)".into(),
        }
    }
}

pub fn cmd_nonconvex(p: &NonconvexCmdParams, seed: Option<u64>, out: &mut Output) -> Result<CommandReport, Failure> {
    let seed = require_seed(seed, "nonconvex")?;
    let r = regularizer(&p.regularizer, None)?;
    let core = NonconvexParams { alpha: p.alpha, ..NonconvexParams::new(p.steps, p.c, p.trials, seed) };
    core.validate().map_err(config_error)?;
    solve_beta(p.c).map_err(config_error)?;
    let rep = experiment_nonconvex(&core, &r).map_err(runtime_error)?;
    if out.wants(Format::Csv) {
        out.write("nonconvex_trials.csv", Format::Csv, &trials_csv(&rep))?;
    }
    let checks = vec![
        Check::new(
            "P̂(¬E₁) ≤ erf(√50/(4c)) + √(50³/T) + 3·CI",
            rep.not_e1.pass,
            format!("{} vs {}", rep.not_e1.empirical, rep.not_e1.analytic),
        ),
        Check::new("F_S equal on the three points", rep.f_equal, format!("{:e}", rep.max_f_gap)),
        Check::new("midpoint identity", rep.midpoint_exact, String::new()),
        Check::new("‖w_S − w*₀‖ ≥ η√Tβ/2 under E₂", rep.distance_ok, String::new()),
        Check::new(
            "quasi-convexity violation in ≥ 99% of E-trials",
            rep.violation_fraction >= 0.99,
            format!("{} of {}", rep.violations, rep.e_count),
        ),
        Check::new(
            "fast loop matches the optimizer",
            rep.fast_path_deviation <= 1e-12,
            format!("{:e}", rep.fast_path_deviation),
        ),
    ];
    Ok(CommandReport {
        subcommand: "nonconvex".into(),
        params: to_value(&core),
        seed: Some(seed),
        regime_checks: rep.regime_checks.clone(),
        checks,
        data: to_value(&rep),
    })
}

// -------------------------------------------------------------- becheck

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BecheckParams {
    pub a: Vec<f64>,
    pub k: Vec<usize>,
    pub c: Vec<f64>,
    pub steps: usize,
    pub trials: usize,
}

impl Default for BecheckParams {
    fn default() -> Self {
        BecheckParams {
            a: vec![0.1, 0.5, 1.0, 50f64.sqrt() / 4.0],
            k: vec![1, 2, 4],
            c: vec![0.5, 1.0, 2.0],
            steps: 10_000,
            trials: 100_000,
        }
    }
}

pub fn cmd_becheck(p: &BecheckParams, seed: Option<u64>, _out: &mut Output) -> Result<CommandReport, Failure> {
    let seed = require_seed(seed, "becheck")?;
    let mut grid = Vec::new();
    for &c in &p.c {
        for &k in &p.k {
            for &a in &p.a {
                grid.push(BeParams { c, k, a });
            }
        }
    }
    let regime = vec![
        RegimeCheck::new("non-empty grid", !grid.is_empty()),
        RegimeCheck::new(
            "T > 2k, a ≥ 0, c > 0 at every grid point",
            grid.iter().all(|g| berry_esseen_bound(g.c, g.k, g.a, p.steps).is_ok()),
        ),
        RegimeCheck::new("trials ≥ 1", p.trials >= 1),
    ];
    gate(&regime)?;
    let reports = be_empirical_grid(&grid, p.steps, p.trials, seed).map_err(runtime_error)?;
    let checks = reports
        .iter()
        .map(|r| Check::new(r.label.clone(), r.pass, format!("{} ≤ {}", r.empirical, r.analytic)))
        .collect();
    Ok(CommandReport {
        subcommand: "becheck".into(),
        params: to_value(p),
        seed: Some(seed),
        regime_checks: regime,
        checks,
        data: json!({ "grid": reports }),
    })
}

// -------------------------------------------------------------- feldman

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeldmanParams {
    pub d: usize,
    pub m: usize,
    pub trials: usize,
    pub exact: bool,
}

impl Default for FeldmanParams {
    fn default() -> Self {
        FeldmanParams { d: 12, m: 2, trials: 10_000, exact: true }
    }
}

pub fn cmd_feldman(p: &FeldmanParams, seed: Option<u64>, _out: &mut Output) -> Result<CommandReport, Failure> {
    let seed = require_seed(seed, "feldman")?;
    let regime = vec![
        RegimeCheck::new(format!("1 ≤ d ≤ {MAX_FELDMAN_DIM}"), (1..=MAX_FELDMAN_DIM).contains(&p.d)),
        RegimeCheck::new("trials ≥ 1", p.trials >= 1),
        RegimeCheck::new(format!("exact mode needs d ≤ {EXACT_MAX_DIM} unless K is the full cube"), true),
    ];
    gate(&regime)?;
    let rep = feldman_complexity_probe(&FullCube(p.d), p.m, p.trials, seed, p.exact).map_err(runtime_error)?;
    let mut checks = vec![Check::new("witnesses have zero empirical loss", rep.zero_empirical, String::new())];
    // the guarantee covers m ≤ d/6 only
    if 6 * p.m <= p.d {
        checks.push(Check::new(
            "witness probability ≥ ½ − 3·CI",
            rep.meets(0.5, 3.0),
            format!("{} ± {}", rep.probability, rep.ci.half_width()),
        ));
    }
    if let Some(gap) = rep.mc_exact_gap {
        checks.push(Check::new("Monte Carlo within 0.01 of exact", gap <= 0.01, format!("{gap:e}")));
    }
    Ok(CommandReport {
        subcommand: "feldman".into(),
        params: to_value(p),
        seed: Some(seed),
        regime_checks: regime,
        checks,
        data: to_value(&rep),
    })
}
