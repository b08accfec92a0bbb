//! Coupled SGD runs on the paired product distribution: equal empirical
//! loss, outputs far apart.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coupled::{averaged_pair_identity_check, draw_coupled_with, CoupledSample};
use super::RegimeCheck;
use crate::error::{Error, Result};
use crate::geometry::{Iterate, VecD};
use crate::objectives::{HingePair, ProductDistribution, ProductInstance, StochasticObjective};
use crate::optimizers::{sgd_summary, RunConfig};
use crate::regularizers::Regularizer;
use crate::regularizers::{k_membership, CertificateContext, ViolationCertificate, F_TOLERANCE};
use crate::rng;
use crate::stats::{mean_ci, wilson_ci, Interval};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdrParams {
    pub steps: usize,
    pub constant: f64,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    pub cutoff_divisor: usize,
}

impl SgdrParams {
    /// `η = C/√T`, good positions at `t < T/2`.
    pub fn new(steps: usize, constant: f64, trials: usize, seed: u64) -> Self {
        SgdrParams { steps, constant, eta: constant / (steps as f64).sqrt(), trials, seed, cutoff_divisor: 2 }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn rho(&self) -> f64 {
        1.0 / self.constant
    }

    pub fn hinge_c(&self) -> f64 {
        1.0 / (8.0 * (self.steps * self.steps) as f64)
    }

    pub fn distance_threshold(&self) -> f64 {
        self.steps as f64 * self.eta * self.eta / (500.0 * self.constant * self.constant)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.steps as f64;
        if self.steps < 2 {
            return Err(Error::Config(format!("need T ≥ 2, got {}", self.steps)));
        }
        if !(self.constant > 2.0 && self.constant.is_finite()) {
            return Err(Error::Config(format!("need C > 2, got {}", self.constant)));
        }
        let hi = self.constant / t.sqrt();
        if !(self.eta > 1.0 / (t * t) && self.eta <= hi) {
            return Err(Error::Config(format!(
                "step size {} outside (1/T², C/√T] = ({}, {hi}]",
                self.eta,
                1.0 / (t * t)
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if self.cutoff_divisor == 0 {
            return Err(Error::Config("cutoff divisor must be positive".into()));
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<ProductDistribution> {
        ProductDistribution::paired(self.steps, HingePair::new(self.hinge_c(), self.rho())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdrTrial {
    pub index: usize,
    pub good: usize,
    pub f_gap: f64,
    pub distance_sq: f64,
    pub good_bound: f64,
    pub projection_events: usize,
    pub max_norm: f64,
    pub check_a: bool,
    /// `None` when a projection happened and the bound does not apply.
    pub check_b: Option<bool>,
    pub check_c: bool,
    pub pair_identity: bool,
    pub pair_deviation: f64,
    /// `r(w_S′) ≤ r(w_S)`.
    pub prime_preferred: bool,
    pub certificate_valid: bool,
    pub r_gap: f64,
    /// `r(w_S) ≥ r(w*) + (9λ/32)‖w_S′ − w_S‖²` with the best certified `w*`;
    /// `None` unless `r(w_S′) ≤ r(w_S)` and `λ` is declared.
    pub strong_convexity: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdrReport {
    pub params: SgdrParams,
    pub dim: usize,
    pub rho: f64,
    pub hinge_c: f64,
    pub regularizer: String,
    pub regime_checks: Vec<RegimeCheck>,
    pub trials: Vec<SgdrTrial>,
    pub max_f_gap: f64,
    pub projection_trials: usize,
    pub all_a: bool,
    pub all_b: bool,
    pub all_pair_identity: bool,
    pub distance_threshold: f64,
    pub distance_hits: u64,
    pub distance_frequency: f64,
    pub distance_ci: Interval,
    pub mean_good: f64,
    pub mean_good_half_width: f64,
    pub good_target: f64,
    pub certificates_valid: u64,
    pub prime_preferred: u64,
    pub strong_convexity_checked: u64,
    pub strong_convexity_passed: u64,
    /// One certificate from the first trial that produced a valid one.
    pub example_certificate: Option<ViolationCertificate>,
}

impl SgdrReport {
    pub fn check_c(&self) -> bool {
        self.distance_ci.lo >= 0.1
    }

    pub fn check_d(&self) -> bool {
        self.mean_good + self.mean_good_half_width >= self.good_target
    }

    pub fn passed(&self) -> bool {
        self.all_a && self.all_b && self.all_pair_identity && self.check_c() && self.check_d()
    }
}

fn empirical<'a>(dist: &'a ProductDistribution, sample: &'a [ProductInstance]) -> impl Fn(&VecD) -> f64 + 'a {
    move |w: &VecD| dist.empirical_value(w, sample)
}

/// `w` with every good pair moved to `c·v_z`, the smallest point where the
/// pair's only loss term is flat.
fn shrunk(w: &VecD, coupled: &CoupledSample, dist: &ProductDistribution) -> Result<VecD> {
    let mut out = w.clone();
    for &(t, l) in &coupled.good {
        let (z, i) = coupled.s[t - 1].terms[l];
        let v = HingePair::anchor(z);
        out.pair_write(i, [dist.hinge.c * v[0], dist.hinge.c * v[1]])?;
    }
    Ok(out)
}

struct TrialOut {
    trial: SgdrTrial,
    certificate: Option<ViolationCertificate>,
}

fn run_trial(
    p: &SgdrParams,
    dist: &ProductDistribution,
    cfg: &RunConfig,
    r: &Regularizer,
    index: usize,
) -> Result<TrialOut> {
    let mut rng = rng::trial(p.seed, index as u64);
    let coupled = draw_coupled_with(p.steps, dist, p.cutoff_divisor, &mut rng)?;
    let run_s = sgd_summary(dist, &coupled.s, cfg)?;
    let run_p = sgd_summary(dist, &coupled.s_prime, cfg)?;
    let (w_s, w_p) = (&run_s.output, &run_p.output);

    let f_s = empirical(dist, &coupled.s);
    let f_gap = (f_s(w_s) - f_s(w_p)).abs();
    let distance_sq = w_s.dist(w_p).powi(2);
    let eta_rho = p.eta * dist.hinge.rho;
    let good_bound = coupled.good.len() as f64 * eta_rho * eta_rho / 64.0;
    let projections = run_s.projection_events + run_p.projection_events;
    let ident_s = averaged_pair_identity_check(w_s, &coupled.s, &coupled.good, dist, p.eta)?;
    let ident_p = averaged_pair_identity_check(w_p, &coupled.s_prime, &coupled.good, dist, p.eta)?;

    // orient the certificate at whichever output carries the larger penalty
    let (r_s, r_p) = (r.value_of(w_s), r.value_of(w_p));
    let (out, other, sample) = if r_p <= r_s { (w_s, w_p, &coupled.s) } else { (w_p, w_s, &coupled.s_prime) };
    let f_out = empirical(dist, sample);
    let ctx = CertificateContext::new(
        "coupled-sgd",
        serde_json::json!({ "steps": p.steps, "eta": p.eta, "trial": index }),
        Some(p.seed),
    );
    let cert = ViolationCertificate::from_gaps(
        out.clone(),
        other.clone(),
        f_out(out) - f_out(other),
        r.value_of(out) - r.value_of(other),
        0.0,
        ctx,
    );

    let strong_convexity = match r.lambda {
        Some(lambda) if r_p <= r_s => {
            let mut mid = w_s.clone();
            mid.scale(0.5);
            mid.add_scaled(0.5, w_p);
            let candidates = [w_s.clone(), w_p.clone(), mid, shrunk(w_s, &coupled, dist)?];
            let best = candidates
                .iter()
                .filter(|u| k_membership(u, w_s, &f_s, r))
                .map(|u| r.value_of(u))
                .fold(f64::INFINITY, f64::min);
            Some(r_s >= best + 9.0 * lambda / 32.0 * distance_sq - F_TOLERANCE)
        }
        _ => None,
    };

    let trial = SgdrTrial {
        index,
        good: coupled.good.len(),
        f_gap,
        distance_sq,
        good_bound,
        projection_events: projections,
        max_norm: run_s.max_norm.max(run_p.max_norm),
        check_a: f_gap <= F_TOLERANCE,
        check_b: (projections == 0).then_some(distance_sq >= good_bound),
        check_c: distance_sq >= p.distance_threshold(),
        pair_identity: ident_s.pass && ident_p.pass,
        pair_deviation: ident_s.max_deviation.max(ident_p.max_deviation),
        prime_preferred: r_p <= r_s,
        certificate_valid: cert.valid,
        r_gap: cert.r_gap,
        strong_convexity,
    };
    Ok(TrialOut { trial, certificate: cert.valid.then_some(cert) })
}

/// Runs `trials` coupled pairs and aggregates the per-trial checks.
pub fn experiment_sgdr(p: &SgdrParams, r: &Regularizer) -> Result<SgdrReport> {
    p.validate()?;
    let dist = p.distribution()?;
    let cfg = RunConfig::new(p.eta, p.steps, 1.0)?;
    let outs: Vec<TrialOut> =
        (0..p.trials).into_par_iter().map(|i| run_trial(p, &dist, &cfg, r, i)).collect::<Result<_>>()?;

    let t = p.steps as f64;
    let rho = p.rho();
    let eta_rho_half = p.eta * rho / p.cutoff_divisor as f64;
    let regime_checks = vec![
        RegimeCheck::new("1/T² < η ≤ C/√T", true),
        RegimeCheck::new("C > 2", true),
        RegimeCheck::new("η²Tρ² ≤ 1 (no projection)", p.eta * p.eta * t * rho * rho <= 1.0),
        RegimeCheck::new("η'ρ ≥ 10c/9 at every good step (flat anchors)", eta_rho_half >= 10.0 * p.hinge_c() / 9.0),
    ];

    let trials: Vec<SgdrTrial> = outs.iter().map(|o| o.trial.clone()).collect();
    let n = trials.len() as u64;
    let hits = trials.iter().filter(|x| x.check_c).count() as u64;
    let goods: Vec<f64> = trials.iter().map(|x| x.good as f64).collect();
    let (mean_good, half) = mean_ci(&goods, 0.95);
    let sc: Vec<bool> = trials.iter().filter_map(|x| x.strong_convexity).collect();
    Ok(SgdrReport {
        params: p.clone(),
        dim: dist.dim(),
        rho,
        hinge_c: p.hinge_c(),
        regularizer: r.name.clone(),
        regime_checks,
        max_f_gap: trials.iter().map(|x| x.f_gap).fold(0.0, f64::max),
        projection_trials: trials.iter().filter(|x| x.projection_events > 0).count(),
        all_a: trials.iter().all(|x| x.check_a),
        all_b: trials.iter().all(|x| x.check_b != Some(false)),
        all_pair_identity: trials.iter().all(|x| x.pair_identity),
        distance_threshold: p.distance_threshold(),
        distance_hits: hits,
        distance_frequency: hits as f64 / n as f64,
        distance_ci: wilson_ci(hits, n, 0.95)?,
        mean_good,
        mean_good_half_width: half,
        good_target: t / 5.0,
        certificates_valid: trials.iter().filter(|x| x.certificate_valid).count() as u64,
        prime_preferred: trials.iter().filter(|x| x.prime_preferred).count() as u64,
        strong_convexity_checked: sc.len() as u64,
        strong_convexity_passed: sc.iter().filter(|&&b| b).count() as u64,
        example_certificate: outs.into_iter().find_map(|o| o.certificate),
        trials,
    })
}

/// Expected squared output distance of one coupled pair given its good
/// steps, from the closed-form pair values.
pub fn predicted_distance_sq(p: &SgdrParams, good_steps: &[usize]) -> f64 {
    let gap = HingePair::anchor_gap();
    good_steps
        .iter()
        .map(|&t| {
            let f = (p.steps - t) as f64 / p.steps as f64 * p.eta * p.rho() * gap;
            f * f
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_gate() {
        let r = Regularizer::sq_norm();
        let p = SgdrParams::new(200, 3.0, 4, 0);
        let too_big = p.clone().with_eta(p.eta * 1.01);
        assert!(matches!(experiment_sgdr(&too_big, &r), Err(Error::Config(_))));
        let too_small = p.clone().with_eta(1.0 / (200.0 * 200.0));
        assert!(matches!(experiment_sgdr(&too_small, &r), Err(Error::Config(_))));
        assert!(matches!(experiment_sgdr(&SgdrParams::new(200, 2.0, 4, 0), &r), Err(Error::Config(_))));
    }

    #[test]
    fn small_run_checks_hold() {
        let r = Regularizer::sq_norm();
        let rep = experiment_sgdr(&SgdrParams::new(100, 3.0, 40, 5), &r).unwrap();
        assert!(rep.all_a && rep.all_b && rep.all_pair_identity, "{:?}", rep.max_f_gap);
        assert_eq!(rep.projection_trials, 0);
        assert!(rep.regime_checks.iter().all(|c| c.pass));
        for t in &rep.trials {
            assert!(t.distance_sq >= t.good_bound);
        }
        assert!(rep.strong_convexity_passed == rep.strong_convexity_checked);
    }

    #[test]
    fn distance_matches_closed_form() {
        let p = SgdrParams::new(60, 3.0, 1, 8);
        let dist = p.distribution().unwrap();
        let cfg = RunConfig::new(p.eta, p.steps, 1.0).unwrap();
        let mut rng = rng::trial(p.seed, 0);
        let c = draw_coupled_with(p.steps, &dist, 2, &mut rng).unwrap();
        let a = sgd_summary(&dist, &c.s, &cfg).unwrap().output;
        let b = sgd_summary(&dist, &c.s_prime, &cfg).unwrap().output;
        let steps: Vec<usize> = c.good.iter().map(|g| g.0).collect();
        assert!((a.dist(&b).powi(2) - predicted_distance_sq(&p, &steps)).abs() < 1e-14);
    }

    #[test]
    fn deterministic() {
        let r = Regularizer::sq_norm();
        let p = SgdrParams::new(50, 3.0, 6, 21);
        assert_eq!(experiment_sgdr(&p, &r).unwrap(), experiment_sgdr(&p, &r).unwrap());
    }
}
