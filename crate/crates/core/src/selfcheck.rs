//! Seeded self-check suite: D-R/R-D equivalence over a grid, achievability
//! certificates, the converse witness against numeric maximization, and
//! Monte Carlo agreement of the test-channel decoders.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{certify_achievability, construct_channel, CERTIFY_RTOL};
use crate::error::Result;
use crate::mmse::{assemble_msr_covariance, conditional_mmse, mc_estimate_mse, msr_index};
use crate::model::{FirstDistortion, GaussianSource, RateTuple};
use crate::regions::{
    central_terms, converse_witness, equivalence_scan, maximize_t_numeric, GridSpec,
    EQUIVALENCE_RTOL,
};

pub const DEFAULT_SEED: u64 = 20_080_512;
pub const WITNESS_RTOL: f64 = 1e-6;
/// Allowed deviation of an empirical MSE, in standard errors.
pub const MC_SIGMAS: f64 = 4.0;
pub const MAX_RATE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub grid_density: usize,
    pub certify_instances: usize,
    pub witness_instances: usize,
    pub mc_channels: usize,
    pub mc_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            grid_density: 4,
            certify_instances: 1000,
            witness_instances: 1000,
            mc_channels: 20,
            mc_samples: 1_000_000,
        }
    }
}

impl VerifyConfig {
    /// Scales the randomized checks down along with a coarse grid.
    pub fn with_density(density: usize) -> Self {
        let base = Self::default();
        if density >= base.grid_density {
            return Self {
                grid_density: density,
                ..base
            };
        }
        Self {
            grid_density: density,
            certify_instances: 200,
            witness_instances: 200,
            mc_channels: 5,
            mc_samples: 100_000,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    pub tolerance: f64,
    pub worst_residual: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub counts: BTreeMap<String, usize>,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: true,
            cases: 0,
            failures: 0,
            tolerance,
            worst_residual: 0.0,
            counts: BTreeMap::new(),
        }
    }

    /// Records one case whose residual must not exceed the tolerance.
    fn record(&mut self, residual: f64) {
        self.cases += 1;
        if residual.is_nan() || residual > self.tolerance {
            self.failures += 1;
            self.passed = false;
        }
        if residual.is_nan() || residual > self.worst_residual {
            self.worst_residual = residual;
        }
    }

    fn fail(&mut self) {
        self.cases += 1;
        self.failures += 1;
        self.passed = false;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub config: VerifyConfig,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Random rates in `[0, MAX_RATE]` and side distortions between their floors
/// and `d1*`, for a unit-variance source.
pub fn random_instance(rng: &mut impl Rng) -> (RateTuple, f64, f64) {
    let r: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..=MAX_RATE));
    let d1 = (-2.0 * r[0]).exp();
    let f2 = d1 * (-2.0 * r[1]).exp();
    let f3 = d1 * (-2.0 * r[2]).exp();
    let (u, v): (f64, f64) = (rng.gen(), rng.gen());
    let rates = RateTuple::new(r[0], r[1], r[2], r[3]).expect("rates in range");
    (rates, f2 + u * (d1 - f2), f3 + v * (d1 - f3))
}

/// Like [`random_instance`] but restricted to `Pi >= Delta`.
pub fn random_nondegenerate_instance(rng: &mut impl Rng) -> (RateTuple, f64, f64) {
    loop {
        let (r, d2, d3) = random_instance(rng);
        let d1 = (-2.0 * r.r1()).exp();
        let s = (-2.0 * (r.r2() + r.r3())).exp();
        if let Ok(t) = central_terms(d2 / d1, d3 / d1, s) {
            if !t.degenerate() {
                return (r, d2, d3);
            }
        }
    }
}

pub fn check_equivalence(density: usize) -> CheckResult {
    let report = equivalence_scan(&GaussianSource::unit(), &GridSpec::standard(density));
    let mut c = CheckResult::new("equivalence", EQUIVALENCE_RTOL);
    c.cases = report.compared;
    c.failures = report.mismatches.len();
    c.passed = c.failures == 0;
    c.worst_residual = c.failures as f64;
    let r = &report.regimes;
    for (k, v) in [
        ("points", report.points),
        ("inside", report.inside),
        ("boundary", report.boundary),
        ("trivially_infeasible", report.trivially_infeasible),
        ("rd_low", r.low),
        ("rd_excess", r.excess),
        ("rd_slack", r.slack),
        ("dr_degenerate", r.dr_degenerate),
        ("dr_non_degenerate", r.dr_non_degenerate),
    ] {
        c.counts.insert(k.into(), v);
    }
    c
}

/// Relative gap between the covariance-computed central distortion and the
/// bound, with every other certificate condition required as well.
pub fn check_certification(seed: u64, instances: usize) -> CheckResult {
    let src = GaussianSource::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = CheckResult::new("achievability", CERTIFY_RTOL);
    let mut adjusted = 0;
    for _ in 0..instances {
        let (r, d2, d3) = random_instance(&mut rng);
        match certify_achievability(&src, &r, d2, d3) {
            Ok(cert) => {
                adjusted += cert.adjustment.is_some() as usize;
                let rel = (cert.achieved.d4() - cert.d4_bound).abs() / cert.d4_bound;
                c.record(rel);
                if !cert.matches_bound && rel <= c.tolerance {
                    // side distortions missed even though d4 agreed
                    c.failures += 1;
                    c.passed = false;
                }
            }
            Err(_) => c.fail(),
        }
    }
    c.counts.insert("degenerate_adjusted".into(), adjusted);
    c
}

/// Closed-form witness value against the golden-section maximum of `t`.
pub fn check_witness(seed: u64, instances: usize) -> CheckResult {
    let src = GaussianSource::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = CheckResult::new("converse_witness", WITNESS_RTOL);
    for _ in 0..instances {
        let (r, d2, d3) = random_nondegenerate_instance(&mut rng);
        match converse_witness(&src, &r, FirstDistortion::Unconstrained, d2, d3) {
            Ok(w) => {
                let (_, t_max) = maximize_t_numeric(&w);
                let mut rel = (w.t_bound - t_max).abs() / t_max;
                if w.epsilon_star.is_finite() && w.epsilon_star > 0.0 {
                    rel = rel.max((w.t(w.epsilon_star) - w.t_bound).abs() / w.t_bound);
                }
                c.record(rel);
            }
            Err(_) => c.fail(),
        }
    }
    c
}

/// Empirical MSE of all four decoders of seeded test channels against the
/// Schur-complement values, in standard errors.
pub fn check_monte_carlo(seed: u64, channels: usize, samples: usize) -> Result<CheckResult> {
    use msr_index::*;
    let src = GaussianSource::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4d43);
    let mut c = CheckResult::new("monte_carlo", MC_SIGMAS);
    let mut k = 0u64;
    while (c.cases / 4) < channels {
        let (r, d2, d3) = random_nondegenerate_instance(&mut rng);
        let ch = match construct_channel(&src, &r, d2, d3) {
            Ok(ch) => ch,
            Err(_) => continue,
        };
        let cov = assemble_msr_covariance(&src, &ch)?;
        let first: Vec<usize> = if ch.sigma1_sq.is_finite() { vec![U1] } else { vec![] };
        let only = |i: usize, v: f64| if v.is_finite() { vec![i] } else { vec![] };
        let decoders = [
            (X, first),
            (X_INNOVATION, only(U2, ch.sigma2_sq)),
            (X_INNOVATION, only(U3, ch.sigma3_sq)),
            (X_INNOVATION, ch.informative_refinements()),
        ];
        for (target, obs) in decoders {
            let exact = conditional_mmse(&cov, target, &obs)?.error_variance;
            let mc = mc_estimate_mse(&cov, target, &obs, samples, seed.wrapping_add(k))?;
            k += 1;
            c.record((mc.estimate - exact).abs() / mc.std_error.max(f64::MIN_POSITIVE));
        }
    }
    Ok(c)
}

pub fn run_verify(config: &VerifyConfig) -> Result<VerifySummary> {
    let checks = vec![
        check_equivalence(config.grid_density),
        check_certification(config.seed, config.certify_instances),
        check_witness(config.seed.wrapping_add(1), config.witness_instances),
        check_monte_carlo(config.seed, config.mc_channels, config.mc_samples)?,
    ];
    Ok(VerifySummary {
        config: *config,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
