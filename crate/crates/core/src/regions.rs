//! Gaussian distortion-rate and rate-distortion regions of the two-user
//! two-layer successive refinement problem, the converse witness, and the
//! membership cross-check between the two characterizations.
//!
//! Internally everything is normalized by the first-layer floor
//! `d1* = var * exp(-2 R1)`: `x = d2_hat / d1*`, `y = d3_hat / d1*`,
//! `s = exp(-2 (R2 + R3))` and `q = d4_hat / d1*`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    at_least, check_individual, rate_of, DistortionTuple, FirstDistortion, GaussianSource,
    RateTuple, RegimeTag,
};
use crate::search::{bisect_last_true, golden_max};

/// Relative slack for a slightly negative `Delta` caused by rounding at the
/// individual-bound boundary.
const DELTA_RTOL: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 200;
pub const BISECTION_TOL: f64 = 1e-12;
pub const GOLDEN_LOG_EPS_RANGE: (f64, f64) = (1e-9, 1e9);
pub const GOLDEN_RTOL: f64 = 1e-10;
pub const EQUIVALENCE_RTOL: f64 = 1e-9;

/// `Pi`, `Delta` and the central-distortion penalty `1 / (1 - (|sqrt Pi - sqrt Delta|^+)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CentralTerms {
    pub pi: f64,
    pub delta: f64,
    pub penalty: f64,
}

impl CentralTerms {
    pub fn degenerate(&self) -> bool {
        self.pi < self.delta
    }
}

/// Evaluates the central penalty for normalized side distortions `x, y` in
/// `(0, 1]` and `s = exp(-2(R2+R3))`.
pub(crate) fn central_terms(x: f64, y: f64, s: f64) -> Result<CentralTerms> {
    let pi = (1.0 - x) * (1.0 - y);
    let raw_delta = x * y - s;
    if raw_delta < -DELTA_RTOL * (x * y).max(s) {
        return Err(Error::NegativeDelta(raw_delta));
    }
    let delta = raw_delta.max(0.0);
    let (sp, sd) = (pi.sqrt(), delta.sqrt());
    let denom = if sp <= sd {
        1.0
    } else {
        // 1 - g^2 = (1 - g)(1 + g), with 1 - sqrt(Pi) = (1 - Pi) / (1 + sqrt(Pi))
        // to keep precision when Pi is close to 1
        let one_minus_sp = (x + y - x * y) / (1.0 + sp);
        (one_minus_sp + sd) * (1.0 + sp - sd)
    };
    debug_assert!(denom > 0.0 && denom <= 1.0 + 1e-15);
    Ok(CentralTerms {
        pi,
        delta,
        penalty: 1.0 / denom,
    })
}

/// Outcome of evaluating the distortion-rate region at given rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrBoundResult {
    pub d1_star: f64,
    pub d2_hat: f64,
    pub d3_hat: f64,
    pub pi: f64,
    pub delta: f64,
    /// Smallest achievable central distortion `d4`.
    pub d4_bound: f64,
    pub regime: RegimeTag,
}

/// Minimal achievable `d4` given rates and the three other distortions.
///
/// `d1` only enters through its feasibility test.
pub fn dr_bound(
    source: &GaussianSource,
    rates: &RateTuple,
    d1: impl Into<FirstDistortion>,
    d2: f64,
    d3: f64,
) -> Result<DrBoundResult> {
    let d1 = d1.into();
    // validates positivity
    DistortionTuple::new(d1, d2, d3, 1.0)?;
    check_individual(source, rates, d1, d2, d3)?;

    let d1_star = source.distortion_at(rates.r1());
    let d2_hat = d2.min(d1_star);
    let d3_hat = d3.min(d1_star);
    let s = (-2.0 * (rates.r2() + rates.r3())).exp();
    let terms = central_terms(d2_hat / d1_star, d3_hat / d1_star, s)?;
    let d4_bound = source.distortion_at(rates.sum()) * terms.penalty;
    Ok(DrBoundResult {
        d1_star,
        d2_hat,
        d3_hat,
        pi: terms.pi,
        delta: terms.delta,
        d4_bound,
        regime: if terms.degenerate() {
            RegimeTag::DegeneratePiLessDelta
        } else {
            RegimeTag::NonDegenerate
        },
    })
}

/// Auxiliary-observation witness of the converse: `Y = X + N` with noise
/// variance `epsilon_star` maximizing the lower bound `t(epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverseWitness {
    /// Maximizer of `t`; infinite in the degenerate branch and zero when
    /// `Delta* = 0` (the supremum is approached as epsilon -> 0+).
    pub epsilon_star: f64,
    pub pi_star: f64,
    pub delta_star: f64,
    pub t_bound: f64,
    pub d1_star: f64,
    pub d2: f64,
    pub d3: f64,
    /// `exp(-2 (R2 + R3))`
    pub s: f64,
}

impl ConverseWitness {
    /// `t(eps) = eps (d1* + eps) / ((d2 + eps)(d3 + eps) - (d1* + eps) d1* s)`,
    /// with the denominator expanded in powers of `eps`.
    pub fn t(&self, eps: f64) -> f64 {
        t_of_epsilon(self.d1_star, self.d2, self.d3, self.s, eps)
    }
}

pub fn t_of_epsilon(d1_star: f64, d2: f64, d3: f64, s: f64, eps: f64) -> f64 {
    if eps.is_infinite() {
        return 1.0;
    }
    let num = eps * (d1_star + eps);
    let den = eps * eps + eps * (d2 + d3 - d1_star * s) + (d2 * d3 - d1_star * d1_star * s);
    num / den
}

pub fn converse_witness(
    source: &GaussianSource,
    rates: &RateTuple,
    d1: impl Into<FirstDistortion>,
    d2: f64,
    d3: f64,
) -> Result<ConverseWitness> {
    let d1 = d1.into();
    DistortionTuple::new(d1, d2, d3, 1.0)?;
    check_individual(source, rates, d1, d2, d3)?;
    let d1_star = source.distortion_at(rates.r1());
    for (name, d) in [("d2", d2), ("d3", d3)] {
        if !at_least(d1_star, d) {
            return Err(Error::OutOfRegime(format!(
                "{name} = {d} exceeds d1* = {d1_star}; use the clipped bound"
            )));
        }
    }
    let (x, y) = ((d2 / d1_star).min(1.0), (d3 / d1_star).min(1.0));
    let s = (-2.0 * (rates.r2() + rates.r3())).exp();
    let terms = central_terms(x, y, s)?;
    let (sp, sd) = (terms.pi.sqrt(), terms.delta.sqrt());
    let (epsilon_star, t_bound) = if terms.degenerate() {
        (f64::INFINITY, 1.0)
    } else if sp == sd {
        (f64::INFINITY, terms.penalty)
    } else {
        (d1_star * sd / (sp - sd), terms.penalty)
    };
    Ok(ConverseWitness {
        epsilon_star,
        pi_star: terms.pi,
        delta_star: terms.delta,
        t_bound,
        d1_star,
        d2,
        d3,
        s,
    })
}

/// Numeric maximization of `t(eps)` by golden section on `ln eps` over
/// [`GOLDEN_LOG_EPS_RANGE`]. Returns `(argmax, max)`.
pub fn maximize_t_numeric(witness: &ConverseWitness) -> (f64, f64) {
    let (lo, hi) = GOLDEN_LOG_EPS_RANGE;
    let (u, t) = golden_max(
        |u| witness.t(u.exp()),
        lo.ln(),
        hi.ln(),
        GOLDEN_RTOL,
        10_000,
    );
    (u.exp(), t)
}

/// Outcome of evaluating the rate-distortion region at given distortions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdBoundResult {
    pub r1_star: f64,
    pub d1_star: f64,
    pub d2_hat: f64,
    pub d3_hat: f64,
    pub d4_hat: f64,
    pub r2_bound: f64,
    pub r3_bound: f64,
    /// Lower bound on `R2 + R3`.
    pub sum_bound: f64,
    /// Closed-form excess rate `L`; zero outside the excess regime.
    pub excess: f64,
    pub regime: RegimeTag,
}

/// Rate-distortion region for `(R2, R3)` at fixed `R1`, `R4` and target
/// distortions. In the excess regime the sum bound comes from inverting
/// the distortion-rate bound; the closed-form `L` is reported alongside.
pub fn rd_bound(
    source: &GaussianSource,
    r1: f64,
    r4: f64,
    dist: &DistortionTuple,
) -> Result<RdBoundResult> {
    for r in [r1, r4] {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "rates must be non-negative and finite, got {r}"
            )));
        }
    }
    let var = source.variance();
    let d1_eff = dist.d1().effective(source);
    let r1_star = rate_of(d1_eff.min(var) / var);
    let d1_star = source.distortion_at(r1);
    if dist.d1().is_constrained() && !at_least(d1_eff, d1_star) {
        return Err(Error::InfeasibleDistortion {
            name: "d1",
            value: d1_eff,
            floor: d1_star,
        });
    }
    let d2_hat = dist.d2().min(d1_star);
    let d3_hat = dist.d3().min(d1_star);
    let d4_hat = dist.d4() * (2.0 * r4).exp();
    let (x, y, q) = (d2_hat / d1_star, d3_hat / d1_star, d4_hat / d1_star);

    let low = x + y - 1.0;
    let harmonic = 1.0 / (1.0 / x + 1.0 / y - 1.0);
    if low > harmonic * (1.0 + 1e-12) {
        return Err(Error::InvalidRegimeInput {
            low: low * d1_star,
            harmonic: harmonic * d1_star,
        });
    }
    let (regime, sum_bound, excess) = if q >= harmonic {
        (RegimeTag::RdRegimeSlack, 0.0, 0.0)
    } else if q <= low {
        (RegimeTag::RdRegimeLow, rate_of(q), 0.0)
    } else {
        let l = excess_rate_closed_form(x, y, q);
        (RegimeTag::RdRegimeExcess, invert_sum_rate(x, y, q)?, l)
    };
    Ok(RdBoundResult {
        r1_star,
        d1_star,
        d2_hat,
        d3_hat,
        d4_hat,
        r2_bound: rate_of(x),
        r3_bound: rate_of(y),
        sum_bound,
        excess,
        regime,
    })
}

/// `L = 1/2 ln[(1-q)^2 / ((1-q)^2 - (sqrt(Pi) - sqrt((x-q)(y-q)))^2)]` in
/// normalized units.
pub(crate) fn excess_rate_closed_form(x: f64, y: f64, q: f64) -> f64 {
    let pi = (1.0 - x) * (1.0 - y);
    let a = (1.0 - q) * (1.0 - q);
    let b = pi.sqrt() - ((x - q).max(0.0) * (y - q).max(0.0)).sqrt();
    0.5 * (a / (a - b * b)).ln()
}

/// Smallest `R2 + R3` for which the distortion-rate bound reaches `q`,
/// found by bisection on `s = exp(-2(R2+R3))` over `[0, x y]`.
pub(crate) fn invert_sum_rate(x: f64, y: f64, q: f64) -> Result<f64> {
    let a = x * y;
    // the penalty is non-decreasing in s, so the feasible set is a prefix
    let mut err = None;
    let s_star = bisect_last_true(
        |s| match central_terms(x, y, s) {
            Ok(t) => s * t.penalty <= q,
            Err(e) => {
                err = Some(e);
                false
            }
        },
        0.0,
        a,
        |h| BISECTION_TOL * h,
        BISECTION_MAX_ITER,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(rate_of(s_star).max(0.0))
}

/// Sum-rate bound obtained purely by inverting the distortion-rate bound,
/// for unnormalized inputs.
pub fn sum_rate_by_inversion(
    source: &GaussianSource,
    r1: f64,
    r4: f64,
    d2: f64,
    d3: f64,
    d4: f64,
) -> Result<f64> {
    let d1_star = source.distortion_at(r1);
    let x = d2.min(d1_star) / d1_star;
    let y = d3.min(d1_star) / d1_star;
    let q = d4 * (2.0 * r4).exp() / d1_star;
    invert_sum_rate(x, y, q)
}

/// Three-valued membership with a tolerance band around each boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
}

impl Membership {
    fn and(self, other: Membership) -> Membership {
        use Membership::*;
        match (self, other) {
            (Outside, _) | (_, Outside) => Outside,
            (Boundary, _) | (_, Boundary) => Boundary,
            _ => Inside,
        }
    }

    /// `value >= bound` with relative band `rtol`.
    fn compare(value: f64, bound: f64, rtol: f64) -> Membership {
        let scale = bound.abs().max(value.abs()).max(1.0);
        let m = value - bound;
        if m > rtol * scale {
            Membership::Inside
        } else if m < -rtol * scale {
            Membership::Outside
        } else {
            Membership::Boundary
        }
    }

    /// `value >= bound` for positive quantities, compared in ratio.
    fn compare_ratio(value: f64, bound: f64, rtol: f64) -> Membership {
        let r = value / bound;
        if r > 1.0 + rtol {
            Membership::Inside
        } else if r < 1.0 - rtol {
            Membership::Outside
        } else {
            Membership::Boundary
        }
    }

    pub fn conflicts(self, other: Membership) -> bool {
        matches!(
            (self, other),
            (Membership::Inside, Membership::Outside) | (Membership::Outside, Membership::Inside)
        )
    }
}

/// Membership of the eight-tuple under the distortion-rate characterization.
pub fn dr_membership(
    source: &GaussianSource,
    rates: &RateTuple,
    dist: &DistortionTuple,
    rtol: f64,
) -> Result<Membership> {
    let r = rates;
    let mut m = Membership::Inside;
    if let FirstDistortion::Constrained(d1) = dist.d1() {
        m = m.and(Membership::compare_ratio(d1, source.distortion_at(r.r1()), rtol));
    }
    m = m.and(Membership::compare_ratio(
        dist.d2(),
        source.distortion_at(r.r1() + r.r2()),
        rtol,
    ));
    m = m.and(Membership::compare_ratio(
        dist.d3(),
        source.distortion_at(r.r1() + r.r3()),
        rtol,
    ));
    if m == Membership::Outside {
        return Ok(m);
    }
    // bound evaluation needs feasible side distortions; lift boundary points
    let floor2 = source.distortion_at(r.r1() + r.r2());
    let floor3 = source.distortion_at(r.r1() + r.r3());
    let d1 = match dist.d1() {
        FirstDistortion::Constrained(d) => {
            FirstDistortion::Constrained(d.max(source.distortion_at(r.r1())))
        }
        u => u,
    };
    let b = dr_bound(source, r, d1, dist.d2().max(floor2), dist.d3().max(floor3))?;
    Ok(m.and(Membership::compare_ratio(dist.d4(), b.d4_bound, rtol)))
}

/// Membership of the eight-tuple under the rate-distortion characterization.
pub fn rd_membership(
    source: &GaussianSource,
    rates: &RateTuple,
    dist: &DistortionTuple,
    rtol: f64,
) -> Result<Membership> {
    let var = source.variance();
    let mut m = Membership::Inside;
    if dist.d1().is_constrained() {
        let d1 = dist.d1().effective(source);
        let r1_star = rate_of(d1.min(var) / var);
        m = m.and(Membership::compare(rates.r1(), r1_star, rtol));
        if m == Membership::Outside {
            return Ok(m);
        }
    }
    // evaluate with d1 unconstrained: the first-layer test was done above
    let relaxed = DistortionTuple::new(FirstDistortion::Unconstrained, dist.d2(), dist.d3(), dist.d4())?;
    let b = rd_bound(source, rates.r1(), rates.r4(), &relaxed)?;
    m = m.and(Membership::compare(rates.r2(), b.r2_bound, rtol));
    m = m.and(Membership::compare(rates.r3(), b.r3_bound, rtol));
    m = m.and(Membership::compare(rates.r2() + rates.r3(), b.sum_bound, rtol));
    Ok(m)
}

/// Axis values of an equivalence-scan grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r1: Vec<f64>,
    pub r4: Vec<f64>,
    /// `f64::INFINITY` marks an unconstrained first layer.
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub d4: Vec<f64>,
}

pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn geomspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    linspace(start.ln(), end.ln(), count)
        .into_iter()
        .map(f64::exp)
        .collect()
}

impl GridSpec {
    /// Grid around the symmetric two-description point, with `density`
    /// values on each rate and side-distortion axis and `2 * density`
    /// central distortions. Covers all three rate-distortion regimes.
    pub fn standard(density: usize) -> Self {
        let n = density.max(2);
        Self {
            r1: vec![0.0, 0.3],
            r4: vec![0.0, 0.2],
            d1: vec![f64::INFINITY, 0.9],
            d2: geomspace(0.2, 1.0, n),
            d3: geomspace(0.2, 1.0, n),
            r2: linspace(0.1, 1.0, n),
            r3: linspace(0.1, 1.0, n),
            d4: geomspace(0.01, 1.0, 2 * n),
        }
    }

    /// The two-description special case: `R1 = R4 = 0`, `d1` unconstrained.
    pub fn md_only(density: usize) -> Self {
        Self {
            r1: vec![0.0],
            r4: vec![0.0],
            d1: vec![f64::INFINITY],
            ..Self::standard(density)
        }
    }

    pub fn len(&self) -> usize {
        [
            &self.r1, &self.r4, &self.d1, &self.d2, &self.d3, &self.r2, &self.r3, &self.d4,
        ]
        .iter()
        .map(|v| v.len())
        .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `i` in row-major order over `(r1, r4, d1, d2, d3, r2, r3, d4)`.
    fn point(&self, mut i: usize) -> [f64; 8] {
        let axes = [
            &self.r1, &self.r4, &self.d1, &self.d2, &self.d3, &self.r2, &self.r3, &self.d4,
        ];
        let mut out = [0.0; 8];
        for (k, axis) in axes.iter().enumerate().rev() {
            out[k] = axis[i % axis.len()];
            i /= axis.len();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMismatch {
    /// `[r1, r4, d1, d2, d3, r2, r3, d4]`
    pub point: [f64; 8],
    pub dr: Membership,
    pub rd: Membership,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimeCounts {
    pub low: usize,
    pub slack: usize,
    pub excess: usize,
    pub dr_degenerate: usize,
    pub dr_non_degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub points: usize,
    pub compared: usize,
    /// Points failing a single-branch bound (both characterizations must
    /// still agree they are outside).
    pub trivially_infeasible: usize,
    pub boundary: usize,
    pub inside: usize,
    pub regimes: RegimeCounts,
    pub mismatches: Vec<ScanMismatch>,
}

enum PointOutcome {
    Invalid,
    Evaluated {
        dr: Membership,
        rd: Membership,
        infeasible: bool,
        rd_regime: Option<RegimeTag>,
        dr_regime: Option<RegimeTag>,
    },
}

fn scan_point(source: &GaussianSource, p: [f64; 8]) -> PointOutcome {
    let [r1, r4, d1, d2, d3, r2, r3, d4] = p;
    let (Ok(rates), Ok(dist)) = (
        RateTuple::new(r1, r2, r3, r4),
        DistortionTuple::new(d1, d2, d3, d4),
    ) else {
        return PointOutcome::Invalid;
    };
    let (Ok(dr), Ok(rd)) = (
        dr_membership(source, &rates, &dist, EQUIVALENCE_RTOL),
        rd_membership(source, &rates, &dist, EQUIVALENCE_RTOL),
    ) else {
        return PointOutcome::Invalid;
    };
    let infeasible = check_individual(source, &rates, dist.d1(), d2, d3).is_err();
    let (rd_regime, dr_regime) = if infeasible {
        (None, None)
    } else {
        (
            rd_bound(source, r1, r4, &dist).ok().map(|b| b.regime),
            dr_bound(source, &rates, dist.d1(), d2, d3).ok().map(|b| b.regime),
        )
    };
    PointOutcome::Evaluated {
        dr,
        rd,
        infeasible,
        rd_regime,
        dr_regime,
    }
}

/// Classifies every grid point under both characterizations and collects
/// disagreements. Points that fail type invariants are skipped.
pub fn equivalence_scan(source: &GaussianSource, grid: &GridSpec) -> EquivalenceReport {
    let outcomes: Vec<(usize, PointOutcome)> = (0..grid.len())
        .into_par_iter()
        .map(|i| (i, scan_point(source, grid.point(i))))
        .collect();

    let mut report = EquivalenceReport {
        points: grid.len(),
        compared: 0,
        trivially_infeasible: 0,
        boundary: 0,
        inside: 0,
        regimes: RegimeCounts::default(),
        mismatches: Vec::new(),
    };
    for (i, outcome) in outcomes {
        let PointOutcome::Evaluated {
            dr,
            rd,
            infeasible,
            rd_regime,
            dr_regime,
        } = outcome
        else {
            continue;
        };
        report.compared += 1;
        if infeasible {
            report.trivially_infeasible += 1;
        }
        if dr == Membership::Boundary || rd == Membership::Boundary {
            report.boundary += 1;
        } else if dr == Membership::Inside && rd == Membership::Inside {
            report.inside += 1;
        }
        match rd_regime {
            Some(RegimeTag::RdRegimeLow) => report.regimes.low += 1,
            Some(RegimeTag::RdRegimeSlack) => report.regimes.slack += 1,
            Some(RegimeTag::RdRegimeExcess) => report.regimes.excess += 1,
            _ => {}
        }
        match dr_regime {
            Some(RegimeTag::DegeneratePiLessDelta) => report.regimes.dr_degenerate += 1,
            Some(RegimeTag::NonDegenerate) => report.regimes.dr_non_degenerate += 1,
            _ => {}
        }
        if dr.conflicts(rd) {
            report.mismatches.push(ScanMismatch {
                point: grid.point(i),
                dr,
                rd,
            });
        }
    }
    report
}
