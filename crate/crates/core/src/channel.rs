//! Jointly Gaussian test channel achieving the distortion-rate bound, the
//! side-distortion adjustment for the degenerate regime, and the
//! achievability certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmse::{assemble_msr_covariance, conditional_mmse, msr_index, CovarianceMatrix};
use crate::model::{
    at_least, check_individual, DistortionTuple, FirstDistortion, GaussianSource, RateTuple,
    FEASIBILITY_RTOL,
};
use crate::regions::{central_terms, dr_bound};

pub const CERTIFY_RTOL: f64 = 1e-9;

/// Noise variances and correlation of the construction
/// `U1 = X + N1`, `X' = X - E[X|U1]`, `U_m = X' + N_m`.
///
/// An infinite noise variance means the description carries no
/// information (zero rate or a side distortion equal to `d1*`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestChannel {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub sigma3_sq: f64,
    pub sigma4_sq: f64,
    /// Correlation of `N2` and `N3`, in `[-1, 0]`.
    pub rho: f64,
    /// `E[(X' - E[X'|U2 U3])^2]` before the refinement description.
    pub d4_star: f64,
}

impl TestChannel {
    /// Refinement observations of `X'` that carry information.
    pub fn informative_refinements(&self) -> Vec<usize> {
        [
            (msr_index::U2, self.sigma2_sq),
            (msr_index::U3, self.sigma3_sq),
            (msr_index::U4, self.sigma4_sq),
        ]
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, _)| i)
        .collect()
    }
}

/// `x / expm1(y)` written so that `y = 0` yields infinity.
fn noise_for_rate(scale: f64, rate: f64) -> f64 {
    if rate == 0.0 {
        f64::INFINITY
    } else {
        scale / (2.0 * rate).exp_m1()
    }
}

/// Precision `1/sigma^2 = 1/d - 1/d1` of a side observation achieving `d`.
fn side_precision(d1: f64, d: f64) -> f64 {
    (1.0 / d - 1.0 / d1).max(0.0)
}

/// Error variance of `X'` given `U2, U3`, from the noise precisions.
///
/// Equivalent to `d1 s2 s3 (1-rho^2) / (s2 s3 (1-rho^2) + d1 (s2 + s3 - 2 rho sqrt(s2 s3)))`
/// with `s_m = sigma_m^2`, and finite when a description is useless.
pub fn pre_refinement_distortion(d1: f64, a2: f64, a3: f64, rho: f64) -> f64 {
    let info = (a2 + a3 - 2.0 * rho * (a2 * a3).sqrt()) / (1.0 - rho * rho);
    1.0 / (1.0 / d1 + info)
}

/// Solves the construction in closed form for the target side distortions.
pub fn construct_channel(
    source: &GaussianSource,
    rates: &RateTuple,
    d2: f64,
    d3: f64,
) -> Result<TestChannel> {
    DistortionTuple::new(FirstDistortion::Unconstrained, d2, d3, 1.0)?;
    check_individual(source, rates, FirstDistortion::Unconstrained, d2, d3)?;
    let d1 = source.distortion_at(rates.r1());
    for (name, d) in [("d2", d2), ("d3", d3)] {
        if !at_least(d1, d) {
            return Err(Error::OutOfRegime(format!(
                "{name} = {d} exceeds d1* = {d1}"
            )));
        }
    }
    let (d2, d3) = (d2.min(d1), d3.min(d1));
    let s = (-2.0 * (rates.r2() + rates.r3())).exp();
    // Pi >= Delta  <=>  d2 + d3 <= d1 (1 + s)
    if d2 + d3 > d1 * (1.0 + s) * (1.0 + FEASIBILITY_RTOL) {
        return Err(Error::OutOfRegime(format!(
            "Pi < Delta at d2 = {d2}, d3 = {d3}; adjust the side distortions first"
        )));
    }

    let sigma1_sq = noise_for_rate(source.variance(), rates.r1());
    let (a2, a3) = (side_precision(d1, d2), side_precision(d1, d3));
    let sigma2_sq = 1.0 / a2;
    let sigma3_sq = 1.0 / a3;
    let rho = -(1.0 - d1 * d1 * s / (d2 * d3)).max(0.0).sqrt();
    let d4_star = pre_refinement_distortion(d1, a2, a3, rho);
    let sigma4_sq = noise_for_rate(d4_star, rates.r4());
    Ok(TestChannel {
        sigma1_sq,
        sigma2_sq,
        sigma3_sq,
        sigma4_sq,
        rho,
        d4_star,
    })
}

/// Side distortions lowered onto the `Pi = Delta` line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateAdjustment {
    pub d2_prime: f64,
    pub d3_prime: f64,
}

/// Moves `(d2, d3)` proportionally toward their floors `d1 exp(-2 R_m)`
/// until `d2' + d3' = d1 (1 + exp(-2 (R2 + R3)))`.
pub fn degenerate_adjust(
    source: &GaussianSource,
    rates: &RateTuple,
    d2: f64,
    d3: f64,
) -> Result<DegenerateAdjustment> {
    DistortionTuple::new(FirstDistortion::Unconstrained, d2, d3, 1.0)?;
    check_individual(source, rates, FirstDistortion::Unconstrained, d2, d3)?;
    let d1 = source.distortion_at(rates.r1());
    let (d2, d3) = (d2.min(d1), d3.min(d1));
    let s = (-2.0 * (rates.r2() + rates.r3())).exp();
    let terms = central_terms(d2 / d1, d3 / d1, s)?;
    if !terms.degenerate() {
        return Err(Error::OutOfRegime(format!(
            "Pi = {} >= Delta = {}; no adjustment needed",
            terms.pi, terms.delta
        )));
    }
    let f2 = d1 * (-2.0 * rates.r2()).exp();
    let f3 = d1 * (-2.0 * rates.r3()).exp();
    let target = d1 * (1.0 + s);
    let theta = ((d2 + d3 - target) / (d2 + d3 - f2 - f3)).clamp(0.0, 1.0);
    Ok(DegenerateAdjustment {
        d2_prime: d2 - theta * (d2 - f2),
        d3_prime: d3 - theta * (d3 - f3),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    /// Distortions of the conditional-mean decoders, from the covariance.
    pub achieved: DistortionTuple,
    pub channel: TestChannel,
    pub adjustment: Option<DegenerateAdjustment>,
    /// Central distortion of the construction in closed form.
    pub d4_closed_form: f64,
    pub d4_bound: f64,
    pub matches_bound: bool,
}

/// Builds the test channel for `(d2, d3)` (adjusting first in the
/// degenerate regime), evaluates every decoder by Schur complement, and
/// compares the result against the distortion-rate bounds.
pub fn certify_achievability(
    source: &GaussianSource,
    rates: &RateTuple,
    d2: f64,
    d3: f64,
) -> Result<Certification> {
    let bound = dr_bound(source, rates, FirstDistortion::Unconstrained, d2, d3)?;
    let (mut t2, mut t3) = (bound.d2_hat, bound.d3_hat);
    let adjustment = if bound.pi < bound.delta {
        let adj = degenerate_adjust(source, rates, t2, t3)?;
        (t2, t3) = (adj.d2_prime, adj.d3_prime);
        Some(adj)
    } else {
        None
    };
    let channel = construct_channel(source, rates, t2, t3)?;
    let cov = assemble_msr_covariance(source, &channel)?;
    let achieved = achieved_distortions(&cov, &channel)?;

    let d1_star = bound.d1_star;
    let d4_closed_form = channel.d4_star * (-2.0 * rates.r4()).exp();
    let close = |a: f64, b: f64| (a - b).abs() <= CERTIFY_RTOL * b;
    let matches_bound = close(achieved.d1().effective(source), d1_star)
        && achieved.d2() <= d2 * (1.0 + CERTIFY_RTOL)
        && achieved.d3() <= d3 * (1.0 + CERTIFY_RTOL)
        && close(achieved.d4(), bound.d4_bound);
    Ok(Certification {
        achieved,
        channel,
        adjustment,
        d4_closed_form,
        d4_bound: bound.d4_bound,
        matches_bound,
    })
}

/// MSE of the four conditional-mean decoders of the construction:
/// `E[X|U1]`, then `X_hat1 + E[X'|.]` for the refinements.
pub fn achieved_distortions(cov: &CovarianceMatrix, channel: &TestChannel) -> Result<DistortionTuple> {
    use msr_index::*;
    let first: Vec<usize> = if channel.sigma1_sq.is_finite() {
        vec![U1]
    } else {
        Vec::new()
    };
    let refine = |idx: usize, var: f64| -> Vec<usize> {
        if var.is_finite() {
            vec![idx]
        } else {
            Vec::new()
        }
    };
    let d1 = conditional_mmse(cov, X, &first)?.error_variance;
    let d2 = conditional_mmse(cov, X_INNOVATION, &refine(U2, channel.sigma2_sq))?.error_variance;
    let d3 = conditional_mmse(cov, X_INNOVATION, &refine(U3, channel.sigma3_sq))?.error_variance;
    let d4 = conditional_mmse(cov, X_INNOVATION, &channel.informative_refinements())?.error_variance;
    DistortionTuple::new(d1, d2, d3, d4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::dr_bound;
    use proptest::prelude::*;

    fn rates(r: [f64; 4]) -> RateTuple {
        RateTuple::new(r[0], r[1], r[2], r[3]).unwrap()
    }

    #[test]
    fn symmetric_point_channel() {
        let src = GaussianSource::unit();
        let r = rates([0.0, 0.5, 0.5, 0.0]);
        let ch = construct_channel(&src, &r, 0.45, 0.45).unwrap();
        let expect_rho = -(1.0 - (-2.0f64).exp() / 0.2025).sqrt();
        assert!((ch.rho - expect_rho).abs() < 1e-15);
        assert!((ch.rho + 0.575_914_588_846_607_6).abs() < 1e-12);
        assert!(ch.sigma1_sq.is_infinite() && ch.sigma4_sq.is_infinite());
        let cert = certify_achievability(&src, &r, 0.45, 0.45).unwrap();
        assert!(cert.matches_bound);
        assert!((cert.achieved.d4() - 0.147_840_682_336_216_4).abs() < 1e-12);
        assert_eq!(cert.achieved.d4(), {
            let cov = assemble_msr_covariance(&src, &ch).unwrap();
            achieved_distortions(&cov, &ch).unwrap().d4()
        });
    }

    #[test]
    fn zero_refinement_rate_leaves_d4_star() {
        let src = GaussianSource::unit();
        let ch = construct_channel(&src, &rates([0.3, 0.5, 0.4, 0.0]), 0.25, 0.3).unwrap();
        assert!(ch.sigma4_sq.is_infinite());
        let cov = assemble_msr_covariance(&src, &ch).unwrap();
        let a = achieved_distortions(&cov, &ch).unwrap();
        assert!((a.d4() - ch.d4_star).abs() < 1e-12 * ch.d4_star);
    }

    #[test]
    fn fully_used_side_rates_give_zero_correlation() {
        let src = GaussianSource::unit();
        let r = rates([0.2, 0.4, 0.6, 0.1]);
        let d1 = src.distortion_at(0.2);
        let (d2, d3) = (d1 * (-0.8f64).exp(), d1 * (-1.2f64).exp());
        let b = dr_bound(&src, &r, FirstDistortion::Unconstrained, d2, d3).unwrap();
        assert!(b.delta.abs() < 1e-15);
        let ch = construct_channel(&src, &r, d2, d3).unwrap();
        assert!(ch.rho.abs() < 1e-7, "rho = {}", ch.rho);
    }

    #[test]
    fn proportional_adjustment() {
        let src = GaussianSource::unit();
        let r = rates([0.0, 0.5, 0.5, 0.0]);
        let adj = degenerate_adjust(&src, &r, 1.0, 1.0).unwrap();
        let expect = (1.0 + (-2.0f64).exp()) / 2.0;
        assert!((adj.d2_prime - expect).abs() < 1e-15);
        assert!((adj.d2_prime - 0.56767).abs() < 1e-5);
        assert_eq!(adj.d2_prime, adj.d3_prime);
        let cert = certify_achievability(&src, &r, 1.0, 1.0).unwrap();
        assert!(cert.matches_bound);
        assert!((cert.achieved.d4() - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn adjustment_requires_strict_degeneracy() {
        let src = GaussianSource::unit();
        // R2 = R3 = 0, d2 = d3 = 1: Pi = Delta = 0 exactly
        let err = degenerate_adjust(&src, &rates([0.0, 0.0, 0.0, 0.0]), 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::OutOfRegime(_)));
        let err = construct_channel(&src, &rates([0.0, 0.5, 0.5, 0.0]), 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::OutOfRegime(_)));
    }

    #[test]
    fn zero_rate_certificate() {
        let src = GaussianSource::new(2.0).unwrap();
        let cert = certify_achievability(&src, &rates([0.0; 4]), 2.0, 2.0).unwrap();
        let a = cert.achieved;
        assert_eq!(
            [a.d1().effective(&src), a.d2(), a.d3(), a.d4()],
            [2.0, 2.0, 2.0, 2.0]
        );
        assert!(cert.matches_bound);
    }

    #[test]
    fn closed_form_matches_printed_structure() {
        // finite noises: compare against the sigma form of d4*
        let (d1, s2, s3, rho): (f64, f64, f64, f64) = (0.6, 0.4, 0.9, -0.35);
        let num = d1 * s2 * s3 * (1.0 - rho * rho);
        let den = s2 * s3 * (1.0 - rho * rho) + d1 * (s2 + s3 - 2.0 * rho * (s2 * s3).sqrt());
        let v = pre_refinement_distortion(d1, 1.0 / s2, 1.0 / s3, rho);
        assert!((v - num / den).abs() < 1e-15);
    }

    fn instance() -> impl Strategy<Value = (RateTuple, f64, f64)> {
        (prop::array::uniform4(0.0f64..3.0), 0.0f64..1.0, 0.0f64..1.0).prop_map(|(r, u, v)| {
            let d1 = (-2.0 * r[0]).exp();
            let f2 = d1 * (-2.0 * r[1]).exp();
            let f3 = d1 * (-2.0 * r[2]).exp();
            (rates(r), f2 + u * (d1 - f2), f3 + v * (d1 - f3))
        })
    }

    proptest! {
        #[test]
        fn certificate_is_tight((r, d2, d3) in instance()) {
            let src = GaussianSource::unit();
            let cert = certify_achievability(&src, &r, d2, d3).unwrap();
            prop_assert!(cert.matches_bound, "{:?}", cert);
            let d1 = cert.achieved.d1().effective(&src);
            prop_assert!((d1 - src.distortion_at(r.r1())).abs() <= 1e-12 * d1);
            prop_assert!((cert.d4_closed_form - cert.achieved.d4()).abs() <= 1e-10 * cert.d4_closed_form);
        }

        #[test]
        fn rho_is_non_positive((r, d2, d3) in instance()) {
            let src = GaussianSource::unit();
            if let Ok(ch) = construct_channel(&src, &r, d2, d3) {
                prop_assert!((-1.0..=0.0).contains(&ch.rho));
            }
        }

        #[test]
        fn adjustment_invariants((r, d2, d3) in instance()) {
            let src = GaussianSource::unit();
            if let Ok(adj) = degenerate_adjust(&src, &r, d2, d3) {
                let d1 = src.distortion_at(r.r1());
                let s = (-2.0 * (r.r2() + r.r3())).exp();
                prop_assert!(adj.d2_prime <= d2 && adj.d3_prime <= d3);
                prop_assert!(adj.d2_prime >= d1 * (-2.0 * r.r2()).exp() * (1.0 - 1e-12));
                prop_assert!(adj.d3_prime >= d1 * (-2.0 * r.r3()).exp() * (1.0 - 1e-12));
                prop_assert!((adj.d2_prime + adj.d3_prime - d1 * (1.0 + s)).abs() <= 1e-12 * d1);
            }
        }
    }
}
