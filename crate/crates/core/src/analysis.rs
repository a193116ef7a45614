//! Comparison studies built on the Gaussian regions: Wyner-Ziv versus
//! multiple-description layering, the loss of a fixed channel configuration,
//! central refinement in multiple descriptions and high-rate asymptotics of
//! balanced descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{at_least, FirstDistortion, GaussianSource, RateTuple};
use crate::regions::{dr_bound, DrBoundResult};

/// Degraded side-information noises of the Wyner-Ziv layering, matched to
/// `d1* = var exp(-2 R1)` and `d2* = var exp(-2 (R1 + R2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WzChannel {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    /// `sigma2^2 / (sigma1^2 + sigma2^2)`
    pub gamma: f64,
}

impl WzChannel {
    pub fn solve(source: &GaussianSource, r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > 0.0 && r1.is_finite() && r2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "side-information rates must be positive, got R1 = {r1}, R2 = {r2}"
            )));
        }
        let var = source.variance();
        // d = var s / (var + s)  <=>  s = var / expm1(2 R)
        let total = var / (2.0 * r1).exp_m1();
        let sigma2_sq = var / (2.0 * (r1 + r2)).exp_m1();
        let sigma1_sq = total - sigma2_sq;
        Ok(Self {
            sigma1_sq,
            sigma2_sq,
            gamma: sigma2_sq / total,
        })
    }
}

/// Smallest `d4'` of the Wyner-Ziv layering with `d1 = d1*` and `d2 = d2*`.
pub fn wz_region(source: &GaussianSource, rates: &RateTuple, d3_prime: f64) -> Result<f64> {
    let var = source.variance();
    let floor = source.distortion_at(rates.r1() + rates.r3());
    if !(d3_prime.is_finite() && d3_prime > 0.0) {
        return Err(Error::InvalidInput(format!(
            "d3' must be positive and finite, got {d3_prime}"
        )));
    }
    if !at_least(d3_prime, floor) {
        return Err(Error::InfeasibleDistortion {
            name: "d3",
            value: d3_prime,
            floor,
        });
    }
    let ch = WzChannel::solve(source, rates.r1(), rates.r2())?;
    let d1_star = source.distortion_at(rates.r1());
    let (s1, s2, g) = (ch.sigma1_sq, ch.sigma2_sq, ch.gamma);
    let num = var * s1 * s2;
    let den = (var + s1 + s2) * ((1.0 - g).powi(2) * d3_prime.min(d1_star) + g * s1);
    Ok((-2.0 * (rates.r3() + rates.r4())).exp() * num / den)
}

/// The distortion-rate bound with `d2 = d2*`, along with `Pi` and `Delta` from
/// their specialized expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdSlice {
    pub bound: DrBoundResult,
    pub pi_special: f64,
    pub delta_special: f64,
}

pub fn md_region_slice(source: &GaussianSource, rates: &RateTuple, d3: f64) -> Result<MdSlice> {
    let d2_star = source.distortion_at(rates.r1() + rates.r2());
    let bound = dr_bound(source, rates, FirstDistortion::Unconstrained, d2_star, d3)?;
    let e2 = (-2.0 * rates.r2()).exp();
    let z = bound.d3_hat / bound.d1_star;
    Ok(MdSlice {
        bound,
        pi_special: -(-2.0 * rates.r2()).exp_m1() * (1.0 - z),
        delta_special: (e2 * (z - (-2.0 * rates.r3()).exp())).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub d3: f64,
    pub d4_wz: f64,
    pub d4_md: f64,
    pub gap: f64,
}

/// Both `(d3, d4)` tradeoffs on `n` evenly spaced points of
/// `[var exp(-2 (R1 + R3)), d1*]`, endpoints included exactly.
pub fn wz_md_sweep(source: &GaussianSource, rates: &RateTuple, n: usize) -> Result<Vec<Fig3Row>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {n}")));
    }
    let lo = source.distortion_at(rates.r1() + rates.r3());
    let hi = source.distortion_at(rates.r1());
    (0..n)
        .map(|i| {
            let d3 = match i {
                0 => lo,
                _ if i == n - 1 => hi,
                _ => lo + (hi - lo) * i as f64 / (n - 1) as f64,
            };
            let d4_wz = wz_region(source, rates, d3)?;
            let d4_md = md_region_slice(source, rates, d3)?.bound.d4_bound;
            Ok(Fig3Row {
                d3,
                d4_wz,
                d4_md,
                gap: d4_wz - d4_md,
            })
        })
        .collect()
}

/// `R2 = alpha R1` and `R4 = alpha R3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedChannelConfig {
    alpha: f64,
}

impl FixedChannelConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rates(&self, r1: f64, r3: f64) -> Result<RateTuple> {
        RateTuple::new(r1, self.alpha * r1, r3, self.alpha * r3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedChannelLoss {
    /// `d2 / d2*`
    pub ratio: f64,
    /// Smallest `d2` compatible with second-layer-optimal `d3` and `d4`.
    pub d2_floor: f64,
    /// `var exp(-2 (1 + alpha) R1)`
    pub d2_star: f64,
}

/// Loss on `d2` when the system is forced to second-layer-optimal `d3, d4`.
pub fn fixed_channel_loss(
    source: &GaussianSource,
    r1: f64,
    r3: f64,
    config: FixedChannelConfig,
) -> FixedChannelLoss {
    let a = config.alpha * r1;
    let d1_star = source.distortion_at(r1);
    FixedChannelLoss {
        ratio: (2.0 * a).exp() + (-2.0 * r3).exp() - (2.0 * (a - r3)).exp(),
        d2_floor: d1_star * (1.0 + (-2.0 * (a + r3)).exp() - (-2.0 * r3).exp()),
        d2_star: source.distortion_at(r1 + a),
    }
}

/// `R2' = R2 + beta R4`, `R3' = R3 + (1 - beta) R4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdcrSplit {
    beta: f64,
}

impl MdcrSplit {
    pub fn new(beta: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&beta) {
            Ok(Self { beta })
        } else {
            Err(Error::InvalidInput(format!("beta must lie in [0, 1], got {beta}")))
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdcrComparison {
    pub d4_mdcr: f64,
    pub d4_md: f64,
    /// `d4_mdcr / d4_md`
    pub ratio: f64,
    pub r2_prime: f64,
    pub r3_prime: f64,
}

/// Central distortion of a refinement-layer system against the plain
/// two-description system of equal total rate.
pub fn mdcr_compare(
    source: &GaussianSource,
    r2: f64,
    r3: f64,
    r4: f64,
    split: MdcrSplit,
    d2: f64,
    d3: f64,
) -> Result<MdcrComparison> {
    let var = source.variance();
    if !(d2 < var && d3 < var) {
        return Err(Error::InvalidInput(format!(
            "side distortions must be below the variance {var}"
        )));
    }
    let mdcr = dr_bound(source, &RateTuple::new(0.0, r2, r3, r4)?, var, d2, d3)?;
    let (r2p, r3p) = (r2 + split.beta * r4, r3 + (1.0 - split.beta) * r4);
    let md = dr_bound(source, &RateTuple::md(r2p, r3p)?, var, d2, d3)?;
    if md.pi < md.delta {
        return Err(Error::OutOfRegime(format!(
            "two-description system is degenerate: Pi' = {} < Delta' = {}",
            md.pi, md.delta
        )));
    }
    Ok(MdcrComparison {
        d4_mdcr: mdcr.d4_bound,
        d4_md: md.d4_bound,
        ratio: mdcr.d4_bound / md.d4_bound,
        r2_prime: r2p,
        r3_prime: r3p,
    })
}

/// Balanced high-rate descriptions of a unit-variance source: per-description
/// rate `R'`, side distortion `b exp(-2 (1 - eta) R')`, and a refinement of
/// rate `2 eta1 R'` in the refined variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConfig {
    r_prime: f64,
    b: f64,
    eta: f64,
    eta1: f64,
}

impl AsymptoticConfig {
    pub fn new(r_prime: f64, b: f64, eta: f64, eta1: f64) -> Result<Self> {
        if !(r_prime.is_finite() && r_prime > 0.0) {
            return Err(Error::InvalidInput(format!("R' must be positive, got {r_prime}")));
        }
        if !(b.is_finite() && b >= 1.0) {
            return Err(Error::InvalidInput(format!("b must be at least 1, got {b}")));
        }
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::InvalidInput(format!("eta must lie in [0, 1), got {eta}")));
        }
        if !(0.0..=eta).contains(&eta1) {
            return Err(Error::InvalidInput(format!(
                "eta1 must lie in [0, eta], got {eta1}"
            )));
        }
        Ok(Self {
            r_prime,
            b,
            eta,
            eta1,
        })
    }

    pub fn r_prime(&self) -> f64 {
        self.r_prime
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn with_rate(&self, r_prime: f64) -> Result<Self> {
        Self::new(r_prime, self.b, self.eta, self.eta1)
    }

    pub fn side_distortion(&self) -> f64 {
        self.b * (-2.0 * (1.0 - self.eta) * self.r_prime).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptote {
    pub d4_asymptote_md: f64,
    pub d4_asymptote_mdcr: f64,
    /// Floor on `d4' d2'`.
    pub product_bound: f64,
}

pub fn high_rate_asymptote(config: &AsymptoticConfig) -> Asymptote {
    let AsymptoticConfig {
        r_prime: r,
        b,
        eta,
        eta1,
    } = *config;
    let tight = 2.0 * (b + (b * b - 1.0).sqrt());
    let d4_asymptote_md = if eta == 0.0 {
        (-2.0 * r).exp() / tight
    } else {
        (-2.0 * r * (1.0 + eta)).exp() / (4.0 * b)
    };
    let base = (-2.0 * r * (1.0 + eta)).exp();
    let d4_asymptote_mdcr = if eta1 == eta {
        base / tight
    } else {
        base / (4.0 * b)
    };
    Asymptote {
        d4_asymptote_md,
        d4_asymptote_mdcr,
        product_bound: (-4.0 * r).exp() / 4.0,
    }
}

/// Exact central-distortion bound of the balanced two-description system.
pub fn balanced_md_d4(config: &AsymptoticConfig) -> Result<f64> {
    let r = config.r_prime;
    let d = config.side_distortion();
    Ok(dr_bound(&GaussianSource::unit(), &RateTuple::md(r, r)?, 1.0, d, d)?.d4_bound)
}

/// Exact central-distortion bound of the refined variant: descriptions of
/// rate `R' (1 - eta1)` each plus a refinement of rate `2 eta1 R'`.
pub fn balanced_mdcr_d4(config: &AsymptoticConfig) -> Result<f64> {
    let r = config.r_prime * (1.0 - config.eta1);
    let d = config.side_distortion();
    let rates = RateTuple::new(0.0, r, r, 2.0 * config.eta1 * config.r_prime)?;
    Ok(dr_bound(&GaussianSource::unit(), &rates, 1.0, d, d)?.d4_bound)
}

/// Exact loss factor of the refined variant over plain descriptions.
pub fn mdcr_loss_factor(config: &AsymptoticConfig) -> Result<f64> {
    Ok(balanced_mdcr_d4(config)? / balanced_md_d4(config)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub r_prime: f64,
    pub exact: f64,
    pub asymptote: f64,
    /// `exact / asymptote`
    pub ratio: f64,
}

/// Exact over asymptotic central distortion of the plain descriptions at
/// each `R'` of an increasing grid (values at least 1 nat).
pub fn asymptote_convergence(
    config: &AsymptoticConfig,
    r_grid: &[f64],
) -> Result<Vec<ConvergenceRow>> {
    if r_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("rate grid must be increasing".into()));
    }
    if let Some(r) = r_grid.iter().find(|&&r| !(r >= 1.0)) {
        return Err(Error::InvalidInput(format!(
            "grid rates must be at least 1 nat, got {r}"
        )));
    }
    r_grid
        .iter()
        .map(|&r| {
            let c = config.with_rate(r)?;
            let exact = balanced_md_d4(&c)?;
            let asymptote = high_rate_asymptote(&c).d4_asymptote_md;
            Ok(ConvergenceRow {
                r_prime: r,
                exact,
                asymptote,
                ratio: exact / asymptote,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> RateTuple {
        RateTuple::new(1.0, 0.5, 1.0, 0.5).unwrap()
    }

    #[test]
    fn wz_channel_matches_floors() {
        let src = GaussianSource::new(1.7).unwrap();
        let ch = WzChannel::solve(&src, 0.8, 0.3).unwrap();
        let var = 1.7;
        let (s1, s2) = (ch.sigma1_sq, ch.sigma2_sq);
        let d1 = var * (s1 + s2) / (var + s1 + s2);
        let d2 = var * s2 / (var + s2);
        assert!((d1 - src.distortion_at(0.8)).abs() < 1e-14);
        assert!((d2 - src.distortion_at(1.1)).abs() < 1e-14);
        assert!(ch.gamma > 0.0 && ch.gamma < 1.0);
        assert!(WzChannel::solve(&src, 0.0, 0.3).is_err());
    }

    #[test]
    fn wz_endpoints_meet_md() {
        let src = GaussianSource::unit();
        for d3 in [(-4.0f64).exp(), (-2.0f64).exp()] {
            let wz = wz_region(&src, &fig3(), d3).unwrap();
            let md = md_region_slice(&src, &fig3(), d3).unwrap().bound.d4_bound;
            assert!((wz - md).abs() < 1e-9, "{wz} vs {md}");
        }
        assert!(matches!(
            wz_region(&src, &fig3(), 0.9 * (-4.0f64).exp()),
            Err(Error::InfeasibleDistortion { .. })
        ));
    }

    #[test]
    fn special_terms_vanish_at_ends() {
        let src = GaussianSource::unit();
        let s = md_region_slice(&src, &fig3(), (-2.0f64).exp()).unwrap();
        assert_eq!(s.pi_special, 0.0);
        let s = md_region_slice(&src, &fig3(), (-4.0f64).exp()).unwrap();
        assert!(s.delta_special.abs() < 1e-16);
    }

    #[test]
    fn sweep_has_exact_endpoints() {
        let rows = wz_md_sweep(&GaussianSource::unit(), &fig3(), 200).unwrap();
        assert_eq!(rows.len(), 200);
        assert_eq!(rows[0].d3, (-4.0f64).exp());
        assert_eq!(rows[199].d3, (-2.0f64).exp());
        assert!(rows.iter().all(|r| r.gap >= -1e-9));
        assert!(rows[100].gap > 1e-6);
    }

    #[test]
    fn loss_plug_in() {
        let src = GaussianSource::unit();
        let l = fixed_channel_loss(&src, 1.0, 1.0, FixedChannelConfig::new(1.0).unwrap());
        let e2 = 2f64.exp();
        assert!((l.ratio - (e2 + 1.0 / e2 - 1.0)).abs() < 1e-12);
        assert!((l.d2_floor / l.d2_star - l.ratio).abs() < 1e-12 * l.ratio);
        let tiny = fixed_channel_loss(&src, 1.0, 1.0, FixedChannelConfig::new(1e-6).unwrap());
        assert!((tiny.ratio - 1.0).abs() < 1e-4);
        assert!(FixedChannelConfig::new(0.0).is_err());
    }

    #[test]
    fn mdcr_zero_refinement_is_identity() {
        let src = GaussianSource::unit();
        let split = MdcrSplit::new(0.5).unwrap();
        let c = mdcr_compare(&src, 0.5, 0.5, 0.0, split, 0.45, 0.45).unwrap();
        assert_eq!(c.ratio, 1.0);
        let c = mdcr_compare(&src, 0.5, 0.5, 0.4, split, 0.45, 0.45).unwrap();
        assert!(c.ratio > 1.0 + 1e-9);
        assert!(MdcrSplit::new(1.5).is_err());
    }

    #[test]
    fn asymptote_branches() {
        let c = AsymptoticConfig::new(3.0, 1.0, 0.0, 0.0).unwrap();
        assert!((high_rate_asymptote(&c).d4_asymptote_md - (-6.0f64).exp() / 2.0).abs() < 1e-18);
        let c = AsymptoticConfig::new(3.0, 2.0, 0.3, 0.1).unwrap();
        let a = high_rate_asymptote(&c);
        assert!((a.d4_asymptote_md - (-2.0 * 1.3 * 3.0f64).exp() / 8.0).abs() < 1e-18);
        assert_eq!(a.d4_asymptote_mdcr, a.d4_asymptote_md);
        let c = AsymptoticConfig::new(3.0, 1.0, 0.3, 0.3).unwrap();
        let a = high_rate_asymptote(&c);
        assert!((a.d4_asymptote_mdcr / a.d4_asymptote_md - 2.0).abs() < 1e-12);
        assert!(AsymptoticConfig::new(3.0, 0.5, 0.3, 0.3).is_err());
        assert!(AsymptoticConfig::new(3.0, 1.0, 0.3, 0.4).is_err());
    }

    #[test]
    fn convergence_table_rejects_bad_grids() {
        let c = AsymptoticConfig::new(1.0, 1.0, 0.3, 0.3).unwrap();
        assert!(asymptote_convergence(&c, &[2.0, 1.5]).is_err());
        assert!(asymptote_convergence(&c, &[0.5]).is_err());
        let t = asymptote_convergence(&c, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!(t.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
    }
}
