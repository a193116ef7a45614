//! Shared domain types: the Gaussian source, rate and distortion tuples,
//! regime tags and rate units.
//!
//! All rates are stored in nats. Distortions are mean squared errors in
//! squared source units.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Relative slack used for every boundary comparison against an
/// exponential floor.
pub const FEASIBILITY_RTOL: f64 = 1e-12;

/// Memoryless zero-mean Gaussian source with variance `variance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSource {
    variance: f64,
}

impl GaussianSource {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "source variance must be positive and finite, got {variance}"
            )));
        }
        Ok(Self { variance })
    }

    pub fn unit() -> Self {
        Self { variance: 1.0 }
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Gaussian distortion-rate function `variance * exp(-2 rate)`.
    pub fn distortion_at(&self, rate: f64) -> f64 {
        self.variance * (-2.0 * rate).exp()
    }
}

/// Rates of the four descriptions, in nats per source symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTuple {
    r1: f64,
    r2: f64,
    r3: f64,
    r4: f64,
}

impl RateTuple {
    pub fn new(r1: f64, r2: f64, r3: f64, r4: f64) -> Result<Self> {
        for (name, r) in [("R1", r1), ("R2", r2), ("R3", r3), ("R4", r4)] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be non-negative and finite, got {r}"
                )));
            }
        }
        Ok(Self { r1, r2, r3, r4 })
    }

    /// Two-description rates: `R1 = R4 = 0`.
    pub fn md(r2: f64, r3: f64) -> Result<Self> {
        Self::new(0.0, r2, r3, 0.0)
    }

    pub fn from_slice(rates: &[f64]) -> Result<Self> {
        match *rates {
            [r1, r2, r3, r4] => Self::new(r1, r2, r3, r4),
            _ => Err(Error::InvalidInput(format!(
                "expected 4 rates, got {}",
                rates.len()
            ))),
        }
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn r2(&self) -> f64 {
        self.r2
    }
    pub fn r3(&self) -> f64 {
        self.r3
    }
    pub fn r4(&self) -> f64 {
        self.r4
    }

    pub fn sum(&self) -> f64 {
        self.r1 + self.r2 + self.r3 + self.r4
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.r1, self.r2, self.r3, self.r4]
    }
}

/// Constraint on the first-layer reconstruction. The two-description
/// reduction leaves it unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstDistortion {
    Constrained(f64),
    Unconstrained,
}

impl FirstDistortion {
    /// Value used in derived quantities; unconstrained behaves as the
    /// source variance.
    pub fn effective(&self, source: &GaussianSource) -> f64 {
        match *self {
            FirstDistortion::Constrained(d) => d,
            FirstDistortion::Unconstrained => source.variance(),
        }
    }

    pub fn is_constrained(&self) -> bool {
        matches!(self, FirstDistortion::Constrained(_))
    }
}

impl From<f64> for FirstDistortion {
    fn from(d: f64) -> Self {
        if d.is_infinite() && d > 0.0 {
            FirstDistortion::Unconstrained
        } else {
            FirstDistortion::Constrained(d)
        }
    }
}

/// Target distortions of the four decoders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionTuple {
    d1: FirstDistortion,
    d2: f64,
    d3: f64,
    d4: f64,
}

fn check_distortion(name: &str, d: f64) -> Result<()> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {d}"
        )))
    }
}

impl DistortionTuple {
    pub fn new(d1: impl Into<FirstDistortion>, d2: f64, d3: f64, d4: f64) -> Result<Self> {
        let d1 = d1.into();
        if let FirstDistortion::Constrained(v) = d1 {
            check_distortion("d1", v)?;
        }
        check_distortion("d2", d2)?;
        check_distortion("d3", d3)?;
        check_distortion("d4", d4)?;
        Ok(Self { d1, d2, d3, d4 })
    }

    pub fn d1(&self) -> FirstDistortion {
        self.d1
    }
    pub fn d2(&self) -> f64 {
        self.d2
    }
    pub fn d3(&self) -> f64 {
        self.d3
    }
    pub fn d4(&self) -> f64 {
        self.d4
    }
}

/// Which branch of a region formula produced an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeTag {
    /// D-R evaluation with `Pi >= Delta`.
    NonDegenerate,
    /// D-R evaluation with `Pi < Delta`; the central bound collapses to
    /// the single-description floor.
    DegeneratePiLessDelta,
    /// R-D evaluation where the sum rate is `R(d4_hat / d1*)`.
    RdRegimeLow,
    /// R-D evaluation where the individual bounds imply the sum bound.
    RdRegimeSlack,
    /// R-D evaluation needing the excess rate `L`.
    RdRegimeExcess,
}

impl RegimeTag {
    pub fn is_dr(&self) -> bool {
        matches!(
            self,
            RegimeTag::NonDegenerate | RegimeTag::DegeneratePiLessDelta
        )
    }

    pub fn is_rd(&self) -> bool {
        !self.is_dr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    #[default]
    Nats,
    Bits,
}

impl std::str::FromStr for RateUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nats" | "nat" => Ok(RateUnit::Nats),
            "bits" | "bit" => Ok(RateUnit::Bits),
            other => Err(Error::InvalidInput(format!("unknown rate unit '{other}'"))),
        }
    }
}

impl std::fmt::Display for RateUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateUnit::Nats => f.write_str("nats"),
            RateUnit::Bits => f.write_str("bits"),
        }
    }
}

/// Converts a rate between nats and bits (1 bit = ln 2 nats).
pub fn convert_rate(r: f64, from: RateUnit, to: RateUnit) -> f64 {
    match (from, to) {
        (RateUnit::Bits, RateUnit::Nats) => r * LN_2,
        (RateUnit::Nats, RateUnit::Bits) => r / LN_2,
        _ => r,
    }
}

/// `R(D) = 1/2 ln(1/D)` for a normalized distortion `D`.
pub fn rate_of(normalized_distortion: f64) -> f64 {
    // + 0.0 turns -0.0 at D = 1 into 0.0
    -0.5 * normalized_distortion.ln() + 0.0
}

/// `value >= floor` with relative slack [`FEASIBILITY_RTOL`].
pub(crate) fn at_least(value: f64, floor: f64) -> bool {
    value >= floor * (1.0 - FEASIBILITY_RTOL)
}

/// Checks the three single-branch bounds
/// `d1 >= s exp(-2R1)`, `d2 >= s exp(-2(R1+R2))`, `d3 >= s exp(-2(R1+R3))`.
pub fn feasible_individual(
    source: &GaussianSource,
    rates: &RateTuple,
    dist: &DistortionTuple,
) -> bool {
    check_individual(source, rates, dist.d1(), dist.d2(), dist.d3()).is_ok()
}

/// Same test as [`feasible_individual`], reporting the first violated bound.
pub(crate) fn check_individual(
    source: &GaussianSource,
    rates: &RateTuple,
    d1: FirstDistortion,
    d2: f64,
    d3: f64,
) -> Result<()> {
    if let FirstDistortion::Constrained(d1) = d1 {
        let floor = source.distortion_at(rates.r1());
        if !at_least(d1, floor) {
            return Err(Error::InfeasibleDistortion {
                name: "d1",
                value: d1,
                floor,
            });
        }
    }
    let floor = source.distortion_at(rates.r1() + rates.r2());
    if !at_least(d2, floor) {
        return Err(Error::InfeasibleDistortion {
            name: "d2",
            value: d2,
            floor,
        });
    }
    let floor = source.distortion_at(rates.r1() + rates.r3());
    if !at_least(d3, floor) {
        return Err(Error::InfeasibleDistortion {
            name: "d3",
            value: d3,
            floor,
        });
    }
    Ok(())
}
