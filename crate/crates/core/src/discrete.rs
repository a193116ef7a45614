//! Finite-alphabet achievable regions evaluated from an explicit joint pmf of
//! `(X, U1, U2, U3, U4)`, decoder expectations and the timesharing
//! construction.
//!
//! Variables are indexed `0 = X`, `1..=4 = U1..U4`. Probabilities are stored
//! flattened in row-major order, `X` varying slowest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ALPHABET: usize = 8;
pub const NORMALIZATION_TOL: f64 = 1e-12;
const VARS: usize = 5;

/// Joint law of `(X, U1, U2, U3, U4)` on finite alphabets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPmf", into = "RawPmf")]
pub struct JointPmf {
    sizes: [usize; VARS],
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPmf {
    alphabet_sizes: Vec<usize>,
    probabilities: Vec<f64>,
}

impl TryFrom<RawPmf> for JointPmf {
    type Error = Error;
    fn try_from(raw: RawPmf) -> Result<Self> {
        JointPmf::new(&raw.alphabet_sizes, raw.probabilities)
    }
}

impl From<JointPmf> for RawPmf {
    fn from(p: JointPmf) -> Self {
        RawPmf {
            alphabet_sizes: p.sizes.to_vec(),
            probabilities: p.probs,
        }
    }
}

impl JointPmf {
    pub fn new(alphabet_sizes: &[usize], probabilities: Vec<f64>) -> Result<Self> {
        let sizes: [usize; VARS] = alphabet_sizes.try_into().map_err(|_| {
            Error::InvalidPmf(format!(
                "expected 5 alphabet sizes, got {}",
                alphabet_sizes.len()
            ))
        })?;
        if let Some(n) = sizes.iter().find(|&&n| n == 0 || n > MAX_ALPHABET) {
            return Err(Error::InvalidPmf(format!(
                "alphabet size {n} outside 1..={MAX_ALPHABET}"
            )));
        }
        let len: usize = sizes.iter().product();
        if probabilities.len() != len {
            return Err(Error::InvalidPmf(format!(
                "{} probabilities for a tensor of {len} entries",
                probabilities.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidPmf(format!("entry {p} is not a probability")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidPmf(format!("entries sum to {total}")));
        }
        let pmf = Self {
            sizes,
            probs: probabilities,
        };
        if let Some(x) = pmf.x_marginal().iter().position(|&p| p <= 0.0) {
            return Err(Error::InvalidPmf(format!("P(X = {x}) is zero")));
        }
        Ok(pmf)
    }

    /// Builds the tensor from a function of `[x, u1, u2, u3, u4]`.
    pub fn from_fn<F>(alphabet_sizes: [usize; 5], mut f: F) -> Result<Self>
    where
        F: FnMut([usize; 5]) -> f64,
    {
        let len: usize = alphabet_sizes.iter().product();
        let probs = (0..len).map(|i| f(unflatten(&alphabet_sizes, i))).collect();
        Self::new(&alphabet_sizes, probs)
    }

    pub fn alphabet_sizes(&self) -> [usize; 5] {
        self.sizes
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, idx: [usize; 5]) -> f64 {
        self.probs[flatten(&self.sizes, idx)]
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.marginal(1)
    }

    /// Marginal over the variables in `mask` (bit `k` for variable `k`),
    /// flattened row-major over those variables in index order.
    fn marginal(&self, mask: u8) -> Vec<f64> {
        let sub = masked_sizes(&self.sizes, mask);
        let mut out = vec![0.0; sub.iter().product()];
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                out[project(&self.sizes, mask, i)] += p;
            }
        }
        out
    }

    /// `I(A; B | C)` for disjoint variable sets, by direct summation of
    /// `p(a,b,c) ln[p(a,b,c) p(c) / (p(a,c) p(b,c))]`.
    fn conditional_mi(&self, a: u8, b: u8, c: u8) -> f64 {
        let abc = a | b | c;
        let p_abc = self.marginal(abc);
        let (p_ac, p_bc, p_c) = (self.marginal(a | c), self.marginal(b | c), self.marginal(c));
        let sub = masked_sizes(&self.sizes, abc);
        let vars = members(abc);
        let mut total = 0.0;
        for (i, &p) in p_abc.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let local = unflatten(&sub, i);
            let mut full = [0usize; VARS];
            for (k, &v) in vars.iter().enumerate() {
                full[v] = local[k];
            }
            let at = |m: &[f64], mask: u8| m[flatten_masked(&self.sizes, mask, &full)];
            total += p * (p * at(&p_c, c) / (at(&p_ac, a | c) * at(&p_bc, b | c))).ln();
        }
        total.max(0.0)
    }
}

fn flatten(sizes: &[usize], idx: [usize; 5]) -> usize {
    sizes.iter().zip(idx).fold(0, |acc, (&n, i)| acc * n + i)
}

fn unflatten(sizes: &[usize], mut i: usize) -> [usize; 5] {
    let mut out = [0; VARS];
    for k in (0..sizes.len()).rev() {
        out[k] = i % sizes[k];
        i /= sizes[k];
    }
    out
}

fn members(mask: u8) -> Vec<usize> {
    (0..VARS).filter(|k| mask & (1 << k) != 0).collect()
}

fn masked_sizes(sizes: &[usize; VARS], mask: u8) -> Vec<usize> {
    members(mask).into_iter().map(|k| sizes[k]).collect()
}

fn flatten_masked(sizes: &[usize; VARS], mask: u8, full: &[usize; VARS]) -> usize {
    members(mask)
        .into_iter()
        .fold(0, |acc, k| acc * sizes[k] + full[k])
}

fn project(sizes: &[usize; VARS], mask: u8, i: usize) -> usize {
    flatten_masked(sizes, mask, &unflatten(sizes, i))
}

const X: u8 = 1;
const U1: u8 = 1 << 1;
const U2: u8 = 1 << 2;
const U3: u8 = 1 << 3;
const U4: u8 = 1 << 4;

/// Lower bounds on the cumulative rates, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRegionBounds {
    /// on `R1`
    pub b1: f64,
    /// on `R1 + R2`
    pub b12: f64,
    /// on `R1 + R3`
    pub b13: f64,
    /// on `R1 + R2 + R3`
    pub b123: f64,
    /// on `R1 + R2 + R3 + R4`
    pub b1234: f64,
}

impl RateRegionBounds {
    pub fn to_array(&self) -> [f64; 5] {
        [self.b1, self.b12, self.b13, self.b123, self.b1234]
    }

    /// Whether a rate tuple satisfies all five bounds up to `tol`.
    pub fn admits(&self, rates: [f64; 4], tol: f64) -> bool {
        let [r1, r2, r3, r4] = rates;
        let sums = [r1, r1 + r2, r1 + r3, r1 + r2 + r3, r1 + r2 + r3 + r4];
        sums.iter().zip(self.to_array()).all(|(s, b)| *s >= b - tol)
    }
}

pub fn eval_region_bounds(pmf: &JointPmf) -> RateRegionBounds {
    let coupling = pmf.conditional_mi(U2, U3, U1);
    RateRegionBounds {
        b1: pmf.conditional_mi(X, U1, 0),
        b12: pmf.conditional_mi(X, U1 | U2, 0),
        b13: pmf.conditional_mi(X, U1 | U3, 0),
        b123: pmf.conditional_mi(X, U1 | U2 | U3, 0) + coupling,
        b1234: pmf.conditional_mi(X, U1 | U2 | U3 | U4, 0) + coupling,
    }
}

/// Deterministic decoders, as lookup tables flattened row-major over their
/// arguments: `g1(u1)`, `g2(u1, u2)`, `g3(u1, u3)`, `g4(u1, u2, u3, u4)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderMaps {
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
    pub g3: Vec<usize>,
    pub g4: Vec<usize>,
}

impl DecoderMaps {
    /// Decoders that output their newest argument, so that `U_i` is read as
    /// the reconstruction itself.
    pub fn identity(sizes: [usize; 5]) -> Self {
        let [_, n1, n2, n3, n4] = sizes;
        Self {
            g1: (0..n1).collect(),
            g2: (0..n1 * n2).map(|i| i % n2).collect(),
            g3: (0..n1 * n3).map(|i| i % n3).collect(),
            g4: (0..n1 * n2 * n3 * n4).map(|i| i % n4).collect(),
        }
    }
}

/// Expected per-decoder distortions. Unlike the Gaussian tuple these may be
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedDistortions {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

impl ExpectedDistortions {
    pub fn to_array(&self) -> [f64; 4] {
        [self.d1, self.d2, self.d3, self.d4]
    }
}

/// `distortion_matrix[x][xhat]`, rows indexed by the source alphabet.
pub fn eval_distortions(
    pmf: &JointPmf,
    decoders: &DecoderMaps,
    distortion_matrix: &[Vec<f64>],
) -> Result<ExpectedDistortions> {
    let [nx, n1, n2, n3, n4] = pmf.sizes;
    if distortion_matrix.len() != nx {
        return Err(Error::DimensionMismatch(format!(
            "distortion matrix has {} rows for |X| = {nx}",
            distortion_matrix.len()
        )));
    }
    let nhat = distortion_matrix[0].len();
    if nhat == 0 || distortion_matrix.iter().any(|r| r.len() != nhat) {
        return Err(Error::DimensionMismatch("ragged distortion matrix".into()));
    }
    if distortion_matrix
        .iter()
        .flatten()
        .any(|d| !(d.is_finite() && *d >= 0.0))
    {
        return Err(Error::InvalidInput(
            "distortion matrix entries must be non-negative".into(),
        ));
    }
    for (name, table, len) in [
        ("g1", &decoders.g1, n1),
        ("g2", &decoders.g2, n1 * n2),
        ("g3", &decoders.g3, n1 * n3),
        ("g4", &decoders.g4, n1 * n2 * n3 * n4),
    ] {
        if table.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{name} has {} entries, domain has {len}",
                table.len()
            )));
        }
        if let Some(v) = table.iter().find(|&&v| v >= nhat) {
            return Err(Error::DimensionMismatch(format!(
                "{name} outputs {v} outside a reconstruction alphabet of {nhat}"
            )));
        }
    }
    let mut d = [0.0; 4];
    for (i, &p) in pmf.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let [x, u1, u2, u3, u4] = unflatten(&pmf.sizes, i);
        let row = &distortion_matrix[x];
        d[0] += p * row[decoders.g1[u1]];
        d[1] += p * row[decoders.g2[u1 * n2 + u2]];
        d[2] += p * row[decoders.g3[u1 * n3 + u3]];
        d[3] += p * row[decoders.g4[((u1 * n2 + u2) * n3 + u3) * n4 + u4]];
    }
    Ok(ExpectedDistortions {
        d1: d[0],
        d2: d[1],
        d3: d[2],
        d4: d[3],
    })
}

/// A point of the region where the auxiliaries are the reconstructions
/// themselves: bounds of `pmf` and distortions `E d(X, U_i)`.
pub fn eval_reconstruction_point(
    pmf: &JointPmf,
    distortion_matrix: &[Vec<f64>],
) -> Result<(RateRegionBounds, ExpectedDistortions)> {
    let d = eval_distortions(pmf, &DecoderMaps::identity(pmf.sizes), distortion_matrix)?;
    Ok((eval_region_bounds(pmf), d))
}

/// Mixes two laws through a time-sharing variable `Q` with `P(Q = 0) = lambda`,
/// independent of `X`. Each `U_i` becomes `(U_i, Q)` with index `2 u + q`, on
/// an alphabet of `2 max(|U_i^A|, |U_i^B|)`.
///
/// The bounds are linear in `lambda` only when both laws share the marginal
/// of `X`, so that is required.
pub fn timeshare(a: &JointPmf, b: &JointPmf, lambda: f64) -> Result<JointPmf> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "lambda = {lambda} outside [0, 1]"
        )));
    }
    if a.sizes[0] != b.sizes[0] {
        return Err(Error::AlphabetMismatch(format!(
            "|X| = {} and {}",
            a.sizes[0], b.sizes[0]
        )));
    }
    let (pa, pb) = (a.x_marginal(), b.x_marginal());
    if let Some((x, (u, v))) = pa
        .iter()
        .zip(&pb)
        .enumerate()
        .find(|(_, (u, v))| (*u - *v).abs() > NORMALIZATION_TOL)
    {
        return Err(Error::AlphabetMismatch(format!(
            "X marginals differ at x = {x}: {u} vs {v}"
        )));
    }
    let mut sizes = [a.sizes[0]; VARS];
    for k in 1..VARS {
        sizes[k] = 2 * a.sizes[k].max(b.sizes[k]);
        if sizes[k] > MAX_ALPHABET {
            return Err(Error::InvalidPmf(format!(
                "extended alphabet of U{k} has {} symbols, above {MAX_ALPHABET}",
                sizes[k]
            )));
        }
    }
    let mut probs = vec![0.0; sizes.iter().product()];
    for (q, (src, w)) in [(a, lambda), (b, 1.0 - lambda)].into_iter().enumerate() {
        for (i, &p) in src.probs.iter().enumerate() {
            let mut idx = unflatten(&src.sizes, i);
            for u in &mut idx[1..] {
                *u = 2 * *u + q;
            }
            probs[flatten(&sizes, idx)] += w * p;
        }
    }
    JointPmf::new(&sizes, probs)
}

/// On-disk scenario: a pmf with decoders and a distortion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteScenario {
    pub alphabet_sizes: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub decoders: DecoderMaps,
    pub distortion_matrix: Vec<Vec<f64>>,
}

impl DiscreteScenario {
    pub fn pmf(&self) -> Result<JointPmf> {
        JointPmf::new(&self.alphabet_sizes, self.probabilities.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn copy_pmf() -> JointPmf {
        // X uniform binary, U1 = X, the rest constant
        JointPmf::from_fn([2, 2, 1, 1, 1], |[x, u1, ..]| if x == u1 { 0.5 } else { 0.0 })
            .unwrap()
    }

    #[test]
    fn deterministic_copy() {
        let b = eval_region_bounds(&copy_pmf());
        let ln2 = 2f64.ln();
        for v in b.to_array() {
            assert!((v - ln2).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_tensors() {
        assert!(matches!(
            JointPmf::new(&[2, 1, 1, 1, 1], vec![0.5, 0.6]),
            Err(Error::InvalidPmf(_))
        ));
        assert!(JointPmf::new(&[2, 1, 1, 1, 1], vec![1.5, -0.5]).is_err());
        assert!(JointPmf::new(&[2, 1, 1, 1], vec![0.5, 0.5]).is_err());
        assert!(JointPmf::new(&[9, 1, 1, 1, 1], vec![1.0 / 9.0; 9]).is_err());
        assert!(JointPmf::new(&[2, 1, 1, 1, 1], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn identity_decoders_read_auxiliaries() {
        let g = DecoderMaps::identity([2, 2, 3, 2, 2]);
        assert_eq!(g.g2, vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(g.g4.len(), 24);
        assert_eq!(g.g4[..4], [0, 1, 0, 1]);
    }

    #[test]
    fn hamming_identity_and_constant() {
        let ham = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let pmf = copy_pmf();
        let g = DecoderMaps {
            g1: vec![0, 1],
            g2: vec![0, 0],
            g3: vec![0, 0],
            g4: vec![1, 1],
        };
        let d = eval_distortions(&pmf, &g, &ham).unwrap();
        assert_eq!(d.to_array(), [0.0, 0.5, 0.5, 0.5]);
        let bad = DecoderMaps { g1: vec![0], ..g };
        assert!(matches!(
            eval_distortions(&pmf, &bad, &ham),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn timeshare_extends_alphabets() {
        let p = copy_pmf();
        let t = timeshare(&p, &p, 0.25).unwrap();
        assert_eq!(t.alphabet_sizes(), [2, 4, 2, 2, 2]);
        assert_eq!(t.prob([1, 2, 0, 0, 0]), 0.5 * 0.25);
        assert_eq!(t.prob([1, 3, 1, 1, 1]), 0.5 * 0.75);
        let other = JointPmf::new(&[3, 1, 1, 1, 1], vec![1.0 / 3.0; 3]).unwrap();
        assert!(matches!(
            timeshare(&p, &other, 0.5),
            Err(Error::AlphabetMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let p = copy_pmf();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"alphabet_sizes\":[2,2,1,1,1],\"probabilities\":"));
        let back: JointPmf = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<JointPmf>(
            r#"{"alphabet_sizes":[2,1,1,1,1],"probabilities":[0.9,0.9]}"#
        )
        .is_err());
    }
}
