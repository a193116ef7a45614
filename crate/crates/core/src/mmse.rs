//! Small dense linear-Gaussian engine: covariance assembly for the
//! successive-refinement test channel, Schur-complement conditional
//! estimation and a seeded Monte Carlo cross-check.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::channel::TestChannel;
use crate::error::{Error, Result};
use crate::model::GaussianSource;

pub const MAX_DIM: usize = 6;
const SYMMETRY_RTOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-12;
/// Samples drawn per Monte Carlo shard. Each shard owns one ChaCha8 stream.
pub const MC_SHARD: usize = 1 << 16;
pub const MC_MIN_SAMPLES: usize = 1000;

/// Coordinates of the joint test-channel vector `(X, X', U1, U2, U3, U4)`.
pub mod msr_index {
    pub const X: usize = 0;
    pub const X_INNOVATION: usize = 1;
    pub const U1: usize = 2;
    pub const U2: usize = 3;
    pub const U3: usize = 4;
    pub const U4: usize = 5;
}

/// Symmetric positive semidefinite covariance of at most [`MAX_DIM`]
/// jointly Gaussian zero-mean variables.
///
/// Entries are also kept in double-double precision. Conditional variances
/// are computed from those, so a target that is almost perfectly predicted
/// (error variance many orders below its prior) keeps full relative
/// accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    m: DMatrix<f64>,
    ext: Vec<TwoFloat>,
}

impl CovarianceMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || n > MAX_DIM || m.ncols() != n {
            return Err(Error::InvalidCovariance(format!(
                "expected square matrix of size 1..={MAX_DIM}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvalidCovariance(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        let ext = (0..n * n)
            .map(|k| TwoFloat::from(sym[(k / n, k % n)]))
            .collect();
        Self::checked(sym, ext)
    }

    /// Builds from symmetric double-double entries in row-major order.
    fn from_extended(n: usize, ext: Vec<TwoFloat>) -> Result<Self> {
        let m = DMatrix::from_fn(n, n, |i, j| ext[i * n + j].hi());
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        Self::checked(m, ext)
    }

    fn checked(m: DMatrix<f64>, ext: Vec<TwoFloat>) -> Result<Self> {
        let trace = m.trace();
        let min_eig = m.clone().symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL * trace.abs() {
            return Err(Error::InvalidCovariance(format!(
                "not positive semidefinite: eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { m, ext })
    }

    fn get_ext(&self, i: usize, j: usize) -> TwoFloat {
        self.ext[i * self.dim() + j]
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidCovariance("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.dim() {
            Err(Error::IndexOutOfRange {
                index,
                dim: self.dim(),
            })
        } else {
            Ok(())
        }
    }

    /// Factor `L` with `L L^T = Sigma`, from the symmetric eigendecomposition
    /// with slightly negative eigenvalues clamped to zero.
    pub fn sampling_factor(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.m.clone());
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&roots)
    }
}

/// Linear MMSE estimator of one coordinate from a set of others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmseResult {
    /// Weights applied to the observed coordinates, in the order given.
    pub coefficients: Vec<f64>,
    pub error_variance: f64,
}

/// Error variance `S_tt - S_to S_oo^-1 S_ot` and the estimator weights.
pub fn conditional_mmse(
    joint: &CovarianceMatrix,
    target_index: usize,
    observed_indices: &[usize],
) -> Result<MmseResult> {
    joint.check_index(target_index)?;
    for &o in observed_indices {
        joint.check_index(o)?;
    }
    let prior = joint.get(target_index, target_index);
    if observed_indices.is_empty() {
        return Ok(MmseResult {
            coefficients: Vec::new(),
            error_variance: prior,
        });
    }
    let k = observed_indices.len();
    let s_oo = DMatrix::from_fn(k, k, |i, j| {
        joint.get(observed_indices[i], observed_indices[j])
    });
    let trace = s_oo.trace();
    let min_eigenvalue = s_oo.symmetric_eigenvalues().min();
    let threshold = SINGULAR_TOL * trace;
    if !(min_eigenvalue > threshold) {
        return Err(Error::SingularObservation {
            min_eigenvalue,
            threshold,
        });
    }

    let a = |i: usize, j: usize| joint.get_ext(observed_indices[i], observed_indices[j]);
    let b: Vec<TwoFloat> = observed_indices
        .iter()
        .map(|&o| joint.get_ext(o, target_index))
        .collect();
    let coef = ldl_solve(k, a, &b).ok_or(Error::SingularObservation {
        min_eigenvalue,
        threshold,
    })?;
    let explained = b
        .iter()
        .zip(&coef)
        .fold(TwoFloat::from(0.0), |acc, (&x, &c)| acc + x * c);
    let error_variance = (joint.get_ext(target_index, target_index) - explained)
        .hi()
        .max(0.0);
    Ok(MmseResult {
        coefficients: coef.iter().map(|c| c.hi()).collect(),
        error_variance,
    })
}

/// Solves `A c = b` for symmetric positive definite `A` by `L D L^T`
/// factorization. Returns `None` if a pivot is not positive.
/// Double-double quotient by long division; the crate's own `/` keeps
/// only about f64 accuracy.
fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::from(q1) + q2 + q3
}

fn ldl_solve<A>(k: usize, a: A, b: &[TwoFloat]) -> Option<Vec<TwoFloat>>
where
    A: Fn(usize, usize) -> TwoFloat,
{
    let zero = TwoFloat::from(0.0);
    let mut l = vec![zero; k * k];
    let mut d = vec![zero; k];
    for j in 0..k {
        let mut dj = a(j, j);
        for p in 0..j {
            dj -= l[j * k + p] * l[j * k + p] * d[p];
        }
        if !(dj.hi() > 0.0) {
            return None;
        }
        d[j] = dj;
        for i in j + 1..k {
            let mut v = a(i, j);
            for p in 0..j {
                v -= l[i * k + p] * l[j * k + p] * d[p];
            }
            l[i * k + j] = dd_div(v, dj);
        }
    }
    let mut z = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            let t = l[i * k + p] * z[p];
            z[i] -= t;
        }
    }
    for i in 0..k {
        z[i] = dd_div(z[i], d[i]);
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            let t = l[p * k + i] * z[p];
            z[i] -= t;
        }
    }
    Some(z)
}

/// Empirical MSE of the analytic linear estimator with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of the MSE of the linear MMSE estimator.
///
/// Samples are split into shards of [`MC_SHARD`]; shard `k` draws from a
/// ChaCha8 generator seeded with `seed` on stream `k`, so the result is
/// reproducible and independent of the thread count.
pub fn mc_estimate_mse(
    joint: &CovarianceMatrix,
    target_index: usize,
    observed_indices: &[usize],
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < MC_MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "at least {MC_MIN_SAMPLES} samples required, got {samples}"
        )));
    }
    let est = conditional_mmse(joint, target_index, observed_indices)?;
    let n = joint.dim();
    let factor = joint.sampling_factor();
    // residual weights w such that error = w . x
    let mut w = vec![0.0; n];
    w[target_index] += 1.0;
    for (&o, &c) in observed_indices.iter().zip(&est.coefficients) {
        w[o] -= c;
    }
    // error = (w^T L) z, so only the row vector w^T L matters
    let wl: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| w[i] * factor[(i, j)]).sum())
        .collect();

    let shards = samples.div_ceil(MC_SHARD);
    let partial: Vec<(f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let count = MC_SHARD.min(samples - k * MC_SHARD);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut s2 = 0.0;
            let mut s4 = 0.0;
            for _ in 0..count {
                let mut e = 0.0;
                for &c in &wl {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    e += c * z;
                }
                let sq = e * e;
                s2 += sq;
                s4 += sq * sq;
            }
            (s2, s4)
        })
        .collect();
    let (s2, s4) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let nf = samples as f64;
    let mean = s2 / nf;
    let var = ((s4 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / nf).sqrt(),
        samples,
    })
}

/// Joint covariance of `(X, X', U1, U2, U3, U4)` for the test channel
/// `U1 = X + N1`, `X' = X - E[X|U1]`, `U_m = X' + N_m` (m = 2, 3, 4).
///
/// A description with infinite noise variance carries no information; its
/// coordinate is replaced by the standardized noise limit `N_m / sigma_m`,
/// which is uncorrelated with the source and keeps the matrix finite.
pub fn assemble_msr_covariance(
    source: &GaussianSource,
    channel: &TestChannel,
) -> Result<CovarianceMatrix> {
    use msr_index::*;
    let noise = [
        channel.sigma1_sq,
        channel.sigma2_sq,
        channel.sigma3_sq,
        channel.sigma4_sq,
    ];
    for (i, &v) in noise.iter().enumerate() {
        if !(v > 0.0) || v.is_nan() {
            return Err(Error::InvalidChannel(format!(
                "noise variance {} must be positive, got {v}",
                i + 1
            )));
        }
    }
    if !(channel.rho.abs() <= 1.0) {
        return Err(Error::InvalidChannel(format!(
            "|rho| must not exceed 1, got {}",
            channel.rho
        )));
    }
    let tf = TwoFloat::from;
    let sx = tf(source.variance());
    let s1 = channel.sigma1_sq;
    // var(X') = E[(X - E[X|U1])^2]
    let d1 = if s1.is_finite() {
        dd_div(sx * s1, sx + s1)
    } else {
        sx
    };

    let n = 6;
    let mut m = vec![tf(0.0); n * n];
    let mut set = |i: usize, j: usize, v: TwoFloat| {
        m[i * n + j] = v;
        m[j * n + i] = v;
    };
    set(X, X, sx);
    set(X, X_INNOVATION, d1);
    set(X_INNOVATION, X_INNOVATION, d1);
    if s1.is_finite() {
        set(X, U1, sx);
        set(U1, U1, sx + s1);
    } else {
        set(U1, U1, tf(1.0));
    }

    // An infinite noise becomes a unit-variance pure-noise coordinate with
    // no source component.
    let informative = |v: f64| v.is_finite();
    let refine = [
        (U2, channel.sigma2_sq),
        (U3, channel.sigma3_sq),
        (U4, channel.sigma4_sq),
    ];
    for &(idx, var) in &refine {
        if informative(var) {
            set(X, idx, d1);
            set(X_INNOVATION, idx, d1);
            set(idx, idx, d1 + var);
        } else {
            set(idx, idx, tf(1.0));
        }
    }
    let noise_std = |v: f64| if v.is_finite() { tf(v).sqrt() } else { tf(1.0) };
    let (i2, i3, i4) = (
        informative(channel.sigma2_sq),
        informative(channel.sigma3_sq),
        informative(channel.sigma4_sq),
    );
    let shared = |a: bool, b: bool| if a && b { d1 } else { tf(0.0) };
    set(
        U2,
        U3,
        shared(i2, i3)
            + noise_std(channel.sigma2_sq) * noise_std(channel.sigma3_sq) * channel.rho,
    );
    set(U2, U4, shared(i2, i4));
    set(U3, U4, shared(i3, i4));
    CovarianceMatrix::from_extended(n, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::TestChannel;
    use proptest::prelude::*;
    use rand::Rng;

    fn cov(rows: &[&[f64]]) -> CovarianceMatrix {
        CovarianceMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn channel(s1: f64, s2: f64, s3: f64, s4: f64, rho: f64) -> TestChannel {
        TestChannel {
            sigma1_sq: s1,
            sigma2_sq: s2,
            sigma3_sq: s3,
            sigma4_sq: s4,
            rho,
            d4_star: f64::NAN,
        }
    }

    #[test]
    fn half_variance_case() {
        // X ~ N(0,1), U = X + N with var(N) = 1
        let c = cov(&[&[1.0, 1.0], &[1.0, 2.0]]);
        let r = conditional_mmse(&c, 0, &[1]).unwrap();
        assert!((r.error_variance - 0.5).abs() < 1e-15);
        assert!((r.coefficients[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_observation_returns_prior() {
        let c = cov(&[&[2.5, 1.0], &[1.0, 2.0]]);
        let r = conditional_mmse(&c, 0, &[]).unwrap();
        assert_eq!(r.error_variance, 2.5);
        assert!(r.coefficients.is_empty());
    }

    #[test]
    fn innovation_refinement_matches_closed_form() {
        let (d1, s2) = (0.3, 0.7);
        let c = cov(&[&[d1, d1], &[d1, d1 + s2]]);
        let r = conditional_mmse(&c, 0, &[1]).unwrap();
        assert!((r.error_variance - d1 * s2 / (d1 + s2)).abs() < 1e-15);
    }

    #[test]
    fn singular_observation_detected() {
        // two identical observations
        let c = cov(&[&[1.0, 1.0, 1.0], &[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0]]);
        assert!(matches!(
            conditional_mmse(&c, 0, &[1, 2]),
            Err(Error::SingularObservation { .. })
        ));
        assert!(matches!(
            conditional_mmse(&c, 0, &[3]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_covariances() {
        assert!(CovarianceMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(CovarianceMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(CovarianceMatrix::new(DMatrix::identity(7, 7)).is_err());
    }

    #[test]
    fn msr_covariance_unit_noise() {
        let c = assemble_msr_covariance(&GaussianSource::unit(), &channel(1.0, 1.0, 1.0, 1.0, 0.0))
            .unwrap();
        use msr_index::*;
        assert!((c.get(X_INNOVATION, X_INNOVATION) - 0.5).abs() < 1e-15);
        assert!((c.get(U2, U3) - 0.5).abs() < 1e-15);
        assert!((c.get(U1, U1) - 2.0).abs() < 1e-15);
        assert!((c.get(X, X_INNOVATION) - 0.5).abs() < 1e-15);
        assert_eq!(c.get(X_INNOVATION, U1), 0.0);
    }

    #[test]
    fn msr_covariance_structure() {
        use msr_index::*;
        let src = GaussianSource::new(2.0).unwrap();
        let (s1, s2, s3, s4, rho) = (0.8, 0.4, 0.9, 1.3, -0.6);
        let c = assemble_msr_covariance(&src, &channel(s1, s2, s3, s4, rho)).unwrap();
        let d1 = s1 * 2.0 / (s1 + 2.0);
        assert!((c.get(U1, U1) - (2.0 + s1)).abs() < 1e-15);
        assert!((c.get(X, X_INNOVATION) - d1).abs() < 1e-15);
        assert!((c.get(U2, U3) - (d1 + rho * s2.sqrt() * s3.sqrt())).abs() < 1e-15);
        assert!((c.get(U4, U4) - (d1 + s4)).abs() < 1e-15);
        // X' is the innovation: uncorrelated with U1
        let r = conditional_mmse(&c, X, &[U1]).unwrap();
        assert!((r.error_variance - d1).abs() < 1e-14);
    }

    #[test]
    fn msr_covariance_rejects_invalid_channel() {
        let src = GaussianSource::unit();
        assert!(matches!(
            assemble_msr_covariance(&src, &channel(1.0, 1.0, 1.0, 1.0, -1.1)),
            Err(Error::InvalidChannel(_))
        ));
        assert!(matches!(
            assemble_msr_covariance(&src, &channel(1.0, 0.0, 1.0, 1.0, 0.0)),
            Err(Error::InvalidChannel(_))
        ));
    }

    #[test]
    fn infinite_noise_coordinates_carry_no_information() {
        use msr_index::*;
        let src = GaussianSource::unit();
        let c = assemble_msr_covariance(
            &src,
            &channel(f64::INFINITY, 0.5, 0.5, f64::INFINITY, -0.3),
        )
        .unwrap();
        // X' = X when U1 is useless
        assert_eq!(c.get(X_INNOVATION, X_INNOVATION), 1.0);
        let with = conditional_mmse(&c, X, &[U1, U2, U3, U4]).unwrap();
        let without = conditional_mmse(&c, X, &[U2, U3]).unwrap();
        assert!((with.error_variance - without.error_variance).abs() < 1e-14);
    }

    #[test]
    fn mc_half_variance_and_prior() {
        let c = cov(&[&[1.0, 1.0], &[1.0, 2.0]]);
        let mc = mc_estimate_mse(&c, 0, &[1], 200_000, 7).unwrap();
        assert!((mc.estimate - 0.5).abs() < 3.0 * mc.std_error);
        let mc = mc_estimate_mse(&c, 0, &[], 200_000, 8).unwrap();
        assert!((mc.estimate - 1.0).abs() < 3.0 * mc.std_error);
        assert!(mc_estimate_mse(&c, 0, &[1], 999, 0).is_err());
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let c = cov(&[&[1.0, 0.3], &[0.3, 1.0]]);
        let a = mc_estimate_mse(&c, 0, &[1], 150_000, 42).unwrap();
        let b = mc_estimate_mse(&c, 0, &[1], 150_000, 42).unwrap();
        let other = mc_estimate_mse(&c, 0, &[1], 150_000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.estimate, other.estimate);
    }

    fn random_pd(n: usize, seed: u64) -> CovarianceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.05;
        CovarianceMatrix::new((&m + m.transpose()) * 0.5).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn more_observations_never_hurt(seed in any::<u64>(), mask in 0u8..16, extra in 1usize..5) {
            let c = random_pd(5, seed);
            let small: Vec<usize> = (1..5).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            let mut big = small.clone();
            if !big.contains(&extra) { big.push(extra); }
            let e_small = conditional_mmse(&c, 0, &small).unwrap().error_variance;
            let e_big = conditional_mmse(&c, 0, &big).unwrap().error_variance;
            prop_assert!(e_big <= e_small + 1e-12 * c.get(0, 0));
            prop_assert!(e_small <= c.get(0, 0) + 1e-15);
        }

        #[test]
        fn msr_covariance_is_psd(
            var in 0.2f64..5.0,
            s in prop::array::uniform4(0.01f64..10.0),
            rho in -(1.0 - 1e-9)..=(1.0 - 1e-9),
        ) {
            let src = GaussianSource::new(var).unwrap();
            let c = assemble_msr_covariance(&src, &channel(s[0], s[1], s[2], s[3], rho)).unwrap();
            let m = c.matrix();
            prop_assert!((m - m.transpose()).amax() == 0.0);
            let min = m.clone().symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10 * m.trace());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn mc_agrees_with_schur(seed in any::<u64>(), mask in 1u8..16) {
            let c = random_pd(5, seed);
            let obs: Vec<usize> = (1..5).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            let exact = conditional_mmse(&c, 0, &obs).unwrap().error_variance;
            let mc = mc_estimate_mse(&c, 0, &obs, 100_000, seed).unwrap();
            prop_assert!((mc.estimate - exact).abs() <= 4.0 * mc.std_error,
                "mc {} exact {} se {}", mc.estimate, exact, mc.std_error);
        }
    }
}
