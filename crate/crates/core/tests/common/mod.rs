//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use gaussrd_core::discrete::JointPmf;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_pmf(sizes: [usize; 5], seed: u64) -> JointPmf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = sizes.iter().product();
    let w: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    JointPmf::new(&sizes, w.iter().map(|v| v / total).collect()).unwrap()
}

/// Random conditional law of the auxiliaries given a fixed `P(X)`.
pub fn random_given_x(sizes: [usize; 5], px: &[f64], seed: u64) -> JointPmf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner: usize = sizes[1..].iter().product();
    let mut probs = Vec::new();
    for &p in px {
        let w: Vec<f64> = (0..inner).map(|_| rng.gen_range(0.0..1.0)).collect();
        let t: f64 = w.iter().sum();
        probs.extend(w.iter().map(|v| p * v / t));
    }
    JointPmf::new(&sizes, probs).unwrap()
}

pub fn entries(pmf: &JointPmf) -> Vec<([usize; 5], f64)> {
    let s = pmf.alphabet_sizes();
    let mut out = Vec::new();
    for x in 0..s[0] {
        for a in 0..s[1] {
            for b in 0..s[2] {
                for c in 0..s[3] {
                    for d in 0..s[4] {
                        let idx = [x, a, b, c, d];
                        out.push((idx, pmf.prob(idx)));
                    }
                }
            }
        }
    }
    out
}

/// Joint entropy of a subset of variables, by grouping the tensor.
pub fn entropy(pmf: &JointPmf, vars: &[usize]) -> f64 {
    let mut groups: HashMap<Vec<usize>, f64> = HashMap::new();
    for (idx, p) in entries(pmf) {
        *groups.entry(vars.iter().map(|&v| idx[v]).collect()).or_default() += p;
    }
    groups.values().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

/// The five rate bounds as combinations of joint entropies.
pub fn oracle_bounds(pmf: &JointPmf) -> [f64; 5] {
    let h = |v: &[usize]| entropy(pmf, v);
    let mi_x = |u: &[usize]| {
        let mut all = vec![0];
        all.extend_from_slice(u);
        h(&[0]) + h(u) - h(&all)
    };
    let coupling = h(&[1, 2]) + h(&[1, 3]) - h(&[1, 2, 3]) - h(&[1]);
    [
        mi_x(&[1]),
        mi_x(&[1, 2]),
        mi_x(&[1, 3]),
        mi_x(&[1, 2, 3]) + coupling,
        mi_x(&[1, 2, 3, 4]) + coupling,
    ]
}

pub fn average(a: [f64; 5], b: [f64; 5], l: f64) -> [f64; 5] {
    std::array::from_fn(|i| l * a[i] + (1.0 - l) * b[i])
}
