//! One-dimensional bracketing searches used by the numeric cross-checks.

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `rtol * max(|x|, 1)` or after
/// `max_iter` steps. Returns `(argmax, max)`.
pub fn golden_max<F>(mut f: F, mut lo: f64, mut hi: f64, rtol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if (hi - lo).abs() <= rtol * x1.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    // bracket ends can beat the interior when the maximum sits on the boundary
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Largest `x` in `[lo, hi]` with `pred(x)` true, for a predicate that is
/// true on a prefix of the interval. `pred(lo)` is assumed true.
///
/// Stops when `hi - lo <= tol(hi)` or after `max_iter` halvings.
pub fn bisect_last_true<P, T>(mut pred: P, mut lo: f64, mut hi: f64, tol: T, max_iter: usize) -> f64
where
    P: FnMut(f64) -> bool,
    T: Fn(f64) -> f64,
{
    if pred(hi) {
        return hi;
    }
    for _ in 0..max_iter {
        if hi - lo <= tol(hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
