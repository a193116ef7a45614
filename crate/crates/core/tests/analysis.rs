use gaussrd_core::analysis::*;
use gaussrd_core::{GaussianSource, RateTuple};
use proptest::prelude::*;

fn unit() -> GaussianSource {
    GaussianSource::unit()
}

fn fig3() -> RateTuple {
    RateTuple::new(1.0, 0.5, 1.0, 0.5).unwrap()
}

#[test]
fn wz_gap_is_positive_inside() {
    let rows = wz_md_sweep(&unit(), &fig3(), 200).unwrap();
    for r in &rows[1..199] {
        assert!(r.gap > 1e-9, "{r:?}");
    }
    for r in [&rows[0], &rows[199]] {
        assert!(r.gap.abs() <= 1e-9, "{r:?}");
    }
}

#[test]
fn convergence_tables() {
    for (eta, b) in [(0.0, 1.0), (0.3, 1.0), (0.3, 2.0), (0.5, 1.5), (0.1, 3.0)] {
        let c = AsymptoticConfig::new(1.0, b, eta, eta).unwrap();
        let grid: Vec<f64> = (1..=10).map(f64::from).collect();
        let t = asymptote_convergence(&c, &grid).unwrap();
        let last = t.last().unwrap().ratio;
        println!("eta {eta} b {b}: {:?}", t.iter().map(|r| r.ratio).collect::<Vec<_>>());
        assert!((0.9..=1.1).contains(&last), "eta {eta} b {b}: {last}");
        // approaches 1 monotonically over the tail
        let tail: Vec<f64> = t[4..].iter().map(|r| (r.ratio - 1.0).abs()).collect();
        assert!(tail.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{tail:?}");
    }
}

#[test]
fn loss_grows_without_bound() {
    let cfg = FixedChannelConfig::new(1.0).unwrap();
    let mut prev = 1.0;
    for k in 1..=40 {
        let r1 = 0.25 * k as f64;
        let l = fixed_channel_loss(&unit(), r1, 1.0, cfg).ratio;
        assert!(l > prev);
        prev = l;
    }
    assert!(prev > 1e8);
}

proptest! {
    #[test]
    fn special_terms_match_general(t in 0.0f64..=1.0, r in prop::array::uniform4(0.05f64..2.0)) {
        let rates = RateTuple::new(r[0], r[1], r[2], r[3]).unwrap();
        let src = unit();
        let lo = src.distortion_at(r[0] + r[2]);
        let hi = src.distortion_at(r[0]);
        let s = md_region_slice(&src, &rates, lo + t * (hi - lo)).unwrap();
        prop_assert!((s.pi_special - s.bound.pi).abs() < 1e-12);
        prop_assert!((s.delta_special - s.bound.delta).abs() < 1e-12);
    }

    #[test]
    fn wz_never_beats_md(t in 0.0f64..=1.0, r in prop::array::uniform4(0.05f64..2.0)) {
        let rates = RateTuple::new(r[0], r[1], r[2], r[3]).unwrap();
        let src = unit();
        let lo = src.distortion_at(r[0] + r[2]);
        let hi = src.distortion_at(r[0]);
        let d3 = lo + t * (hi - lo);
        let wz = wz_region(&src, &rates, d3).unwrap();
        let md = md_region_slice(&src, &rates, d3).unwrap().bound.d4_bound;
        prop_assert!(wz >= md * (1.0 - 1e-12), "{} < {}", wz, md);
    }

    #[test]
    fn loss_at_least_one(r1 in 0.01f64..5.0, r3 in 0.01f64..5.0, alpha in 0.01f64..3.0) {
        let l = fixed_channel_loss(&unit(), r1, r3, FixedChannelConfig::new(alpha).unwrap());
        prop_assert!(l.ratio >= 1.0);
    }

    #[test]
    fn mdcr_ratio_monotone_in_refinement(beta in 0.0f64..=1.0, d in 0.3f64..0.6) {
        let split = MdcrSplit::new(beta).unwrap();
        let mut prev = 1.0;
        for k in 0..=10 {
            let r4 = 0.05 * k as f64;
            let c = match mdcr_compare(&unit(), 0.5, 0.5, r4, split, d, d) {
                Ok(c) => c,
                Err(_) => break,
            };
            if k == 0 {
                prop_assert_eq!(c.ratio, 1.0);
            } else {
                prop_assert!(c.ratio > 1.0);
            }
            prop_assert!(c.ratio >= prev * (1.0 - 1e-12));
            prev = c.ratio;
        }
    }
}
