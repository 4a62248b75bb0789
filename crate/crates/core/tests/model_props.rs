mod common;

use ladder_core::models::{constant_bundle, Resolution};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn resolution() -> impl Strategy<Value = Resolution> {
    prop::sample::select(Resolution::all().collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn qp_is_monotone_in_bitrate(seed in any::<u64>(), r in resolution(), b1 in 0.01f64..100.0, b2 in 0.01f64..100.0) {
        let bundle = common::trained_bundle();
        let f = common::random_features(&mut ChaCha8Rng::seed_from_u64(seed));
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let q_lo = bundle.predict_qp_real(&f, r, lo).unwrap();
        let q_hi = bundle.predict_qp_real(&f, r, hi).unwrap();
        prop_assert!(q_lo >= q_hi, "b {lo} -> {q_lo}, b {hi} -> {q_hi}");
        if lo < hi && q_lo > 10.0 && q_lo < 50.0 && q_hi > 10.0 && q_hi < 50.0 {
            prop_assert!(q_lo > q_hi);
        }
        prop_assert!(bundle.predict_qp(&f, r, lo).unwrap() >= bundle.predict_qp(&f, r, hi).unwrap());
    }

    #[test]
    fn anchors_map_to_qp_bounds(seed in any::<u64>(), r in resolution()) {
        let bundle = common::trained_bundle();
        let f = common::random_features(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = bundle.predict(&f, r, 1.0).unwrap();
        prop_assume!(!p.anchor_inverted);
        let b_max = bundle.bitrate_at_qp(&f, r, 10.0);
        let b_min = bundle.bitrate_at_qp(&f, r, 50.0);
        prop_assert!((bundle.predict_qp_real(&f, r, b_max).unwrap() - 10.0).abs() < 1e-9);
        prop_assert!((bundle.predict_qp_real(&f, r, b_min).unwrap() - 50.0).abs() < 1e-9);
        prop_assert_eq!(bundle.predict_qp(&f, r, b_max).unwrap(), 10);
        prop_assert_eq!(bundle.predict_qp(&f, r, b_min).unwrap(), 50);
    }

    #[test]
    fn predictions_are_pure(seed in any::<u64>(), r in resolution(), b in 0.05f64..50.0) {
        let bundle = common::trained_bundle();
        let f = common::random_features(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = bundle.predict(&f, r, b).unwrap();
        prop_assert_eq!(p, bundle.predict(&f, r, b).unwrap());
        prop_assert_eq!(p.xpsnr, bundle.predict_xpsnr(&f, r, b).unwrap());
        prop_assert_eq!(p.qp, bundle.predict_qp(&f, r, b).unwrap());
        prop_assert_eq!(p.enc_time, bundle.predict_enc_time(&f, r, b).unwrap());
        prop_assert_eq!(p.dec_time, bundle.predict_dec_time(&f, r, b).unwrap());
        prop_assert!(p.enc_time > 0.0 && p.dec_time > 0.0);
        prop_assert!((10..=50).contains(&p.qp));
    }

    #[test]
    fn enc_time_falls_as_qp_rises(t_hi in 1.0f64..2000.0, ratio in 1.0f64..50.0, b1 in 0.05f64..20.0, b2 in 0.05f64..20.0) {
        // lower bitrate means higher QP, so a decreasing time line must not rise
        let bundle = constant_bundle(40.0, (20.0, 0.1), (t_hi, t_hi / ratio), (5.0, 1.0));
        let f = common::random_features(&mut ChaCha8Rng::seed_from_u64(0));
        let r = Resolution::new(1080).unwrap();
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        prop_assert!(bundle.predict_enc_time(&f, r, lo).unwrap() <= bundle.predict_enc_time(&f, r, hi).unwrap());
    }
}

#[test]
fn non_positive_bitrate_is_rejected() {
    let bundle = constant_bundle(40.0, (10.0, 0.1), (400.0, 100.0), (4.0, 1.0));
    let f = common::random_features(&mut ChaCha8Rng::seed_from_u64(0));
    let r = Resolution::new(720).unwrap();
    for b in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(bundle.predict(&f, r, b).is_err(), "{b}");
    }
}

#[test]
fn trained_bundle_round_trips_through_disk() {
    let bundle = common::trained_bundle();
    let dir = tempfile::tempdir().unwrap();
    bundle.save_dir(dir.path()).unwrap();
    let loaded = ladder_core::models::ModelBundle::load_dir(dir.path()).unwrap();
    assert_eq!(&loaded, bundle);
}
