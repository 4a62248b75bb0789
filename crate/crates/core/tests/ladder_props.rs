mod common;

use ladder_core::analyzer::SegmentFeatures;
use ladder_core::ladder::{
    build_ladder, choose_resolution, jnd_elimination, jnd_verdicts, select_best_resolution, Candidate,
    Choice, FallbackPolicy, JndVerdict, LadderConfig, Representation, RungStatus, DEFAULT_BITRATES,
    TAU_E_SWEEP,
};
use ladder_core::models::{ModelBundle, Prediction, Resolution};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn random_config(rng: &mut impl Rng) -> LadderConfig {
    let all: Vec<Resolution> = Resolution::all().collect();
    let mut resolutions: Vec<Resolution> = all.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
    if resolutions.is_empty() {
        resolutions.push(*all.choose(rng).unwrap());
    }
    let r_max = *resolutions.choose(rng).unwrap();
    let bitrates: Vec<f64> = DEFAULT_BITRATES.iter().copied().filter(|_| rng.random_bool(0.7)).collect();
    LadderConfig {
        resolutions,
        bitrates: if bitrates.is_empty() { vec![1.6] } else { bitrates },
        tau_e: if rng.random_bool(0.1) { f64::INFINITY } else { log_uniform(rng, 1.0, 3000.0) },
        tau_d: if rng.random_bool(0.1) { f64::INFINITY } else { log_uniform(rng, 0.05, 50.0) },
        r_max,
        jnd: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..3.0) },
        max_quality: rng.random_range(35.0..50.0),
        fallback: if rng.random_bool(0.5) { FallbackPolicy::Drop } else { FallbackPolicy::LowestResolution },
        ..LadderConfig::default()
    }
}

/// Independent scan: predict every admissible resolution, keep the best one
/// within budget; strictly greater quality is needed to move to a higher one.
fn exhaustive_best(
    bundle: &ModelBundle,
    f: &SegmentFeatures,
    b: f64,
    cfg: &LadderConfig,
) -> Option<Resolution> {
    let mut best: Option<(Resolution, f64)> = None;
    for &r in cfg.resolutions.iter().filter(|r| **r <= cfg.r_max) {
        let p = bundle.predict(f, r, b).unwrap();
        if p.enc_time > cfg.tau_e || p.dec_time > cfg.tau_d {
            continue;
        }
        match best {
            Some((_, q)) if p.xpsnr <= q => {}
            _ => best = Some((r, p.xpsnr)),
        }
    }
    best.map(|(r, _)| r)
}

#[test]
fn selected_rungs_respect_budgets() {
    let bundle = common::trained_bundle();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut selected = 0;
    for trial in 0..1000 {
        let f = common::random_features(&mut rng);
        let cfg = random_config(&mut rng);
        let ladder = build_ladder(bundle, &f, &cfg, "t").unwrap();
        assert_eq!(ladder.rungs.len(), cfg.bitrates.len());
        for rung in &ladder.rungs {
            assert!(rung.resolution <= cfg.r_max, "trial {trial}: {rung:?}");
            if rung.status == RungStatus::Selected {
                selected += 1;
                assert!(rung.predicted_enc_time <= cfg.tau_e, "trial {trial}: {rung:?}");
                assert!(rung.predicted_dec_time <= cfg.tau_d, "trial {trial}: {rung:?}");
            }
            if rung.status == RungStatus::Fallback {
                assert_eq!(cfg.fallback, FallbackPolicy::LowestResolution);
                assert_eq!(rung.resolution, cfg.resolutions[0]);
            }
        }
    }
    assert!(selected > 1000, "too few selected rungs to be meaningful: {selected}");
}

#[test]
fn selection_matches_exhaustive_scan() {
    let bundle = common::trained_bundle();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for call in 0..2000 {
        let f = common::random_features(&mut rng);
        let cfg = LadderConfig { fallback: FallbackPolicy::Drop, ..random_config(&mut rng) };
        let b = log_uniform(&mut rng, 0.1, 25.0);
        let got = select_best_resolution(bundle, &f, b, &cfg).unwrap();
        assert_eq!(got.resolution(), exhaustive_best(bundle, &f, b, &cfg), "call {call}");
    }
}

fn candidate(lines: u32, xpsnr: f64, enc: f64, dec: f64) -> Candidate {
    Candidate {
        resolution: Resolution::new(lines).unwrap(),
        prediction: Prediction {
            xpsnr,
            qp_real: 30.0,
            qp: 30,
            enc_time: enc,
            dec_time: dec,
            anchor_inverted: false,
        },
    }
}

/// Candidates whose encoding time grows with resolution, as it does for any
/// real encoder.
fn ordered_candidates() -> impl Strategy<Value = Vec<Candidate>> {
    prop::collection::vec((30.0f64..45.0, 1.05f64..3.0, 0.5f64..5.0), 7).prop_map(|v| {
        let mut enc = 20.0;
        Resolution::all()
            .zip(v)
            .map(|(r, (q, growth, dec))| {
                enc *= growth;
                candidate(r.lines(), q, enc, dec)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn lower_enc_budget_never_raises_resolution(cands in ordered_candidates(), tau_d in 0.5f64..6.0) {
        let mut prev: Option<Choice> = None;
        for &tau_e in TAU_E_SWEEP.iter().rev() {
            let choice = choose_resolution(&cands, tau_e, tau_d, FallbackPolicy::Drop);
            if let Some(prev) = prev {
                match (prev, choice) {
                    (Choice::Selected(a), Choice::Selected(b)) => prop_assert!(b <= a),
                    (Choice::Dropped, c) => prop_assert_eq!(c, Choice::Dropped),
                    (Choice::Selected(_), Choice::Dropped) => {}
                    other => prop_assert!(false, "unexpected {other:?}"),
                }
            }
            prev = Some(choice);
        }
    }

    #[test]
    fn jnd_keeps_gaps(mut q in prop::collection::vec(20.0f64..60.0, 0..16), jnd in 0.01f64..4.0, max_q in 30.0f64..70.0) {
        q.sort_by(f64::total_cmp);
        let verdicts = jnd_verdicts(&q, jnd, max_q);
        let kept: Vec<f64> = q.iter().zip(&verdicts).filter(|(_, v)| **v == JndVerdict::Kept).map(|(x, _)| *x).collect();
        if !q.is_empty() {
            prop_assert_eq!(verdicts[0], JndVerdict::Kept);
        }
        for w in kept.windows(2) {
            prop_assert!(w[1] - w[0] >= jnd);
        }
        let above: Vec<usize> = (0..kept.len()).filter(|&i| kept[i] > max_q).collect();
        prop_assert!(above.len() <= 1);
        if let Some(&i) = above.first() {
            prop_assert_eq!(i, kept.len() - 1);
        }
    }

    #[test]
    fn jnd_output_is_subsequence(mut q in prop::collection::vec(20.0f64..60.0, 0..16), jnd in 0.0f64..4.0, max_q in 30.0f64..70.0) {
        q.sort_by(f64::total_cmp);
        let rungs: Vec<Representation> = q.iter().enumerate().map(|(i, &x)| rung(i, x)).collect();
        let out = jnd_elimination(&rungs, jnd, max_q);
        let mut it = rungs.iter();
        for r in &out {
            prop_assert!(it.any(|x| x == r), "not a subsequence");
        }
        if jnd == 0.0 {
            prop_assert_eq!(out, rungs);
        }
    }

    #[test]
    fn zero_jnd_is_identity(q in prop::collection::vec(20.0f64..60.0, 0..16), max_q in 0.0f64..70.0) {
        let rungs: Vec<Representation> = q.iter().enumerate().map(|(i, &x)| rung(i, x)).collect();
        prop_assert_eq!(jnd_elimination(&rungs, 0.0, max_q), rungs);
    }
}

fn rung(i: usize, xpsnr: f64) -> Representation {
    Representation {
        target_bitrate: DEFAULT_BITRATES[i % 12] * (1 + i / 12) as f64,
        resolution: Resolution::new(1080).unwrap(),
        qp: 30,
        predicted_xpsnr: xpsnr,
        predicted_enc_time: 1.0,
        predicted_dec_time: 1.0,
        status: RungStatus::Selected,
        prediction_time: Default::default(),
    }
}

#[test]
fn enc_budget_sweep_on_trained_bundle() {
    let bundle = common::trained_bundle();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let f = common::random_features(&mut rng);
        let mut prev: Option<Vec<(RungStatus, Resolution)>> = None;
        for &tau_e in TAU_E_SWEEP.iter().rev() {
            let cfg = LadderConfig { tau_e, ..LadderConfig::default() };
            let ladder = build_ladder(bundle, &f, &cfg, "s").unwrap();
            let cur: Vec<_> = ladder.rungs.iter().map(|r| (r.status, r.resolution)).collect();
            if let Some(prev) = &prev {
                for ((ps, pr), (cs, cr)) in prev.iter().zip(&cur) {
                    if *ps == RungStatus::DroppedTimeBudget {
                        assert_eq!(*cs, RungStatus::DroppedTimeBudget);
                    }
                    if *cs == RungStatus::Selected {
                        assert!(cr <= pr, "tau_E {tau_e}: {cr} above {pr}");
                    }
                }
            }
            prev = Some(cur);
        }
    }
}

#[test]
fn no_admissible_resolution_is_an_error() {
    let bundle = common::trained_bundle();
    let f = common::random_features(&mut ChaCha8Rng::seed_from_u64(1));
    let cfg = LadderConfig {
        resolutions: vec![Resolution::new(1080).unwrap()],
        r_max: Resolution::new(1080).unwrap(),
        ..LadderConfig::default()
    };
    assert!(build_ladder(bundle, &f, &cfg, "x").is_ok());
    let bad = LadderConfig { r_max: Resolution::new(720).unwrap(), ..cfg };
    assert!(build_ladder(bundle, &f, &bad, "x").is_err());
}
