mod common;

use common::*;
use planeseg::nms::*;
use planeseg::synthetic::{random_detections, DetectionSpec};
use planeseg::BoundingBox;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ff_nms_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut band_decided = 0;
    for case in 0..1000 {
        let (dets, cfg) = random_nms_case(&mut rng, 50, 8);
        let got = sorted(ff_nms_indices(&dets, &cfg).unwrap());
        assert_eq!(got, ff_nms_oracle(&dets, &cfg), "case {case}");
        let lo = fast_nms_oracle(&dets, &cfg, cfg.n1);
        let hi = fast_nms_oracle(&dets, &cfg, cfg.n2);
        band_decided += (got != lo && got != hi) as usize;
    }
    // the similarity band must actually decide a good share of the cases
    assert!(
        band_decided >= 100,
        "only {band_decided} cases exercised the band"
    );
}

#[test]
fn fast_nms_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..300 {
        let (dets, cfg) = random_nms_case(&mut rng, 50, 8);
        let got = sorted(fast_nms_indices(&dets, &cfg, cfg.n1).unwrap());
        assert_eq!(got, fast_nms_oracle(&dets, &cfg, cfg.n1), "case {case}");
    }
}

#[test]
fn iou_matrix_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let dets: Vec<Detection<f64>> = random_detections(
        &mut rng,
        DetectionSpec {
            n: 10,
            k: 4,
            classes: 1,
            frame: 200.0,
        },
    );
    let boxes: Vec<BoundingBox<f64>> = dets.iter().map(|d| d.bbox).collect();
    let m = pairwise_iou_triu(&boxes);
    for i in 0..10 {
        for j in 0..10 {
            let want = if i < j {
                iou_oracle(boxes[i].to_array(), boxes[j].to_array())
            } else {
                0.0
            };
            assert!((m.get(i, j) - want).abs() < 1e-15, "({i},{j})");
        }
    }
}

#[test]
fn sandwich_and_degenerate_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..300 {
        let (dets, mut cfg) = random_nms_case(&mut rng, 50, 8);
        let lo = sorted(fast_nms_indices(&dets, &cfg, cfg.n1).unwrap());
        let hi = sorted(fast_nms_indices(&dets, &cfg, cfg.n2).unwrap());
        let ff = sorted(ff_nms_indices(&dets, &cfg).unwrap());
        assert!(
            lo.iter().all(|i| ff.contains(i)),
            "case {case}: fast(N1) ⊄ ff"
        );
        assert!(
            ff.iter().all(|i| hi.contains(i)),
            "case {case}: ff ⊄ fast(N2)"
        );

        cfg.t = 1.0 + rng.random_range(0.0f64..2.0);
        assert_eq!(
            sorted(ff_nms_indices(&dets, &cfg).unwrap()),
            hi,
            "case {case}: T ≥ 1"
        );
        cfg.t = -1.0 - rng.random_range(1e-9f64..2.0);
        assert_eq!(
            sorted(ff_nms_indices(&dets, &cfg).unwrap()),
            lo,
            "case {case}: T < -1"
        );
    }
}

#[test]
fn permutation_invariance_with_distinct_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let (dets, cfg) = random_nms_case(&mut rng, 40, 8);
        let base: Vec<Detection<f64>> = ff_nms(&dets, &cfg).unwrap();
        let mut perm: Vec<usize> = (0..dets.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Detection<f64>> = perm.iter().map(|&i| dets[i].clone()).collect();
        assert_eq!(ff_nms(&shuffled, &cfg).unwrap(), base);
    }
}

#[test]
fn hand_traced_pair() {
    // IoU of these boxes is 0.6: intersection 60, union 100
    let a = BoundingBox::new(0.0, 0.0, 10.0, 8.0).unwrap();
    let b = BoundingBox::new(0.0, 2.0, 10.0, 10.0).unwrap();
    assert!((planeseg::geometry::box_iou(&a, &b) - 0.6f64).abs() < 1e-12);
    let cfg = NmsConfig::default();
    let orth = vec![
        Detection::new(a, 0.9, 0, vec![1.0, 0.0]),
        Detection::new(b, 0.8, 0, vec![0.0, 1.0]),
    ];
    assert_eq!(ff_nms_indices(&orth, &cfg).unwrap(), vec![0, 1]);
    let same = vec![
        Detection::new(a, 0.9, 0, vec![1.0, 2.0]),
        Detection::new(b, 0.8, 0, vec![1.0, 2.0]),
    ];
    assert_eq!(ff_nms_indices(&same, &cfg).unwrap(), vec![0]);
}

#[test]
fn zero_norm_coefficients_rejected() {
    let a = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let dets = vec![Detection::new(a, 0.9, 0, vec![0.0f64, 0.0])];
    assert!(matches!(
        ff_nms(&dets, &NmsConfig::default()),
        Err(planeseg::Error::Degenerate(_))
    ));
}

#[test]
fn top_n_truncation() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let dets: Vec<Detection<f64>> = random_detections(
        &mut rng,
        DetectionSpec {
            n: 300,
            k: 4,
            classes: 1,
            frame: 550.0,
        },
    );
    let cfg = NmsConfig {
        score_thresh: 0.0,
        ..NmsConfig::default()
    };
    let batches = prepare(&dets, &cfg);
    assert_eq!(batches.len(), 1);
    assert_eq!(batches[0].indices.len(), 200);
    let mut scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let kept: Vec<f64> = batches[0].indices.iter().map(|&i| dets[i].score).collect();
    assert_eq!(kept, scores[..200].to_vec());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_per_class_survives_and_output_is_score_ordered(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, cfg) = random_nms_case(&mut rng, 30, 8);
        let out = ff_nms_indices(&dets, &cfg).unwrap();
        prop_assert!(out.windows(2).all(|w| dets[w[0]].score >= dets[w[1]].score));
        for batch in prepare(&dets, &cfg) {
            prop_assert!(out.contains(&batch.indices[0]));
        }
    }
}
