use fldcrf::evaluation::{
    build_curves, metric_mt, nested_cv, predictions_to_csv, read_predictions_csv, CurvePoint, CvPlan, GridSetting,
    NestedCvConfig, SequencePrediction, Window,
};
use fldcrf::features::{CROSSING, NOT_CROSSING};
use fldcrf::synthgen::{generate, ScenarioConfig, TypeCounts, MOTION_COLUMNS, VEHICLE_COLUMNS};
use fldcrf::training::TrainConfig;
use fldcrf::{Dataset, Frame, Sequence, SequenceType};
use proptest::prelude::*;

fn point(k: i64, acc: f64, prob: f64, std: f64) -> CurvePoint {
    CurvePoint {
        offset_frames: k,
        offset_s: k as f64 / 15.0,
        mean_prob: prob,
        accuracy: acc,
        std,
        count: 1,
    }
}

/// Window of exactly the frame offsets `hi..=lo` at 15 fps.
fn frames_window(hi: i64, lo: i64) -> Window {
    Window::new(hi as f64 / 15.0, lo as f64 / 15.0)
}

#[test]
fn mt_hand_values() {
    let perfect: Vec<_> = (-8..=30).map(|k| point(k, 1.0, 1.0, 0.0)).collect();
    assert_eq!(metric_mt(&perfect, &Window::NTU, 15.0).unwrap(), 2.0);

    let flat: Vec<_> = (-8..=30).map(|k| point(k, 0.5, 0.5, 0.1)).collect();
    assert_eq!(metric_mt(&flat, &Window::NTU, 15.0).unwrap(), 0.9);

    let three = vec![point(2, 1.0, 0.8, 0.1), point(1, 0.5, 0.6, 0.2), point(0, 1.0, 0.9, 0.0)];
    assert_eq!(metric_mt(&three, &frames_window(2, 0), 15.0).unwrap(), 1.5);
}

#[test]
fn mt_requires_data_over_the_window() {
    let short: Vec<_> = (0..=10).map(|k| point(k, 1.0, 1.0, 0.0)).collect();
    assert!(metric_mt(&short, &Window::NTU, 15.0).is_err());
}

proptest! {
    #[test]
    fn mt_is_monotone(
        base in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.5), 7),
        which in 0usize..7,
        bump in 0.0f64..0.5,
    ) {
        let window = frames_window(6, 0);
        let pts = |v: &[(f64, f64, f64)]| -> Vec<CurvePoint> {
            v.iter().enumerate().map(|(i, &(a, p, s))| point(i as i64, a, p, s)).collect()
        };
        let m0 = metric_mt(&pts(&base), &window, 15.0).unwrap();
        let mut up_acc = base.clone();
        up_acc[which].0 += bump;
        let mut up_prob = base.clone();
        up_prob[which].1 += bump;
        let mut up_std = base.clone();
        up_std[which].2 += bump;
        prop_assert!(metric_mt(&pts(&up_acc), &window, 15.0).unwrap() >= m0);
        prop_assert!(metric_mt(&pts(&up_prob), &window, 15.0).unwrap() >= m0);
        prop_assert!(metric_mt(&pts(&up_std), &window, 15.0).unwrap() <= m0);
    }
}

fn sequence(id: &str, kind: SequenceType, len: usize, event: usize) -> Sequence {
    let frames = (0..len).map(|t| Frame::unlabeled(t as i64, vec![0.0])).collect();
    Sequence::new(id, frames, kind, Some(event)).unwrap()
}

fn prediction(id: &str, probs_not_crossing: &[f64]) -> SequencePrediction {
    SequencePrediction {
        id: id.to_string(),
        frames: (0..probs_not_crossing.len() as i64).collect(),
        labels: vec![CROSSING.to_string(), NOT_CROSSING.to_string()],
        probs: probs_not_crossing.iter().map(|p| vec![1.0 - p, *p]).collect(),
    }
}

#[test]
fn single_constant_sequence_gives_flat_curve() {
    let data = Dataset::new(vec![sequence("s", SequenceType::Stopping, 6, 3)], 15.0).unwrap();
    let curves = build_curves(&[prediction("s", &[0.7; 6])], &data).unwrap();
    let offsets: Vec<i64> = curves.points.iter().map(|p| p.offset_frames).collect();
    assert_eq!(offsets, vec![3, 2, 1, 0, -1, -2]);
    for p in &curves.points {
        assert!((p.mean_prob - 0.7).abs() < 1e-15);
        assert_eq!(p.std, 0.0);
        assert_eq!(p.accuracy, 1.0);
        assert!((p.offset_s - p.offset_frames as f64 / 15.0).abs() < 1e-15);
    }
}

#[test]
fn two_point_and_threshold_aggregates() {
    let data = Dataset::new(
        vec![
            sequence("a", SequenceType::Stopping, 3, 1),
            sequence("b", SequenceType::Stopping, 3, 1),
        ],
        15.0,
    )
    .unwrap();
    let curves = build_curves(&[prediction("a", &[0.6; 3]), prediction("b", &[0.8; 3])], &data).unwrap();
    for p in &curves.points {
        assert!((p.mean_prob - 0.7).abs() < 1e-12);
        assert!((p.std - 0.1).abs() < 1e-12);
    }

    let kinds = [
        SequenceType::Stopping,
        SequenceType::Standing,
        SequenceType::ContinuousCrossing,
        SequenceType::Stopping,
    ];
    let seqs: Vec<_> = kinds.iter().enumerate().map(|(i, &k)| sequence(&format!("q{i}"), k, 1, 0)).collect();
    let data = Dataset::new(seqs, 15.0).unwrap();
    // appropriate-class probabilities 0.9, 0.6, 0.8 (crossing), 0.4
    let preds = vec![prediction("q0", &[0.9]), prediction("q1", &[0.6]), prediction("q2", &[0.2]), prediction("q3", &[0.4])];
    let curves = build_curves(&preds, &data).unwrap();
    assert_eq!(curves.points.len(), 1);
    assert_eq!(curves.points[0].accuracy, 0.75);
    assert_eq!(curves.by_type[&SequenceType::ContinuousCrossing][0].mean_prob, 0.8);
}

proptest! {
    #[test]
    fn curves_ignore_sequence_order(
        probs in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 6),
        rotate in 0usize..6,
    ) {
        let kinds = [SequenceType::Stopping, SequenceType::ContinuousCrossing, SequenceType::Standing];
        let seqs: Vec<_> = (0..6).map(|i| sequence(&format!("s{i}"), kinds[i % 3], 5, i % 5)).collect();
        let preds: Vec<_> = probs.iter().enumerate().map(|(i, p)| prediction(&format!("s{i}"), p)).collect();
        let data = Dataset::new(seqs.clone(), 15.0).unwrap();
        let base = build_curves(&preds, &data).unwrap();
        let mut seqs2 = seqs;
        seqs2.rotate_left(rotate);
        let mut preds2 = preds;
        preds2.reverse();
        let other = build_curves(&preds2, &Dataset::new(seqs2, 15.0).unwrap()).unwrap();
        prop_assert_eq!(base, other);
    }
}

#[test]
fn predictions_survive_csv() {
    let preds = vec![prediction("a", &[0.125, 0.3333333333, 0.9]), prediction("b", &[0.5])];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, predictions_to_csv(&preds).unwrap()).unwrap();
    let back = read_predictions_csv(&path).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in preds.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.frames, b.frames);
        for (ra, rb) in a.probs.iter().zip(&b.probs) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-3));
            }
        }
    }
}

fn small_synthetic(seed: u64) -> Dataset {
    generate(&ScenarioConfig {
        counts: TypeCounts { continuous_crossing: 5, stopping: 5, ..Default::default() },
        duration_frames: (45, 55),
        seed,
        ..Default::default()
    })
    .unwrap()
    .select_columns(&[MOTION_COLUMNS, VEHICLE_COLUMNS])
    .unwrap()
    .with_bias_feature()
}

#[test]
fn plans_partition_sequences() {
    let data = small_synthetic(1);
    let plan = CvPlan::new(&data, 5, 4, 9).unwrap();
    let mut seen: Vec<usize> = plan.outer.iter().flatten().copied().collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..data.len()).collect::<Vec<_>>());
    for (k, inner) in plan.inner.iter().enumerate() {
        let mut train: Vec<usize> = inner.iter().flatten().copied().collect();
        train.sort_unstable();
        let mut want: Vec<usize> = (0..data.len()).filter(|i| !plan.outer[k].contains(i)).collect();
        want.sort_unstable();
        assert_eq!(train, want);
    }
    for fold in &plan.outer {
        let stopping = fold.iter().filter(|&&i| data.sequences()[i].sequence_type() == SequenceType::Stopping).count();
        assert_eq!(stopping, 1);
    }
    assert!(CvPlan::new(&data, 6, 4, 9).is_err());
}

#[test]
fn single_setting_nested_cv_is_plain_cv_and_reproducible() {
    let data = small_synthetic(2);
    let config = NestedCvConfig {
        grid: vec![GridSetting::new(1, 1)],
        train: TrainConfig { max_iterations: 60, ..TrainConfig::default() },
        window: Window::new(1.0, -0.5),
        seed: 4,
        ..NestedCvConfig::default()
    };
    let a = nested_cv(&data, &config).unwrap();
    let b = nested_cv(&data, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.folds.len(), 5);
    assert!(a.folds.iter().all(|f| f.selected == GridSetting::new(1, 1)));
    let mut ids: Vec<String> = a.folds.iter().flat_map(|f| f.test_ids.clone()).collect();
    ids.sort();
    let mut all: Vec<String> = data.sequences().iter().map(|s| s.id().to_string()).collect();
    all.sort();
    assert_eq!(ids, all);
    assert!((0.0..=2.0).contains(&a.pooled_mt));
    assert!(nested_cv(&data, &NestedCvConfig { grid: vec![], ..config }).is_err());
}
