//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero when any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use fldcrf::evaluation::{
    dataset_labels, metric_mt, nested_cv, predict_dataset, sustained_accuracy_onset, CurvePoint, GridSetting,
    NestedCvConfig, Window,
};
use fldcrf::features::{
    calibrate_depth, fit_quadratic, lateral_displacement, motion_features, BoundingBox, BoundingBoxTrack,
    DecayCurve, DepthLine, LateralModel, MotionConfig, SignConvention, DEFAULT_TAU, MOTION_DIM, NUM_POINTS,
};
use fldcrf::graph::build_tables;
use fldcrf::inference::{filtered_label_marginals, forward, sequence_conditional_loglik, smoothed_label_marginals};
use fldcrf::synthgen::{generate, ScenarioConfig, TypeCounts, MOTION_COLUMNS, VEHICLE_COLUMNS};
use fldcrf::training::{objective_and_gradient, train, TrainConfig};
use fldcrf::{
    build_model_spec, Dataset, Frame, LayerDescriptor, ModelSpec, ParameterVector, Sequence, SequenceType,
};
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Check {
    let mut r = rng(1001);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let (spec, theta, seq) = random_instance(&mut r);
        let (err, same_path) = oracle_discrepancy(&spec, &theta, &seq);
        if !same_path {
            return Err(format!("instance {i}: viterbi path differs"));
        }
        worst = worst.max(err);
    }
    ensure(worst <= 1e-10, format!("max relative error {worst:.2e} over 50 instances"))
}

fn gradient_instance(r: &mut rand_chacha::ChaCha8Rng) -> (ModelSpec, Dataset, Vec<f64>) {
    let layers = r.gen_range(1..=2);
    let d = r.gen_range(1..=3);
    let descs: Vec<_> = (0..layers)
        .map(|_| LayerDescriptor::new(&LABELS, &[r.gen_range(1..=2), r.gen_range(1..=2)]))
        .collect();
    let spec = build_model_spec(&descs, d, None).unwrap();
    let seqs = (0..3)
        .map(|n| {
            let frames = (0..r.gen_range(1..=4))
                .map(|t| {
                    let x = (0..d).map(|_| r.gen_range(-1.5..1.5)).collect();
                    Frame::labeled(t, x, LABELS[r.gen_range(0..2)])
                })
                .collect();
            Sequence::new(format!("g{n}"), frames, SequenceType::Generic, None).unwrap()
        })
        .collect();
    let theta = (0..spec.param_count()).map(|_| r.gen_range(-1.0..1.0)).collect();
    (spec, Dataset::new(seqs, 15.0).unwrap(), theta)
}

fn gradient_correctness() -> Check {
    let sigma2 = TrainConfig::default().sigma2;
    let value = |spec: &ModelSpec, data: &Dataset, w: Vec<f64>| {
        objective_and_gradient(spec, &ParameterVector::new(spec, w).unwrap(), data, sigma2).unwrap()
    };
    let mut r = rng(1002);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (spec, data, theta) = gradient_instance(&mut r);
        let (_, grad) = value(&spec, &data, theta.clone());
        for (k, g) in grad.iter().enumerate() {
            let (mut plus, mut minus) = (theta.clone(), theta.clone());
            plus[k] += 1e-5;
            minus[k] -= 1e-5;
            let fd = (value(&spec, &data, plus).0 - value(&spec, &data, minus).0) / 2e-5;
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-3));
        }
    }
    ensure(worst <= 1e-5, format!("max relative error {worst:.2e} over 20 instances"))
}

fn normalization() -> Check {
    let mut r = rng(1003);
    let mut worst = 0.0f64;
    for len in 1..=8usize {
        let spec = build_model_spec(&[LayerDescriptor::new(&LABELS, &[2, 1])], 2, None).unwrap();
        let theta = random_theta(&spec, 1.5, &mut r);
        let xs: Vec<Vec<f64>> = (0..len).map(|_| vec![r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]).collect();
        let mut total = 0.0;
        for code in 0..1usize << len {
            let frames = xs
                .iter()
                .enumerate()
                .map(|(t, x)| Frame::labeled(t as i64, x.clone(), LABELS[(code >> t) & 1]))
                .collect();
            let seq = Sequence::new("all", frames, SequenceType::Generic, None).unwrap();
            total += sequence_conditional_loglik(&spec, &theta, &seq).unwrap().exp();
        }
        worst = worst.max((total - 1.0).abs());
    }
    ensure(worst <= 1e-9, format!("max |sum - 1| = {worst:.2e} for T = 1..8"))
}

fn specialization() -> Check {
    let mut r = rng(1004);
    let (mut ld, mut lc) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let h = [r.gen_range(1..=3), r.gen_range(1..=3)];
        let spec = build_model_spec(&[LayerDescriptor::new(&LABELS, &h)], r.gen_range(1..=3), None).unwrap();
        let theta = random_theta(&spec, 1.0, &mut r);
        let seq = unlabeled(&random_sequence(&spec, r.gen_range(1..=7), &mut r));
        let tables = build_tables(&spec, &theta, &seq).unwrap();
        let (f_ref, s_ref) = ldcrf_label_marginals(&spec, &theta, &seq, 0);
        ld = ld
            .max(max_abs_diff(&rows(&filtered_label_marginals(&spec, &forward(&tables).unwrap())), &f_ref))
            .max(max_abs_diff(&rows(&smoothed_label_marginals(&spec, &tables).unwrap()), &s_ref));

        let spec = build_model_spec(&[LayerDescriptor::uniform(&LABELS, 1)], r.gen_range(1..=3), None).unwrap();
        let theta = random_theta(&spec, 1.0, &mut r);
        let seq = unlabeled(&random_sequence(&spec, r.gen_range(1..=7), &mut r));
        let tables = build_tables(&spec, &theta, &seq).unwrap();
        let (f_ref, s_ref) = lccrf_label_marginals(&spec, &theta, &seq);
        lc = lc
            .max(max_abs_diff(&rows(&filtered_label_marginals(&spec, &forward(&tables).unwrap())), &f_ref))
            .max(max_abs_diff(&rows(&smoothed_label_marginals(&spec, &tables).unwrap()), &s_ref));
    }
    ensure(ld <= 1e-12 && lc <= 1e-12, format!("LDCRF max diff {ld:.2e}, linear-chain max diff {lc:.2e}"))
}

fn synthetic_recovery() -> Check {
    let make = |n, seed| {
        let cfg = ScenarioConfig {
            counts: TypeCounts::uniform(n),
            motion_noise_px: 0.3,
            depth_noise_m: 0.3,
            seed,
            ..ScenarioConfig::default()
        };
        generate(&cfg).unwrap().with_bias_feature()
    };
    let (train_set, test_set) = (make(20, 101), make(10, 202));
    let labels = dataset_labels(&train_set).unwrap();
    let spec = GridSetting::new(1, 2).build_spec(&labels, train_set.feature_dim().unwrap()).unwrap();
    let (theta, _) = train(&spec, &train_set, &TrainConfig { sigma2: 10.0, ..TrainConfig::default() }).unwrap();
    let preds = predict_dataset(&spec, &theta, &test_set).unwrap();
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, seq) in preds.iter().zip(test_set.sequences()) {
        for (t, frame) in seq.frames().iter().enumerate() {
            let best = (0..p.labels.len()).max_by(|&a, &b| p.probs[t][a].total_cmp(&p.probs[t][b])).unwrap();
            hit += usize::from(p.labels[best] == frame.y.as_ref().unwrap()[0]);
            total += 1;
        }
    }
    let accuracy = hit as f64 / total as f64;
    ensure(
        accuracy >= 0.90,
        format!("FLDCRF-1/2 held-out accuracy {accuracy:.4} ({} train / {} test episodes)", train_set.len(), test_set.len()),
    )
}

fn context_benefit() -> Check {
    let data = generate(&ScenarioConfig {
        counts: TypeCounts { continuous_crossing: 15, stopping: 15, ..TypeCounts::default() },
        pred_ahead: 30,
        seed: 11,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let config = NestedCvConfig { window: Window::NTU, seed: 3, ..NestedCvConfig::default() };
    let onset = |columns: &[std::ops::Range<usize>]| -> Result<(Option<f64>, f64), String> {
        let set = data.select_columns(columns).map_err(|e| e.to_string())?.with_bias_feature();
        let report = nested_cv(&set, &config).map_err(|e| e.to_string())?;
        let stopping = &report.curves.by_type[&SequenceType::Stopping];
        Ok((sustained_accuracy_onset(stopping, 0.7, -0.5), report.pooled_mt))
    };
    let (motion, mt_motion) = onset(&[MOTION_COLUMNS])?;
    let (context, mt_context) = onset(&[MOTION_COLUMNS, VEHICLE_COLUMNS])?;
    let show = |o: Option<f64>| o.map_or("never".to_string(), |s| format!("{s:.2} s"));
    let detail = format!(
        "stopping 0.7-accuracy onset: motion {} (mt {mt_motion:.3}), motion+vehicle {} (mt {mt_context:.3})",
        show(motion),
        show(context)
    );
    let ok = match (context, motion) {
        (Some(c), Some(m)) => c - m >= 0.4 - 1e-9,
        (Some(_), None) => true,
        _ => false,
    };
    ensure(ok, detail)
}

fn point(k: i64, acc: f64, prob: f64, std: f64) -> CurvePoint {
    CurvePoint { offset_frames: k, offset_s: k as f64 / 15.0, mean_prob: prob, accuracy: acc, std, count: 1 }
}

fn metric_and_curves() -> Check {
    let perfect: Vec<_> = (-8..=30).map(|k| point(k, 1.0, 1.0, 0.0)).collect();
    let flat: Vec<_> = (-8..=30).map(|k| point(k, 0.5, 0.5, 0.1)).collect();
    let three = vec![point(2, 1.0, 0.8, 0.1), point(1, 0.5, 0.6, 0.2), point(0, 1.0, 0.9, 0.0)];
    let got = [
        metric_mt(&perfect, &Window::NTU, 15.0).map_err(|e| e.to_string())?,
        metric_mt(&flat, &Window::NTU, 15.0).map_err(|e| e.to_string())?,
        metric_mt(&three, &Window::new(2.0 / 15.0, 0.0), 15.0).map_err(|e| e.to_string())?,
    ];
    ensure(got == [2.0, 0.9, 1.5], format!("perfect {}, flat {}, three-point {}", got[0], got[1], got[2]))
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn lines_of(slope: DecayCurve, intercept: DecayCurve) -> [DepthLine; 3] {
    [10.0, 20.0, 30.0].map(|d| DepthLine { slope: slope.eval(d), intercept: intercept.eval(d), depth: d })
}

fn calibration_and_geometry() -> Check {
    const FOCAL: f64 = 1000.0;
    let mut param_err = 0.0f64;
    let grid_k = [0.5, 1.0, 2.0, 3.5, 5.0];
    let grid_p = [0.25, 0.9, 1.5, 2.2, 4.0];
    let grid_l = [0.02, 0.04, 0.06, 0.08, 0.12];
    for &k in &grid_k {
        for &p in &grid_p {
            for &l in &grid_l {
                let slope = DecayCurve { k, p, l };
                let intercept = DecayCurve { k: 900.0 * k, p: 700.0 * p, l: 0.5 * l + 0.01 };
                let cal = calibrate_depth(&lines_of(slope, intercept), FOCAL, [0.0, 0.0]).map_err(|e| e.to_string())?;
                for (got, want) in [(cal.slope, slope), (cal.intercept, intercept)] {
                    param_err = param_err.max(relative(got.k, want.k)).max(relative(got.p, want.p)).max(relative(got.l, want.l));
                }
            }
        }
    }

    let road = calibrate_depth(
        &lines_of(DecayCurve { k: 0.0, p: 0.05, l: 0.1 }, DecayCurve { k: 540.0, p: -600.0, l: 0.05 }),
        FOCAL,
        [960.0, 540.0],
    )
    .map_err(|e| e.to_string())?;
    let mut depth_err = 0.0f64;
    for x in [120.0, 700.0, 960.0, 1500.0, 1850.0] {
        for d in 5..=60 {
            let line = road.line_at(d as f64);
            let back = road.depth_of_point(x, line.slope * x + line.intercept).map_err(|e| e.to_string())?;
            depth_err = depth_err.max((back - d as f64).abs());
        }
    }

    // pinhole camera 1.5 m above the ground looking along world y
    let project = |p: [f64; 3]| (FOCAL * p[0] / p[1], FOCAL * (1.5 - p[2]) / p[1]);
    let signs = SignConvention::default();
    let recovered = |a: [f64; 3], b: [f64; 3]| {
        let (pa, pb) = (project(a), project(b));
        let centre = (0.5 * (pa.0 + pb.0), 0.5 * (pa.1 + pb.1));
        let s_ix = pb.0 - pa.0;
        (lateral_displacement(FOCAL, centre, s_ix, pb.1 - pa.1, &signs, LateralModel::Radial), s_ix)
    };
    let (mut lateral_err, mut longitudinal_err) = (0.0f64, 0.0f64);
    for x in [-6.0, -2.5, -0.8, 0.7, 3.0, 5.5] {
        for y in [6.0, 12.0, 25.0] {
            for z in [0.0, 0.9, 2.6] {
                for dx in [-0.1, 0.08] {
                    let (s, s_ix) = recovered([x, y, z], [x + dx, y, z]);
                    lateral_err = lateral_err.max((s - s_ix).abs() / s_ix.abs());
                }
                for dy in [-0.15, 0.12] {
                    let (s, s_ix) = recovered([x, y, z], [x, y + dy, z]);
                    longitudinal_err = longitudinal_err.max(s.abs() / s_ix.abs());
                }
            }
        }
    }
    ensure(
        param_err <= 1e-8 && depth_err <= 1e-3 && lateral_err <= 0.02 && longitudinal_err <= 0.02,
        format!(
            "125-case parameter error {param_err:.2e}, depth inversion {depth_err:.2e} m, \
             lateral relative error {lateral_err:.2e}, longitudinal leak {longitudinal_err:.2e}"
        ),
    )
}

fn quadratic(c: [f64; 3], t: f64) -> f64 {
    c[0] + c[1] * t + c[2] * t * t
}

fn quadratic_fit() -> Check {
    let mut fit_err = 0.0f64;
    for n in 3..15 {
        let c = [0.7 - n as f64 * 0.1, 0.33, -0.021 * n as f64];
        let values: Vec<f64> = (0..n).map(|t| quadratic(c, t as f64)).collect();
        let got = fit_quadratic(&values).map_err(|e| e.to_string())?;
        for i in 0..3 {
            fit_err = fit_err.max((got[i] - c[i]).abs());
        }
    }

    // a box at fixed height whose centre and width steps are quadratic in
    // window-local time, so every grid point's displacement is quadratic
    let (centre, width) = ([1.5, -0.25, 0.04], [0.2, 0.05, -0.01]);
    let lead = 5;
    let n = lead + DEFAULT_TAU;
    let mut boxes = vec![BoundingBox::new(500.0, 800.0, 60.0, 140.0)];
    for k in 1..n {
        let prev = boxes[k - 1];
        let (dc, dw) = if k > lead {
            let t = (k - lead - 1) as f64;
            (quadratic(centre, t), quadratic(width, t))
        } else {
            (0.3, 0.0)
        };
        boxes.push(BoundingBox::new(prev.cx + dc, prev.cy, prev.w + dw, prev.h));
    }
    let track = BoundingBoxTrack::observed(boxes).map_err(|e| e.to_string())?;
    let cal = calibrate_depth(
        &lines_of(DecayCurve { k: 0.0, p: 0.05, l: 0.1 }, DecayCurve { k: 540.0, p: -600.0, l: 0.05 }),
        1000.0,
        [960.0, 540.0],
    )
    .map_err(|e| e.to_string())?;
    let features = motion_features(&track, &cal, n - 1, DEFAULT_TAU, &MotionConfig::default()).map_err(|e| e.to_string())?;
    let grid = [0.25, 0.5, 0.75];
    let mut layout_err = 0.0f64;
    for row in 0..3 {
        for (col, u) in grid.iter().enumerate() {
            for c in 0..3 {
                let want = centre[c] + (u - 0.5) * width[c];
                layout_err = layout_err.max((features[c * NUM_POINTS + row * 3 + col] - want).abs());
            }
        }
    }
    let dims_ok = features.len() == 27 && MOTION_DIM == NUM_POINTS * 3 && NUM_POINTS == 9;
    ensure(
        fit_err <= 1e-9 && layout_err <= 1e-9 && dims_ok,
        format!("fit error {fit_err:.2e}, layout error {layout_err:.2e}, {} = 9 points x 3 coefficients", features.len()),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fldcrf")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

fn pipeline(jobs: &str) -> Result<Vec<Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let f = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (d, m, p, c) = (f("d.jsonl"), f("m.json"), f("p.csv"), f("c.csv"));
    run_cli(&["generate", "--seed", "7", "--episodes", "5", "--jobs", jobs, "--out", &d])?;
    run_cli(&["train", "--data", &d, "--spec", "2/2", "--seed", "7", "--jobs", jobs, "--out", &m])?;
    run_cli(&["predict", "--data", &d, "--model", &m, "--jobs", jobs, "--out", &p])?;
    run_cli(&["evaluate", "--data", &d, "--predictions", &p, "--jobs", jobs, "--out", &c])?;
    [d, m, p, c].iter().map(|x| fs::read(Path::new(x)).map_err(|e| e.to_string())).collect()
}

fn determinism() -> Check {
    let first = pipeline("1")?;
    let second = pipeline("1")?;
    let parallel = pipeline("4")?;
    let bytes: usize = first.iter().map(Vec::len).sum();
    ensure(
        first == second && first == parallel,
        format!("generate/train/predict/evaluate outputs ({bytes} bytes) identical across runs and --jobs 1/4"),
    )
}

fn main() {
    let criteria: [(&str, Option<u64>, fn() -> Check); 10] = [
        ("oracle equivalence", Some(10), oracle_equivalence),
        ("gradient correctness", Some(30), gradient_correctness),
        ("normalization", None, normalization),
        ("specialization", None, specialization),
        ("synthetic recovery", Some(300), synthetic_recovery),
        ("context benefit", Some(1200), context_benefit),
        ("metric and curves", None, metric_and_curves),
        ("calibration and geometry", None, calibration_and_geometry),
        ("quadratic fit", None, quadratic_fit),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let over = limit.is_some_and(|s| elapsed > Duration::from_secs(s));
        let (pass, mut detail) = match result {
            Ok(d) => (!over, d),
            Err(d) => (false, d),
        };
        if over {
            detail.push_str(&format!("; exceeded {} s limit", limit.unwrap()));
        }
        failed += usize::from(!pass);
        println!(
            "[{}] {:>2} {name}: {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
