//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use myoprop::rrrff::{feature_matrix, normal_equation_residual, RESIDUAL_TOLERANCE};
use myoprop::{
    anova_oneway, compare, cv_accuracy, default_k_grid, f_cdf, fit_rrrff, generate_session, generate_trials,
    predict, proportional_value, rff_features, sample_rff, train, Frame, GestureLabel, KnnParams, LabeledDataset,
    MetricKind, ProportionalMap, ProtocolParams, RrRffModel, RrRffParams, ScriptAction, SeededRng, SessionScript,
    SynthConfig, TrialPlan, WeightScheme, STUDY_GESTURES,
};
use nalgebra::DMatrix;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let e = start.elapsed();
    if e > limit {
        return Err(format!("took {e:.2?}, limit {limit:?}"));
    }
    Ok(())
}

fn knn_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut checks = 0;
    for seed in 0..200 {
        checks += knn_instance(seed)?;
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("200 instances, {checks} configurations agree, {:.2?}", start.elapsed()))
}

fn low_k_accuracy() -> Outcome {
    let start = Instant::now();
    let cfg = SynthConfig { noise_rel: 0.05, ..SynthConfig::default() };
    // 7 classes (rest + 6 gestures), 10 frames per class per block, 4 blocks
    let actions = GestureLabel::ALL
        .iter()
        .map(|&label| ScriptAction { label, intensity: if label.is_rest() { 0.0 } else { 1.0 }, duration_s: 0.2 })
        .collect();
    let data = generate_session(&SessionScript { repetitions: 4, actions }, &cfg).map_err(|e| e.to_string())?;
    for l in GestureLabel::ALL {
        let n = data.labels().iter().filter(|&&x| x == l).count();
        if n != 40 {
            return Err(format!("{l} has {n} frames"));
        }
    }
    let ks = default_k_grid(data.active().len());
    let mut worst = 1.0f64;
    for &k in &ks {
        let acc = cv_accuracy(&data, k, MetricKind::Euclidean, WeightScheme::InverseSquared).map_err(|e| e.to_string())?;
        if acc < 0.98 {
            return Err(format!("k = {k}: accuracy {acc}"));
        }
        worst = worst.min(acc);
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("k in {:?}: min accuracy {worst}, {:.2?}", ks, start.elapsed()))
}

fn proportional_monotonicity() -> Outcome {
    let tol = 1e-12;
    let mut checked = 0;
    for (t, mc) in [(0.1, 1.0), (0.5, 2.0), (0.02, 0.3), (1.0, 1.5)] {
        let maps: Vec<ProportionalMap> = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|&d| ProportionalMap::new(t, d, BTreeMap::from([(GestureLabel::Power, mc)])).unwrap())
            .collect();
        let p = |m: f64, map: &ProportionalMap| proportional_value(m, GestureLabel::Power, map).unwrap();
        let grid: Vec<f64> = (1..100).map(|i| t + (mc - t) * i as f64 / 100.0).collect();
        for &m in &grid {
            for w in maps.windows(2) {
                let (a, b) = (p(m, &w[0]), p(m, &w[1]));
                if !(b > a) {
                    return Err(format!("t={t} Mc={mc} m={m}: p(d={}) = {a} not < p(d={}) = {b}", w[0].d, w[1].d));
                }
            }
        }
        for map in &maps {
            let mut prev = f64::NEG_INFINITY;
            for &m in grid.iter().chain(&[mc, mc * 1.01, mc * 5.0]) {
                let v = p(m, map);
                if v < prev - tol {
                    return Err(format!("not monotone in m at {m} (d = {})", map.d));
                }
                prev = v;
                checked += 1;
            }
            for m in [mc, mc + 1e-9, 2.0 * mc, 100.0 * mc] {
                if (p(m, map) - 1.0).abs() > tol {
                    return Err(format!("p({m}) != 1 at Mc = {mc}"));
                }
            }
        }
    }
    Ok(format!("{checked} grid points, d in {{1,2,5,10}}"))
}

fn replay_stream() -> Vec<Frame> {
    let cfg = SynthConfig { seed: 21, ..SynthConfig::default() }.restricted_to(&STUDY_GESTURES);
    let plan = TrialPlan { repeats: 1, duration_s: 3.0, lead_in_s: 1.0, ramp_s: 1.5, ..TrialPlan::default() };
    generate_trials(&plan, &cfg).unwrap().into_iter().flat_map(|t| t.stream).collect()
}

fn threshold_monotonicity() -> Outcome {
    let cfg = SynthConfig::default().restricted_to(&STUDY_GESTURES);
    let data = generate_session(&SessionScript::study_default(), &cfg).map_err(|e| e.to_string())?;
    let stream = replay_stream();
    let mut counts = Vec::new();
    for g in [1.0, 1.5, 2.0, 2.5, 3.0] {
        let model = train(&data, &KnnParams { g, ..KnnParams::default() }).map_err(|e| e.to_string())?;
        let n = stream.iter().filter(|f| !predict(f, &model).unwrap().label.is_rest()).count();
        counts.push(n);
    }
    if counts.windows(2).any(|w| w[1] > w[0]) {
        return Err(format!("non-rest counts {counts:?}"));
    }
    Ok(format!("non-rest counts over g = 1.0..3.0: {counts:?} of {}", stream.len()))
}

fn scale_invariance() -> Outcome {
    let data = generate_session(&SessionScript::pilot_default(), &SynthConfig::default()).map_err(|e| e.to_string())?;
    let model = train(&data, &KnnParams::default()).map_err(|e| e.to_string())?;
    let mut rng = SeededRng::new(2024);
    let (mut compared, mut mismatches) = (0, 0);
    for _ in 0..1000 {
        let mut ch = [0.0; 8];
        ch.iter_mut().for_each(|v| *v = rng.uniform());
        let f = Frame::new(ch).unwrap();
        let a = predict(&f, &model).unwrap();
        for c in [1.5, 2.0, 10.0] {
            let b = predict(&f.scaled(c).unwrap(), &model).unwrap();
            if !a.label.is_rest() && !b.label.is_rest() {
                compared += 1;
                mismatches += usize::from(a.label != b.label);
            }
        }
    }
    if mismatches > 0 || compared == 0 {
        return Err(format!("{mismatches} mismatches in {compared} comparisons"));
    }
    Ok(format!("{compared} scaled pairs above threshold, 0 mismatches"))
}

fn anova_correctness() -> Outcome {
    let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).map_err(|e| e.to_string())?;
    if (r.f_statistic - 1.5).abs() > 1e-9 || (r.df_between, r.df_within) != (1, 4) {
        return Err(format!("F = {}, df = ({}, {})", r.f_statistic, r.df_between, r.df_within));
    }
    let quad = 1.0 - f_cdf_quadrature(1.5, 1.0, 4.0);
    if (r.p_value - quad).abs() > 1e-6 {
        return Err(format!("p = {} vs quadrature {quad}", r.p_value));
    }
    let mut prev = 0.0;
    for i in 0..100 {
        let x = i as f64 * 0.1;
        let c = f_cdf(x, 1.0, 4.0).map_err(|e| e.to_string())?;
        if c < prev {
            return Err(format!("f_cdf decreases at {x}"));
        }
        prev = c;
    }
    Ok(format!("F = 1.5, df = (1, 4), p = {:.9} (quadrature {quad:.9})", r.p_value))
}

fn residual_of(model: &RrRffModel, data: &LabeledDataset) -> f64 {
    let z = feature_matrix(data.frames(), &model.map);
    let y = DMatrix::from_fn(data.len(), model.gesture_order.len(), |i, j| {
        if data.labels()[i] == model.gesture_order[j] { data.levels()[i] } else { 0.0 }
    });
    normal_equation_residual(&z, &y, model.lambda, &model.weight_matrix())
}

fn rrrff_numerics() -> Outcome {
    let mut worst = 0.0f64;
    let mut fits = 0;
    for seed in 0..4 {
        let data = generate_session(&SessionScript::study_default(), &SynthConfig { seed, ..SynthConfig::default() })
            .map_err(|e| e.to_string())?;
        for lambda in [1e-2, 1.0, 10.0] {
            let m = fit_rrrff(&data, &RrRffParams { lambda, seed, ..RrRffParams::default() }).map_err(|e| e.to_string())?;
            worst = worst.max(residual_of(&m, &data));
            fits += 1;
        }
    }
    if worst > RESIDUAL_TOLERANCE {
        return Err(format!("residual {worst:e}"));
    }
    let mut rng = SeededRng::new(99);
    let pairs: Vec<([f64; 8], [f64; 8])> = (0..20).map(|_| (random_point(&mut rng, false), random_point(&mut rng, false))).collect();
    let gamma = 0.5;
    let err = |d: usize| -> f64 {
        (0..10)
            .map(|seed| {
                let map = sample_rff(d, gamma, seed).unwrap();
                pairs
                    .iter()
                    .map(|(a, b)| {
                        let dot: f64 = rff_features(a, &map).iter().zip(rff_features(b, &map)).map(|(x, y)| x * y).sum();
                        let k = (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp();
                        (dot - k).abs()
                    })
                    .sum::<f64>()
                    / pairs.len() as f64
            })
            .sum::<f64>()
            / 10.0
    };
    let (e100, e1000) = (err(100), err(1000));
    if !(e1000 < e100) {
        return Err(format!("kernel error D=1000 {e1000} not below D=100 {e100}"));
    }
    Ok(format!("{fits} fits, max residual {worst:.2e}; kernel error D=100 {e100:.4}, D=1000 {e1000:.4}"))
}

fn level_effect() -> Outcome {
    let start = Instant::now();
    let cfg = SynthConfig::default().restricted_to(&STUDY_GESTURES);
    let data = generate_session(&SessionScript::study_default(), &cfg).map_err(|e| e.to_string())?;
    let trials = generate_trials(&TrialPlan::default(), &SynthConfig { seed: 1, ..cfg }).map_err(|e| e.to_string())?;
    let study = compare(&data, &trials, &KnnParams::default(), &RrRffParams::default(), &ProtocolParams::default())
        .map_err(|e| e.to_string())?;
    let rrrff = &study.comparison.second;
    let knn = &study.comparison.first;
    let smoothed = data.with_frames(myoprop::smooth(data.frames(), 5).unwrap()).unwrap();
    let r = residual_of(&study.rrrff_model, &smoothed);
    if r > RESIDUAL_TOLERANCE {
        return Err(format!("study fit residual {r:e}"));
    }
    let sr = |r: &myoprop::SrReport, l: f64| r.level(l).map(|s| s.success_rate).unwrap_or(f64::NAN);
    let line = format!(
        "kNN SR {:.2}/{:.2}/{:.2}, RR-RFF SR {:.2}/{:.2}/{:.2} at 0.33/0.67/1.0; kNN {} RR-RFF overall ({} vs {}), {:.2?}",
        sr(knn, 0.33), sr(knn, 0.67), sr(knn, 1.0),
        sr(rrrff, 0.33), sr(rrrff, 0.67), sr(rrrff, 1.0),
        if knn.overall > rrrff.overall { "beats" } else if knn.overall == rrrff.overall { "ties" } else { "trails" },
        knn.overall, rrrff.overall, start.elapsed()
    );
    if !(sr(rrrff, 1.0) >= sr(rrrff, 0.33)) {
        return Err(format!("RR-RFF SR(1.0) < SR(0.33): {line}"));
    }
    if !(sr(rrrff, 1.0) >= 0.9 && sr(knn, 1.0) >= 0.9) {
        return Err(format!("SR at level 1.0 below 0.9: {line}"));
    }
    within(Duration::from_secs(60), start)?;
    Ok(line)
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_myoprop"))
        .args(args)
        .current_dir(dir)
        .env_remove("MYOPROP_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("myoprop {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

const PIPELINE_OUTPUTS: [&str; 14] = [
    "train.csv",
    "trials.csv",
    "knn.json",
    "knn_auto.json",
    "rrrff.json",
    "cv.csv",
    "pred.csv",
    "sr.csv",
    "records.csv",
    "cmp/sr_knn.csv",
    "cmp/sr_rrrff.csv",
    "cmp/trials.csv",
    "cmp/anova.txt",
    "cmp/config.json",
];

fn pipeline(dir: &Path) -> Result<(), String> {
    std::fs::write(dir.join("synth.json"), r#"{"noise_rel": 0.4, "noise_abs": 0.8, "rest_level": 0.15}"#)
        .map_err(|e| e.to_string())?;
    let steps: [&[&str]; 10] = [
        &["synth", "--config", "synth.json", "--seed", "5", "--out", "train.csv"],
        &["synth", "--config", "synth.json", "--seed", "6", "--trials", "--out", "trials.csv"],
        &["train", "--data", "train.csv", "--out", "knn.json"],
        &["train", "--data", "train.csv", "--k", "auto", "--metric", "mahalanobis", "--out", "knn_auto.json"],
        &["train", "--data", "train.csv", "--algo", "rrrff", "--seed", "3", "--out", "rrrff.json"],
        &["crossval", "--data", "train.csv", "--metric", "euclidean,minkowski:1", "--weight", "uniform,inv-sq", "--out", "cv.csv"],
        &["predict", "--model", "knn.json", "--data", "train.csv", "--out", "pred.csv"],
        &["eval", "--model", "rrrff.json", "--trials", "trials.csv", "--seed", "2", "--records", "records.csv", "--out", "sr.csv"],
        &["compare", "--train", "train.csv", "--trials", "trials.csv", "--seed", "4", "--out-dir", "cmp"],
        &["anova", "--groups", "cmp/trials.csv", "--out", "anova.txt"],
    ];
    for s in steps {
        run_cli(dir, s)?;
    }
    Ok(())
}

fn reproducibility() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let mut bytes = 0;
    for name in PIPELINE_OUTPUTS.iter().chain(&["anova.txt"]) {
        let x = std::fs::read(a.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
        bytes += x.len();
    }
    Ok(format!("{} files, {bytes} bytes identical across two runs", PIPELINE_OUTPUTS.len() + 1))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 kNN oracle equivalence", knn_oracle_equivalence),
        ("2 low-k CV accuracy", low_k_accuracy),
        ("3 proportionality monotonicity", proportional_monotonicity),
        ("4 thresholding monotonicity", threshold_monotonicity),
        ("5 scale invariance", scale_invariance),
        ("6 ANOVA correctness", anova_correctness),
        ("7 RR-RFF numerics", rrrff_numerics),
        ("8 level effect study", level_effect),
        ("9 CLI reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
