use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use myoprop::io::{self, ModelBody, ModelFile, MODEL_SCHEMA_VERSION};
use myoprop::{
    anova_oneway, cv_grid, default_k_grid, evaluate, fit_rrrff, generate_session,
    generate_trials, presentation_order, smooth, AnovaResult, Bandwidth, Error, KnnParams, LabeledDataset,
    Predictor, ProtocolParams, Result, RrRffParams, SessionScript, SynthConfig, TrialPlan,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_with_defaults, resolve_seed};
use crate::{AnovaArgs, CompareArgs, CrossvalArgs, EvalArgs, KnnOpts, PredictArgs, ProtocolOpts, RffOpts, SynthArgs, TrainArgs};

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    io::write_atomic(path, bytes)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn knn_params(o: &KnnOpts) -> KnnParams {
    KnnParams { g: o.g, d: o.d, k: o.k.clone(), metric: o.metric, weighting: o.weight }
}

fn rff_params(o: &RffOpts, seed: u64) -> RrRffParams {
    RrRffParams {
        features: o.features,
        bandwidth: o.gamma.map_or(Bandwidth::Median, Bandwidth::Fixed),
        lambda: o.lambda,
        rho: o.rho,
        seed,
    }
}

fn protocol(o: &ProtocolOpts, smooth_window: usize, seed: u64) -> Result<ProtocolParams> {
    let p = ProtocolParams {
        tolerance: o.tolerance,
        dwell_s: o.dwell,
        timeout_s: o.timeout,
        levels: o.levels.clone(),
        smooth_window,
        seed,
    };
    p.validate()?;
    Ok(p)
}

fn smoothed(data: &LabeledDataset, window: usize) -> Result<LabeledDataset> {
    data.with_frames(smooth(data.frames(), window)?)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut config: SynthConfig = load_with_defaults(a.config.as_deref(), SynthConfig::default())?;
    config.seed = resolve_seed(a.seed, config.seed)?;
    let mut buf = Vec::new();
    if a.trials {
        let plan: TrialPlan = load_with_defaults(a.script.as_deref(), TrialPlan::default())?;
        io::write_trials(&generate_trials(&plan, &config)?, &mut buf)?;
    } else {
        let script: SessionScript = load_with_defaults(a.script.as_deref(), SessionScript::study_default())?;
        io::write_recording(&generate_session(&script, &config)?, &mut buf)?;
    }
    write_out(&a.out, &buf)
}

pub fn train(a: TrainArgs) -> Result<()> {
    if a.smooth == 0 {
        return Err(Error::Config("--smooth must be at least 1".into()));
    }
    let data = smoothed(&io::read_recording(&a.data)?, a.smooth)?;
    let body = match a.algo {
        crate::Algo::Knn => {
            let params = knn_params(&a.knn);
            let model = myoprop::train(&data, &params)?;
            ModelBody::Knn { params, model }
        }
        crate::Algo::Rrrff => {
            let params = rff_params(&a.rff, resolve_seed(a.seed, 0)?);
            let model = fit_rrrff(&data, &params)?;
            ModelBody::Rrrff { params, model }
        }
    };
    let file = ModelFile { schema_version: MODEL_SCHEMA_VERSION, smooth_window: a.smooth, body };
    write_out(&a.out, file.to_json()?.as_bytes())
}

pub fn crossval(a: CrossvalArgs) -> Result<()> {
    if a.smooth == 0 {
        return Err(Error::Config("--smooth must be at least 1".into()));
    }
    let data = smoothed(&io::read_recording(&a.data)?, a.smooth)?;
    let ks = match a.k {
        Some(ks) => ks,
        None => default_k_grid(data.active().len()),
    };
    let report = cv_grid(&data, &ks, &a.metric, &a.weight)?;
    let config = json!({
        "command": "crossval",
        "k": ks,
        "metrics": a.metric.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "weightings": a.weight.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "smooth_window": a.smooth,
    });
    let mut buf = Vec::new();
    io::write_cv_report(&report, &config, &mut buf)?;
    write_out(&a.out, &buf)
}

/// Model settings echoed into every report that uses the model.
fn model_config(model: &ModelFile) -> serde_json::Value {
    match &model.body {
        ModelBody::Knn { params, model: m } => json!({
            "algorithm": "knn",
            "smooth_window": model.smooth_window,
            "params": params,
            "k": m.config.k,
            "rest_threshold": m.rest.t,
            "m0": m.prop.m0,
        }),
        ModelBody::Rrrff { params, model: m } => json!({
            "algorithm": "rrrff",
            "smooth_window": model.smooth_window,
            "params": params,
            "gamma": m.map.gamma,
        }),
    }
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let data = io::read_recording(&a.data)?;
    let frames = smooth(data.frames(), model.smooth_window)?;
    let preds = frames.iter().map(|f| model.predict(f)).collect::<Result<Vec<_>>>()?;
    let config = json!({ "command": "predict", "model": model_config(&model) });
    let mut buf = Vec::new();
    io::write_predictions(&frames, &preds, &config, &mut buf)?;
    write_out(&a.out, &buf)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let seed = resolve_seed(a.seed, 0)?;
    let proto = protocol(&a.protocol, model.smooth_window, seed)?;
    let trials = io::read_trials(&a.trials, a.protocol.rate)?;
    let order = presentation_order(trials.len(), seed);
    let (report, records) = evaluate(&model, &trials, &order, &proto, model.algorithm())?;
    let config = json!({
        "command": "eval",
        "model": model_config(&model),
        "protocol": proto,
        "frame_rate_hz": a.protocol.rate,
    });
    let mut buf = Vec::new();
    io::write_sr_report(&report, &config, &mut buf)?;
    write_out(&a.out, &buf)?;
    if let Some(path) = a.records {
        let mut buf = Vec::new();
        io::write_trial_records(&records, &config, &mut buf)?;
        write_out(&path, &buf)?;
    }
    Ok(())
}

pub fn compare(a: CompareArgs) -> Result<()> {
    if a.smooth == 0 {
        return Err(Error::Config("--smooth must be at least 1".into()));
    }
    let seed = resolve_seed(a.seed, 0)?;
    let proto = protocol(&a.protocol, a.smooth, seed)?;
    let knn = knn_params(&a.knn);
    let rff = rff_params(&a.rff, seed);
    let data = io::read_recording(&a.train)?;
    let trials = io::read_trials(&a.trials, a.protocol.rate)?;

    let study = myoprop::compare(&data, &trials, &knn, &rff, &proto)?;
    let (knn_model, rff_model, cmp) = (&study.knn_model, &study.rrrff_model, &study.comparison);

    let config = json!({
        "command": "compare",
        "seed": seed,
        "frame_rate_hz": a.protocol.rate,
        "protocol": proto,
        "knn": { "params": knn, "k": knn_model.config.k, "rest_threshold": knn_model.rest.t, "m0": knn_model.prop.m0 },
        "rrrff": { "params": rff, "gamma": rff_model.map.gamma },
        "trials": trials.len(),
    });
    std::fs::create_dir_all(&a.out_dir)?;
    let dir = &a.out_dir;
    let mut buf = Vec::new();
    io::write_sr_report(&cmp.first, &config, &mut buf)?;
    write_out(&dir.join("sr_knn.csv"), &buf)?;
    buf.clear();
    io::write_sr_report(&cmp.second, &config, &mut buf)?;
    write_out(&dir.join("sr_rrrff.csv"), &buf)?;
    buf.clear();
    io::write_trial_records(&cmp.records, &config, &mut buf)?;
    write_out(&dir.join("trials.csv"), &buf)?;

    let groups = [("knn", success_values(&cmp.records, "knn")), ("rrrff", success_values(&cmp.records, "rrrff"))];
    let text = anova_text(&groups, cmp.anova.as_ref(), 0.05, &config)?;
    write_out(&dir.join("anova.txt"), text.as_bytes())?;
    write_out(&dir.join("config.json"), format!("{}\n", serde_json::to_string_pretty(&config)?).as_bytes())?;

    for r in [&cmp.first, &cmp.second] {
        let levels: Vec<String> = r.per_level.iter().map(|s| format!("{}={}", s.level, s.success_rate)).collect();
        println!("{}: overall {} ({})", r.algorithm, r.overall, levels.join(", "));
    }
    Ok(())
}

fn success_values(records: &[myoprop::TrialRecord], algorithm: &str) -> Vec<f64> {
    records.iter().filter(|r| r.algorithm == algorithm).map(|r| f64::from(u8::from(r.success))).collect()
}

fn anova_text<C: Serialize>(
    groups: &[(&str, Vec<f64>)],
    result: Option<&AnovaResult>,
    alpha: f64,
    config: &C,
) -> Result<String> {
    let mut s = String::new();
    let w = |e: std::fmt::Error| Error::Report(e.to_string());
    writeln!(s, "# config: {}", serde_json::to_string(config)?).map_err(w)?;
    for (name, v) in groups {
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        writeln!(s, "group {name}: n={} mean={mean}", v.len()).map_err(w)?;
    }
    match result {
        None => writeln!(s, "status: undefined (all observations identical)").map_err(w)?,
        Some(r) => {
            writeln!(s, "f_statistic: {}", r.f_statistic).map_err(w)?;
            writeln!(s, "df_between: {}", r.df_between).map_err(w)?;
            writeln!(s, "df_within: {}", r.df_within).map_err(w)?;
            writeln!(s, "p_value: {}", r.p_value).map_err(w)?;
            writeln!(s, "degenerate: {}", r.degenerate).map_err(w)?;
            writeln!(s, "alpha: {alpha}").map_err(w)?;
            writeln!(s, "significant: {}", r.significant(alpha)).map_err(w)?;
            for (a, sig) in &r.significant_at {
                writeln!(s, "significant_at_{a}: {sig}").map_err(w)?;
            }
        }
    }
    Ok(s)
}

/// Values of one group file: column `value`, else `success`, else the only
/// column.
fn value_column(header: &[String], source: &str) -> Result<usize> {
    for name in ["value", "success"] {
        if let Some(i) = header.iter().position(|h| h == name) {
            return Ok(i);
        }
    }
    if header.len() == 1 {
        return Ok(0);
    }
    Err(Error::Data { path: source.into(), line: 1, msg: "no `value` or `success` column".into() })
}

fn read_groups(paths: &[PathBuf]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for path in paths {
        let source = path.display().to_string();
        let (header, rows) = io::read_report_table(std::fs::File::open(path)?, &source)?;
        let vi = value_column(&header, &source)?;
        let split = if paths.len() == 1 { header.iter().position(|h| h == "algorithm" || h == "group") } else { None };
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| source.clone());
        let mut by_name: BTreeMap<String, usize> = BTreeMap::new();
        for (line, row) in rows {
            let v: f64 = row[vi].trim().parse().map_err(|_| Error::Data {
                path: source.clone(),
                line,
                msg: format!("`{}` is not a number", row[vi]),
            })?;
            let name = split.map_or_else(|| stem.clone(), |i| row[i].clone());
            let slot = *by_name.entry(name.clone()).or_insert_with(|| {
                groups.push((name, Vec::new()));
                groups.len() - 1
            });
            groups[slot].1.push(v);
        }
    }
    Ok(groups)
}

pub fn anova(a: AnovaArgs) -> Result<()> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Error::Config(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let groups = read_groups(&a.groups)?;
    let values: Vec<Vec<f64>> = groups.iter().map(|(_, v)| v.clone()).collect();
    let result = anova_oneway(&values)?;
    let names: Vec<(&str, Vec<f64>)> = groups.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    let config = json!({ "command": "anova", "alpha": a.alpha, "groups": groups.iter().map(|g| &g.0).collect::<Vec<_>>() });
    let text = anova_text(&names, Some(&result), a.alpha, &config)?;
    print!("{text}");
    if let Some(out) = a.out {
        write_out(&out, text.as_bytes())?;
    }
    Ok(())
}
