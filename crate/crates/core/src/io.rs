//! File formats: recordings and trial sets (CSV), model files (JSON) and CSV
//! reports.
//!
//! Recording header, exactly:
//!
//! ```text
//! time_s,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8,label,level,block
//! ```
//!
//! `time_s` and `block` may be empty; `block` must then be empty on every
//! row. A trial set uses the same layout with `block` as the trial id and
//! `label`/`level` as the trial's target on every row of that trial.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values. Reports start with a `# config: {json}`
//! line carrying the full effective configuration.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Predictor, SrReport, Trial, TrialRecord};
use crate::proportional::{predict, KnnModel, KnnParams, Prediction};
use crate::rrrff::{predict_rrrff, RrRffModel, RrRffParams};
use crate::selection::CvReport;
use crate::signal::{Frame, GestureLabel, LabeledDataset, CHANNELS};

pub const RECORDING_HEADER: &str = "time_s,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8,label,level,block";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// One parsed recording row with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingRow {
    pub line: u64,
    pub frame: Frame,
    pub label: GestureLabel,
    pub level: f64,
    pub block: Option<u32>,
}

fn data_err(source: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Data { path: source.to_string(), line, msg: msg.into() }
}

/// Parses recording rows; `source` names the input in error messages.
pub fn read_recording_rows<R: Read>(reader: R, source: &str) -> Result<Vec<RecordingRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| data_err(source, 1, e.to_string()))?,
        None => return Err(data_err(source, 1, "empty file; expected the recording header")),
    };
    let header_line: Vec<&str> = header.iter().collect();
    if header_line.join(",") != RECORDING_HEADER {
        return Err(data_err(source, 1, format!("header must be `{RECORDING_HEADER}`")));
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            data_err(source, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 12 {
            return Err(data_err(source, line, format!("expected 12 fields, found {}", rec.len())));
        }
        let num = |i: usize, what: &str| -> Result<f64> {
            let v: f64 = rec[i]
                .trim()
                .parse()
                .map_err(|_| data_err(source, line, format!("{what}: `{}` is not a number", &rec[i])))?;
            if !v.is_finite() {
                return Err(data_err(source, line, format!("{what} is not finite")));
            }
            Ok(v)
        };
        let time = if rec[0].trim().is_empty() { None } else { Some(num(0, "time_s")?) };
        let mut channels = [0.0; CHANNELS];
        for (c, slot) in channels.iter_mut().enumerate() {
            *slot = num(c + 1, &format!("ch{}", c + 1))?;
        }
        let frame = Frame::new(channels).map_err(|e| data_err(source, line, e.to_string()))?;
        let frame = match time {
            Some(t) => frame.with_time(t),
            None => frame,
        };
        let label: GestureLabel = rec[9].trim().parse().map_err(|e: Error| data_err(source, line, e.to_string()))?;
        let level = num(10, "level")?;
        if !(0.0..=1.0).contains(&level) {
            return Err(data_err(source, line, format!("level {level} outside [0, 1]")));
        }
        let block = match rec[11].trim() {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| data_err(source, line, format!("block `{s}` is not a non-negative integer")))?),
        };
        rows.push(RecordingRow { line, frame, label, level, block });
    }
    if rows.is_empty() {
        return Err(data_err(source, 2, "recording has no data rows"));
    }
    let with_block = rows.iter().filter(|r| r.block.is_some()).count();
    if with_block != 0 && with_block != rows.len() {
        let first = rows.iter().find(|r| r.block.is_none()).map(|r| r.line).unwrap_or(0);
        return Err(data_err(source, first, "block ids must be given on every row or on none"));
    }
    Ok(rows)
}

pub fn read_recording_from<R: Read>(reader: R, source: &str) -> Result<LabeledDataset> {
    let rows = read_recording_rows(reader, source)?;
    for r in &rows {
        if r.label.is_rest() && r.level != 0.0 {
            return Err(data_err(source, r.line, "rest rows must have level 0"));
        }
    }
    let blocks = if rows[0].block.is_some() {
        let ids: Vec<u32> = rows.iter().map(|r| r.block.unwrap_or(0)).collect();
        if let Err(e) = crate::signal::check_contiguous(&ids) {
            let bad = rows
                .windows(2)
                .enumerate()
                .find_map(|(i, w)| {
                    (w[0].block != w[1].block && rows[..i].iter().any(|r| r.block == w[1].block)).then_some(w[1].line)
                })
                .unwrap_or(0);
            return Err(data_err(source, bad, e.to_string()));
        }
        Some(ids)
    } else {
        None
    };
    LabeledDataset::new(
        rows.iter().map(|r| r.frame).collect(),
        rows.iter().map(|r| r.label).collect(),
        rows.iter().map(|r| r.level).collect(),
        blocks,
    )
}

pub fn read_recording(path: &Path) -> Result<LabeledDataset> {
    let file = fs::File::open(path)?;
    read_recording_from(file, &path.display().to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_row<W: Write>(w: &mut W, frame: &Frame, label: GestureLabel, level: f64, block: Option<u32>) -> Result<()> {
    let mut line = fmt_opt(frame.time_s);
    for c in frame.channels() {
        line.push(',');
        line.push_str(&c.to_string());
    }
    line.push_str(&format!(",{label},{level},"));
    if let Some(b) = block {
        line.push_str(&b.to_string());
    }
    line.push('\n');
    w.write_all(line.as_bytes())?;
    Ok(())
}

pub fn write_recording<W: Write>(data: &LabeledDataset, mut w: W) -> Result<()> {
    writeln!(w, "{RECORDING_HEADER}")?;
    for i in 0..data.len() {
        let block = data.blocks().map(|b| b[i]);
        write_row(&mut w, &data.frames()[i], data.labels()[i], data.levels()[i], block)?;
    }
    Ok(())
}

pub fn write_trials<W: Write>(trials: &[Trial], mut w: W) -> Result<()> {
    writeln!(w, "{RECORDING_HEADER}")?;
    for t in trials {
        for f in &t.stream {
            write_row(&mut w, f, t.target, t.level, Some(t.id))?;
        }
    }
    Ok(())
}

/// Groups a trial-set file into trials by block id, in file order.
pub fn read_trials_from<R: Read>(reader: R, source: &str, frame_rate_hz: f64) -> Result<Vec<Trial>> {
    let rows = read_recording_rows(reader, source)?;
    if rows[0].block.is_none() {
        return Err(data_err(source, rows[0].line, "trial files need a block (trial id) on every row"));
    }
    let mut trials: Vec<Trial> = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i < rows.len() && rows[i].block == rows[start].block {
            let (a, b) = (&rows[start], &rows[i]);
            if a.label != b.label || a.level != b.level {
                return Err(data_err(source, b.line, "label and level must be constant within a trial"));
            }
            continue;
        }
        let first = &rows[start];
        let id = first.block.unwrap_or(0);
        if trials.iter().any(|t| t.id == id) {
            return Err(data_err(source, first.line, format!("trial id {id} is not contiguous")));
        }
        let stream = rows[start..i].iter().map(|r| r.frame).collect();
        let trial = Trial::new(id, first.label, first.level, stream, frame_rate_hz)
            .map_err(|e| data_err(source, first.line, e.to_string()))?;
        trials.push(trial);
        start = i;
    }
    Ok(trials)
}

pub fn read_trials(path: &Path, frame_rate_hz: f64) -> Result<Vec<Trial>> {
    let file = fs::File::open(path)?;
    read_trials_from(file, &path.display().to_string(), frame_rate_hz)
}

/// A trained model plus everything needed to reproduce its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    /// Smoothing window applied to the training stream; applied again to
    /// every stream this model predicts on.
    pub smooth_window: usize,
    #[serde(flatten)]
    pub body: ModelBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum ModelBody {
    Knn { params: KnnParams, model: KnnModel },
    Rrrff { params: RrRffParams, model: RrRffModel },
}

impl ModelFile {
    pub fn algorithm(&self) -> &'static str {
        match self.body {
            ModelBody::Knn { .. } => "knn",
            ModelBody::Rrrff { .. } => "rrrff",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(text)?;
        if m.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::input(format!(
                "unsupported model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelFile::from_json(&fs::read_to_string(path)?)
    }
}

impl Predictor for ModelFile {
    fn predict(&self, frame: &Frame) -> Result<Prediction> {
        match &self.body {
            ModelBody::Knn { model, .. } => predict(frame, model),
            ModelBody::Rrrff { model, .. } => Ok(predict_rrrff(frame, model)),
        }
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn config_line<W: Write, C: Serialize>(w: &mut W, config: &C) -> Result<()> {
    writeln!(w, "# config: {}", serde_json::to_string(config)?)?;
    Ok(())
}

pub fn write_cv_report<W: Write, C: Serialize>(report: &CvReport, config: &C, mut w: W) -> Result<()> {
    config_line(&mut w, config)?;
    let c = &report.chosen;
    writeln!(w, "# chosen: k={},metric={},weighting={},accuracy={}", c.k, c.metric, c.weighting, c.accuracy)?;
    writeln!(w, "k,metric,weighting,accuracy")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{}", r.k, r.metric, r.weighting, r.accuracy)?;
    }
    Ok(())
}

/// Tidy per-level success rates, one row per level plus an `all` row.
pub fn write_sr_report<W: Write, C: Serialize>(report: &SrReport, config: &C, mut w: W) -> Result<()> {
    config_line(&mut w, config)?;
    writeln!(w, "algorithm,level,trials,successes,success_rate")?;
    for s in &report.per_level {
        writeln!(w, "{},{},{},{},{}", report.algorithm, s.level, s.trials, s.successes, s.success_rate)?;
    }
    writeln!(w, "{},all,{},{},{}", report.algorithm, report.trials, report.successes, report.overall)?;
    Ok(())
}

pub fn write_trial_records<W: Write, C: Serialize>(records: &[TrialRecord], config: &C, mut w: W) -> Result<()> {
    config_line(&mut w, config)?;
    writeln!(w, "algorithm,level,trial_id,success,time_to_success_s")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.algorithm,
            r.level,
            r.trial_id,
            u8::from(r.success),
            fmt_opt(r.time_to_success_s)
        )?;
    }
    Ok(())
}

pub fn write_predictions<W: Write, C: Serialize>(
    frames: &[Frame],
    predictions: &[Prediction],
    config: &C,
    mut w: W,
) -> Result<()> {
    config_line(&mut w, config)?;
    writeln!(w, "time_s,label,proportion")?;
    for (f, p) in frames.iter().zip(predictions) {
        writeln!(w, "{},{},{}", fmt_opt(f.time_s), p.label, p.proportion)?;
    }
    Ok(())
}

/// Data rows of a report with their 1-based line numbers.
pub type ReportRows = Vec<(u64, Vec<String>)>;

/// Reads a `#`-commented CSV report into its header and rows.
pub fn read_report_table<R: Read>(reader: R, source: &str) -> Result<(Vec<String>, ReportRows)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(false).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| data_err(source, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            data_err(source, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((header, rows))
}
