//! Goal-directed trials, success rates and head-to-head comparison.
//!
//! A trial asks for one gesture at one exertion level. It succeeds when the
//! predictor holds the target label with a proportion inside `level ±
//! tolerance` for `ceil(dwell_s * frame_rate)` consecutive frames, the run
//! ending no later than the timeout. Frame `i` is taken to end at
//! `(i + 1) / frame_rate` seconds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proportional::{self, predict, KnnModel, KnnParams, Prediction};
use crate::rng::SeededRng;
use crate::rrrff::{fit_rrrff, predict_rrrff, RrRffModel, RrRffParams};
use crate::signal::{smooth, Frame, GestureLabel, LabeledDataset};
use crate::stats::{anova_oneway, AnovaResult};
use crate::synth::STUDY_LEVELS;

/// Anything that maps one frame to a prediction.
pub trait Predictor {
    fn predict(&self, frame: &Frame) -> Result<Prediction>;
}

impl Predictor for KnnModel {
    fn predict(&self, frame: &Frame) -> Result<Prediction> {
        predict(frame, self)
    }
}

impl Predictor for RrRffModel {
    fn predict(&self, frame: &Frame) -> Result<Prediction> {
        Ok(predict_rrrff(frame, self))
    }
}

impl<F> Predictor for F
where
    F: Fn(&Frame) -> Result<Prediction>,
{
    fn predict(&self, frame: &Frame) -> Result<Prediction> {
        self(frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: u32,
    pub target: GestureLabel,
    pub level: f64,
    pub stream: Vec<Frame>,
    pub frame_rate_hz: f64,
}

impl Trial {
    pub fn new(id: u32, target: GestureLabel, level: f64, stream: Vec<Frame>, frame_rate_hz: f64) -> Result<Self> {
        if target.is_rest() {
            return Err(Error::input(format!("trial {id} targets rest")));
        }
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::input(format!("trial {id}: level {level} outside (0, 1]")));
        }
        if stream.is_empty() {
            return Err(Error::input(format!("trial {id} has an empty stream")));
        }
        if !(frame_rate_hz > 0.0 && frame_rate_hz.is_finite()) {
            return Err(Error::config(format!("frame rate must be positive, got {frame_rate_hz}")));
        }
        Ok(Trial { id, target, level, stream, frame_rate_hz })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub time_to_success_s: Option<f64>,
    pub trace: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub tolerance: f64,
    pub dwell_s: f64,
    pub timeout_s: f64,
    pub levels: Vec<f64>,
    /// Causal moving-average window applied to training and trial streams.
    pub smooth_window: usize,
    /// Seed for the trial presentation order.
    pub seed: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            tolerance: 0.15,
            dwell_s: 0.5,
            timeout_s: 10.0,
            levels: STUDY_LEVELS.to_vec(),
            smooth_window: 5,
            seed: 0,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        check_windows(self.tolerance, self.dwell_s, self.timeout_s)?;
        if self.levels.is_empty() {
            return Err(Error::config("no exertion levels configured"));
        }
        if self.smooth_window == 0 {
            return Err(Error::config("smoothing window must be at least 1"));
        }
        Ok(())
    }

    fn level_slot(&self, level: f64) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() <= 1e-9)
            .ok_or_else(|| Error::config(format!("trial level {level} is not in the configured level set")))
    }
}

fn check_windows(tolerance: f64, dwell_s: f64, timeout_s: f64) -> Result<()> {
    if !(tolerance > 0.0) {
        return Err(Error::config(format!("tolerance must be positive, got {tolerance}")));
    }
    if !(dwell_s > 0.0) {
        return Err(Error::config(format!("dwell must be positive, got {dwell_s}")));
    }
    if !(timeout_s >= dwell_s) {
        return Err(Error::config(format!("timeout {timeout_s} is shorter than dwell {dwell_s}")));
    }
    Ok(())
}

/// Frames a run must last to count as a hold.
pub fn dwell_frames(dwell_s: f64, frame_rate_hz: f64) -> usize {
    ((dwell_s * frame_rate_hz) - 1e-9).ceil().max(1.0) as usize
}

pub fn run_trial<P: Predictor + ?Sized>(
    predictor: &P,
    trial: &Trial,
    tolerance: f64,
    dwell_s: f64,
    timeout_s: f64,
) -> Result<TrialOutcome> {
    check_windows(tolerance, dwell_s, timeout_s)?;
    let need = dwell_frames(dwell_s, trial.frame_rate_hz);
    let trace = trial.stream.iter().map(|f| predictor.predict(f)).collect::<Result<Vec<_>>>()?;
    let mut run = 0usize;
    let mut time_to_success_s = None;
    for (i, p) in trace.iter().enumerate() {
        let end = (i + 1) as f64 / trial.frame_rate_hz;
        if end > timeout_s + 1e-9 {
            break;
        }
        if p.label == trial.target && (p.proportion - trial.level).abs() <= tolerance {
            run += 1;
            if run >= need {
                time_to_success_s = Some(end);
                break;
            }
        } else {
            run = 0;
        }
    }
    Ok(TrialOutcome { success: time_to_success_s.is_some(), time_to_success_s, trace })
}

pub fn success_rate(outcomes: &[TrialOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Report("success rate of zero trials".into()));
    }
    Ok(outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrReport {
    pub algorithm: String,
    /// In the order of the configured level set; levels without trials are
    /// omitted.
    pub per_level: Vec<LevelStats>,
    pub trials: usize,
    pub successes: usize,
    pub overall: f64,
}

impl SrReport {
    pub fn level(&self, level: f64) -> Option<&LevelStats> {
        self.per_level.iter().find(|s| (s.level - level).abs() <= 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: String,
    pub level: f64,
    pub trial_id: u32,
    pub target: GestureLabel,
    pub success: bool,
    pub time_to_success_s: Option<f64>,
}

/// Runs every trial (smoothed per `protocol`) through `predictor`. Records
/// come back in presentation `order`; the report aggregates by level.
pub fn evaluate<P: Predictor + Sync + ?Sized>(
    predictor: &P,
    trials: &[Trial],
    order: &[usize],
    protocol: &ProtocolParams,
    algorithm: &str,
) -> Result<(SrReport, Vec<TrialRecord>)> {
    protocol.validate()?;
    if trials.is_empty() {
        return Err(Error::Report("no trials to evaluate".into()));
    }
    let mut seen = vec![false; trials.len()];
    for &i in order {
        if i >= trials.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Logic("presentation order is not a permutation of the trials".into()));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Logic("presentation order is not a permutation of the trials".into()));
    }
    for t in trials {
        protocol.level_slot(t.level)?;
    }

    let outcomes: Vec<TrialOutcome> = trials
        .par_iter()
        .map(|t| {
            let stream = smooth(&t.stream, protocol.smooth_window)?;
            let smoothed = Trial { stream, ..t.clone() };
            run_trial(predictor, &smoothed, protocol.tolerance, protocol.dwell_s, protocol.timeout_s)
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![(0usize, 0usize); protocol.levels.len()];
    for (t, o) in trials.iter().zip(&outcomes) {
        let slot = protocol.level_slot(t.level)?;
        counts[slot].0 += 1;
        counts[slot].1 += usize::from(o.success);
    }
    let per_level = protocol
        .levels
        .iter()
        .zip(&counts)
        .filter(|(_, (n, _))| *n > 0)
        .map(|(&level, &(n, s))| LevelStats { level, trials: n, successes: s, success_rate: s as f64 / n as f64 })
        .collect();
    let successes = outcomes.iter().filter(|o| o.success).count();
    let report = SrReport {
        algorithm: algorithm.to_string(),
        per_level,
        trials: trials.len(),
        successes,
        overall: success_rate(&outcomes)?,
    };
    let records = order
        .iter()
        .map(|&i| TrialRecord {
            algorithm: algorithm.to_string(),
            level: trials[i].level,
            trial_id: trials[i].id,
            target: trials[i].target,
            success: outcomes[i].success,
            time_to_success_s: outcomes[i].time_to_success_s,
        })
        .collect();
    Ok((report, records))
}

/// Seeded presentation order of `n` trials.
pub fn presentation_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: SrReport,
    pub second: SrReport,
    /// First algorithm's records, then the second's, each in presentation order.
    pub records: Vec<TrialRecord>,
    pub order: Vec<usize>,
    /// ANOVA on per-trial success (0/1) grouped by algorithm; `None` when
    /// every trial of both algorithms has the same outcome.
    pub anova: Option<AnovaResult>,
}

/// Runs the same trials, in the same seeded order, through two predictors.
pub fn compare_predictors<A, B>(
    first: (&A, &str),
    second: (&B, &str),
    trials: &[Trial],
    protocol: &ProtocolParams,
) -> Result<Comparison>
where
    A: Predictor + Sync + ?Sized,
    B: Predictor + Sync + ?Sized,
{
    let order = presentation_order(trials.len(), protocol.seed);
    let (r1, mut rec1) = evaluate(first.0, trials, &order, protocol, first.1)?;
    let (r2, rec2) = evaluate(second.0, trials, &order, protocol, second.1)?;
    let as_group = |recs: &[TrialRecord]| -> Vec<f64> {
        recs.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect()
    };
    let anova = if trials.len() >= 2 {
        anova_oneway(&[as_group(&rec1), as_group(&rec2)]).ok()
    } else {
        None
    };
    rec1.extend(rec2);
    Ok(Comparison { first: r1, second: r2, records: rec1, order, anova })
}

/// Both fitted pipelines plus their comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub knn_model: KnnModel,
    pub rrrff_model: RrRffModel,
    pub comparison: Comparison,
}

/// Trains kNN and RR-RFF on the same (smoothed) data and compares them on
/// the same trial streams.
pub fn compare(
    train_data: &LabeledDataset,
    trials: &[Trial],
    knn_params: &KnnParams,
    rrrff_params: &RrRffParams,
    protocol: &ProtocolParams,
) -> Result<StudyOutcome> {
    protocol.validate()?;
    let smoothed = train_data.with_frames(smooth(train_data.frames(), protocol.smooth_window)?)?;
    let knn_model = proportional::train(&smoothed, knn_params)?;
    let rrrff_model = fit_rrrff(&smoothed, rrrff_params)?;
    let comparison = compare_predictors((&knn_model, "knn"), (&rrrff_model, "rrrff"), trials, protocol)?;
    Ok(StudyOutcome { knn_model, rrrff_model, comparison })
}
