//! Seeded synthetic 8-channel EMG sessions.
//!
//! Each gesture has a fixed channel pattern with mean 1. A frame at intensity
//! `x` is `x * full_magnitude * pattern * (1 + noise_rel * n1) + rest_level *
//! (1 + noise_abs * n2)`, rectified, with independent standard normals per
//! channel. Rest frames are the baseline term alone. Frame `i` draws its noise
//! from stream `i` of the seeded generator (see [`crate::rng`]), so any single
//! frame can be regenerated without replaying the ones before it.
//!
//! This is test scaffolding with known ground truth, not a model of real
//! muscle physiology.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Trial;
use crate::rng::SeededRng;
use crate::signal::{Frame, GestureLabel, LabeledDataset, CHANNELS};

/// Trial streams draw noise from stream ids at and above this offset so they
/// never reuse the noise of a training session generated with the same seed.
pub const TRIAL_STREAM_BASE: u64 = 1 << 48;
const TRIAL_STREAM_STRIDE: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrototypeRepr")]
pub struct GesturePrototype {
    pub label: GestureLabel,
    pattern: [f64; CHANNELS],
}

#[derive(Deserialize)]
struct PrototypeRepr {
    label: GestureLabel,
    pattern: [f64; CHANNELS],
}

impl TryFrom<PrototypeRepr> for GesturePrototype {
    type Error = Error;

    // Patterns already at mean 1 are kept bit-for-bit so configs round-trip.
    fn try_from(r: PrototypeRepr) -> Result<Self> {
        let p = GesturePrototype::new(r.label, r.pattern)?;
        let mean = r.pattern.iter().sum::<f64>() / CHANNELS as f64;
        if (mean - 1.0).abs() <= 1e-12 {
            return Ok(GesturePrototype { label: r.label, pattern: r.pattern });
        }
        Ok(p)
    }
}

impl GesturePrototype {
    /// Rescales `raw` to mean 1.
    pub fn new(label: GestureLabel, raw: [f64; CHANNELS]) -> Result<Self> {
        if label.is_rest() {
            return Err(Error::config("rest has no prototype"));
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!("prototype `{label}` has negative or non-finite entries")));
        }
        let mean = raw.iter().sum::<f64>() / CHANNELS as f64;
        if !(mean > 0.0) {
            return Err(Error::config(format!("prototype `{label}` has no positive entry")));
        }
        let mut pattern = raw;
        pattern.iter_mut().for_each(|v| *v /= mean);
        Ok(GesturePrototype { label, pattern })
    }

    pub fn pattern(&self) -> &[f64; CHANNELS] {
        &self.pattern
    }
}

/// Base activation patterns around the armband. `overlap` in `[0, 1]` blends
/// every pattern toward the uniform vector, making classes harder to tell
/// apart.
pub fn default_prototypes(overlap: f64) -> Result<Vec<GesturePrototype>> {
    if !(0.0..=1.0).contains(&overlap) || overlap == 1.0 {
        return Err(Error::config(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    let base: [(GestureLabel, [f64; CHANNELS]); 6] = [
        (GestureLabel::Power, [1.0, 0.9, 0.8, 0.9, 1.0, 0.9, 0.8, 0.9]),
        (GestureLabel::Point, [0.2, 0.3, 1.0, 1.0, 0.3, 0.2, 0.1, 0.1]),
        (GestureLabel::Flex, [1.0, 1.0, 0.3, 0.1, 0.1, 0.1, 0.2, 0.6]),
        (GestureLabel::Ext, [0.1, 0.1, 0.2, 0.5, 1.0, 1.0, 0.4, 0.1]),
        (GestureLabel::Pro, [0.6, 0.2, 0.1, 0.1, 0.2, 0.3, 1.0, 1.0]),
        (GestureLabel::Sup, [0.1, 0.8, 1.0, 0.2, 0.1, 0.6, 0.3, 0.1]),
    ];
    base.iter()
        .map(|(label, raw)| {
            let mut blended = *raw;
            blended.iter_mut().for_each(|v| *v = (1.0 - overlap) * *v + overlap);
            GesturePrototype::new(*label, blended)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub prototypes: Vec<GesturePrototype>,
    /// Mean per-channel activation at rest.
    pub rest_level: f64,
    /// Std of the multiplicative gesture noise.
    pub noise_rel: f64,
    /// Std of the relative noise on the rest baseline.
    pub noise_abs: f64,
    /// Magnitude of a noiseless gesture at intensity 1, baseline excluded.
    pub full_magnitude: f64,
    pub frame_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            prototypes: default_prototypes(0.0).expect("built-in prototypes are valid"),
            rest_level: 0.05,
            noise_rel: 0.1,
            noise_abs: 0.3,
            full_magnitude: 1.0,
            frame_rate_hz: 50.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut labels: Vec<GestureLabel> = self.prototypes.iter().map(|p| p.label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate prototype labels"));
        }
        let checks = [
            (self.rest_level > 0.0, "rest_level must be positive"),
            (self.noise_rel >= 0.0, "noise_rel must be non-negative"),
            (self.noise_abs >= 0.0, "noise_abs must be non-negative"),
            (self.full_magnitude > 0.0, "full_magnitude must be positive"),
            (self.frame_rate_hz > 0.0, "frame_rate_hz must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(msg));
            }
        }
        Ok(())
    }

    pub fn prototype(&self, label: GestureLabel) -> Option<&GesturePrototype> {
        self.prototypes.iter().find(|p| p.label == label)
    }

    /// Keeps only the listed gestures' prototypes.
    pub fn restricted_to(mut self, labels: &[GestureLabel]) -> Self {
        self.prototypes.retain(|p| labels.contains(&p.label));
        self
    }
}

/// One frame for `label` at `intensity`, using noise stream `frame_index`.
pub fn generate_frame(label: GestureLabel, intensity: f64, config: &SynthConfig, frame_index: u64) -> Result<Frame> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::config(format!("intensity {intensity} outside [0, 1]")));
    }
    let mut rng = SeededRng::with_stream(config.seed, frame_index);
    let mut channels = [0.0; CHANNELS];
    if label.is_rest() {
        for c in channels.iter_mut() {
            *c = (config.rest_level * (1.0 + config.noise_abs * rng.gaussian())).abs();
        }
    } else {
        let proto = config
            .prototype(label)
            .ok_or_else(|| Error::config(format!("no prototype for `{label}`")))?;
        let scale = intensity * config.full_magnitude;
        let mut active = [0.0; CHANNELS];
        for (a, p) in active.iter_mut().zip(proto.pattern()) {
            *a = scale * p * (1.0 + config.noise_rel * rng.gaussian());
        }
        for (c, a) in channels.iter_mut().zip(active) {
            *c = (a + config.rest_level * (1.0 + config.noise_abs * rng.gaussian())).abs();
        }
    }
    Frame::new(channels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptAction {
    pub label: GestureLabel,
    #[serde(default)]
    pub intensity: f64,
    pub duration_s: f64,
}

/// A list of actions performed `repetitions` times; each repetition becomes
/// one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScript {
    pub repetitions: u32,
    pub actions: Vec<ScriptAction>,
}

impl SessionScript {
    /// Rest-separated full-intensity holds of `gestures`, `hold_s` each.
    pub fn alternating(gestures: &[GestureLabel], repetitions: u32, hold_s: f64) -> Self {
        let mut actions = Vec::new();
        for &g in gestures {
            actions.push(ScriptAction { label: GestureLabel::Rest, intensity: 0.0, duration_s: hold_s });
            actions.push(ScriptAction { label: g, intensity: 1.0, duration_s: hold_s });
        }
        SessionScript { repetitions, actions }
    }

    /// Power, point, flexion and extension; four repetitions of 2 s holds.
    pub fn study_default() -> Self {
        SessionScript::alternating(&STUDY_GESTURES, 4, 2.0)
    }

    /// All six active gestures plus rest.
    pub fn pilot_default() -> Self {
        SessionScript::alternating(&GestureLabel::ACTIVE, 4, 2.0)
    }
}

/// The four gestures of the comparison protocol.
pub const STUDY_GESTURES: [GestureLabel; 4] =
    [GestureLabel::Power, GestureLabel::Point, GestureLabel::Flex, GestureLabel::Ext];

/// Exertion levels of the comparison protocol.
pub const STUDY_LEVELS: [f64; 3] = [0.33, 0.67, 1.0];

pub fn generate_session(script: &SessionScript, config: &SynthConfig) -> Result<LabeledDataset> {
    config.validate()?;
    if script.repetitions == 0 || script.actions.is_empty() {
        return Err(Error::config("session script is empty"));
    }
    let rate = config.frame_rate_hz;
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    let mut levels = Vec::new();
    let mut blocks = Vec::new();
    let mut index: u64 = 0;
    for rep in 0..script.repetitions {
        for a in &script.actions {
            if !(a.duration_s > 0.0) {
                return Err(Error::config("action duration must be positive"));
            }
            let level = if a.label.is_rest() { 0.0 } else { a.intensity };
            let n = (a.duration_s * rate).round() as u64;
            for _ in 0..n {
                let f = generate_frame(a.label, level, config, index)?;
                frames.push(f.with_time(index as f64 / rate));
                labels.push(a.label);
                levels.push(level);
                blocks.push(rep);
                index += 1;
            }
        }
    }
    LabeledDataset::new(frames, labels, levels, Some(blocks))
}

/// Goal-directed trials: rest lead-in, linear ramp to the target level, then
/// hold until the end of the trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub gestures: Vec<GestureLabel>,
    pub levels: Vec<f64>,
    pub repeats: u32,
    pub lead_in_s: f64,
    pub ramp_s: f64,
    pub duration_s: f64,
}

impl Default for TrialPlan {
    fn default() -> Self {
        TrialPlan {
            gestures: STUDY_GESTURES.to_vec(),
            levels: STUDY_LEVELS.to_vec(),
            repeats: 5,
            lead_in_s: 0.5,
            ramp_s: 0.5,
            duration_s: 10.0,
        }
    }
}

impl TrialPlan {
    fn intensity_at(&self, t: f64, level: f64) -> f64 {
        if t < self.lead_in_s {
            0.0
        } else if t < self.lead_in_s + self.ramp_s {
            level * (t - self.lead_in_s) / self.ramp_s
        } else {
            level
        }
    }
}

/// Trials in canonical order (repeat, gesture, level); trial ids count up
/// from 0 in that order.
pub fn generate_trials(plan: &TrialPlan, config: &SynthConfig) -> Result<Vec<Trial>> {
    config.validate()?;
    if plan.gestures.is_empty() || plan.levels.is_empty() || plan.repeats == 0 {
        return Err(Error::config("trial plan is empty"));
    }
    if !(plan.duration_s > 0.0 && plan.lead_in_s >= 0.0 && plan.ramp_s >= 0.0) {
        return Err(Error::config("trial durations must be non-negative and the trial non-empty"));
    }
    let rate = config.frame_rate_hz;
    let n = (plan.duration_s * rate).round() as u64;
    let mut trials = Vec::new();
    let mut id: u32 = 0;
    for _ in 0..plan.repeats {
        for &g in &plan.gestures {
            for &level in &plan.levels {
                let base = TRIAL_STREAM_BASE + id as u64 * TRIAL_STREAM_STRIDE;
                let mut stream = Vec::with_capacity(n as usize);
                for i in 0..n {
                    let t = i as f64 / rate;
                    let x = plan.intensity_at(t, level);
                    let label = if x > 0.0 { g } else { GestureLabel::Rest };
                    stream.push(generate_frame(label, x, config, base + i)?.with_time(t));
                }
                trials.push(Trial::new(id, g, level, stream, rate)?);
                id += 1;
            }
        }
    }
    Ok(trials)
}
