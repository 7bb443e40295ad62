//! Signal representation and the magnitude/direction decomposition.
//!
//! A [`Frame`] is one time step of rectified 8-channel activation. Its
//! magnitude is the arithmetic mean of the channels; dividing the channels by
//! the magnitude gives a direction vector whose mean is exactly one. The
//! direction feeds the classifier, the magnitude feeds rest detection and
//! proportional scaling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of armband channels.
pub const CHANNELS: usize = 8;

/// One rectified time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    channels: [f64; CHANNELS],
    pub time_s: Option<f64>,
}

impl Frame {
    /// Builds a frame from already rectified values.
    pub fn new(channels: [f64; CHANNELS]) -> Result<Self> {
        for (i, &c) in channels.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::input(format!("channel {} is not finite", i + 1)));
            }
            if c < 0.0 {
                return Err(Error::input(format!(
                    "channel {} is negative ({c}); frames hold rectified values",
                    i + 1
                )));
            }
        }
        Ok(Frame { channels, time_s: None })
    }

    /// Checked construction from a slice, rejecting anything but 8 channels.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let channels: [f64; CHANNELS] = values.try_into().map_err(|_| Error::Dimension {
            expected: CHANNELS,
            got: values.len(),
        })?;
        Frame::new(channels)
    }

    pub fn with_time(mut self, time_s: f64) -> Self {
        self.time_s = Some(time_s);
        self
    }

    pub fn channels(&self) -> &[f64; CHANNELS] {
        &self.channels
    }

    /// Multiplies every channel by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = self.channels;
        out.iter_mut().for_each(|v| *v *= c);
        Ok(Frame { channels: Frame::new(out)?.channels, time_s: self.time_s })
    }
}

/// Direction/magnitude split of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFrame {
    pub direction: [f64; CHANNELS],
    pub magnitude: f64,
}

impl NormalizedFrame {
    /// Reassembles `direction * magnitude`.
    pub fn rescale(&self) -> [f64; CHANNELS] {
        let mut out = self.direction;
        out.iter_mut().for_each(|v| *v *= self.magnitude);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureLabel {
    Rest,
    Power,
    Point,
    Flex,
    Ext,
    Pro,
    Sup,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 7] = [
        GestureLabel::Rest,
        GestureLabel::Power,
        GestureLabel::Point,
        GestureLabel::Flex,
        GestureLabel::Ext,
        GestureLabel::Pro,
        GestureLabel::Sup,
    ];

    pub const ACTIVE: [GestureLabel; 6] = [
        GestureLabel::Power,
        GestureLabel::Point,
        GestureLabel::Flex,
        GestureLabel::Ext,
        GestureLabel::Pro,
        GestureLabel::Sup,
    ];

    pub fn is_rest(self) -> bool {
        self == GestureLabel::Rest
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GestureLabel::Rest => "rest",
            GestureLabel::Power => "power",
            GestureLabel::Point => "point",
            GestureLabel::Flex => "flex",
            GestureLabel::Ext => "ext",
            GestureLabel::Pro => "pro",
            GestureLabel::Sup => "sup",
        }
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GestureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GestureLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::input(format!("unknown gesture label `{s}`")))
    }
}

/// Labelled recording with stimulus levels and repetition blocks.
///
/// Block ids are optional as a whole. When present, every id must occupy one
/// contiguous run of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    frames: Vec<Frame>,
    labels: Vec<GestureLabel>,
    levels: Vec<f64>,
    blocks: Option<Vec<u32>>,
}

impl LabeledDataset {
    pub fn new(
        frames: Vec<Frame>,
        labels: Vec<GestureLabel>,
        levels: Vec<f64>,
        blocks: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = frames.len();
        if labels.len() != n || levels.len() != n {
            return Err(Error::input(format!(
                "dataset columns differ in length: {} frames, {} labels, {} levels",
                n,
                labels.len(),
                levels.len()
            )));
        }
        if let Some(b) = &blocks {
            if b.len() != n {
                return Err(Error::input(format!(
                    "dataset has {} frames but {} block ids",
                    n,
                    b.len()
                )));
            }
            check_contiguous(b)?;
        }
        for (i, (&level, label)) in levels.iter().zip(&labels).enumerate() {
            if !(0.0..=1.0).contains(&level) {
                return Err(Error::input(format!("frame {i}: level {level} outside [0, 1]")));
            }
            if label.is_rest() && level != 0.0 {
                return Err(Error::input(format!("frame {i}: rest frame with level {level}")));
            }
        }
        Ok(LabeledDataset { frames, labels, levels, blocks })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn labels(&self) -> &[GestureLabel] {
        &self.labels
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn blocks(&self) -> Option<&[u32]> {
        self.blocks.as_deref()
    }

    /// Keeps the frames for which `keep` returns true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        LabeledDataset {
            frames: idx.iter().map(|&i| self.frames[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            levels: idx.iter().map(|&i| self.levels[i]).collect(),
            blocks: self.blocks.as_ref().map(|b| idx.iter().map(|&i| b[i]).collect()),
        }
    }

    /// Non-rest frames only.
    pub fn active(&self) -> LabeledDataset {
        self.filter(|i| !self.labels[i].is_rest())
    }

    /// Same labels and blocks with the frames replaced (e.g. after smoothing).
    pub fn with_frames(&self, frames: Vec<Frame>) -> Result<LabeledDataset> {
        if frames.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: frames.len() });
        }
        Ok(LabeledDataset { frames, ..self.clone() })
    }

    /// Distinct labels in first-seen order.
    pub fn label_set(&self) -> Vec<GestureLabel> {
        let mut seen = Vec::new();
        for &l in &self.labels {
            if !seen.contains(&l) {
                seen.push(l);
            }
        }
        seen
    }
}

pub(crate) fn check_contiguous(ids: &[u32]) -> Result<()> {
    let mut finished = std::collections::HashSet::new();
    for w in ids.windows(2) {
        if w[0] != w[1] {
            finished.insert(w[0]);
            if finished.contains(&w[1]) {
                return Err(Error::input(format!("block id {} is not contiguous", w[1])));
            }
        }
    }
    Ok(())
}

pub fn rectify(raw: &[f64]) -> Result<Frame> {
    if raw.len() != CHANNELS {
        return Err(Error::Dimension { expected: CHANNELS, got: raw.len() });
    }
    let mut channels = [0.0; CHANNELS];
    for (out, &v) in channels.iter_mut().zip(raw) {
        if !v.is_finite() {
            return Err(Error::input("raw sample is not finite"));
        }
        *out = v.abs();
    }
    Ok(Frame { channels, time_s: None })
}

/// Mean of the channel values.
pub fn magnitude(frame: &Frame) -> f64 {
    frame.channels.iter().sum::<f64>() / CHANNELS as f64
}

/// Splits a frame into direction and magnitude. A zero frame maps to the
/// zero direction with magnitude 0.
pub fn normalize(frame: &Frame) -> NormalizedFrame {
    let m = magnitude(frame);
    if m <= 0.0 {
        return NormalizedFrame { direction: [0.0; CHANNELS], magnitude: 0.0 };
    }
    let mut direction = frame.channels;
    direction.iter_mut().for_each(|v| *v /= m);
    NormalizedFrame { direction, magnitude: m }
}

/// Causal per-channel moving average over the last `window` frames. The
/// first `window - 1` outputs average over the frames available so far.
pub fn smooth(stream: &[Frame], window: usize) -> Result<Vec<Frame>> {
    if window == 0 {
        return Err(Error::config("smoothing window must be at least 1"));
    }
    if window == 1 {
        return Ok(stream.to_vec());
    }
    let mut out = Vec::with_capacity(stream.len());
    for i in 0..stream.len() {
        let start = (i + 1).saturating_sub(window);
        let span = &stream[start..=i];
        let mut acc = [0.0; CHANNELS];
        for f in span {
            for (a, v) in acc.iter_mut().zip(&f.channels) {
                *a += v;
            }
        }
        let count = span.len() as f64;
        acc.iter_mut().for_each(|a| *a /= count);
        out.push(Frame { channels: acc, time_s: stream[i].time_s });
    }
    Ok(out)
}
