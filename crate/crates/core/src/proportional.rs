//! Rest thresholding and proportional scaling around the kNN classifier.
//!
//! Rest is decided from magnitude alone: a frame is rest unless its magnitude
//! strictly exceeds `t = g * t0`, where `t0` is the mean rest magnitude seen
//! in training. Active frames are classified on their direction, then the
//! magnitude is mapped linearly so that the offset `m0 = t / d` gives 0 and
//! the class's mean training magnitude `Mc` gives 1.
//!
//! The map is discontinuous at activation: just above `t` the proportion is
//! already `(t - m0) / (Mc - m0)`. Raising the divisor `d` lowers `m0` and
//! with it the force needed for a given proportion, without moving `t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{classify, KnnConfig, MetricKind, TrainingSet, WeightScheme};
use crate::selection::{default_k_grid, select_k, CvReport};
use crate::signal::{magnitude, normalize, Frame, GestureLabel, LabeledDataset};

pub const DEFAULT_GAIN: f64 = 2.5;
pub const DEFAULT_DIVISOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestThreshold {
    pub t0: f64,
    pub g: f64,
    pub t: f64,
}

impl RestThreshold {
    pub fn new(t0: f64, g: f64) -> Result<Self> {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::config(format!("gain must be positive, got {g}")));
        }
        if !(t0 >= 0.0 && t0.is_finite()) {
            return Err(Error::input(format!("rest baseline must be non-negative, got {t0}")));
        }
        Ok(RestThreshold { t0, g, t: g * t0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionalMap {
    pub d: f64,
    pub m0: f64,
    pub class_means: BTreeMap<GestureLabel, f64>,
}

impl ProportionalMap {
    pub fn new(t: f64, d: f64, class_means: BTreeMap<GestureLabel, f64>) -> Result<Self> {
        if !(d >= 1.0 && d.is_finite()) {
            return Err(Error::config(format!("divisor must be >= 1, got {d}")));
        }
        if let Some((l, m)) = class_means.iter().find(|(l, m)| l.is_rest() || !(**m > 0.0)) {
            return Err(Error::training(format!("invalid class mean {m} for `{l}`")));
        }
        Ok(ProportionalMap { d, m0: t / d, class_means })
    }

    /// Classes whose mean does not exceed the offset; these always map to 1.
    pub fn degenerate_classes(&self) -> Vec<GestureLabel> {
        self.class_means.iter().filter(|(_, &mc)| mc <= self.m0).map(|(&l, _)| l).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: GestureLabel,
    pub proportion: f64,
}

impl Prediction {
    pub const REST: Prediction = Prediction { label: GestureLabel::Rest, proportion: 0.0 };
}

/// How `k` is chosen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KSelection {
    Fixed(usize),
    /// Block-wise CV over `candidates`, or the default odd grid.
    Auto { candidates: Option<Vec<usize>> },
}

/// Everything `train` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub g: f64,
    pub d: f64,
    pub k: KSelection,
    pub metric: MetricKind,
    pub weighting: WeightScheme,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            g: DEFAULT_GAIN,
            d: DEFAULT_DIVISOR,
            k: KSelection::Fixed(1),
            metric: MetricKind::Euclidean,
            weighting: WeightScheme::InverseSquared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub train: TrainingSet,
    pub config: KnnConfig,
    pub rest: RestThreshold,
    pub prop: ProportionalMap,
    /// Present when `k` was chosen by cross-validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvReport>,
}

impl KnnModel {
    pub fn new(train: TrainingSet, config: KnnConfig, rest: RestThreshold, prop: ProportionalMap) -> Result<Self> {
        let mut labels = train.label_set();
        labels.sort();
        let covered: Vec<GestureLabel> = prop.class_means.keys().copied().collect();
        if labels != covered {
            return Err(Error::training("class means do not cover exactly the trained labels"));
        }
        if config.k == 0 || config.k > train.len() {
            return Err(Error::config(format!("k = {} but {} training points", config.k, train.len())));
        }
        Ok(KnnModel { train, config, rest, prop, cv: None })
    }
}

pub fn fit_rest_threshold(rest_magnitudes: &[f64], g: f64) -> Result<RestThreshold> {
    if rest_magnitudes.is_empty() {
        return Err(Error::training("no rest frames to fit the rest threshold"));
    }
    let t0 = rest_magnitudes.iter().sum::<f64>() / rest_magnitudes.len() as f64;
    RestThreshold::new(t0, g)
}

/// Rest unless `m` strictly exceeds the threshold.
pub fn is_rest(m: f64, rest: &RestThreshold) -> bool {
    m <= rest.t
}

/// Mean magnitude per non-rest class, all stimulus levels pooled.
pub fn fit_class_means(data: &LabeledDataset) -> Result<BTreeMap<GestureLabel, f64>> {
    let mut acc: BTreeMap<GestureLabel, (f64, usize)> = BTreeMap::new();
    for (f, &l) in data.frames().iter().zip(data.labels()) {
        if l.is_rest() {
            continue;
        }
        let e = acc.entry(l).or_insert((0.0, 0));
        e.0 += magnitude(f);
        e.1 += 1;
    }
    if acc.is_empty() {
        return Err(Error::training("no non-rest frames to fit class means"));
    }
    let means: BTreeMap<GestureLabel, f64> =
        acc.into_iter().map(|(l, (sum, n))| (l, sum / n as f64)).collect();
    if let Some((l, _)) = means.iter().find(|(_, &m)| !(m > 0.0)) {
        return Err(Error::training(format!("class `{l}` has zero mean magnitude")));
    }
    Ok(means)
}

/// `clamp((m - m0) / (Mc - m0), 0, 1)`, or 1 for a class with `Mc <= m0`.
pub fn proportional_value(m: f64, label: GestureLabel, prop: &ProportionalMap) -> Result<f64> {
    let mc = *prop
        .class_means
        .get(&label)
        .ok_or_else(|| Error::Logic(format!("no class mean for `{label}`")))?;
    if mc <= prop.m0 {
        log::warn!("class `{label}` mean magnitude {mc} <= offset {}; proportion pinned to 1", prop.m0);
        return Ok(1.0);
    }
    Ok(((m - prop.m0) / (mc - prop.m0)).clamp(0.0, 1.0))
}

pub fn predict(frame: &Frame, model: &KnnModel) -> Result<Prediction> {
    let n = normalize(frame);
    if n.magnitude == 0.0 || is_rest(n.magnitude, &model.rest) {
        return Ok(Prediction::REST);
    }
    let label = classify(&n, &model.train, &model.config)?;
    let proportion = proportional_value(n.magnitude, label, &model.prop)?;
    Ok(Prediction { label, proportion })
}

/// Fits the rest threshold from rest frames, class means from active frames,
/// and stores the normalized active frames as the neighbour set. Rest frames
/// never enter the neighbour set.
pub fn train(data: &LabeledDataset, params: &KnnParams) -> Result<KnnModel> {
    let rest_mags: Vec<f64> = data
        .frames()
        .iter()
        .zip(data.labels())
        .filter(|(_, l)| l.is_rest())
        .map(|(f, _)| magnitude(f))
        .collect();
    let rest = fit_rest_threshold(&rest_mags, params.g)?;
    let class_means = fit_class_means(data)?;
    let prop = ProportionalMap::new(rest.t, params.d, class_means)?;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (f, &l) in data.frames().iter().zip(data.labels()) {
        if l.is_rest() {
            continue;
        }
        let n = normalize(f);
        if n.magnitude > 0.0 {
            points.push(n.direction);
            labels.push(l);
        }
    }
    let train_set = TrainingSet::new(points, labels)?;

    let (k, cv) = match &params.k {
        KSelection::Fixed(k) => (*k, None),
        KSelection::Auto { candidates } => {
            let active = data.active();
            let grid = match candidates {
                Some(c) => c.clone(),
                None => default_k_grid(active.len()),
            };
            let (k, report) = select_k(&active, &grid, params.metric, params.weighting)?;
            (k, Some(report))
        }
    };
    let metric = params.metric.resolve(&train_set)?;
    let config = KnnConfig { k, metric, weighting: params.weighting };
    let mut model = KnnModel::new(train_set, config, rest, prop)?;
    model.cv = cv;
    Ok(model)
}
