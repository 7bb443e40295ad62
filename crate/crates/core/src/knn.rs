//! Distance-weighted k-nearest-neighbour classification on normalized
//! directions.
//!
//! Neighbour search is an exhaustive linear scan. Ties in distance are broken
//! by training index, ties in the weighted vote by the class of the nearest
//! tied neighbour, so every query has exactly one deterministic answer.

use std::fmt;
use std::str::FromStr;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{GestureLabel, NormalizedFrame, CHANNELS};

/// Distances below this count as exact matches; also the weight floor.
pub const EPSILON: f64 = 1e-12;

type Mat8 = SMatrix<f64, CHANNELS, CHANNELS>;

/// Metric family without fitted parameters, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricKind {
    Minkowski { p: f64 },
    Euclidean,
    Mahalanobis,
}

impl MetricKind {
    /// Fits whatever the metric needs from the training points. Mahalanobis
    /// uses the regularized covariance of all points.
    pub fn resolve(&self, train: &TrainingSet) -> Result<DistanceMetric> {
        match *self {
            MetricKind::Minkowski { p } => DistanceMetric::minkowski(p),
            MetricKind::Euclidean => Ok(DistanceMetric::Euclidean),
            MetricKind::Mahalanobis => {
                Ok(DistanceMetric::Mahalanobis(Mahalanobis::pooled(train.points())?))
            }
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Minkowski { p } => write!(f, "minkowski:{p}"),
            MetricKind::Euclidean => f.write_str("euclidean"),
            MetricKind::Mahalanobis => f.write_str("mahalanobis"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MetricKind::Euclidean),
            "mahalanobis" => Ok(MetricKind::Mahalanobis),
            _ => {
                let p = s
                    .strip_prefix("minkowski:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::config(format!("unknown metric `{s}`")))?;
                if !(p >= 1.0 && p.is_finite()) {
                    return Err(Error::config(format!("minkowski exponent must be >= 1, got {p}")));
                }
                Ok(MetricKind::Minkowski { p })
            }
        }
    }
}

/// Whitened Mahalanobis distance. Only the covariance is serialized; the
/// inverse Cholesky factor is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MahalanobisRepr", into = "MahalanobisRepr")]
pub struct Mahalanobis {
    covariance: [[f64; CHANNELS]; CHANNELS],
    // inverse of the lower Cholesky factor L, so d = |L^-1 (a - b)|
    whitening: [[f64; CHANNELS]; CHANNELS],
}

#[derive(Serialize, Deserialize)]
struct MahalanobisRepr {
    covariance: [[f64; CHANNELS]; CHANNELS],
}

impl TryFrom<MahalanobisRepr> for Mahalanobis {
    type Error = Error;

    fn try_from(r: MahalanobisRepr) -> Result<Self> {
        Mahalanobis::new(r.covariance)
    }
}

impl From<Mahalanobis> for MahalanobisRepr {
    fn from(m: Mahalanobis) -> Self {
        MahalanobisRepr { covariance: m.covariance }
    }
}

impl Mahalanobis {
    /// Accepts a symmetric positive-definite covariance as given, without
    /// regularization.
    pub fn new(covariance: [[f64; CHANNELS]; CHANNELS]) -> Result<Self> {
        for i in 0..CHANNELS {
            for j in 0..i {
                let (a, b) = (covariance[i][j], covariance[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::numeric("covariance is not symmetric"));
                }
            }
        }
        if covariance.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numeric("covariance has non-finite entries"));
        }
        let c = Mat8::from_fn(|i, j| covariance[i][j]);
        let chol = c
            .cholesky()
            .ok_or_else(|| Error::numeric("covariance is singular or not positive definite"))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::numeric("covariance factor is not invertible"))?;
        let mut whitening = [[0.0; CHANNELS]; CHANNELS];
        for (i, row) in whitening.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = l_inv[(i, j)];
            }
        }
        Ok(Mahalanobis { covariance, whitening })
    }

    /// Sample covariance of `points` with `1e-6 * trace / 8` added to the
    /// diagonal. Falls back to the identity when the points carry no spread.
    pub fn pooled(points: &[[f64; CHANNELS]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::training("no points to estimate a covariance from"));
        }
        let n = points.len() as f64;
        let mut mean = [0.0; CHANNELS];
        for p in points {
            mean.iter_mut().zip(p).for_each(|(m, v)| *m += v / n);
        }
        let mut cov = [[0.0; CHANNELS]; CHANNELS];
        for p in points {
            for i in 0..CHANNELS {
                for j in 0..=i {
                    cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]);
                }
            }
        }
        let denom = if points.len() > 1 { n - 1.0 } else { 1.0 };
        for i in 0..CHANNELS {
            for j in 0..=i {
                cov[i][j] /= denom;
                cov[j][i] = cov[i][j];
            }
        }
        let trace: f64 = (0..CHANNELS).map(|i| cov[i][i]).sum();
        if trace <= 0.0 {
            let mut identity = [[0.0; CHANNELS]; CHANNELS];
            (0..CHANNELS).for_each(|i| identity[i][i] = 1.0);
            return Mahalanobis::new(identity);
        }
        let ridge = 1e-6 * trace / CHANNELS as f64;
        (0..CHANNELS).for_each(|i| cov[i][i] += ridge);
        Mahalanobis::new(cov)
    }

    pub fn covariance(&self) -> &[[f64; CHANNELS]; CHANNELS] {
        &self.covariance
    }

    fn eval(&self, a: &[f64; CHANNELS], b: &[f64; CHANNELS]) -> f64 {
        let mut diff = [0.0; CHANNELS];
        diff.iter_mut().enumerate().for_each(|(i, d)| *d = a[i] - b[i]);
        let mut sum = 0.0;
        for (i, row) in self.whitening.iter().enumerate() {
            let y: f64 = row[..=i].iter().zip(&diff[..=i]).map(|(w, d)| w * d).sum();
            sum += y * y;
        }
        sum.sqrt()
    }
}

/// Fitted distance metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
// kept unboxed: evaluated once per training point in the neighbour scan
#[allow(clippy::large_enum_variant)]
pub enum DistanceMetric {
    Minkowski { p: f64 },
    Euclidean,
    Mahalanobis(Mahalanobis),
}

impl DistanceMetric {
    pub fn minkowski(p: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::config(format!("minkowski exponent must be >= 1, got {p}")));
        }
        Ok(DistanceMetric::Minkowski { p })
    }

    pub fn kind(&self) -> MetricKind {
        match self {
            DistanceMetric::Minkowski { p } => MetricKind::Minkowski { p: *p },
            DistanceMetric::Euclidean => MetricKind::Euclidean,
            DistanceMetric::Mahalanobis(_) => MetricKind::Mahalanobis,
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64; CHANNELS], b: &[f64; CHANNELS]) -> f64 {
        match self {
            DistanceMetric::Euclidean => euclidean(a, b),
            DistanceMetric::Minkowski { p } if *p == 2.0 => euclidean(a, b),
            DistanceMetric::Minkowski { p } if *p == 1.0 => {
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
            }
            DistanceMetric::Minkowski { p } => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs().powf(*p))
                .sum::<f64>()
                .powf(1.0 / p),
            DistanceMetric::Mahalanobis(m) => m.eval(a, b),
        }
    }
}

#[inline]
fn euclidean(a: &[f64; CHANNELS], b: &[f64; CHANNELS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64], metric: &DistanceMetric) -> Result<f64> {
    let a: &[f64; CHANNELS] = a
        .try_into()
        .map_err(|_| Error::Dimension { expected: CHANNELS, got: a.len() })?;
    let b: &[f64; CHANNELS] = b
        .try_into()
        .map_err(|_| Error::Dimension { expected: CHANNELS, got: b.len() })?;
    Ok(metric.eval(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightScheme {
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "inv")]
    Inverse,
    #[serde(rename = "inv-sq")]
    InverseSquared,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 3] =
        [WeightScheme::Uniform, WeightScheme::Inverse, WeightScheme::InverseSquared];
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::Inverse => "inv",
            WeightScheme::InverseSquared => "inv-sq",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "inv" | "inverse" => Ok(WeightScheme::Inverse),
            "inv-sq" | "inverse-squared" => Ok(WeightScheme::InverseSquared),
            _ => Err(Error::config(format!("unknown weighting `{s}`"))),
        }
    }
}

pub fn weight(d: f64, scheme: WeightScheme) -> f64 {
    match scheme {
        WeightScheme::Uniform => 1.0,
        WeightScheme::Inverse => 1.0 / d.max(EPSILON),
        WeightScheme::InverseSquared => {
            let d = d.max(EPSILON);
            1.0 / (d * d)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: DistanceMetric,
    pub weighting: WeightScheme,
}

impl Default for KnnConfig {
    /// Single nearest neighbour, Euclidean, inverse-squared weighting.
    fn default() -> Self {
        KnnConfig { k: 1, metric: DistanceMetric::Euclidean, weighting: WeightScheme::InverseSquared }
    }
}

/// Normalized non-rest training directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    points: Vec<[f64; CHANNELS]>,
    labels: Vec<GestureLabel>,
}

impl TrainingSet {
    pub fn new(points: Vec<[f64; CHANNELS]>, labels: Vec<GestureLabel>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::input(format!(
                "{} training points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::training("training set is empty"));
        }
        if labels.iter().any(|l| l.is_rest()) {
            return Err(Error::training("rest frames do not belong in the kNN training set"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::input("training point is not finite"));
        }
        Ok(TrainingSet { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; CHANNELS]] {
        &self.points
    }

    pub fn labels(&self) -> &[GestureLabel] {
        &self.labels
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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// The `k` nearest training points, ascending by (distance, index).
pub fn neighbors(
    query: &[f64; CHANNELS],
    train: &TrainingSet,
    k: usize,
    metric: &DistanceMetric,
) -> Result<Vec<Neighbor>> {
    if k == 0 || k > train.len() {
        return Err(Error::config(format!(
            "k = {k} outside 1..={} (training set size)",
            train.len()
        )));
    }
    let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
    for (index, p) in train.points.iter().enumerate() {
        let distance = metric.eval(query, p);
        if best.len() == k && distance >= best[k - 1].distance {
            // equal distance loses to the earlier index already kept
            continue;
        }
        let pos = best.partition_point(|n| n.distance <= distance);
        best.insert(pos, Neighbor { index, distance });
        best.truncate(k);
    }
    Ok(best)
}

/// Weighted majority vote over `(label, distance)` pairs sorted nearest first.
///
/// Any neighbour closer than [`EPSILON`] makes the decision by plain majority
/// among the exact matches.
pub fn vote(neighbors: &[(GestureLabel, f64)], scheme: WeightScheme) -> Result<GestureLabel> {
    if neighbors.is_empty() {
        return Err(Error::Logic("vote over an empty neighbour list".into()));
    }
    let exact: Vec<(GestureLabel, f64)> =
        neighbors.iter().copied().filter(|(_, d)| *d < EPSILON).collect();
    let (pool, scheme) = if exact.is_empty() {
        (neighbors, scheme)
    } else {
        (&exact[..], WeightScheme::Uniform)
    };

    // (label, summed weight) in order of first appearance, which is nearest first
    let mut tally: Vec<(GestureLabel, f64)> = Vec::new();
    for &(label, d) in pool {
        let w = weight(d, scheme);
        match tally.iter_mut().find(|(l, _)| *l == label) {
            Some((_, acc)) => *acc += w,
            None => tally.push((label, w)),
        }
    }
    let mut winner = tally[0];
    for &(label, w) in &tally[1..] {
        if w > winner.1 {
            winner = (label, w);
        }
    }
    Ok(winner.0)
}

pub fn classify(query: &NormalizedFrame, train: &TrainingSet, config: &KnnConfig) -> Result<GestureLabel> {
    if !(query.magnitude > 0.0) {
        return Err(Error::input("cannot classify a zero-magnitude frame; it is rest"));
    }
    let nn = neighbors(&query.direction, train, config.k, &config.metric)?;
    let pairs: Vec<(GestureLabel, f64)> =
        nn.iter().map(|n| (train.labels[n.index], n.distance)).collect();
    vote(&pairs, config.weighting)
}
