//! Ridge regression on random Fourier features (the regression baseline).
//!
//! Frames are mapped through `z(x) = sqrt(2/D) cos(W x + b)` with Gaussian
//! frequency rows `W ~ N(0, 2 gamma I)` and phases `b ~ U[0, 2 pi)`, which
//! approximates the kernel `exp(-gamma |x - y|^2)`. One output column per
//! gesture is regressed onto the stimulus level of that gesture (zero for
//! every other gesture and for rest) by closed-form ridge regression.
//!
//! Unlike the kNN pipeline the regression sees raw envelope amplitudes, not
//! normalized directions, so intensity reaches the output only through what
//! the training levels taught it.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proportional::Prediction;
use crate::rng::SeededRng;
use crate::signal::{Frame, GestureLabel, LabeledDataset, CHANNELS};

/// Maximum number of point pairs used by the median heuristic.
pub const MEDIAN_PAIRS: usize = 1000;
/// Normal-equation residual the solver guarantees (sup norm).
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    pub omega: Vec<[f64; CHANNELS]>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub seed: u64,
}

impl RffMap {
    pub fn dim(&self) -> usize {
        self.omega.len()
    }
}

pub fn sample_rff(features: usize, gamma: f64, seed: u64) -> Result<RffMap> {
    if features == 0 {
        return Err(Error::config("number of random features must be at least 1"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::config(format!("kernel bandwidth must be positive, got {gamma}")));
    }
    let mut rng = SeededRng::new(seed);
    let std = (2.0 * gamma).sqrt();
    let omega = (0..features)
        .map(|_| {
            let mut row = [0.0; CHANNELS];
            row.iter_mut().for_each(|w| *w = std * rng.gaussian());
            row
        })
        .collect();
    let beta = (0..features).map(|_| TAU * rng.uniform()).collect();
    Ok(RffMap { omega, beta, gamma, seed })
}

pub fn rff_features(x: &[f64; CHANNELS], map: &RffMap) -> Vec<f64> {
    let scale = (2.0 / map.dim() as f64).sqrt();
    map.omega
        .iter()
        .zip(&map.beta)
        .map(|(w, b)| {
            let dot: f64 = w.iter().zip(x).map(|(a, c)| a * c).sum();
            scale * (dot + b).cos()
        })
        .collect()
}

/// `n x D` feature matrix, one row per frame.
pub fn feature_matrix(frames: &[Frame], map: &RffMap) -> DMatrix<f64> {
    let d = map.dim();
    let mut z = DMatrix::zeros(frames.len(), d);
    for (i, f) in frames.iter().enumerate() {
        for (j, v) in rff_features(f.channels(), map).into_iter().enumerate() {
            z[(i, j)] = v;
        }
    }
    z
}

/// `max |(Z^T Z + lambda I) W - Z^T Y|`.
pub fn normal_equation_residual(z: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64, w: &DMatrix<f64>) -> f64 {
    let mut a = z.transpose() * z;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let r = a * w - z.transpose() * y;
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Solves `(Z^T Z + lambda I) W = Z^T Y` by Cholesky with up to three rounds
/// of iterative refinement.
pub fn fit_ridge(z: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("ridge parameter must be positive, got {lambda}")));
    }
    if z.nrows() != y.nrows() {
        return Err(Error::Dimension { expected: z.nrows(), got: y.nrows() });
    }
    let mut a = z.transpose() * z;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let rhs = z.transpose() * y;
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("ridge system is not positive definite"))?;
    let mut w = chol.solve(&rhs);
    for _ in 0..3 {
        let r = &rhs - &a * &w;
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst <= RESIDUAL_TOLERANCE * 1e-2 {
            break;
        }
        w += chol.solve(&r);
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("ridge solution is not finite"));
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// `gamma = 1 / (2 median^2)` over pairwise training distances.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrRffParams {
    pub features: usize,
    pub bandwidth: Bandwidth,
    pub lambda: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for RrRffParams {
    fn default() -> Self {
        RrRffParams { features: 300, bandwidth: Bandwidth::Median, lambda: 1.0, rho: 0.15, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrRffModel {
    pub map: RffMap,
    /// `D` rows, one column per entry of `gesture_order`.
    pub weights: Vec<Vec<f64>>,
    pub lambda: f64,
    pub rho: f64,
    pub gesture_order: Vec<GestureLabel>,
    pub bandwidth: Bandwidth,
}

impl RrRffModel {
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let g = self.gesture_order.len();
        DMatrix::from_fn(self.weights.len(), g, |i, j| self.weights[i][j])
    }

    /// Per-gesture activations `W^T z(x)`, in `gesture_order`.
    pub fn activations(&self, frame: &Frame) -> Vec<f64> {
        let z = rff_features(frame.channels(), &self.map);
        let mut a = vec![0.0; self.gesture_order.len()];
        for (zj, row) in z.iter().zip(&self.weights) {
            for (ag, w) in a.iter_mut().zip(row) {
                *ag += zj * w;
            }
        }
        a
    }
}

/// `gamma = 1 / (2 m^2)` with `m` the median Euclidean distance over all
/// pairs, or over [`MEDIAN_PAIRS`] seeded random pairs for larger sets.
pub fn median_heuristic(frames: &[Frame], seed: u64) -> Result<f64> {
    let n = frames.len();
    if n < 2 {
        return Err(Error::training("median heuristic needs at least two frames"));
    }
    let dist = |i: usize, j: usize| -> f64 {
        let (a, b) = (frames[i].channels(), frames[j].channels());
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut d: Vec<f64> = if n * (n - 1) / 2 <= MEDIAN_PAIRS {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| dist(i, j)).collect()
    } else {
        let mut rng = SeededRng::with_stream(seed, 1);
        (0..MEDIAN_PAIRS)
            .map(|_| {
                let i = rng.below(n as u64) as usize;
                let mut j = rng.below(n as u64 - 1) as usize;
                if j >= i {
                    j += 1;
                }
                dist(i, j)
            })
            .collect()
    };
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if !(median > 0.0) {
        return Err(Error::training("training frames are all identical; bandwidth is undefined"));
    }
    Ok(1.0 / (2.0 * median * median))
}

/// Fits the baseline on `data` as given; smoothing, if any, is the caller's
/// preprocessing step.
pub fn fit_rrrff(data: &LabeledDataset, params: &RrRffParams) -> Result<RrRffModel> {
    if !(params.rho > 0.0 && params.rho < 1.0) {
        return Err(Error::config(format!("rest activation threshold must lie in (0, 1), got {}", params.rho)));
    }
    let mut gesture_order: Vec<GestureLabel> =
        data.label_set().into_iter().filter(|l| !l.is_rest()).collect();
    gesture_order.sort();
    if gesture_order.is_empty() {
        return Err(Error::training("no non-rest frames to regress on"));
    }
    let gamma = match params.bandwidth {
        Bandwidth::Median => median_heuristic(data.frames(), params.seed)?,
        Bandwidth::Fixed(g) => g,
    };
    let map = sample_rff(params.features, gamma, params.seed)?;
    let z = feature_matrix(data.frames(), &map);
    if z.iter().all(|v| v.abs() < 1e-300) {
        return Err(Error::training("all random features vanish on the training data"));
    }
    let y = DMatrix::from_fn(data.len(), gesture_order.len(), |i, j| {
        if data.labels()[i] == gesture_order[j] {
            data.levels()[i]
        } else {
            0.0
        }
    });
    let w = fit_ridge(&z, &y, params.lambda)?;
    let weights = (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect();
    Ok(RrRffModel {
        map,
        weights,
        lambda: params.lambda,
        rho: params.rho,
        gesture_order,
        bandwidth: params.bandwidth,
    })
}

/// Rest when the strongest activation is below `rho`; otherwise the argmax
/// gesture with its activation clamped to `[0, 1]`.
pub fn predict_rrrff(frame: &Frame, model: &RrRffModel) -> Prediction {
    let a = model.activations(frame);
    let mut best = 0;
    for (i, v) in a.iter().enumerate().skip(1) {
        if *v > a[best] {
            best = i;
        }
    }
    match a.get(best) {
        Some(&v) if v >= model.rho => Prediction { label: model.gesture_order[best], proportion: v.clamp(0.0, 1.0) },
        _ => Prediction::REST,
    }
}
