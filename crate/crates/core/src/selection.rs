//! Block-wise cross-validation of the kNN classifier.
//!
//! Folds are whole repetition blocks (leave one block out), never shuffled
//! samples, because neighbouring frames of one recording are strongly
//! correlated. Only normalized non-rest frames take part; rest is decided by
//! the threshold, which is not cross-validated.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{neighbors, vote, MetricKind, TrainingSet, WeightScheme};
use crate::signal::{check_contiguous, magnitude, normalize, GestureLabel, LabeledDataset, CHANNELS};

/// Number of contiguous folds used when the data carries no block ids.
pub const FALLBACK_BLOCKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub k: usize,
    pub metric: MetricKind,
    pub weighting: WeightScheme,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub rows: Vec<CvRow>,
    pub chosen: CvRow,
}

/// Odd values `1, 3, 5, ...` up to `ceil(0.10 * n)`; always contains 1.
pub fn default_k_grid(training_size: usize) -> Vec<usize> {
    let cap = (training_size as f64 * 0.10).ceil().max(1.0) as usize;
    (1..=cap).step_by(2).collect()
}

/// Index ranges of the folds: one per block id, or [`FALLBACK_BLOCKS`]
/// contiguous near-equal blocks when `ids` is `None`.
pub fn make_blocks_from_ids(ids: Option<&[u32]>, len: usize) -> Result<Vec<Range<usize>>> {
    let blocks = match ids {
        Some(ids) => {
            if ids.len() != len {
                return Err(Error::Dimension { expected: len, got: ids.len() });
            }
            check_contiguous(ids)?;
            let mut out = Vec::new();
            let mut start = 0;
            for i in 1..=len {
                if i == len || ids[i] != ids[start] {
                    out.push(start..i);
                    start = i;
                }
            }
            out
        }
        None => {
            if len < FALLBACK_BLOCKS {
                return Err(Error::Cv(format!(
                    "{len} frames without block ids; need at least {FALLBACK_BLOCKS}"
                )));
            }
            let base = len / FALLBACK_BLOCKS;
            let extra = len % FALLBACK_BLOCKS;
            let mut out = Vec::with_capacity(FALLBACK_BLOCKS);
            let mut start = 0;
            for b in 0..FALLBACK_BLOCKS {
                let size = base + usize::from(b < extra);
                out.push(start..start + size);
                start += size;
            }
            out
        }
    };
    if blocks.len() < 2 {
        return Err(Error::Cv(format!("{} block(s); cross-validation needs at least 2", blocks.len())));
    }
    Ok(blocks)
}

pub fn make_blocks(data: &LabeledDataset) -> Result<Vec<Range<usize>>> {
    make_blocks_from_ids(data.blocks(), data.len())
}

struct Folds {
    points: Vec<[f64; CHANNELS]>,
    labels: Vec<GestureLabel>,
    blocks: Vec<Range<usize>>,
}

impl Folds {
    fn new(data: &LabeledDataset) -> Result<Self> {
        // zero-magnitude frames have no direction and are always rest
        let active = data.active();
        let usable = active.filter(|i| magnitude(&active.frames()[i]) > 0.0);
        if usable.is_empty() {
            return Err(Error::Cv("no non-rest frames to cross-validate".into()));
        }
        let blocks = make_blocks(&usable)?;
        Ok(Folds {
            points: usable.frames().iter().map(|f| normalize(f).direction).collect(),
            labels: usable.labels().to_vec(),
            blocks,
        })
    }

    fn smallest_training_fold(&self) -> usize {
        let n = self.points.len();
        self.blocks.iter().map(|b| n - b.len()).min().unwrap_or(0)
    }

    fn training_set(&self, held_out: &Range<usize>) -> Result<TrainingSet> {
        let keep = |i: &usize| !held_out.contains(i);
        let idx: Vec<usize> = (0..self.points.len()).filter(keep).collect();
        TrainingSet::new(
            idx.iter().map(|&i| self.points[i]).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Leave-one-block-out accuracy of one configuration, pooled over all
/// held-out frames.
pub fn cv_accuracy(data: &LabeledDataset, k: usize, metric: MetricKind, weighting: WeightScheme) -> Result<f64> {
    let report = cv_grid(data, &[k], &[metric], &[weighting])?;
    Ok(report.rows[0].accuracy)
}

/// Accuracy of every (metric, weighting, k) combination. Each held-out frame
/// runs one neighbour search per metric at the largest `k`; smaller `k` use a
/// prefix of that list. Rows are ordered metric-major, then weighting, then k.
/// The chosen row has maximal accuracy, ties going to the smallest `k` and
/// then to the earliest metric and weighting.
pub fn cv_grid(
    data: &LabeledDataset,
    ks: &[usize],
    metrics: &[MetricKind],
    weightings: &[WeightScheme],
) -> Result<CvReport> {
    if ks.is_empty() || metrics.is_empty() || weightings.is_empty() {
        return Err(Error::config("empty cross-validation grid"));
    }
    let folds = Folds::new(data)?;
    let k_max = *ks.iter().max().unwrap_or(&1);
    let limit = folds.smallest_training_fold();
    if ks.contains(&0) || k_max > limit {
        return Err(Error::config(format!(
            "k candidates must lie in 1..={limit} (smallest training fold)"
        )));
    }
    let total = folds.points.len();
    let combos = weightings.len() * ks.len();

    let mut rows = Vec::with_capacity(metrics.len() * combos);
    for &metric_kind in metrics {
        let mut correct = vec![0usize; combos];
        for held_out in &folds.blocks {
            let train = folds.training_set(held_out)?;
            let metric = metric_kind.resolve(&train)?;
            let fold_counts = held_out
                .clone()
                .into_par_iter()
                .map(|q| -> Result<Vec<usize>> {
                    let nn = neighbors(&folds.points[q], &train, k_max, &metric)?;
                    let pairs: Vec<(GestureLabel, f64)> =
                        nn.iter().map(|n| (train.labels()[n.index], n.distance)).collect();
                    let mut hits = vec![0usize; combos];
                    for (wi, &w) in weightings.iter().enumerate() {
                        for (ki, &k) in ks.iter().enumerate() {
                            if vote(&pairs[..k], w)? == folds.labels[q] {
                                hits[wi * ks.len() + ki] = 1;
                            }
                        }
                    }
                    Ok(hits)
                })
                .try_reduce(|| vec![0usize; combos], |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    Ok(a)
                })?;
            correct.iter_mut().zip(&fold_counts).for_each(|(c, f)| *c += f);
        }
        for (wi, &weighting) in weightings.iter().enumerate() {
            for (ki, &k) in ks.iter().enumerate() {
                rows.push(CvRow {
                    k,
                    metric: metric_kind,
                    weighting,
                    accuracy: correct[wi * ks.len() + ki] as f64 / total as f64,
                });
            }
        }
    }

    let mut chosen = rows[0];
    for r in &rows[1..] {
        if r.accuracy > chosen.accuracy || (r.accuracy == chosen.accuracy && r.k < chosen.k) {
            chosen = *r;
        }
    }
    Ok(CvReport { rows, chosen })
}

/// Best `k` among `candidates` for a fixed metric and weighting; ties go to
/// the smallest `k`.
pub fn select_k(
    data: &LabeledDataset,
    candidates: &[usize],
    metric: MetricKind,
    weighting: WeightScheme,
) -> Result<(usize, CvReport)> {
    if candidates.is_empty() {
        return Err(Error::config("no k candidates"));
    }
    let report = cv_grid(data, candidates, &[metric], &[weighting])?;
    Ok((report.chosen.k, report))
}
