//! Independent reference implementations used as test oracles. They share no
//! code with the library beyond the data types.
#![allow(dead_code)]

use std::collections::BTreeMap;

use myoprop::{GestureLabel, SeededRng, WeightScheme};

pub const EPS: f64 = 1e-12;

/// Oracle metric: plain formulas, Mahalanobis through an explicitly inverted
/// covariance.
pub enum OracleMetric {
    Minkowski(f64),
    Euclidean,
    Mahalanobis(Vec<Vec<f64>>),
}

impl OracleMetric {
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            OracleMetric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            OracleMetric::Minkowski(p) if *p == 1.0 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            OracleMetric::Minkowski(p) if *p == 2.0 => OracleMetric::Euclidean.dist(a, b),
            OracleMetric::Minkowski(p) => {
                a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(*p)).sum::<f64>().powf(1.0 / p)
            }
            OracleMetric::Mahalanobis(inv) => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                let mut q = 0.0;
                for i in 0..d.len() {
                    for j in 0..d.len() {
                        q += d[i] * inv[i][j] * d[j];
                    }
                }
                q.max(0.0).sqrt()
            }
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Solves `A x = b` for several right-hand sides by Gaussian elimination.
pub fn solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, rb)| r.iter().chain(rb).copied().collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
        aug.swap(col, piv);
        for r in col + 1..n {
            let f = aug[r][col] / aug[col][col];
            for c in col..n + m {
                aug[r][c] -= f * aug[col][c];
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    for i in (0..n).rev() {
        for j in 0..m {
            let mut s = aug[i][n + j];
            for k in i + 1..n {
                s -= aug[i][k] * x[k][j];
            }
            x[i][j] = s / aug[i][i];
        }
    }
    x
}

pub fn sample_covariance(points: &[[f64; 8]]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..8).map(|c| points.iter().map(|p| p[c]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            cov[i][j] = points.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).sum::<f64>() / (n - 1.0);
        }
    }
    cov
}

pub fn oracle_weight(d: f64, w: WeightScheme) -> f64 {
    match w {
        WeightScheme::Uniform => 1.0,
        WeightScheme::Inverse => 1.0 / d.max(EPS),
        WeightScheme::InverseSquared => 1.0 / (d.max(EPS) * d.max(EPS)),
    }
}

/// Full sort by (distance, index), take `k`, weighted vote.
pub fn oracle_knn(
    query: &[f64],
    points: &[[f64; 8]],
    labels: &[GestureLabel],
    k: usize,
    metric: &OracleMetric,
    w: WeightScheme,
) -> (GestureLabel, Vec<usize>) {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (metric.dist(query, p), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nn = &all[..k];
    let exact: Vec<(f64, usize)> = nn.iter().copied().filter(|(d, _)| *d < EPS).collect();
    let (pool, scheme) = if exact.is_empty() { (nn.to_vec(), w) } else { (exact, WeightScheme::Uniform) };
    let mut score: BTreeMap<GestureLabel, f64> = BTreeMap::new();
    let mut first: BTreeMap<GestureLabel, usize> = BTreeMap::new();
    for (rank, &(d, i)) in pool.iter().enumerate() {
        *score.entry(labels[i]).or_insert(0.0) += oracle_weight(d, scheme);
        first.entry(labels[i]).or_insert(rank);
    }
    let best = score.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let label = score
        .iter()
        .filter(|(_, &s)| s == best)
        .min_by_key(|(l, _)| first[l])
        .map(|(l, _)| *l)
        .unwrap();
    (label, nn.iter().map(|&(_, i)| i).collect())
}

/// Adaptive Simpson quadrature.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// ln Gamma by Stirling series after shifting the argument above 10.
pub fn ln_gamma_stirling(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
        - 1.0 / (1680.0 * x2 * x2 * x2 * x)
}

/// F(d1, d2) CDF at `x` by quadrature of the density, substituting
/// `t = u^2` to remove the endpoint singularity at 0 when `d1 < 2`.
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    let ln_b = ln_gamma_stirling(d1 / 2.0) + ln_gamma_stirling(d2 / 2.0) - ln_gamma_stirling((d1 + d2) / 2.0);
    // 2u f(u^2) in log form; (d1 - 1) ln u is taken as 0 at u = 0 when d1 = 1
    let g = |u: f64| -> f64 {
        let power = if d1 == 1.0 { 0.0 } else if u == 0.0 { return 0.0 } else { (d1 - 1.0) * u.ln() };
        let ln = 2f64.ln() + 0.5 * d1 * (d1 / d2).ln() + power - 0.5 * (d1 + d2) * (1.0 + d1 * u * u / d2).ln() - ln_b;
        ln.exp()
    };
    simpson(&g, 0.0, x.sqrt(), 1e-13)
}

/// Textbook one-way ANOVA sums of squares: (F, df_between, df_within).
pub fn anova_sums(groups: &[Vec<f64>]) -> (f64, usize, usize) {
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let (dfb, dfw) = (groups.len() - 1, n - groups.len());
    ((ssb / dfb as f64) / (ssw / dfw as f64), dfb, dfw)
}

pub fn random_point(rng: &mut SeededRng, grid: bool) -> [f64; 8] {
    let mut p = [0.0; 8];
    for v in p.iter_mut() {
        *v = if grid { rng.below(3) as f64 } else { rng.uniform() * 2.0 };
    }
    p
}

pub fn random_label(rng: &mut SeededRng, classes: usize) -> GestureLabel {
    GestureLabel::ACTIVE[rng.below(classes as u64) as usize]
}

/// Metric kinds exercised by the randomized kNN comparisons.
pub fn metric_kinds() -> Vec<myoprop::MetricKind> {
    use myoprop::MetricKind;
    vec![
        MetricKind::Euclidean,
        MetricKind::Minkowski { p: 1.0 },
        MetricKind::Minkowski { p: 3.0 },
        MetricKind::Mahalanobis,
    ]
}

/// One randomized instance: library `classify`/`neighbors` against the
/// oracle, for every metric x weighting and k in {1, 3, 5}. Grid-valued
/// points (exact ties and duplicates) are used for every metric except
/// Mahalanobis, whose two implementations round differently.
pub fn knn_instance(seed: u64) -> Result<usize, String> {
    use myoprop::{classify, neighbors, KnnConfig, MetricKind, NormalizedFrame, TrainingSet};
    let mut rng = SeededRng::new(seed);
    let n = 5 + rng.below(46) as usize;
    let classes = 2 + rng.below(4) as usize;
    let grid = seed.is_multiple_of(2);
    let mut checks = 0;
    for kind in metric_kinds() {
        let on_grid = grid && kind != MetricKind::Mahalanobis;
        let points: Vec<[f64; 8]> = (0..n).map(|_| random_point(&mut rng, on_grid)).collect();
        let labels: Vec<GestureLabel> = (0..n).map(|_| random_label(&mut rng, classes)).collect();
        let query = random_point(&mut rng, on_grid);
        let train = TrainingSet::new(points.clone(), labels.clone()).map_err(|e| e.to_string())?;
        let metric = kind.resolve(&train).map_err(|e| e.to_string())?;
        let oracle = match kind {
            MetricKind::Euclidean => OracleMetric::Euclidean,
            MetricKind::Minkowski { p } => OracleMetric::Minkowski(p),
            MetricKind::Mahalanobis => {
                let mut cov = sample_covariance(&points);
                let trace: f64 = (0..8).map(|i| cov[i][i]).sum();
                (0..8).for_each(|i| cov[i][i] += 1e-6 * trace / 8.0);
                OracleMetric::Mahalanobis(invert(&cov))
            }
        };
        for k in [1usize, 3, 5] {
            if k > n {
                continue;
            }
            let lib_nn = neighbors(&query, &train, k, &metric).map_err(|e| e.to_string())?;
            for w in WeightScheme::ALL {
                let (want, want_nn) = oracle_knn(&query, &points, &labels, k, &oracle, w);
                let config = KnnConfig { k, metric: metric.clone(), weighting: w };
                let got = classify(&NormalizedFrame { direction: query, magnitude: 1.0 }, &train, &config)
                    .map_err(|e| e.to_string())?;
                let got_nn: Vec<usize> = lib_nn.iter().map(|x| x.index).collect();
                if got != want || got_nn != want_nn {
                    return Err(format!(
                        "seed {seed} {kind} {w} k={k}: library {got} {got_nn:?}, oracle {want} {want_nn:?}"
                    ));
                }
                checks += 1;
            }
        }
    }
    Ok(checks)
}
