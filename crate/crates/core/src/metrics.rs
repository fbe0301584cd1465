//! Sample-quality metrics: exact 1-D Wasserstein-2, sliced W2 for higher
//! dimensions, and moment summaries.
//!
//! Full d-dimensional optimal transport is out of scope; the sliced variant
//! (root-mean of squared 1-D distances over random directions) is the
//! surrogate used for scaling and regression checks.

use crate::rng::Stream;
use crate::{Error, Result};

/// Points with optional normalized weights.
#[derive(Debug, Clone)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::shape(format!(
                "{} values do not form points of dim {dim}",
                points.len()
            )));
        }
        Ok(SampleSet {
            dim,
            points,
            weights: None,
        })
    }

    /// Weights are normalized to sum to one.
    pub fn with_weights(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut set = Self::new(dim, points)?;
        if weights.len() != set.n() {
            return Err(Error::shape("one weight per point required"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::config("weights must be non-negative with positive sum"));
        }
        set.weights = Some(weights.iter().map(|w| w / total).collect());
        Ok(set)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn uniform_or_weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.n() as f64; self.n()],
        }
    }

    fn coordinate(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.point(i)[j]).collect()
    }
}

/// Exact W2 between two weighted 1-D empirical measures via the quantile
/// coupling.
fn w2_1d_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut av: Vec<(f64, f64)> = a.to_vec();
    let mut bv: Vec<(f64, f64)> = b.to_vec();
    av.sort_by(|x, y| x.0.total_cmp(&y.0));
    bv.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (av[0].1, bv[0].1);
    let mut cost = 0.0;
    loop {
        let mass = ra.min(rb);
        let d = av[i].0 - bv[j].0;
        cost += mass * d * d;
        ra -= mass;
        rb -= mass;
        if ra <= 1e-15 {
            i += 1;
            if i >= av.len() {
                break;
            }
            ra = av[i].1;
        }
        if rb <= 1e-15 {
            j += 1;
            if j >= bv.len() {
                break;
            }
            rb = bv[j].1;
        }
    }
    cost.max(0.0).sqrt()
}

fn w2_1d_values(a: &SampleSet, b: &SampleSet, coord_a: Vec<f64>, coord_b: Vec<f64>) -> Result<f64> {
    match (&a.weights, &b.weights) {
        (None, None) => {
            if coord_a.len() != coord_b.len() {
                return Err(Error::Usage(
                    "unweighted 1-D W2 needs equal sample sizes".into(),
                ));
            }
            let mut xs = coord_a;
            let mut ys = coord_b;
            xs.sort_by(|x, y| x.total_cmp(y));
            ys.sort_by(|x, y| x.total_cmp(y));
            let n = xs.len() as f64;
            let mse: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / n;
            Ok(mse.sqrt())
        }
        _ => {
            let wa = a.uniform_or_weights();
            let wb = b.uniform_or_weights();
            let pa: Vec<(f64, f64)> = coord_a.into_iter().zip(wa).collect();
            let pb: Vec<(f64, f64)> = coord_b.into_iter().zip(wb).collect();
            Ok(w2_1d_weighted(&pa, &pb))
        }
    }
}

/// Wasserstein-2 between two 1-D sample sets. Unweighted equal-size inputs
/// use the sorted coupling (the exact optimal transport in 1-D); weighted
/// inputs use the weighted-quantile coupling.
pub fn w2_1d(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    if a.dim != 1 || b.dim != 1 {
        return Err(Error::Usage("w2_1d requires 1-dimensional samples".into()));
    }
    w2_1d_values(a, b, a.coordinate(0), b.coordinate(0))
}

/// Sliced W2 with caller-provided unit directions.
pub fn sliced_w2_dirs(a: &SampleSet, b: &SampleSet, dirs: &[Vec<f64>]) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::shape("sliced_w2: dimension mismatch"));
    }
    if dirs.is_empty() {
        return Err(Error::config("sliced_w2: need at least one direction"));
    }
    let mut acc = 0.0;
    for dir in dirs {
        if dir.len() != a.dim {
            return Err(Error::shape("sliced_w2: direction dimension mismatch"));
        }
        let proj = |s: &SampleSet| -> Vec<f64> {
            (0..s.n())
                .map(|i| crate::math::dot(s.point(i), dir))
                .collect()
        };
        let d = w2_1d_values(a, b, proj(a), proj(b))?;
        acc += d * d;
    }
    Ok((acc / dirs.len() as f64).sqrt())
}

/// Sliced W2 over random directions drawn uniformly from the unit sphere.
pub fn sliced_w2(a: &SampleSet, b: &SampleSet, n_projections: usize, stream: Stream) -> Result<f64> {
    let mut rng = stream.rng();
    let dim = a.dim;
    let dirs: Vec<Vec<f64>> = (0..n_projections)
        .map(|_| {
            loop {
                let mut v: Vec<f64> = (0..dim).map(|_| crate::rng::standard_normal(&mut rng)).collect();
                let n = crate::math::norm(&v);
                if n > 1e-12 {
                    for x in &mut v {
                        *x /= n;
                    }
                    return v;
                }
            }
        })
        .collect();
    sliced_w2_dirs(a, b, &dirs)
}

/// Per-coordinate means and variances plus the full covariance, weighted
/// when weights are present (population form).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MomentReport {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Row-major dim×dim covariance.
    pub covariance: Vec<f64>,
}

pub fn moment_report(a: &SampleSet) -> Result<MomentReport> {
    if a.n() < 2 {
        return Err(Error::config("moment_report needs at least 2 samples"));
    }
    let d = a.dim;
    let w = a.uniform_or_weights();
    let mut mean = vec![0.0; d];
    for i in 0..a.n() {
        for (j, x) in a.point(i).iter().enumerate() {
            mean[j] += w[i] * x;
        }
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..a.n() {
        let p = a.point(i);
        for j in 0..d {
            let dj = p[j] - mean[j];
            for k in 0..d {
                cov[j * d + k] += w[i] * dj * (p[k] - mean[k]);
            }
        }
    }
    let variance = (0..d).map(|j| cov[j * d + j]).collect();
    Ok(MomentReport {
        mean,
        variance,
        covariance: cov,
    })
}
