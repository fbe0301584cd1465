//! Small numerical helpers used across modules.

pub const LN_2PI: f64 = 1.8378770664093453;

/// log(Σ exp(x_i)), stable against large spreads. Empty input gives −∞.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

/// log N(x; mean, variance) for one coordinate.
pub fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
}

/// log N(x; 0, variance·I) for a vector.
pub fn isotropic_normal_log_pdf(x: &[f64], variance: f64) -> f64 {
    let d = x.len() as f64;
    -0.5 * d * (LN_2PI + variance.ln()) - norm_sq(x) / (2.0 * variance)
}

/// KL(N(m0, v0) ‖ N(m1, v1)) for scalar Gaussians.
pub fn gaussian_kl_1d(m0: f64, v0: f64, m1: f64, v1: f64) -> f64 {
    0.5 * (v0 / v1 + (m1 - m0) * (m1 - m0) / v1 - 1.0 + (v1 / v0).ln())
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
