use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KsError {
    #[error("no samples")]
    Empty,
    #[error("sample {0} lies outside [0, {1}]")]
    OutOfRange(f64, f64),
    #[error("lambda = {0} and cutoff = {1} must be positive and finite")]
    Domain(f64, f64),
}

/// CDF of an exponential waiting time conditioned on falling before `cutoff`.
pub fn truncated_exponential_cdf(tau: f64, lambda: f64, cutoff: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if tau >= cutoff {
        return 1.0;
    }
    (-lambda * tau).exp_m1() / (-lambda * cutoff).exp_m1()
}

/// Kolmogorov-Smirnov distance between the samples' empirical CDF and the
/// truncated exponential CDF.
pub fn ks_test(hit_times: &[f64], lambda: f64, cutoff: f64) -> Result<f64, KsError> {
    if !(lambda > 0.0 && lambda.is_finite() && cutoff > 0.0 && cutoff.is_finite()) {
        return Err(KsError::Domain(lambda, cutoff));
    }
    if hit_times.is_empty() {
        return Err(KsError::Empty);
    }
    // a hit stamped at the end of the last step can overshoot by rounding
    let slack = 1e-9 * cutoff;
    let mut xs = Vec::with_capacity(hit_times.len());
    for &x in hit_times {
        if !(x >= -slack && x <= cutoff + slack) {
            return Err(KsError::OutOfRange(x, cutoff));
        }
        xs.push(x.clamp(0.0, cutoff));
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = truncated_exponential_cdf(x, lambda, cutoff);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}
