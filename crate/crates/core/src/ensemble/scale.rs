use crate::error::{Error, Result};

/// Pearson scale estimate `Σ ((y - μ)/√v)² / (N - p)` with `N = y.len()`.
pub fn pearson_scale(y: &[f64], mu: &[f64], variance: &[f64], p: usize) -> Result<f64> {
    let n = y.len();
    if mu.len() != n || variance.len() != n {
        return Err(Error::Alignment(format!(
            "lengths {n}, {}, {}",
            mu.len(),
            variance.len()
        )));
    }
    if n <= p {
        return Err(Error::DegreesOfFreedom { n, p });
    }
    if let Some(v) = variance.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "variance function value {v} is not positive"
        )));
    }
    let ss: f64 = y
        .iter()
        .zip(mu)
        .zip(variance)
        .map(|((y, m), v)| (y - m).powi(2) / v)
        .sum();
    Ok(ss / (n - p) as f64)
}
