use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncated-linear basis `z_k(x) = max(0, x - κ_k)`. Paired with an
/// unpenalized linear term, an identity penalty on the coefficients makes
/// the spline a random effect with variance σ_f².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Basis("need at least one knot".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Basis("knots must be finite and strictly increasing".into()));
        }
        Ok(SplineBasis { knots })
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        for (o, k) in out.iter_mut().zip(&self.knots) {
            *o = (x - k).max(0.0);
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Linear-interpolation sample quantile of sorted data (`p` in [0, 1]).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `k` knots at the quantiles `1/(k+1), ..., k/(k+1)` of `x`. Quantiles
/// that coincide (heavily tied data) collapse into one knot, so the basis
/// may come back with fewer than `k` functions.
pub fn spline_basis(x: &[f64], k: usize) -> Result<SplineBasis> {
    if k == 0 {
        return Err(Error::Basis("knot count must be at least 1".into()));
    }
    let mut sorted: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.len() != x.len() {
        return Err(Error::Basis("non-finite values in smooth covariate".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k + 2 {
        return Err(Error::Basis(format!(
            "{} distinct values cannot support {k} knots (need {})",
            distinct.len(),
            k + 2
        )));
    }
    let mut knots: Vec<f64> = (1..=k)
        .map(|i| quantile_sorted(&sorted, i as f64 / (k + 1) as f64))
        .collect();
    knots.dedup_by(|a, b| *a <= *b);
    // A knot at the maximum would give an all-zero column.
    let max = *sorted.last().unwrap();
    knots.retain(|&kn| kn < max);
    SplineBasis::new(knots)
}

/// Number of distinct finite values, used to cap the knot count.
pub(crate) fn distinct_count(x: &[f64]) -> usize {
    let mut s: Vec<f64> = x.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.len()
}
