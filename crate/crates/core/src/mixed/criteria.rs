/// Akaike information criterion, `-2 loglik + 2 p`.
pub fn aic(loglik: f64, p: f64) -> f64 {
    -2.0 * loglik + 2.0 * p
}

/// Bayesian information criterion, `-2 loglik + ln(n) p`.
pub fn bic(loglik: f64, p: f64, n: f64) -> f64 {
    -2.0 * loglik + n.ln() * p
}

/// Label of the candidate with the smallest criterion value (first wins
/// ties). `None` for an empty slice.
pub fn select_by_criterion<'a>(candidates: &[(&'a str, f64)]) -> Option<&'a str> {
    candidates
        .iter()
        .fold(None::<(&str, f64)>, |best, &(label, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((label, v)),
        })
        .map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert_eq!(aic(-100.0, 3.0), 206.0);
        let n = std::f64::consts::E.powi(2);
        assert!((bic(-100.0, 3.0, n) - aic(-100.0, 3.0)).abs() < 1e-12);
    }

    #[test]
    fn lower_aic_wins() {
        // AIC values reported for the GAMMs with and without a random intercept.
        let pick = select_by_criterion(&[("with", 196545.6), ("without", 196628.5)]);
        assert_eq!(pick, Some("with"));
        assert_eq!(select_by_criterion(&[]), None);
        assert_eq!(select_by_criterion(&[("a", 1.0), ("b", 1.0)]), Some("a"));
    }
}
