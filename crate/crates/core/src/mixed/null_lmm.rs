//! Random-intercept model without covariates, `y_ij = γ + b_i + ε_ij`,
//! fitted by restricted maximum likelihood.

use serde::{Deserialize, Serialize};

use crate::dataset::PanelDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    /// Between-subject variance σ_b².
    pub sigma_b2: f64,
    /// Within-subject variance σ_w².
    pub sigma_w2: f64,
    pub grand_mean: f64,
    /// Restricted log-likelihood at the estimate.
    pub loglik_reml: f64,
}

/// Intra-class correlation `σ_b² / (σ_b² + σ_w²)`.
pub fn icc(vc: &VarianceComponents) -> Result<f64> {
    let total = vc.sigma_b2 + vc.sigma_w2;
    if !(total > 0.0) {
        return Err(Error::UndefinedIcc);
    }
    Ok(vc.sigma_b2 / total)
}

/// Null model on a panel channel, one group per trip.
pub fn fit_null_lmm(panel: &PanelDataset, response: &str) -> Result<VarianceComponents> {
    let groups = panel
        .trips()
        .iter()
        .map(|t| t.require(response))
        .collect::<Result<Vec<_>>>()?;
    fit_null_lmm_groups(&groups)
}

/// Per-group sufficient statistics.
struct Group {
    n: f64,
    mean: f64,
}

struct Profile {
    groups: Vec<Group>,
    within_ss: f64,
    n_total: f64,
    floor: f64,
}

impl Profile {
    /// GLS mean, weighted residual sum of squares and the variance-ratio
    /// dependent log-determinant terms at ratio `psi = σ_b²/σ_w²`.
    fn terms(&self, psi: f64) -> (f64, f64, f64) {
        let mut s = 0.0;
        let mut sy = 0.0;
        let mut logdet = 0.0;
        for g in &self.groups {
            let d = 1.0 + g.n * psi;
            s += g.n / d;
            sy += g.n * g.mean / d;
            logdet += d.ln();
        }
        let gamma = sy / s;
        let q = self.within_ss
            + self
                .groups
                .iter()
                .map(|g| g.n * (g.mean - gamma).powi(2) / (1.0 + g.n * psi))
                .sum::<f64>();
        (gamma, q, logdet + s.ln())
    }

    /// Restricted log-likelihood with σ_w² profiled out (clamped at the floor).
    fn loglik(&self, psi: f64) -> (f64, f64, f64) {
        let (gamma, q, logdet) = self.terms(psi);
        let dof = self.n_total - 1.0;
        let sigma2 = (q / dof).max(self.floor);
        let ll = -0.5 * (dof * (2.0 * std::f64::consts::PI).ln() + dof * sigma2.ln() + logdet + q / sigma2);
        (ll, sigma2, gamma)
    }
}

/// Null model on explicit groups. The variance ratio is located by a
/// log-spaced scan followed by golden-section refinement; a zero ratio is
/// always a candidate. When the groups have no within-group spread σ_w² is
/// held at `1e-10` times the total variance.
pub fn fit_null_lmm_groups<G: AsRef<[f64]>>(groups: &[G]) -> Result<VarianceComponents> {
    if groups.len() < 2 {
        return Err(Error::Identifiability(format!(
            "random intercept needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(Error::Identifiability("every group needs an observation".into()));
    }
    if groups.iter().flat_map(|g| g.as_ref()).any(|y| !y.is_finite()) {
        return Err(Error::Data("response contains non-finite values".into()));
    }
    let n_total: f64 = groups.iter().map(|g| g.as_ref().len() as f64).sum();
    let grand = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / n_total;
    let total_ss: f64 = groups
        .iter()
        .flat_map(|g| g.as_ref())
        .map(|y| (y - grand).powi(2))
        .sum();
    if n_total < 2.0 || total_ss == 0.0 {
        return Ok(VarianceComponents {
            sigma_b2: 0.0,
            sigma_w2: f64::MIN_POSITIVE,
            grand_mean: grand,
            loglik_reml: f64::INFINITY,
        });
    }
    let mut within_ss = 0.0;
    let stats: Vec<Group> = groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            within_ss += g.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
            Group { n, mean }
        })
        .collect();
    let profile = Profile {
        groups: stats,
        within_ss,
        n_total,
        floor: 1e-10 * total_ss / (n_total - 1.0),
    };

    const LO: f64 = -20.0;
    const HI: f64 = 40.0;
    const STEPS: usize = 240;
    let f = |log_psi: f64| profile.loglik(log_psi.exp()).0;
    let grid: Vec<f64> = (0..=STEPS).map(|k| LO + (HI - LO) * k as f64 / STEPS as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (k, &v)| if v > values[b] { k } else { b });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(STEPS)];
    let log_psi = golden_max(f, lo, hi, 1e-10);

    let (ll_pos, s2_pos, g_pos) = profile.loglik(log_psi.exp());
    let (ll_zero, s2_zero, g_zero) = profile.loglik(0.0);
    let (psi, ll, sigma_w2, gamma) = if ll_zero >= ll_pos {
        (0.0, ll_zero, s2_zero, g_zero)
    } else {
        (log_psi.exp(), ll_pos, s2_pos, g_pos)
    };
    Ok(VarianceComponents {
        sigma_b2: psi * sigma_w2,
        sigma_w2,
        grand_mean: gamma,
        loglik_reml: ll,
    })
}

/// Golden-section maximisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn icc_formula() {
        let vc = VarianceComponents {
            sigma_b2: 1.0,
            sigma_w2: 3.0,
            grand_mean: 0.0,
            loglik_reml: 0.0,
        };
        assert!((icc(&vc).unwrap() - 0.25).abs() < 1e-12);
        let zero_b = VarianceComponents { sigma_b2: 0.0, ..vc };
        assert_eq!(icc(&zero_b).unwrap(), 0.0);
        let none = VarianceComponents {
            sigma_b2: 0.0,
            sigma_w2: 0.0,
            ..vc
        };
        assert!(matches!(icc(&none), Err(Error::UndefinedIcc)));
    }

    #[test]
    fn separated_constant_groups() {
        let vc = fit_null_lmm_groups(&[vec![0.0; 5], vec![2.0; 5]]).unwrap();
        let total_var = 10.0 / 9.0;
        assert!(vc.sigma_w2 <= 1e-9 * total_var, "{vc:?}");
        // Sample variance of the group means (0 and 2).
        assert!((vc.sigma_b2 - 2.0).abs() < 1e-3, "{vc:?}");
        assert!((vc.grand_mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_observations() {
        let vc = fit_null_lmm_groups(&[vec![3.0; 4], vec![3.0; 7]]).unwrap();
        assert_eq!(vc.sigma_b2, 0.0);
        assert!(vc.sigma_w2 > 0.0);
        assert_eq!(icc(&vc).unwrap(), 0.0);
    }

    #[test]
    fn single_group_not_identifiable() {
        assert!(matches!(
            fit_null_lmm_groups(&[vec![1.0, 2.0]]),
            Err(Error::Identifiability(_))
        ));
    }

    #[test]
    fn balanced_design_matches_anova() {
        // For balanced data REML equals the ANOVA estimator when positive.
        let groups = vec![
            vec![1.0, 2.0, 3.0],
            vec![4.0, 6.0, 5.0],
            vec![9.0, 7.0, 8.0],
            vec![2.0, 2.5, 4.0],
        ];
        let (m, n) = (4.0, 3.0);
        let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / n).collect();
        let grand = means.iter().sum::<f64>() / m;
        let msw = groups
            .iter()
            .zip(&means)
            .map(|(g, mu)| g.iter().map(|y| (y - mu).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (m * (n - 1.0));
        let msb = n * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
        let vc = fit_null_lmm_groups(&groups).unwrap();
        assert!((vc.sigma_w2 - msw).abs() < 1e-6 * msw, "{vc:?} vs {msw}");
        assert!((vc.sigma_b2 - (msb - msw) / n).abs() < 1e-6, "{vc:?}");
    }

    #[test]
    fn recovers_generator_variances() {
        let (mut sb, mut sw) = (0.0, 0.0);
        let seeds = 10;
        for seed in 0..seeds {
            let mut rng = seeded(seed);
            let b = Normal::new(0.0, 2.0).unwrap();
            let e = Normal::new(0.0, 1.0).unwrap();
            let groups: Vec<Vec<f64>> = (0..50)
                .map(|_| {
                    let bi = b.sample(&mut rng);
                    (0..20).map(|_| 10.0 + bi + e.sample(&mut rng)).collect()
                })
                .collect();
            let vc = fit_null_lmm_groups(&groups).unwrap();
            sb += vc.sigma_b2;
            sw += vc.sigma_w2;
        }
        let (sb, sw) = (sb / seeds as f64, sw / seeds as f64);
        assert!((sb - 4.0).abs() <= 0.15 * 4.0, "sigma_b2 {sb}");
        assert!((sw - 1.0).abs() <= 0.15, "sigma_w2 {sw}");
    }
}
