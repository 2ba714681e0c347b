use rand::seq::index::sample;

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::Predict;
use crate::par;
use crate::rng::seeded;

/// Marginalization draws used when the column has more rows than this.
pub const DEFAULT_MARGINAL_DRAWS: usize = 256;

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / y.len() as f64
}

/// Relative increase in MSE when the feature held in `columns` is
/// integrated out over its empirical distribution.
///
/// Every row's prediction is averaged over `n_draws` rows of the feature
/// (drawn without replacement, or all rows when there are fewer), with all
/// of `columns` replaced together so one-hot groups stay consistent.
pub fn variable_importance(
    model: &dyn Predict,
    design: &DesignMatrix,
    columns: &[usize],
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    let n = design.n_rows();
    if n == 0 {
        return Err(Error::Data("empty design".into()));
    }
    if columns.is_empty() || columns.iter().any(|&c| c >= design.n_cols()) {
        return Err(Error::InvalidArgument(format!("bad feature columns {columns:?}")));
    }
    let base = model.predict(design)?;
    let full = mse(&base, &design.response);
    let donors: Vec<usize> = if n <= n_draws {
        (0..n).collect()
    } else {
        sample(&mut seeded(seed), n, n_draws).into_vec()
    };
    // Shifts from the full prediction, so an ignored feature gives exactly 0.
    let mut shift = vec![0.0; n];
    let mut scratch = design.clone();
    for &d in &donors {
        let values: Vec<f64> = columns.iter().map(|&c| design.get(d, c)).collect();
        for i in 0..n {
            for (&c, &v) in columns.iter().zip(&values) {
                scratch.set(i, c, v);
            }
        }
        for ((m, p), b) in shift.iter_mut().zip(model.predict(&scratch)?).zip(&base) {
            *m += p - b;
        }
    }
    let k = donors.len() as f64;
    let marginal: Vec<f64> = base.iter().zip(&shift).map(|(b, m)| b + m / k).collect();
    let reduced = mse(&marginal, &design.response);
    if full == 0.0 {
        return Ok(if reduced == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((reduced - full) / full)
}

/// Importance of each named column group, computed in parallel.
pub fn importance_table(
    model: &(dyn Predict + Sync),
    design: &DesignMatrix,
    groups: &[(String, Vec<usize>)],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    par::map(groups, |(name, cols)| {
        variable_importance(model, design, cols, n_draws, seed).map(|v| (name.clone(), v))
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{fit_forest, ForestParams};
    use rand::Rng;

    fn design(seed: u64, f: impl Fn(&[f64]) -> f64, dup: bool) -> DesignMatrix {
        let mut rng = seeded(seed);
        let mut rows = Vec::new();
        for _ in 0..200 {
            let s: f64 = rng.random();
            let mut r = vec![s, rng.random(), rng.random()];
            if dup {
                r.push(r[0]);
            }
            rows.push(r);
        }
        let y = rows.iter().map(|r| f(r)).collect();
        let cols = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
        let subj = (0..200).map(|i| format!("t{}", i / 20)).collect();
        DesignMatrix::from_rows(cols, &rows, y, subj).unwrap()
    }

    fn params(mtry: usize) -> ForestParams {
        ForestParams {
            ntrees: 30,
            mtry,
            min_leaf: 5,
        }
    }

    #[test]
    fn unused_feature_scores_zero() {
        let mut d = design(1, |r| 4.0 * r[0] + r[1], false);
        for i in 0..d.n_rows() {
            d.set(i, 2, 0.5);
        }
        let f = fit_forest(&d, &params(3), 2).unwrap();
        assert!(f.trees.iter().all(|t| !t.uses_feature(2)));
        assert_eq!(variable_importance(&f, &d, &[2], 256, 0).unwrap(), 0.0);
    }

    #[test]
    fn planted_signal_ranks_first() {
        for seed in 0..10 {
            let d = design(seed, |r| (5.0 * r[1]).sin(), false);
            let f = fit_forest(&d, &params(2), seed).unwrap();
            let imp: Vec<f64> = (0..3)
                .map(|c| variable_importance(&f, &d, &[c], 64, seed).unwrap())
                .collect();
            assert!(imp[1] > imp[0] && imp[1] > imp[2], "seed {seed}: {imp:?}");
        }
    }

    #[test]
    fn duplicated_feature_dilutes_importance() {
        let noisy = |d: DesignMatrix| {
            let mut rng = seeded(42);
            let y = d.response.iter().map(|y| y + rng.random_range(-0.5..0.5)).collect();
            d.with_response(y).unwrap()
        };
        let single = noisy(design(3, |r| 3.0 * r[0], false));
        let doubled = noisy(design(3, |r| 3.0 * r[0], true));
        let fs = fit_forest(&single, &params(2), 5).unwrap();
        let fd = fit_forest(&doubled, &params(2), 5).unwrap();
        let planted = variable_importance(&fs, &single, &[0], 256, 1).unwrap();
        for c in [0, 3] {
            let v = variable_importance(&fd, &doubled, &[c], 256, 1).unwrap();
            assert!(v < planted, "column {c}: {v} vs {planted}");
        }
    }
}
