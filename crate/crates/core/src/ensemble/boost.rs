use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_presorted, Node, Presorted, RegressionTree, TreeParams};
use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub ntrees: usize,
    /// Splits per tree.
    pub nsplit: usize,
    /// Shrinkage applied to every tree.
    pub lambda: f64,
    pub min_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            ntrees: 100,
            nsplit: 1,
            lambda: 0.05,
            min_leaf: 5,
        }
    }
}

impl BoostParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `F_k(x) = init + λ Σ_{m ≤ k} T_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub columns: Vec<String>,
    pub params: BoostParams,
    pub init: f64,
    pub trees: Vec<RegressionTree>,
    /// Stage used by `predict`.
    pub selected_iterations: usize,
}

impl BoostedEnsemble {
    pub fn predict_stage(&self, row: &[f64], k: usize) -> f64 {
        self.init
            + self.params.lambda
                * self.trees[..k.min(self.trees.len())]
                    .iter()
                    .map(|t| t.predict(row))
                    .sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_stage(row, self.selected_iterations)
    }

    pub fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        design.check_columns(&self.columns)?;
        Ok(design.rows().map(|r| self.predict_row(r)).collect())
    }

    /// Predictions after every stage 0..=ntrees, one vector per row.
    pub fn staged(&self, row: &[f64]) -> Vec<f64> {
        let mut f = self.init;
        let mut out = Vec::with_capacity(self.trees.len() + 1);
        out.push(f);
        for t in &self.trees {
            f += self.params.lambda * t.predict(row);
            out.push(f);
        }
        out
    }
}

/// Residual boosting: each tree is fitted to `y - F_k` with `nsplit` splits
/// over all features. All stages are kept; `selected_iterations` is ntrees.
pub fn fit_boost(design: &DesignMatrix, params: &BoostParams) -> Result<BoostedEnsemble> {
    let rows: Vec<usize> = (0..design.n_rows()).collect();
    fit_boost_presorted(design, params, &Presorted::new(design, &rows))
}

fn fit_boost_presorted(design: &DesignMatrix, params: &BoostParams, presorted: &Presorted) -> Result<BoostedEnsemble> {
    params.validate()?;
    let n = design.n_rows();
    if n == 0 {
        return Err(Error::Data("empty design".into()));
    }
    let init = design.response.iter().sum::<f64>() / n as f64;
    let tree_params = TreeParams {
        mtry: design.n_cols(),
        max_splits: Some(params.nsplit),
        min_leaf: params.min_leaf,
    };
    let rows: Vec<usize> = (0..n).collect();
    let mut fitted = vec![init; n];
    let mut trees = Vec::with_capacity(params.ntrees);
    // Every feature is tried at every node, so the generator is never drawn.
    let mut rng = seeded(0);
    for _ in 0..params.ntrees {
        let resid: Vec<f64> = design.response.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let tree = if design.n_cols() == 0 {
            let mean = resid.iter().sum::<f64>() / n as f64;
            RegressionTree {
                root: Node::Leaf { value: mean, n },
                n_splits: 0,
            }
        } else {
            fit_tree_presorted(design, &rows, &resid, presorted, &tree_params, &mut rng)?
        };
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.lambda * tree.predict(design.row(i));
        }
        trees.push(tree);
    }
    Ok(BoostedEnsemble {
        columns: design.columns.clone(),
        params: *params,
        init,
        selected_iterations: trees.len(),
        trees,
    })
}

/// Held-out MSE after each stage, averaged over subject folds.
pub fn cv_curve(design: &DesignMatrix, params: &BoostParams, folds: &[Vec<String>]) -> Result<Vec<f64>> {
    params.validate()?;
    if folds.len() < 2 {
        return Err(Error::Identifiability("need at least 2 subject folds".into()));
    }
    let all: Vec<usize> = (0..design.n_rows()).collect();
    let presorted = Presorted::new(design, &all);
    let curves = par::map(folds, |held| -> Result<Option<Vec<f64>>> {
        let in_train: Vec<bool> = design.subject_of_row.iter().map(|s| !held.contains(s)).collect();
        let test = design.select_subjects(|s| held.iter().any(|h| h == s));
        let train = design.select_subjects(|s| !held.iter().any(|h| h == s));
        if test.n_rows() == 0 || train.n_rows() == 0 {
            return Ok(None);
        }
        let model = fit_boost_presorted(&train, params, &presorted.restrict(&in_train))?;
        let mut sse = vec![0.0; params.ntrees + 1];
        for (row, y) in test.rows().zip(&test.response) {
            for (k, f) in model.staged(row).iter().enumerate() {
                sse[k] += (y - f).powi(2);
            }
        }
        let m = test.n_rows() as f64;
        Ok(Some(sse.into_iter().map(|s| s / m).collect()))
    });
    let curves: Vec<Vec<f64>> = curves
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if curves.is_empty() {
        return Err(Error::Data("no usable folds".into()));
    }
    let k = curves.len() as f64;
    Ok((0..=params.ntrees)
        .map(|s| curves.iter().map(|c| c[s]).sum::<f64>() / k)
        .collect())
}

/// Stage minimizing the fold-averaged held-out MSE; ties go to the smaller
/// stage.
pub fn select_boost_iterations(design: &DesignMatrix, params: &BoostParams, folds: &[Vec<String>]) -> Result<usize> {
    let curve = cv_curve(design, params, folds)?;
    Ok(argmin_first(&curve))
}

pub(crate) fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// One fold per subject.
pub fn leave_one_subject_out(design: &DesignMatrix) -> Vec<Vec<String>> {
    design.subjects().into_iter().map(|s| vec![s]).collect()
}

/// Fits all stages, then keeps the stage chosen by leave-one-subject-out
/// folds on the same data.
pub fn fit_boost_cv(design: &DesignMatrix, params: &BoostParams) -> Result<BoostedEnsemble> {
    let mut model = fit_boost(design, params)?;
    let folds = leave_one_subject_out(design);
    if folds.len() >= 2 {
        model.selected_iterations = select_boost_iterations(design, params, &folds)?;
    } else {
        log::warn!("one subject: keeping all {} stages", params.ntrees);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn data(subjects: usize, per: usize, seed: u64, f: impl Fn(&[f64], &mut crate::rng::Rng) -> f64) -> DesignMatrix {
        let mut rng = seeded(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut subj = Vec::new();
        for s in 0..subjects {
            for _ in 0..per {
                let r = vec![rng.random::<f64>(), rng.random::<f64>()];
                y.push(f(&r, &mut rng));
                rows.push(r);
                subj.push(format!("s{s}"));
            }
        }
        DesignMatrix::from_rows(vec!["a".into(), "b".into()], &rows, y, subj).unwrap()
    }

    fn mse(model: &BoostedEnsemble, d: &DesignMatrix, k: usize) -> f64 {
        d.rows()
            .zip(&d.response)
            .map(|(r, y)| (y - model.predict_stage(r, k)).powi(2))
            .sum::<f64>()
            / d.n_rows() as f64
    }

    #[test]
    fn one_full_tree_fits_step_exactly() {
        let d = data(4, 10, 1, |r, _| if r[0] > 0.5 { 2.0 } else { -1.0 });
        let p = BoostParams {
            ntrees: 1,
            nsplit: 50,
            lambda: 1.0,
            min_leaf: 1,
        };
        let m = fit_boost(&d, &p).unwrap();
        assert!(mse(&m, &d, 1) < 1e-24);
    }

    #[test]
    fn zero_trees_is_mean() {
        let d = data(3, 10, 2, |r, _| r[1]);
        let m = fit_boost(
            &d,
            &BoostParams {
                ntrees: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let mean = d.response.iter().sum::<f64>() / 30.0;
        assert!(m.predict(&d).unwrap().iter().all(|p| *p == mean));
    }

    #[test]
    fn training_mse_never_increases() {
        for seed in 0..20 {
            let noise = Normal::new(0.0, 0.3).unwrap();
            let d = data(5, 20, seed, |r, g| (5.0 * r[0]).sin() + r[1] + noise.sample(g));
            let p = BoostParams {
                ntrees: 500,
                nsplit: 2,
                lambda: 0.1,
                min_leaf: 3,
            };
            let m = fit_boost(&d, &p).unwrap();
            let mut prev = f64::INFINITY;
            for k in 0..=p.ntrees {
                let e = mse(&m, &d, k);
                assert!(e <= prev, "seed {seed} stage {k}: {e} > {prev}");
                prev = e;
            }
        }
    }

    #[test]
    fn tiny_shrinkage_stays_at_mean() {
        let d = data(4, 15, 3, |r, _| 10.0 * r[0]);
        let lambda = 1e-6;
        let m = fit_boost(
            &d,
            &BoostParams {
                lambda,
                ..Default::default()
            },
        )
        .unwrap();
        let mean = d.response.iter().sum::<f64>() / d.n_rows() as f64;
        let spread = d.response.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max);
        for p in m.predict(&d).unwrap() {
            assert!((p - mean).abs() <= 100.0 * lambda * spread);
        }
    }

    #[test]
    fn rejects_bad_lambda() {
        let d = data(2, 5, 4, |r, _| r[0]);
        for lambda in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(fit_boost(
                &d,
                &BoostParams {
                    lambda,
                    ..Default::default()
                }
            )
            .is_err());
        }
    }

    #[test]
    fn noiseless_selection_near_curve_minimum() {
        let d = data(6, 20, 5, |r, _| 3.0 * r[0] + r[1]);
        let p = BoostParams {
            ntrees: 200,
            nsplit: 2,
            lambda: 0.1,
            min_leaf: 3,
        };
        let folds = leave_one_subject_out(&d);
        let curve = cv_curve(&d, &p, &folds).unwrap();
        let k = select_boost_iterations(&d, &p, &folds).unwrap();
        let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(curve[k] <= 1.05 * min);
    }

    #[test]
    fn pure_noise_selects_early_stage() {
        let p = BoostParams::default();
        let mut small = 0;
        for seed in 0..20 {
            let noise = Normal::new(0.0, 1.0).unwrap();
            let d = data(8, 15, 100 + seed, |_, g| noise.sample(g));
            let k = select_boost_iterations(&d, &p, &leave_one_subject_out(&d)).unwrap();
            if k * 10 <= p.ntrees {
                small += 1;
            }
        }
        assert!(small >= 16, "{small}/20");
    }

    #[test]
    fn argmin_ties_to_first() {
        assert_eq!(argmin_first(&[3.0, 1.0, 1.0, 2.0]), 1);
        assert_eq!(argmin_first(&[1.0]), 0);
    }
}
