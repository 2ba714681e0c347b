use serde::{Deserialize, Serialize};

use super::bootstrap::{draw_subjects, in_bag_rows, rows_by_subject, SubjectDraw};
use super::tree::{fit_tree, RegressionTree, TreeParams};
use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub ntrees: usize,
    pub mtry: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            ntrees: 100,
            mtry: 4,
            min_leaf: 5,
        }
    }
}

/// Random forest grown on subject-level bootstrap samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub columns: Vec<String>,
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<RegressionTree>,
    pub draws: Vec<SubjectDraw>,
    /// Out-of-bag MSE; absent when no row is ever out of bag.
    pub oob_error: Option<f64>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        design.check_columns(&self.columns)?;
        Ok(design.rows().map(|r| self.predict_row(r)).collect())
    }
}

/// Fits one unpruned tree per subject bootstrap of `design`. Tree `b` uses
/// the stream `derive_seed(seed, b)`, so results do not depend on the
/// thread count.
pub fn fit_forest(design: &DesignMatrix, params: &ForestParams, seed: u64) -> Result<Forest> {
    if params.ntrees == 0 {
        return Err(Error::InvalidArgument("ntrees must be at least 1".into()));
    }
    if design.n_rows() == 0 {
        return Err(Error::Data("empty design".into()));
    }
    let p = design.n_cols();
    let mtry = params.mtry.clamp(1, p.max(1));
    if mtry != params.mtry {
        log::warn!("mtry {} clamped to {mtry} ({p} features)", params.mtry);
    }
    let tree_params = TreeParams {
        mtry,
        max_splits: None,
        min_leaf: params.min_leaf,
    };
    let subjects = design.subjects();
    let by_subject = rows_by_subject(design);
    let fitted = par::map_range(params.ntrees, |b| -> Result<(RegressionTree, SubjectDraw)> {
        let mut rng = seeded(derive_seed(seed, b as u64));
        let draw = draw_subjects(&subjects, &mut rng);
        let rows = in_bag_rows(&by_subject, &draw);
        let y: Vec<f64> = rows.iter().map(|&i| design.response[i]).collect();
        Ok((fit_tree(design, &rows, &y, &tree_params, &mut rng)?, draw))
    });
    let (trees, draws): (Vec<_>, Vec<_>) = fitted.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let oob: Vec<(f64, f64)> = par::map_range(design.n_rows(), |i| {
        let subject = &design.subject_of_row[i];
        let (sum, k) = trees
            .iter()
            .zip(&draws)
            .filter(|(_, d)| !d.contains(subject))
            .fold((0.0, 0usize), |(s, k), (t, _)| (s + t.predict(design.row(i)), k + 1));
        if k == 0 {
            (f64::NAN, 0.0)
        } else {
            ((sum / k as f64 - design.response[i]).powi(2), 1.0)
        }
    });
    let counted: f64 = oob.iter().map(|o| o.1).sum();
    let oob_error = (counted > 0.0).then(|| oob.iter().filter(|o| o.1 > 0.0).map(|o| o.0).sum::<f64>() / counted);

    Ok(Forest {
        columns: design.columns.clone(),
        params: ForestParams { mtry, ..*params },
        seed,
        trees,
        draws,
        oob_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::tree::Node;
    use rand::Rng;

    fn panel(subjects: usize, per: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> DesignMatrix {
        let mut rng = seeded(seed);
        let mut rows = Vec::new();
        let mut subj = Vec::new();
        for s in 0..subjects {
            for _ in 0..per {
                rows.push(vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]);
                subj.push(format!("s{s}"));
            }
        }
        let y = rows.iter().map(|r| f(r)).collect();
        DesignMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows, y, subj).unwrap()
    }

    fn small() -> ForestParams {
        ForestParams {
            ntrees: 20,
            mtry: 2,
            min_leaf: 3,
        }
    }

    #[test]
    fn prediction_is_tree_mean() {
        let d = panel(8, 20, 1, |r| r[0] * 3.0 + r[1]);
        let f = fit_forest(&d, &small(), 5).unwrap();
        for r in d.rows().take(30) {
            let mean = f.trees.iter().map(|t| t.predict(r)).sum::<f64>() / f.trees.len() as f64;
            assert_eq!(f.predict_row(r), mean);
        }
    }

    #[test]
    fn hand_routed_five_tree_forest() {
        let leaf = |v: f64| Node::Leaf { value: v, n: 1 };
        let stump = |feature: usize, thr: f64, l: f64, r: f64| RegressionTree {
            root: Node::Split {
                feature,
                threshold: thr,
                left: Box::new(leaf(l)),
                right: Box::new(leaf(r)),
            },
            n_splits: 1,
        };
        let forest = Forest {
            columns: vec!["a".into(), "b".into()],
            params: ForestParams::default(),
            seed: 0,
            trees: vec![
                stump(0, 0.5, 1.0, 2.0),
                stump(1, 0.5, 3.0, 4.0),
                stump(0, 0.2, 5.0, 6.0),
                stump(1, 0.9, 7.0, 8.0),
                RegressionTree {
                    root: leaf(10.0),
                    n_splits: 0,
                },
            ],
            draws: vec![],
            oob_error: None,
        };
        // Row (0.3, 0.7): 1, 4, 6, 7, 10.
        assert_eq!(forest.predict_row(&[0.3, 0.7]), 28.0 / 5.0);
    }

    #[test]
    fn constant_response() {
        let d = panel(6, 10, 2, |_| 7.25);
        let f = fit_forest(&d, &small(), 1).unwrap();
        assert!(f.predict(&d).unwrap().iter().all(|p| *p == 7.25));
        assert_eq!(f.oob_error, Some(0.0));
    }

    #[test]
    fn single_tree_forest_is_that_tree() {
        let d = panel(5, 10, 3, |r| r[2]);
        let f = fit_forest(&d, &ForestParams { ntrees: 1, ..small() }, 4).unwrap();
        for r in d.rows() {
            assert_eq!(f.predict_row(r), f.trees[0].predict(r));
        }
    }

    #[test]
    fn one_subject_has_no_oob() {
        let d = panel(1, 30, 4, |r| r[0]);
        let f = fit_forest(&d, &small(), 4).unwrap();
        assert_eq!(f.oob_error, None);
    }

    #[test]
    fn deterministic_for_seed() {
        let d = panel(8, 15, 5, |r| r[0] - r[1]);
        let a = fit_forest(&d, &small(), 11).unwrap();
        let b = fit_forest(&d, &small(), 11).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&d, &small(), 12).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let d = panel(8, 15, 6, |r| r[0] * r[1]);
        let one = par::with_jobs(1, || fit_forest(&d, &small(), 3).unwrap());
        let many = par::with_jobs(4, || fit_forest(&d, &small(), 3).unwrap());
        assert_eq!(one, many);
    }

    #[test]
    fn oob_stabilizes_with_more_trees() {
        let mut rng = seeded(77);
        let d = panel(20, 15, 7, |r| (4.0 * r[0]).sin() + r[1]);
        let noise: Vec<f64> = (0..d.n_rows()).map(|_| rng.random_range(-0.2..0.2)).collect();
        let y = d.response.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let d = d.with_response(y).unwrap();
        let p = |n| ForestParams {
            ntrees: n,
            mtry: 2,
            min_leaf: 5,
        };
        let e200 = fit_forest(&d, &p(200), 8).unwrap().oob_error.unwrap();
        let e400 = fit_forest(&d, &p(400), 8).unwrap().oob_error.unwrap();
        assert!(((e400 - e200) / e200).abs() <= 0.05, "{e200} vs {e400}");
    }
}
