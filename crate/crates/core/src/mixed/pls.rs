use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Weighted ridge-type least squares `min Σ w_i (y_i - x_i'β)² + Σ λ_j β_j²`
/// with cached cross products. A zero `λ_j` leaves coefficient `j`
/// unpenalized.
#[derive(Debug, Clone)]
pub struct PenalizedLeastSquares {
    x: DMatrix<f64>,
    y: DVector<f64>,
    w: DVector<f64>,
    xtwx: DMatrix<f64>,
    xtwy: DVector<f64>,
    ytwy: f64,
}

/// Solution at a fixed penalty.
#[derive(Debug, Clone)]
pub struct PlsSolution {
    pub beta: DVector<f64>,
    /// Diagonal of `(X'WX + Λ)^{-1}`.
    pub inv_diag: DVector<f64>,
    /// Weighted residual sum of squares.
    pub rss: f64,
}

impl PlsSolution {
    /// Hat-matrix trace contribution of coefficient `j`: `1 - λ_j [A^{-1}]_jj`.
    pub fn edf_of(&self, j: usize, penalty: &[f64]) -> f64 {
        (1.0 - penalty[j] * self.inv_diag[j]).clamp(0.0, 1.0)
    }

    pub fn edf_total(&self, penalty: &[f64]) -> f64 {
        (0..penalty.len()).map(|j| self.edf_of(j, penalty)).sum()
    }
}

impl PenalizedLeastSquares {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, w: Option<DVector<f64>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Alignment(format!(
                "design has {} rows, response {}",
                x.nrows(),
                y.len()
            )));
        }
        let w = w.unwrap_or_else(|| DVector::from_element(y.len(), 1.0));
        let mut pls = PenalizedLeastSquares {
            xtwx: DMatrix::zeros(x.ncols(), x.ncols()),
            xtwy: DVector::zeros(x.ncols()),
            ytwy: 0.0,
            x,
            y,
            w,
        };
        pls.refresh();
        Ok(pls)
    }

    fn refresh(&mut self) {
        let mut wx = self.x.clone();
        for (mut row, &wi) in wx.row_iter_mut().zip(self.w.iter()) {
            row *= wi;
        }
        self.xtwx = self.x.tr_mul(&wx);
        self.xtwy = wx.tr_mul(&self.y);
        self.ytwy = self.y.iter().zip(self.w.iter()).map(|(y, w)| w * y * y).sum();
    }

    pub fn reweight(&mut self, w: DVector<f64>) {
        self.w = w;
        self.refresh();
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn solve(&self, penalty: &[f64]) -> Result<PlsSolution> {
        let p = self.p();
        if penalty.len() != p {
            return Err(Error::Alignment(format!(
                "{} penalties for {p} coefficients",
                penalty.len()
            )));
        }
        let mut a = self.xtwx.clone();
        for j in 0..p {
            a[(j, j)] += penalty[j];
        }
        let chol = match a.clone().cholesky() {
            Some(c) => c,
            None => {
                // Exactly collinear unpenalized columns: a tiny ridge picks
                // the minimum-norm direction.
                let scale = (0..p).map(|j| a[(j, j)]).fold(0.0, f64::max).max(1.0);
                for j in 0..p {
                    a[(j, j)] += 1e-10 * scale;
                }
                a.cholesky()
                    .ok_or_else(|| Error::Numerical("penalized normal equations not positive definite".into()))?
            }
        };
        let beta = chol.solve(&self.xtwy);
        let inv = chol.inverse();
        let inv_diag = inv.diagonal();
        let rss = (self.ytwy - 2.0 * beta.dot(&self.xtwy) + beta.dot(&(&self.xtwx * &beta))).max(0.0);
        Ok(PlsSolution { beta, inv_diag, rss })
    }

    /// Residuals `y - Xβ`, computed directly.
    pub fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }

    pub fn objective(&self, beta: &DVector<f64>, penalty: &[f64]) -> f64 {
        let r = self.residuals(beta);
        let fit: f64 = r.iter().zip(self.w.iter()).map(|(r, w)| w * r * r).sum();
        fit + beta.iter().zip(penalty).map(|(b, l)| l * b * b).sum::<f64>()
    }

    /// Gradient of [`Self::objective`]: `-2 X'W(y - Xβ) + 2 Λβ`.
    pub fn gradient(&self, beta: &DVector<f64>, penalty: &[f64]) -> DVector<f64> {
        let r = self.residuals(beta).component_mul(&self.w);
        let mut g = self.x.tr_mul(&r) * -2.0;
        for j in 0..g.len() {
            g[j] += 2.0 * penalty[j] * beta[j];
        }
        g
    }
}
