//! Logistic PCA: fit a low-rank matrix of log-odds to a binary matrix `Y`
//! by minimizing the full-observation Bernoulli negative log-likelihood
//!
//! ```text
//! F(L) = Σ_ij  softplus(L_ij) − Y_ij L_ij  +  λ‖L‖_F²,
//! ```
//!
//! with gradient `σ(L) − Y + 2λL` (entrywise sigmoid). The entrywise
//! curvature is `σ′ ∈ (0, ¼]`, so `F` is `(¼ + 2λ)`-smooth.

use super::{sigmoid, softplus, LossModel};
use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;

pub struct LogisticPcaLoss {
    y: DenseMatrix,
    lambda: f64,
}

impl LogisticPcaLoss {
    /// `y` must be square with entries exactly 0 or 1; `lambda ≥ 0` is the
    /// ridge weight.
    pub fn new(y: DenseMatrix, lambda: f64) -> Result<Self> {
        if !y.is_square() {
            return Err(Error::DimMismatch {
                op: "LogisticPcaLoss::new",
                details: format!("binary matrix must be square, got {:?}", y.shape()),
            });
        }
        if let Some(bad) = y.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArg(format!("binary matrix entry {bad} is not 0 or 1")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArg(format!("ridge weight {lambda} must be ≥ 0")));
        }
        Ok(LogisticPcaLoss { y, lambda })
    }

    pub fn observations(&self) -> &DenseMatrix {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl LossModel for LogisticPcaLoss {
    fn dim(&self) -> usize {
        self.y.rows()
    }

    fn value(&self, l: &DenseMatrix) -> Result<f64> {
        let mut total = 0.0;
        for (&lij, &yij) in l.data().iter().zip(self.y.data()) {
            total += softplus(lij) - yij * lij;
        }
        let f = l.frobenius_norm();
        Ok(total + self.lambda * f * f)
    }

    fn gradient(&self, l: &DenseMatrix) -> Result<DenseMatrix> {
        let (p, q) = l.shape();
        let mut out = DenseMatrix::zeros(p, q);
        for ((o, &lij), &yij) in out.data_mut().iter_mut().zip(l.data()).zip(self.y.data()) {
            *o = sigmoid(lij) - yij + 2.0 * self.lambda * lij;
        }
        Ok(out)
    }

    fn smoothness_hint(&self) -> f64 {
        0.25 + 2.0 * self.lambda
    }
}
