//! Nonlinear affine rank minimization: recover a low-rank `L` from
//! measurements `y_i ≈ g(⟨A_i, L⟩/√n)` through the convex objective
//!
//! ```text
//! F(L) = Σ_i  Ω(s_i) − y_i s_i,   s = 𝒜(L),
//! ```
//!
//! whose gradient is `𝒜*(g(s) − y)`. Because `Ω′ = g` and `g` is strictly
//! increasing, `F` is convex with restricted curvature governed by the link
//! bounds `[μ₁, μ₂]` (times the operator's restricted isometry factors).
//! The `1/n` of a sample-average loss is already absorbed by the operator's
//! symmetric `1/√n` normalization, so no extra scaling appears here.

use super::{LinkFunction, LossModel};
use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::operators::MeasurementOperator;

pub struct NlarmLoss {
    op: MeasurementOperator,
    y: Vec<f64>,
    link: LinkFunction,
}

impl NlarmLoss {
    pub fn new(op: MeasurementOperator, y: Vec<f64>, link: LinkFunction) -> Result<Self> {
        if y.len() != op.measurement_count() {
            return Err(Error::DimMismatch {
                op: "NlarmLoss::new",
                details: format!(
                    "{} observations for an operator with {} measurements",
                    y.len(),
                    op.measurement_count()
                ),
            });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "NLARM observations" });
        }
        Ok(NlarmLoss { op, y, link })
    }

    pub fn operator(&self) -> &MeasurementOperator {
        &self.op
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }
}

impl LossModel for NlarmLoss {
    fn dim(&self) -> usize {
        self.op.p()
    }

    fn value(&self, l: &DenseMatrix) -> Result<f64> {
        let s = self.op.apply(l);
        Ok(s.iter().zip(&self.y).map(|(&si, &yi)| self.link.omega(si) - yi * si).sum())
    }

    fn gradient(&self, l: &DenseMatrix) -> Result<DenseMatrix> {
        let s = self.op.apply(l);
        let residual: Vec<f64> =
            s.iter().zip(&self.y).map(|(&si, &yi)| self.link.g(si) - yi).collect();
        Ok(self.op.adjoint(&residual))
    }

    fn smoothness_hint(&self) -> f64 {
        // The Hessian of F is 𝒜* diag(g′(𝒜L)) 𝒜 ≼ μ₂ · λ_max(𝒜*𝒜). The
        // second factor is not 1 despite the 1/√n normalization — the
        // normalization holds in expectation, while the worst case over
        // directions is the operator's frame bound (d/n for the fast kind).
        self.link.mu2 * self.op.frame_bound()
    }
}
