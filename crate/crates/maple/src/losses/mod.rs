//! Convex objectives `F : R^{p×p} → R` minimized under a rank constraint.
//!
//! Three instantiations live in submodules: nonlinear affine rank
//! minimization ([`nlarm`]), logistic principal component analysis
//! ([`lpca`]), and low-rank precision matrix estimation ([`pme`]). All
//! expose first-order information through the [`LossModel`] trait, which is
//! what the solvers consume; none of them know anything about the rank
//! constraint itself.
//!
//! The [`LinkFunction`] type bundles the scalar nonlinearity used by the
//! NLARM objective: a strictly increasing link `g` with derivative bounds
//! `0 < μ₁ ≤ g′ ≤ μ₂` and antiderivative `Ω` (so `Ω″ = g′ > 0` makes the
//! measurement loss convex).

pub mod lpca;
pub mod nlarm;
pub mod pme;

pub use lpca::LogisticPcaLoss;
pub use nlarm::NlarmLoss;
pub use pme::PmeLoss;

use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::rsvd::MatVecProvider;

/// First-order oracle for a smooth convex objective over p×p matrices.
///
/// `value` and `gradient` may fail for objectives with a restricted domain
/// (the precision estimation loss needs `S̄ + L ≻ 0`); solvers translate
/// such failures into step-size backoff.
pub trait LossModel {
    /// Side length p of the (square) argument.
    fn dim(&self) -> usize;

    fn value(&self, l: &DenseMatrix) -> Result<f64>;

    fn gradient(&self, l: &DenseMatrix) -> Result<DenseMatrix>;

    /// Rough upper estimate of the largest curvature of `F`, used to scale
    /// steps where no better information exists (factored baseline init).
    fn smoothness_hint(&self) -> f64;

    /// True when iterates live on symmetric matrices; solvers then keep
    /// iterates symmetric and report the smallest eigenvalue in traces.
    fn symmetric_domain(&self) -> bool {
        false
    }

    /// True when [`LossModel::implicit_step`] is implemented.
    fn supports_implicit_step(&self) -> bool {
        false
    }

    /// Matrix-free gradient-step operator `M = L − η∇F(L)` for a factored
    /// symmetric iterate `L = ZΛZᵀ` (`basis` orthonormal p×k, `eigvals`
    /// length k). Lets the solver run its projection without ever forming
    /// `M` densely.
    fn implicit_step<'a>(
        &'a self,
        _basis: &DenseMatrix,
        _eigvals: &[f64],
        _eta: f64,
    ) -> Result<Box<dyn MatVecProvider + 'a>> {
        Err(Error::InvalidArg("this loss has no implicit gradient-step support".into()))
    }
}

/// Central finite-difference gradient of `loss` at `l`, entry by entry,
/// with step `h = h_base · (1 + ‖l‖_∞)`. Verification utility: costs `2p²`
/// objective evaluations.
pub fn finite_difference_gradient(
    loss: &dyn LossModel,
    l: &DenseMatrix,
    h_base: f64,
) -> Result<DenseMatrix> {
    let (rows, cols) = l.shape();
    let h = h_base * (1.0 + l.max_abs());
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut probe = l.clone();
    for i in 0..rows {
        for j in 0..cols {
            let x = l.get(i, j);
            probe.set(i, j, x + h);
            let fp = loss.value(&probe)?;
            probe.set(i, j, x - h);
            let fm = loss.value(&probe)?;
            probe.set(i, j, x);
            out.set(i, j, (fp - fm) / (2.0 * h));
        }
    }
    Ok(out)
}

/// Numerically stable logistic sigmoid `1 / (1 + e^{−x})`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// A scalar link `g` with `0 < μ₁ ≤ g′ ≤ μ₂` and antiderivative `Ω`.
///
/// The derivative bounds dictate both the admissible step sizes and the
/// restricted strong convexity/smoothness constants of the measurement
/// loss, so each built-in link records them explicitly. For links whose
/// derivative only approaches its infimum asymptotically, `mu1` is the
/// bound attained on the working interval `[−10, 10]`.
#[derive(Clone)]
pub struct LinkFunction {
    name: &'static str,
    g: fn(f64) -> f64,
    g_prime: fn(f64) -> f64,
    omega: fn(f64) -> f64,
    /// Lower derivative bound on the working interval.
    pub mu1: f64,
    /// Upper derivative bound.
    pub mu2: f64,
}

impl LinkFunction {
    /// `g(x) = x`: reduces the measurement loss to least squares.
    pub fn identity() -> Self {
        LinkFunction {
            name: "identity",
            g: |x| x,
            g_prime: |_| 1.0,
            omega: |x| 0.5 * x * x,
            mu1: 1.0,
            mu2: 1.0,
        }
    }

    /// `g(x) = 2x + sin x`, `g′ ∈ [1, 3]` globally.
    pub fn two_x_plus_sin() -> Self {
        LinkFunction {
            name: "2x-plus-sin",
            g: |x| 2.0 * x + x.sin(),
            g_prime: |x| 2.0 + x.cos(),
            omega: |x| x * x - x.cos(),
            mu1: 1.0,
            mu2: 3.0,
        }
    }

    /// `g(x) = (1 − e^{−x}) / (1 + e^{−x}) = tanh(x/2)`: a saturating,
    /// sigmoid-shaped link. `g′(x) = ½ sech²(x/2)` peaks at ½ and decays to
    /// ≈ 9.08e−5 at |x| = 10; `mu1` is set just under that interval bound.
    pub fn tanh_sigmoid() -> Self {
        LinkFunction {
            name: "tanh-sigmoid",
            g: |x| (0.5 * x).tanh(),
            g_prime: |x| {
                let t = (0.5 * x).tanh();
                0.5 * (1.0 - t * t)
            },
            // Ω(x) = 2 ln cosh(x/2), evaluated overflow-free.
            omega: |x| x.abs() + 2.0 * (-x.abs()).exp().ln_1p() - 2.0 * std::f64::consts::LN_2,
            mu1: 9.0e-5,
            mu2: 0.5,
        }
    }

    /// Looks a link up by its CLI/config name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity()),
            "2x-plus-sin" => Ok(Self::two_x_plus_sin()),
            "tanh-sigmoid" => Ok(Self::tanh_sigmoid()),
            other => Err(Error::InvalidArg(format!(
                "unknown link '{other}' (expected identity | 2x-plus-sin | tanh-sigmoid)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        (self.g_prime)(x)
    }

    pub fn omega(&self, x: f64) -> f64 {
        (self.omega)(x)
    }
}
