//! Precision matrix estimation with a known diagonal baseline: model the
//! precision as `Θ = S̄ + L` with `S̄ = diag(s̄) ≻ 0` fixed and `L` low-rank
//! symmetric, and minimize the Gaussian negative log-likelihood
//!
//! ```text
//! F(L) = −log det(S̄ + L) + ⟨S̄ + L, C⟩,     S̄ + L ≻ 0,
//! ```
//!
//! where `C` is the sample covariance. The gradient is `C − Θ^{-1}` and the
//! Hessian has eigenvalues in `[1/λ₁(Θ)², 1/λ_p(Θ)²]`, so curvature is
//! controlled whenever `Θ`'s spectrum is.
//!
//! The interesting part is the implicit gradient step: when the iterate is
//! kept factored as `L = ZΛZᵀ`, the step matrix `M = L − η(C − Θ^{-1})` is
//! exposed as a matrix-free operator in which `Θ^{-1}v` costs `O(pk + k²)`
//! via the Woodbury identity
//!
//! ```text
//! Θ^{-1} = S̄^{-1} − S̄^{-1} Z (Λ^{-1} + ZᵀS̄^{-1}Z)^{-1} ZᵀS̄^{-1},
//! ```
//!
//! after dropping numerically null directions of `Λ` (which contribute
//! nothing to `Θ`). Domain membership is decided exactly on the small side:
//! with `G = ZᵀS̄^{-1}Z ≻ 0`,
//!
//! ```text
//! S̄ + ZΛZᵀ ≻ 0   ⟺   G^{-1} + Λ ≻ 0,
//! ```
//!
//! by congruence (`Θ ≻ 0 ⟺ I + G^{1/2}ΛG^{1/2} ≻ 0`, and conjugating by
//! `G^{-1/2}` gives the stated test). Note the innocent-looking surrogate
//! `Λ^{-1} + G ≻ 0` is *not* equivalent — `Λ = −2, S̄ = I` gives
//! `Λ^{-1} + G = ½ > 0` while `Θ = I − 2zzᵀ` is indefinite — which is why
//! the inverse appears on `G`, not `Λ`.

use super::LossModel;
use crate::error::{Error, Result};
use crate::matcore::{
    cholesky, cholesky_inverse, cholesky_log_det, sym_eig, DenseMatrix,
};
use crate::rsvd::MatVecProvider;

/// Relative threshold under which a factored eigenvalue is treated as an
/// exact zero and dropped before forming Woodbury small matrices.
const NULL_EIGENVALUE_TOL: f64 = 1e-14;

pub struct PmeLoss {
    s_bar: Vec<f64>,
    sample_cov: DenseMatrix,
}

impl PmeLoss {
    /// `s_bar` are the positive diagonal baseline entries; `sample_cov`
    /// must be square, matching, and symmetric.
    pub fn new(s_bar: Vec<f64>, sample_cov: DenseMatrix) -> Result<Self> {
        let p = s_bar.len();
        if sample_cov.shape() != (p, p) {
            return Err(Error::DimMismatch {
                op: "PmeLoss::new",
                details: format!(
                    "baseline has {p} entries but covariance is {:?}",
                    sample_cov.shape()
                ),
            });
        }
        if !s_bar.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArg("baseline diagonal must be positive".into()));
        }
        if !sample_cov.all_finite() {
            return Err(Error::NonFinite { context: "sample covariance" });
        }
        let asym = sample_cov.max_asymmetry();
        let tol = 1e-10 * sample_cov.max_abs().max(1.0);
        if asym > tol {
            return Err(Error::NotSymmetric { max_asym: asym, tol });
        }
        Ok(PmeLoss { s_bar, sample_cov })
    }

    pub fn s_bar(&self) -> &[f64] {
        &self.s_bar
    }

    pub fn sample_cov(&self) -> &DenseMatrix {
        &self.sample_cov
    }

    /// `Θ = S̄ + L`, with `L` symmetrized defensively (solver iterates are
    /// symmetric only up to roundoff).
    fn theta(&self, l: &DenseMatrix) -> DenseMatrix {
        let p = self.s_bar.len();
        let mut theta = l.symmetrized();
        for i in 0..p {
            let v = theta.get(i, i) + self.s_bar[i];
            theta.set(i, i, v);
        }
        theta
    }

    /// Extreme Hessian eigenvalues `(1/λ₁(Θ)², 1/λ_p(Θ)²)` at `l`.
    pub fn curvature_bounds(&self, l: &DenseMatrix) -> Result<(f64, f64)> {
        let eig = sym_eig(&self.theta(l))?;
        let lam_max = eig.values[0];
        let lam_min = *eig.values.last().expect("nonempty spectrum");
        if lam_min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eig: lam_min });
        }
        Ok((1.0 / (lam_max * lam_max), 1.0 / (lam_min * lam_min)))
    }
}

impl LossModel for PmeLoss {
    fn dim(&self) -> usize {
        self.s_bar.len()
    }

    fn value(&self, l: &DenseMatrix) -> Result<f64> {
        let theta = self.theta(l);
        let chol = cholesky(&theta)?;
        Ok(theta.frobenius_dot(&self.sample_cov) - cholesky_log_det(&chol))
    }

    fn gradient(&self, l: &DenseMatrix) -> Result<DenseMatrix> {
        let theta = self.theta(l);
        let chol = cholesky(&theta)?;
        Ok(self.sample_cov.sub(&cholesky_inverse(&chol)))
    }

    fn smoothness_hint(&self) -> f64 {
        // Curvature at the start of a run (L = 0): 1/min(s̄)².
        let min = self.s_bar.iter().cloned().fold(f64::INFINITY, f64::min);
        1.0 / (min * min)
    }

    fn symmetric_domain(&self) -> bool {
        true
    }

    fn supports_implicit_step(&self) -> bool {
        true
    }

    fn implicit_step<'a>(
        &'a self,
        basis: &DenseMatrix,
        eigvals: &[f64],
        eta: f64,
    ) -> Result<Box<dyn MatVecProvider + 'a>> {
        let p = self.s_bar.len();
        if basis.rows() != p || basis.cols() != eigvals.len() {
            return Err(Error::DimMismatch {
                op: "PmeLoss::implicit_step",
                details: format!(
                    "basis {:?} with {} eigenvalues for p = {p}",
                    basis.shape(),
                    eigvals.len()
                ),
            });
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArg(format!("step size {eta} must be positive")));
        }

        // Drop numerically null directions: they contribute nothing to
        // ZΛZᵀ but would make Λ^{-1} blow up.
        let lam_scale = eigvals.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        let keep: Vec<usize> = (0..eigvals.len())
            .filter(|&i| eigvals[i].abs() > NULL_EIGENVALUE_TOL * lam_scale && eigvals[i] != 0.0)
            .collect();
        let k = keep.len();
        let z = DenseMatrix::from_fn(p, k, |i, j| basis.get(i, keep[j]));
        let lam: Vec<f64> = keep.iter().map(|&i| eigvals[i]).collect();
        let y = DenseMatrix::from_fn(p, k, |i, j| z.get(i, j) / self.s_bar[i]);

        let w = if k == 0 {
            DenseMatrix::zeros(0, 0)
        } else {
            // G = ZᵀS̄^{-1}Z ≻ 0 since Z has full column rank.
            let g = z.transpose_mul(&y).symmetrized();
            let g_chol = cholesky(&g)?;
            // Exact domain test on the small side: Θ ≻ 0 ⟺ G^{-1} + Λ ≻ 0.
            let mut test = cholesky_inverse(&g_chol);
            for (i, &li) in lam.iter().enumerate() {
                let v = test.get(i, i) + li;
                test.set(i, i, v);
            }
            if let Err(_) = cholesky(&test) {
                let min_eig = sym_eig(&test)?.values.last().copied().unwrap_or(f64::NAN);
                return Err(Error::NotPositiveDefinite { min_eig });
            }
            // W = (Λ^{-1} + G)^{-1}, symmetric but possibly indefinite:
            // invert through the eigendecomposition. Nonsingular whenever
            // Θ ≻ 0 (det Θ = det S̄ · det Λ · det(Λ^{-1} + G)).
            let mut core = g;
            for (i, &li) in lam.iter().enumerate() {
                let v = core.get(i, i) + 1.0 / li;
                core.set(i, i, v);
            }
            let eig = sym_eig(&core)?;
            let d_scale = eig.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            if eig.values.iter().any(|&d| d.abs() <= 1e-14 * d_scale.max(1e-300)) {
                return Err(Error::NotPositiveDefinite { min_eig: 0.0 });
            }
            let mut scaled = eig.vectors.clone();
            for (j, &d) in eig.values.iter().enumerate() {
                let col: Vec<f64> = (0..k).map(|i| scaled.get(i, j) / d).collect();
                scaled.set_col(j, &col);
            }
            scaled.mul_transpose(&eig.vectors).symmetrized()
        };

        Ok(Box::new(PmeStepProvider { loss: self, eta, z, lam, y, w }))
    }
}

/// The gradient-step matrix `M = ZΛZᵀ − η(C − Θ^{-1})` as a matrix-free
/// operator; symmetric, so forward and transpose-forward coincide.
struct PmeStepProvider<'a> {
    loss: &'a PmeLoss,
    eta: f64,
    /// Compressed orthonormal directions, p×k.
    z: DenseMatrix,
    /// Their (nonzero) eigenvalues.
    lam: Vec<f64>,
    /// `S̄^{-1} Z`.
    y: DenseMatrix,
    /// `(Λ^{-1} + G)^{-1}`, k×k.
    w: DenseMatrix,
}

impl PmeStepProvider<'_> {
    /// `Θ^{-1} v` via Woodbury: `S̄^{-1}v − Y W Yᵀ v`.
    fn precision_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> =
            v.iter().zip(&self.loss.s_bar).map(|(&x, &s)| x / s).collect();
        if !self.lam.is_empty() {
            let yt_v = self.y.transpose_mul_vec(v);
            let w_ytv = self.w.mul_vec(&yt_v);
            let corr = self.y.mul_vec(&w_ytv);
            for (o, c) in out.iter_mut().zip(&corr) {
                *o -= c;
            }
        }
        out
    }
}

impl MatVecProvider for PmeStepProvider<'_> {
    fn shape(&self) -> (usize, usize) {
        let p = self.loss.s_bar.len();
        (p, p)
    }

    fn forward(&self, v: &[f64]) -> Vec<f64> {
        // L v = Z Λ Zᵀ v
        let mut zt_v = self.z.transpose_mul_vec(v);
        for (c, &l) in zt_v.iter_mut().zip(&self.lam) {
            *c *= l;
        }
        let lv = self.z.mul_vec(&zt_v);
        // ∇F(L) v = C v − Θ^{-1} v
        let cv = self.loss.sample_cov.mul_vec(v);
        let th_inv_v = self.precision_solve(v);
        lv.iter()
            .zip(cv.iter().zip(&th_inv_v))
            .map(|(&a, (&c, &t))| a - self.eta * (c - t))
            .collect()
    }

    fn transpose_forward(&self, v: &[f64]) -> Vec<f64> {
        self.forward(v)
    }
}
