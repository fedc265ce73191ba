//! Synthetic ground-truth generators and recovery metrics for the three
//! applications, all deterministic in their seeds.
//!
//! Ground truths are symmetric PSD with a controlled spectrum: eigenvalues
//! `{κ, 1, …, 1}` on a Haar-random r*-dimensional eigenspace, so the
//! condition number of the nonzero part is exactly `κ` and experiments can
//! sweep conditioning with everything else held fixed.

use crate::error::{Error, Result};
use crate::losses::{sigmoid, LinkFunction};
use crate::matcore::{cholesky, cholesky_inverse, qr_thin, sym_eig, DenseMatrix};
use crate::operators::MeasurementOperator;
use crate::rng::{derive_seed, StreamRng};

/// Relative-error threshold under which a run counts as an exact recovery.
pub const SUCCESS_THRESHOLD: f64 = 1e-3;

/// Condition number of the planted low-rank part in precision instances.
const PME_TRUTH_KAPPA: f64 = 2.0;

/// A planted symmetric low-rank matrix with known rank and conditioning.
pub struct GroundTruth {
    pub l_star: DenseMatrix,
    pub r_star: usize,
    pub kappa: f64,
}

/// Everything a precision-estimation experiment needs: the planted
/// correction, the Gaussian sample it induced, and both covariances.
pub struct PmeInstance {
    pub s_bar: Vec<f64>,
    pub l_star: DenseMatrix,
    /// n×p, one sample per row.
    pub samples: DenseMatrix,
    /// `(1/n) Σ x xᵀ` (no mean subtraction; the model is centered).
    pub sample_cov: DenseMatrix,
    /// `Σ = (S̄ + L*)^{-1}`, the exact covariance behind the samples.
    pub population_cov: DenseMatrix,
}

/// Symmetric PSD rank-`r_star` matrix with eigenvalues `{κ, 1, …, 1}` on a
/// Haar-random eigenspace. `r_star = 0` gives the zero matrix.
pub fn gen_lowrank(p: usize, r_star: usize, kappa: f64, seed: u64) -> GroundTruth {
    assert!(r_star <= p, "rank {r_star} exceeds dimension {p}");
    assert!(kappa >= 1.0, "condition number {kappa} must be ≥ 1");
    if r_star == 0 {
        return GroundTruth { l_star: DenseMatrix::zeros(p, p), r_star, kappa };
    }
    let mut rng = StreamRng::new(seed);
    let (q, _) = qr_thin(&rng.gaussian_matrix(p, r_star))
        .expect("Gaussian matrix was numerically rank deficient");
    let mut scaled = q.clone();
    let top: Vec<f64> = q.col(0).iter().map(|v| v * kappa).collect();
    scaled.set_col(0, &top);
    let l_star = scaled.mul_transpose(&q).symmetrized();
    GroundTruth { l_star, r_star, kappa }
}

/// Measurements `y_i = g(𝒜(L*)_i) + σ ξ_i` with iid standard normal `ξ`.
pub fn gen_nlarm(
    truth: &GroundTruth,
    op: &MeasurementOperator,
    link: &LinkFunction,
    noise_sigma: f64,
    seed: u64,
) -> Vec<f64> {
    let s = op.apply(&truth.l_star);
    if noise_sigma == 0.0 {
        return s.into_iter().map(|si| link.g(si)).collect();
    }
    let mut rng = StreamRng::new(seed);
    s.into_iter().map(|si| link.g(si) + noise_sigma * rng.normal()).collect()
}

/// Binary matrix with independent entries `Y_ij ~ Bernoulli(σ(L*_ij))`.
pub fn gen_lpca(truth: &GroundTruth, seed: u64) -> DenseMatrix {
    let (p, q) = truth.l_star.shape();
    let mut rng = StreamRng::new(seed);
    DenseMatrix::from_fn(p, q, |i, j| {
        if rng.uniform() < sigmoid(truth.l_star.get(i, j)) {
            1.0
        } else {
            0.0
        }
    })
}

/// Plants `L*` with `‖L*‖₂ = ½·min(s̄)` (so `Θ* = S̄ + L*` is comfortably
/// positive definite), draws `n` exact Gaussian samples from
/// `N(0, Θ*^{-1})`, and returns the instance with its sample covariance.
pub fn gen_pme(
    p: usize,
    r_star: usize,
    n: usize,
    s_bar: &[f64],
    seed: u64,
) -> Result<PmeInstance> {
    if s_bar.len() != p {
        return Err(Error::DimMismatch {
            op: "gen_pme",
            details: format!("baseline has {} entries for p = {p}", s_bar.len()),
        });
    }
    if !s_bar.iter().all(|&v| v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArg("baseline diagonal must be positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArg("need at least one sample".into()));
    }
    let min_s = s_bar.iter().cloned().fold(f64::INFINITY, f64::min);
    let truth = gen_lowrank(p, r_star, PME_TRUTH_KAPPA, derive_seed(seed, 0));
    // gen_lowrank's top eigenvalue is exactly κ; rescale to the target norm.
    let l_star = if r_star == 0 {
        truth.l_star
    } else {
        truth.l_star.scale(0.5 * min_s / PME_TRUTH_KAPPA)
    };

    let mut theta_star = l_star.clone();
    for i in 0..p {
        let v = theta_star.get(i, i) + s_bar[i];
        theta_star.set(i, i, v);
    }
    let population_cov = cholesky_inverse(&cholesky(&theta_star)?);
    // Symmetric square root of Σ for exact sampling.
    let eig = sym_eig(&population_cov)?;
    let mut half = eig.vectors.clone();
    for (j, &lam) in eig.values.iter().enumerate() {
        // Σ ≻ 0 by construction; clamp guards roundoff only.
        let s = lam.max(0.0).sqrt();
        let col: Vec<f64> = (0..p).map(|i| half.get(i, j) * s).collect();
        half.set_col(j, &col);
    }
    let root = half.mul_transpose(&eig.vectors);

    let mut rng = StreamRng::with_stream(seed, 1);
    let mut samples = DenseMatrix::zeros(n, p);
    for i in 0..n {
        let x = root.mul_vec(&rng.normal_vec(p));
        samples.row_mut(i).copy_from_slice(&x);
    }
    let sample_cov = samples.transpose_mul(&samples).scale(1.0 / n as f64).symmetrized();
    Ok(PmeInstance { s_bar: s_bar.to_vec(), l_star, samples, sample_cov, population_cov })
}

/// Recovery quality of an estimate against the planted truth.
pub struct RecoveryMetrics {
    /// `‖L̂ − L*‖_F / ‖L*‖_F`, or the absolute norm when the truth is zero.
    pub rel_error: f64,
    /// `rel_error < SUCCESS_THRESHOLD`.
    pub success: bool,
}

pub fn metrics(estimate: &DenseMatrix, truth: &DenseMatrix) -> RecoveryMetrics {
    let t = truth.frobenius_norm();
    let err = estimate.sub(truth).frobenius_norm();
    let rel_error = if t > 0.0 { err / t } else { err };
    RecoveryMetrics { rel_error, success: rel_error < SUCCESS_THRESHOLD }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LossModel, PmeLoss};
    use crate::matcore::svd_exact;
    use crate::operators::build_fast_operator;

    #[test]
    fn lowrank_truth_has_planted_spectrum() {
        let truth = gen_lowrank(24, 4, 3.0, 110);
        assert!(truth.l_star.max_asymmetry() <= 1e-12);
        let eig = sym_eig(&truth.l_star).unwrap();
        assert!((eig.values[0] - 3.0).abs() <= 1e-10 * 3.0);
        for i in 1..4 {
            assert!((eig.values[i] - 1.0).abs() <= 1e-10);
        }
        for i in 4..24 {
            assert!(eig.values[i].abs() <= 1e-10);
        }
        // Same fact through singular values: numerical rank is exactly r*.
        let svd = svd_exact(&truth.l_star).unwrap();
        assert!(svd.sigma[4] <= 1e-10 * svd.sigma[0]);
        assert!((svd.sigma[0] / svd.sigma[3] - 3.0).abs() <= 1e-10 * 3.0);
    }

    #[test]
    fn unit_condition_number_gives_flat_spectrum() {
        let truth = gen_lowrank(10, 3, 1.0, 111);
        let eig = sym_eig(&truth.l_star).unwrap();
        for i in 0..3 {
            assert!((eig.values[i] - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn generators_are_deterministic_and_seeds_decorrelate() {
        let a = gen_lowrank(48, 5, 2.0, 112);
        let b = gen_lowrank(48, 5, 2.0, 112);
        assert_eq!(a.l_star.data(), b.l_star.data());
        // Off-diagonal entries only: PSD matrices always share a positive
        // diagonal (the trace mass), which is structure, not seeding.
        let c = gen_lowrank(48, 5, 2.0, 113);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..48 {
            for j in 0..48 {
                if i != j {
                    x.push(a.l_star.get(i, j));
                    y.push(c.l_star.get(i, j));
                }
            }
        }
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() <= 0.05, "entrywise correlation {corr} across seeds");
    }

    #[test]
    fn noiseless_measurements_are_exact_link_values() {
        let truth = gen_lowrank(8, 2, 1.5, 114);
        let op = build_fast_operator(8, 24, 115).unwrap();
        let link = LinkFunction::two_x_plus_sin();
        let y = gen_nlarm(&truth, &op, &link, 0.0, 999);
        let s = op.apply(&truth.l_star);
        for (yi, si) in y.iter().zip(&s) {
            assert_eq!(*yi, link.g(*si));
        }
        // Zero truth and a link fixing 0 ⇒ all-zero observations.
        let zero = GroundTruth { l_star: DenseMatrix::zeros(8, 8), r_star: 0, kappa: 1.0 };
        assert!(gen_nlarm(&zero, &op, &link, 0.0, 999).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_level_matches_requested_sigma() {
        let truth = gen_lowrank(64, 2, 1.0, 116);
        let op = build_fast_operator(64, 2000, 117).unwrap();
        let link = LinkFunction::identity();
        let clean = gen_nlarm(&truth, &op, &link, 0.0, 0);
        let noisy = gen_nlarm(&truth, &op, &link, 0.3, 118);
        let ss: f64 = clean.iter().zip(&noisy).map(|(c, n)| (n - c) * (n - c)).sum();
        let sigma_hat = (ss / 2000.0).sqrt();
        assert!((sigma_hat - 0.3).abs() <= 0.03, "estimated noise {sigma_hat}");
    }

    #[test]
    fn binary_matrix_follows_entrywise_logits() {
        // Strongly positive logits saturate to ones, negative to zeros.
        let p = 16;
        let big = GroundTruth {
            l_star: DenseMatrix::from_fn(p, p, |_, _| 25.0),
            r_star: 1,
            kappa: 1.0,
        };
        let y = gen_lpca(&big, 119);
        assert!(y.data().iter().all(|&v| v == 1.0));
        let neg = GroundTruth {
            l_star: DenseMatrix::from_fn(p, p, |_, _| -25.0),
            r_star: 1,
            kappa: 1.0,
        };
        assert!(gen_lpca(&neg, 120).data().iter().all(|&v| v == 0.0));
        // Zero logits: empirical mean within 3 standard errors of ½.
        let zero = GroundTruth { l_star: DenseMatrix::zeros(p, p), r_star: 0, kappa: 1.0 };
        let flat = gen_lpca(&zero, 121);
        let mean = flat.data().iter().sum::<f64>() / (p * p) as f64;
        assert!((mean - 0.5).abs() <= 3.0 * 0.5 / p as f64, "mean {mean}");
    }

    #[test]
    fn zero_rank_precision_instance_has_diagonal_covariance() {
        let s_bar = vec![2.0, 4.0, 1.0, 2.5];
        let inst = gen_pme(4, 0, 10, &s_bar, 122).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 / s_bar[i] } else { 0.0 };
                assert!((inst.population_cov.get(i, j) - expect).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn planted_correction_is_scaled_to_half_min_baseline() {
        let inst = gen_pme(12, 3, 5, &vec![2.0; 12], 123).unwrap();
        let eig = sym_eig(&inst.l_star).unwrap();
        assert!((eig.values[0] - 1.0).abs() <= 1e-10, "‖L*‖₂ = {}", eig.values[0]);
        // Spectrum keeps the planted shape: {1, ½, ½, 0, …}.
        assert!((eig.values[1] - 0.5).abs() <= 1e-10);
        assert!((eig.values[2] - 0.5).abs() <= 1e-10);
        assert!(eig.values[3].abs() <= 1e-10);
    }

    #[test]
    fn sample_covariance_concentrates_around_population() {
        let p = 16;
        let inst = gen_pme(p, 3, 2000 * p, &vec![2.0; p], 124).unwrap();
        let diff = inst.sample_cov.sub(&inst.population_cov);
        let worst = sym_eig(&diff.symmetrized())
            .unwrap()
            .values
            .iter()
            .fold(0.0_f64, |m, &v| m.max(v.abs()));
        let pop_norm = sym_eig(&inst.population_cov).unwrap().values[0];
        assert!(worst <= 0.1 * pop_norm, "spectral deviation {worst} vs {pop_norm}");
    }

    #[test]
    fn true_negative_log_likelihood_identity() {
        // With C = Σ exactly: F(L*) = −log det Θ* + tr(Θ*Σ) = p − log det Θ*.
        let p = 12;
        let s_bar = vec![2.0; p];
        let inst = gen_pme(p, 3, 5, &s_bar, 125).unwrap();
        let loss = PmeLoss::new(s_bar.clone(), inst.population_cov.clone()).unwrap();
        let f = loss.value(&inst.l_star).unwrap();
        let mut theta = inst.l_star.clone();
        for i in 0..p {
            let v = theta.get(i, i) + s_bar[i];
            theta.set(i, i, v);
        }
        let logdet: f64 = sym_eig(&theta).unwrap().values.iter().map(|&v| v.ln()).sum();
        assert!((f - (p as f64 - logdet)).abs() <= 1e-8 * p as f64);
    }

    #[test]
    fn metrics_report_relative_error_and_success() {
        let truth = gen_lowrank(10, 2, 2.0, 126);
        let exact = metrics(&truth.l_star, &truth.l_star);
        assert_eq!(exact.rel_error, 0.0);
        assert!(exact.success);
        let t_norm = truth.l_star.frobenius_norm();
        let mut off = truth.l_star.clone();
        off.set(0, 0, off.get(0, 0) + 2e-3 * t_norm);
        let near = metrics(&off, &truth.l_star);
        assert!((near.rel_error - 2e-3).abs() <= 1e-6);
        assert!(!near.success);
        // Zero truth: absolute norm is reported.
        let z = DenseMatrix::zeros(10, 10);
        let abs = metrics(&truth.l_star, &z);
        assert!((abs.rel_error - t_norm).abs() <= 1e-12 * t_norm);
    }
}
