//! Projected gradient descent under a rank constraint, in two flavors that
//! differ only in the projection: the approximate randomized tail
//! projection (the main algorithm) and the exact SVD-based projection (the
//! baseline). Both iterate
//!
//! ```text
//! L^{t+1} = P_r( L^t − η ∇F(L^t) ),      L⁰ = 0,
//! ```
//!
//! where `P_r` maps onto (a neighborhood of) the best rank-r approximation.
//!
//! For losses that support it (precision estimation), the approximate
//! solver never forms the gradient-step matrix densely: the iterate is kept
//! factored as `L = ZΛZᵀ`, the loss exposes `M = L − η∇F(L)` as a
//! matrix-free operator, the sketch runs against that operator, and the
//! next factors come from the small Rayleigh–Ritz system `ZᵀMZ`. The next
//! iterate is then the symmetric two-sided projection `Z(ZᵀMZ)Zᵀ`, which
//! keeps the factored form exact and at most doubles the tail error of the
//! one-sided projection. Dense matrices still appear in the trace path
//! (objective values, error norms), so observers always see a materialized
//! iterate.
//!
//! Domain errors (a candidate iterate leaving the positive-definite domain
//! of the precision loss) trigger a step-size backoff: the step is halved
//! for that iteration only, at most [`MAX_BACKOFFS`] times, after which the
//! run aborts.

use std::time::Instant;

use super::{SolverConfig, SolverTrace, TraceRow};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::matcore::{hard_threshold_rank, psd_rank_projection, sym_eig, DenseMatrix};
use crate::rng::derive_seed;
use crate::rsvd::{bksvd, tail_project, BkSvdConfig, MatVecProvider};

/// Step halvings allowed within a single iteration before giving up.
const MAX_BACKOFFS: u32 = 10;

/// What an observer sees after each committed update.
pub struct IterationSnapshot<'a> {
    /// The update index t ≥ 1 that produced `post_step`.
    pub iter: usize,
    /// Step size actually used (smaller than configured after backoff).
    pub eta: f64,
    /// Iterate before the update.
    pub pre_step: &'a DenseMatrix,
    /// Iterate after projection.
    pub post_step: &'a DenseMatrix,
    /// The matrix-free gradient-step operator, when the iteration ran the
    /// implicit (factored) path.
    pub step_provider: Option<&'a dyn MatVecProvider>,
}

/// Approximate-projection solver. `reference` (the planted truth, when
/// known) enables the `rel_error` trace column.
pub fn maple_run(
    loss: &dyn LossModel,
    cfg: &SolverConfig,
    reference: Option<&DenseMatrix>,
) -> Result<SolverTrace> {
    run_projected(loss, cfg, reference, Projection::Approximate, &mut |_| {})
}

/// [`maple_run`] with a per-iteration observer (diagnostics and tests).
pub fn maple_run_observed(
    loss: &dyn LossModel,
    cfg: &SolverConfig,
    reference: Option<&DenseMatrix>,
    observer: &mut dyn FnMut(&IterationSnapshot),
) -> Result<SolverTrace> {
    run_projected(loss, cfg, reference, Projection::Approximate, observer)
}

/// Exact-projection baseline (singular value projection; PSD cone variant
/// when `cfg.psd_project` is set).
pub fn svp_run(
    loss: &dyn LossModel,
    cfg: &SolverConfig,
    reference: Option<&DenseMatrix>,
) -> Result<SolverTrace> {
    run_projected(loss, cfg, reference, Projection::Exact, &mut |_| {})
}

/// [`svp_run`] with a per-iteration observer.
pub fn svp_run_observed(
    loss: &dyn LossModel,
    cfg: &SolverConfig,
    reference: Option<&DenseMatrix>,
    observer: &mut dyn FnMut(&IterationSnapshot),
) -> Result<SolverTrace> {
    run_projected(loss, cfg, reference, Projection::Exact, observer)
}

#[derive(Clone, Copy, PartialEq)]
enum Projection {
    Approximate,
    Exact,
}

/// `ZΛZᵀ` from factors.
fn materialize_factors(z: &DenseMatrix, lam: &[f64]) -> DenseMatrix {
    let mut scaled = z.clone();
    for (j, &l) in lam.iter().enumerate() {
        let col: Vec<f64> = z.col(j).iter().map(|v| v * l).collect();
        scaled.set_col(j, &col);
    }
    scaled.mul_transpose(z).symmetrized()
}

fn rel_error_to(reference: Option<&DenseMatrix>, l: &DenseMatrix) -> Option<f64> {
    reference.map(|r| {
        let norm = r.frobenius_norm();
        let err = l.sub(r).frobenius_norm();
        if norm > 0.0 {
            err / norm
        } else {
            err
        }
    })
}

/// One candidate update, either path. Returns the projected iterate, its
/// objective, the new factors (implicit path), and the step provider kept
/// alive for the observer.
struct Candidate<'a> {
    dense: DenseMatrix,
    objective: f64,
    factors: Option<(DenseMatrix, Vec<f64>)>,
    provider: Option<Box<dyn MatVecProvider + 'a>>,
}

fn run_projected(
    loss: &dyn LossModel,
    cfg: &SolverConfig,
    reference: Option<&DenseMatrix>,
    projection: Projection,
    observer: &mut dyn FnMut(&IterationSnapshot),
) -> Result<SolverTrace> {
    cfg.validate()?;
    let p = loss.dim();
    let r = cfg.projected_rank;
    let implicit = projection == Projection::Approximate && loss.supports_implicit_step();
    let symmetric = loss.symmetric_domain();

    let start = Instant::now();
    let mut l = DenseMatrix::zeros(p, p);
    // Factored form of the current iterate (implicit path only).
    let mut factors: (DenseMatrix, Vec<f64>) = (DenseMatrix::zeros(p, 0), Vec::new());

    let mut rows = Vec::with_capacity(cfg.max_iters + 1);
    let f0 = loss.value(&l)?;
    if !f0.is_finite() {
        return Err(Error::SolverAbort {
            iter: 0,
            reason: "objective is not finite at the zero start".into(),
        });
    }
    rows.push(TraceRow {
        iter: 0,
        seconds: start.elapsed().as_secs_f64(),
        objective: f0,
        rel_error: rel_error_to(reference, &l),
        min_eig: if symmetric { Some(0.0) } else { None },
    });

    for t in 1..=cfg.max_iters {
        let bk = BkSvdConfig {
            rank: r,
            seed: derive_seed(cfg.bksvd.seed, t as u64),
            ..cfg.bksvd.clone()
        };

        // Step-size backoff loop: domain violations shrink the step for
        // this iteration only.
        let mut backoffs = 0u32;
        let (candidate, eta_used) = loop {
            let eta = cfg.step_size * 0.5f64.powi(backoffs as i32);
            let attempt: Result<Candidate> = (|| {
                if implicit {
                    let provider = loss.implicit_step(&factors.0, &factors.1, eta)?;
                    let sub = bksvd(provider.as_ref(), &bk)?;
                    // Rayleigh–Ritz on the captured subspace: the small
                    // symmetric core ZᵀMZ carries the new eigenvalues.
                    let mz = provider.forward_block(&sub.basis);
                    let core = sub.basis.transpose_mul(&mz).symmetrized();
                    let eig = sym_eig(&core)?;
                    let z_new = sub.basis.mul(&eig.vectors);
                    let dense = materialize_factors(&z_new, &eig.values);
                    let objective = loss.value(&dense)?;
                    Ok(Candidate {
                        dense,
                        objective,
                        factors: Some((z_new, eig.values)),
                        provider: Some(provider),
                    })
                } else {
                    let grad = loss.gradient(&l)?;
                    let m = l.add_scaled(-eta, &grad);
                    let dense = match projection {
                        Projection::Approximate => tail_project(&m, &bk)?.0,
                        Projection::Exact => {
                            if cfg.psd_project {
                                psd_rank_projection(&m.symmetrized(), r)?
                            } else {
                                hard_threshold_rank(&m, r)?
                            }
                        }
                    };
                    let objective = loss.value(&dense)?;
                    Ok(Candidate { dense, objective, factors: None, provider: None })
                }
            })();
            match attempt {
                Ok(c) => break (c, eta),
                Err(Error::NotPositiveDefinite { min_eig }) => {
                    if backoffs >= MAX_BACKOFFS {
                        return Err(Error::SolverAbort {
                            iter: t,
                            reason: format!(
                                "candidate left the positive-definite domain after \
                                 {MAX_BACKOFFS} step halvings (min eigenvalue {min_eig:.3e})"
                            ),
                        });
                    }
                    backoffs += 1;
                }
                Err(e) => return Err(e),
            }
        };

        if !candidate.objective.is_finite() {
            return Err(Error::SolverAbort {
                iter: t,
                reason: format!(
                    "objective became non-finite ({}); the step size is likely too large",
                    candidate.objective
                ),
            });
        }

        let min_eig = if symmetric {
            Some(match &candidate.factors {
                Some((z, lam)) => {
                    let smallest = lam.iter().cloned().fold(f64::INFINITY, f64::min);
                    // Rank-deficient iterates have p − k zero eigenvalues.
                    if z.cols() < p {
                        smallest.min(0.0)
                    } else {
                        smallest
                    }
                }
                None => *sym_eig(&candidate.dense.symmetrized())?
                    .values
                    .last()
                    .expect("nonempty spectrum"),
            })
        } else {
            None
        };

        let delta = candidate.dense.sub(&l).frobenius_norm() / l.frobenius_norm().max(1.0);

        observer(&IterationSnapshot {
            iter: t,
            eta: eta_used,
            pre_step: &l,
            post_step: &candidate.dense,
            step_provider: candidate.provider.as_deref(),
        });

        l = candidate.dense;
        if let Some(f) = candidate.factors {
            factors = f;
        }
        rows.push(TraceRow {
            iter: t,
            seconds: start.elapsed().as_secs_f64(),
            objective: candidate.objective,
            rel_error: rel_error_to(reference, &l),
            min_eig,
        });

        if cfg.tolerance > 0.0 && delta < cfg.tolerance {
            break;
        }
    }

    let estimate = match cfg.final_truncate_rank {
        Some(rank) => hard_threshold_rank(&l, rank)?,
        None => l,
    };
    Ok(SolverTrace { rows, estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LinkFunction, LogisticPcaLoss, NlarmLoss, PmeLoss};
    use crate::matcore::svd_exact;
    use crate::operators::build_fast_operator;
    use crate::rng::StreamRng;
    use crate::synth::{gen_lowrank, gen_lpca, gen_nlarm, gen_pme};

    fn nlarm_instance(
        p: usize,
        r_star: usize,
        n: usize,
        kappa: f64,
        link: LinkFunction,
        seed: u64,
    ) -> (NlarmLoss, DenseMatrix) {
        let truth = gen_lowrank(p, r_star, kappa, seed);
        let op = build_fast_operator(p, n, derive_seed(seed, 1)).unwrap();
        let y = gen_nlarm(&truth, &op, &link, 0.0, derive_seed(seed, 2));
        (NlarmLoss::new(op, y, link).unwrap(), truth.l_star)
    }

    #[test]
    fn zero_observations_keep_iterates_at_zero() {
        // g(0) = 0 and y = 0 ⇒ ∇F(0) = 0 ⇒ the zero start is stationary.
        let op = build_fast_operator(8, 24, 130).unwrap();
        let loss = NlarmLoss::new(op, vec![0.0; 24], LinkFunction::identity()).unwrap();
        let cfg = SolverConfig::new(2, 1.0, 5, 131);
        let trace = maple_run(&loss, &cfg, None).unwrap();
        assert_eq!(trace.rows.len(), 6);
        assert!(trace.estimate.max_abs() == 0.0);
        for row in &trace.rows {
            assert_eq!(row.objective, 0.0);
        }
    }

    #[test]
    fn noiseless_recovery_on_benign_instance() {
        // Generous measurement count: at n = 480 the operator's worst-case
        // amplification d/n is ≈ 1.07, so a step of 0.75 sits safely inside
        // the contraction range for the identity link.
        let (loss, truth) =
            nlarm_instance(24, 2, 480, 1.2, LinkFunction::identity(), 132);
        let cfg = SolverConfig::new(2, 0.75, 60, 133);
        let trace = maple_run(&loss, &cfg, Some(&truth)).unwrap();
        let err = trace.final_rel_error().unwrap();
        assert!(err <= 1e-6, "relative error {err}");
        // Errors decay geometrically on the way down.
        let (slope, r2) = super::super::fit_log_error_slope(&trace.rows).unwrap();
        assert!(slope < 0.0 && r2 > 0.9, "slope {slope}, r2 {r2}");
    }

    #[test]
    fn exact_projection_baseline_recovers_too() {
        let (loss, truth) =
            nlarm_instance(24, 2, 480, 1.2, LinkFunction::identity(), 134);
        let cfg = SolverConfig::new(2, 0.75, 60, 135);
        let trace = svp_run(&loss, &cfg, Some(&truth)).unwrap();
        assert!(trace.final_rel_error().unwrap() <= 1e-6);
    }

    #[test]
    fn approximate_and_exact_projections_reach_comparable_objectives() {
        let truth = gen_lowrank(20, 3, 1.5, 136);
        let y = gen_lpca(&truth, 137);
        let loss = LogisticPcaLoss::new(y, 0.0).unwrap();
        let mut cfg = SolverConfig::new(3, 4.0 / 20.0, 40, 138);
        cfg.bksvd.krylov_iters = 2;
        let maple = maple_run(&loss, &cfg, None).unwrap();
        let svp = svp_run(&loss, &cfg, None).unwrap();
        let (fm, fs) = (maple.final_objective(), svp.final_objective());
        // On a benign instance the two projections track each other; the
        // final objectives agree to within a few percent either way.
        assert!((fm - fs).abs() <= 0.05 * fs.abs(), "maple {fm} vs svp {fs}");
    }

    #[test]
    fn every_iterate_respects_the_rank_constraint() {
        let (loss, _) = nlarm_instance(16, 2, 128, 2.0, LinkFunction::two_x_plus_sin(), 139);
        let cfg = SolverConfig::new(3, 0.5, 12, 140);
        let mut checked = 0;
        maple_run_observed(&loss, &cfg, None, &mut |snap| {
            let svd = svd_exact(snap.post_step).unwrap();
            if svd.sigma[0] > 0.0 {
                assert!(
                    svd.sigma[3] <= 1e-8 * svd.sigma[0],
                    "iteration {}: σ_{{r+1}} = {}",
                    snap.iter,
                    svd.sigma[3]
                );
            }
            checked += 1;
        })
        .unwrap();
        assert_eq!(checked, 12);
    }

    #[test]
    fn trace_timing_is_nondecreasing_and_rows_are_complete() {
        let (loss, truth) = nlarm_instance(12, 2, 96, 1.0, LinkFunction::identity(), 141);
        let cfg = SolverConfig::new(2, 1.0, 8, 142);
        let trace = maple_run(&loss, &cfg, Some(&truth)).unwrap();
        assert_eq!(trace.rows.len(), 9);
        for (i, row) in trace.rows.iter().enumerate() {
            assert_eq!(row.iter, i);
            assert!(row.rel_error.is_some());
            assert!(row.min_eig.is_none());
            if i > 0 {
                assert!(row.seconds >= trace.rows[i - 1].seconds);
            }
        }
    }

    #[test]
    fn positive_tolerance_stops_early() {
        let (loss, _) = nlarm_instance(12, 2, 128, 1.0, LinkFunction::identity(), 143);
        let mut cfg = SolverConfig::new(2, 0.5, 500, 144);
        cfg.tolerance = 1e-10;
        let trace = maple_run(&loss, &cfg, None).unwrap();
        assert!(trace.rows.len() < 501, "converged run should stop early");
    }

    #[test]
    fn final_truncation_reduces_reported_rank() {
        // Projecting at rank 5 on a rank-2 truth drags three junk
        // directions along; they contract at the slow end of the restricted
        // spectrum, hence the longer budget.
        let (loss, truth) = nlarm_instance(16, 2, 224, 1.1, LinkFunction::identity(), 145);
        let mut cfg = SolverConfig::new(5, 0.75, 150, 146);
        cfg.final_truncate_rank = Some(2);
        let trace = maple_run(&loss, &cfg, Some(&truth)).unwrap();
        let svd = svd_exact(&trace.estimate).unwrap();
        assert!(svd.sigma[2] <= 1e-10 * svd.sigma[0].max(1.0));
        // Truncating an inflated-rank run back to r* keeps the recovery.
        let err = trace.estimate.sub(&truth).frobenius_norm() / truth.frobenius_norm();
        assert!(err <= 1e-4, "post-truncation error {err}");
    }

    #[test]
    fn divergent_run_aborts_with_diagnostic() {
        let (loss, _) = nlarm_instance(12, 2, 96, 1.0, LinkFunction::identity(), 147);
        let cfg = SolverConfig::new(2, 1e12, 50, 148);
        match maple_run(&loss, &cfg, None) {
            Err(Error::SolverAbort { iter, reason }) => {
                assert!(iter >= 1);
                assert!(reason.contains("non-finite"), "reason: {reason}");
            }
            other => panic!("expected an abort, got {other:?}", other = other.is_ok()),
        }
    }

    #[test]
    fn precision_run_uses_implicit_path_and_matches_dense_oracle() {
        let p = 10;
        let inst = gen_pme(p, 2, 50 * p, &vec![2.0; p], 149).unwrap();
        let loss = PmeLoss::new(inst.s_bar.clone(), inst.sample_cov.clone()).unwrap();
        let cfg = SolverConfig::new(2, 1.0, 6, 150);
        let mut rng = StreamRng::new(151);
        let mut implicit_iters = 0;
        maple_run_observed(&loss, &cfg, Some(&inst.l_star), &mut |snap| {
            let provider = snap.step_provider.expect("implicit path must be active");
            implicit_iters += 1;
            // Dense oracle for the same step matrix.
            let grad = loss.gradient(snap.pre_step).unwrap();
            let m = snap.pre_step.add_scaled(-snap.eta, &grad);
            for _ in 0..5 {
                let v = rng.normal_vec(p);
                let fast = provider.forward(&v);
                let slow = m.mul_vec(&v);
                let scale =
                    slow.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                let err = fast
                    .iter()
                    .zip(&slow)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(err <= 1e-8 * scale, "iteration {}: {err}", snap.iter);
            }
        })
        .unwrap();
        assert_eq!(implicit_iters, 6);
    }

    #[test]
    fn precision_traces_report_min_eigenvalue() {
        let p = 8;
        let inst = gen_pme(p, 2, 100 * p, &vec![2.0; p], 152).unwrap();
        let loss = PmeLoss::new(inst.s_bar.clone(), inst.sample_cov.clone()).unwrap();
        let cfg = SolverConfig::new(2, 1.0, 5, 153);
        let trace = maple_run(&loss, &cfg, Some(&inst.l_star)).unwrap();
        for row in &trace.rows {
            let m = row.min_eig.expect("symmetric-domain runs report min_eig");
            assert!(m.is_finite());
        }
        // The exact-projection baseline on the PSD cone also reports it,
        // and its iterates are nonnegative by construction.
        let mut psd_cfg = cfg.clone();
        psd_cfg.psd_project = true;
        let svp = svp_run(&loss, &psd_cfg, Some(&inst.l_star)).unwrap();
        for row in &svp.rows {
            assert!(row.min_eig.unwrap() >= -1e-10);
        }
    }

    #[test]
    fn domain_violations_shrink_the_step_for_one_iteration() {
        // S̄ = I/4 with C = 8I: the full step at η = 1 throws the candidate
        // far outside the PD cone; halvings must rescue the iteration.
        let p = 6;
        let c = DenseMatrix::identity(p).scale(8.0);
        let loss = PmeLoss::new(vec![0.25; p], c).unwrap();
        let cfg = SolverConfig::new(2, 1.0, 3, 154);
        let mut etas = Vec::new();
        let trace = maple_run_observed(&loss, &cfg, None, &mut |snap| {
            etas.push(snap.eta);
        })
        .unwrap();
        assert_eq!(etas.len(), 3);
        assert!(etas[0] < 1.0, "first step must have backed off, got {}", etas[0]);
        for row in &trace.rows {
            assert!(row.objective.is_finite());
        }
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let (loss, _) = nlarm_instance(8, 1, 32, 1.0, LinkFunction::identity(), 155);
        for cfg in [
            SolverConfig::new(0, 1.0, 5, 1),
            SolverConfig::new(2, 0.0, 5, 1),
            SolverConfig::new(2, 1.0, 0, 1),
        ] {
            assert!(matches!(maple_run(&loss, &cfg, None), Err(Error::InvalidArg(_))));
        }
    }
}
