//! Factored gradient descent baseline: parameterize `L = UUᵀ` with `U`
//! p×r and descend on `U` directly,
//!
//! ```text
//! U^{t+1} = U^t − η_f (∇F(L^t) + ∇F(L^t)ᵀ) U^t.
//! ```
//!
//! Iterates are PSD by construction, which suits the symmetric PSD ground
//! truths used here; the price is a nonconvex landscape whose convergence
//! degrades with the conditioning of the truth — exactly the regime the
//! projected solvers are robust to, which is what the baseline is for.
//!
//! Initialization is spectral: project `−∇F(0)/M̂` (symmetrized, `M̂` the
//! loss's smoothness hint) to rank r and keep the positive eigenpairs,
//! `U⁰ = Z V₊ diag(√λ₊)`.
//!
//! The factor step is the constant `η_f = η / M̂`, the user's step in the
//! loss's own curvature units. No per-instance normalization is applied:
//! the factored parameterization multiplies the effective curvature along
//! the top spectral direction by `σ₁(L)`, so the stable range of `η_f`
//! genuinely shrinks as the truth becomes ill-conditioned, and a step that
//! converges on a well-conditioned instance diverges on a poorly
//! conditioned one. That sensitivity is a property of the method, not an
//! implementation artifact — the baseline is expected to be tuned per
//! instance.

use std::time::Instant;

use super::{SolverConfig, SolverTrace, TraceRow};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::matcore::{hard_threshold_rank, sym_eig, DenseMatrix};
use crate::rng::derive_seed;
use crate::rsvd::{tail_project, BkSvdConfig};

/// Step halvings allowed within one iteration (mirrors the projected
/// solvers; factored iterates are PSD so domain errors are unexpected).
const MAX_BACKOFFS: u32 = 10;

pub fn fgd_run(
    loss: &dyn LossModel,
    cfg: &SolverConfig,
    reference: Option<&DenseMatrix>,
) -> Result<SolverTrace> {
    cfg.validate()?;
    let p = loss.dim();
    let r = cfg.projected_rank.min(p);
    let symmetric = loss.symmetric_domain();
    let start = Instant::now();

    // Spectral initialization from the negated gradient at zero.
    let g0 = loss.gradient(&DenseMatrix::zeros(p, p))?;
    let m_hat = loss.smoothness_hint().max(1e-12);
    let init = g0.scale(-1.0 / m_hat).symmetrized();
    let bk = BkSvdConfig {
        rank: r,
        seed: derive_seed(cfg.bksvd.seed, 0),
        ..cfg.bksvd.clone()
    };
    let (_, sub) = tail_project(&init, &bk)?;
    let core = sub.basis.transpose_mul(&init.mul(&sub.basis)).symmetrized();
    let eig = sym_eig(&core)?;
    let zv = sub.basis.mul(&eig.vectors);
    let mut u = DenseMatrix::zeros(p, r);
    for (j, &lam) in eig.values.iter().enumerate() {
        if lam > 0.0 {
            let s = lam.sqrt();
            let col: Vec<f64> = zv.col(j).iter().map(|v| v * s).collect();
            u.set_col(j, &col);
        }
    }
    let eta_f = cfg.step_size / m_hat;

    let mut l = u.mul_transpose(&u);
    let f0 = loss.value(&l)?;
    if !f0.is_finite() {
        return Err(Error::SolverAbort {
            iter: 0,
            reason: "objective is not finite at the spectral initialization".into(),
        });
    }
    let mut rows = Vec::with_capacity(cfg.max_iters + 1);
    rows.push(TraceRow {
        iter: 0,
        seconds: start.elapsed().as_secs_f64(),
        objective: f0,
        rel_error: rel_error(reference, &l),
        // UUᵀ is PSD with rank ≤ r < p in all intended uses.
        min_eig: if symmetric { Some(0.0) } else { None },
    });

    for t in 1..=cfg.max_iters {
        let grad = loss.gradient(&l)?;
        let descent = grad.add(&grad.transpose()).mul(&u);
        let mut backoffs = 0u32;
        let (u_next, l_next, objective) = loop {
            let eta = eta_f * 0.5f64.powi(backoffs as i32);
            let u_try = u.add_scaled(-eta, &descent);
            let l_try = u_try.mul_transpose(&u_try);
            match loss.value(&l_try) {
                Ok(v) => break (u_try, l_try, v),
                Err(Error::NotPositiveDefinite { min_eig }) => {
                    if backoffs >= MAX_BACKOFFS {
                        return Err(Error::SolverAbort {
                            iter: t,
                            reason: format!(
                                "candidate left the domain after {MAX_BACKOFFS} halvings \
                                 (min eigenvalue {min_eig:.3e})"
                            ),
                        });
                    }
                    backoffs += 1;
                }
                Err(e) => return Err(e),
            }
        };
        if !objective.is_finite() {
            return Err(Error::SolverAbort {
                iter: t,
                reason: format!(
                    "objective became non-finite ({objective}); the factored step diverged"
                ),
            });
        }
        let delta = l_next.sub(&l).frobenius_norm() / l.frobenius_norm().max(1.0);
        u = u_next;
        l = l_next;
        rows.push(TraceRow {
            iter: t,
            seconds: start.elapsed().as_secs_f64(),
            objective,
            rel_error: rel_error(reference, &l),
            min_eig: if symmetric { Some(0.0) } else { None },
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

fn rel_error(reference: Option<&DenseMatrix>, l: &DenseMatrix) -> Option<f64> {
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
