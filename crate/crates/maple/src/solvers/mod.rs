//! Rank-constrained first-order solvers and their shared plumbing.
//!
//! Three algorithms share one configuration and trace format:
//!
//! * [`maple_run`] — projected gradient descent whose rank-r projection is
//!   the approximate randomized tail projection from [`crate::rsvd`]. This
//!   is the main algorithm; per-iteration cost is dominated by a constant
//!   number of operator applications instead of a full SVD.
//! * [`svp_run`] — the classical baseline with an exact (deterministic)
//!   rank-r projection, optionally onto the PSD cone.
//! * [`fgd_run`] — the factored (Burer–Monteiro) baseline: gradient descent
//!   on `U` with `L = UUᵀ`, spectrally initialized. Its step is normalized
//!   internally; see the module docs in [`fgd`].
//!
//! All runs start at `L⁰ = 0`, record a trace row per iteration (row 0 is
//! the starting point), and stop early only when `tolerance > 0`.

mod fgd;
mod pgd;

pub use fgd::fgd_run;
pub use pgd::{maple_run, maple_run_observed, svp_run, svp_run_observed, IterationSnapshot};

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::rsvd::BkSvdConfig;

/// Shared solver configuration. The approximate-projection settings ride
/// along even for solvers that ignore them so that one config drives a full
/// solver comparison.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Rank `r` every projected iterate is constrained to.
    pub projected_rank: usize,
    /// Gradient step size `η` (> 0).
    pub step_size: f64,
    /// Iteration budget (≥ 1).
    pub max_iters: usize,
    /// Early-stopping threshold on `‖L^{t+1} − L^t‖_F / max(1, ‖L^t‖_F)`;
    /// `0` disables early stopping.
    pub tolerance: f64,
    /// Approximate-projection parameters. `rank` is overridden by
    /// `projected_rank` at run time; the per-iteration sketch seed is
    /// derived from `bksvd.seed` and the iteration counter.
    pub bksvd: BkSvdConfig,
    /// Exact-projection baseline only: also project onto the PSD cone.
    pub psd_project: bool,
    /// When set, hard-threshold the final estimate to this rank (used to
    /// report a rank-r* matrix after running with an inflated rank).
    pub final_truncate_rank: Option<usize>,
}

impl SolverConfig {
    pub fn new(projected_rank: usize, step_size: f64, max_iters: usize, seed: u64) -> Self {
        SolverConfig {
            projected_rank,
            step_size,
            max_iters,
            tolerance: 0.0,
            bksvd: BkSvdConfig::new(projected_rank.max(1), 2, seed),
            psd_project: false,
            final_truncate_rank: None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.projected_rank == 0 {
            return Err(Error::InvalidArg("projected rank must be ≥ 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "step size {} must be positive and finite",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArg("iteration budget must be ≥ 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArg(format!("tolerance {} must be ≥ 0", self.tolerance)));
        }
        Ok(())
    }
}

/// One measurement point of a run. Row 0 describes the starting iterate;
/// row t the iterate after update t.
#[derive(Clone, Debug)]
pub struct TraceRow {
    pub iter: usize,
    /// Monotonic wall-clock seconds since the solver started (instance
    /// generation excluded — the clock starts inside the run).
    pub seconds: f64,
    pub objective: f64,
    /// `‖L^t − L_ref‖_F / ‖L_ref‖_F` when a reference was supplied.
    pub rel_error: Option<f64>,
    /// Smallest eigenvalue of the iterate, for losses on symmetric
    /// matrices.
    pub min_eig: Option<f64>,
}

/// A completed run: per-iteration rows plus the final estimate (after any
/// `final_truncate_rank` post-processing).
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    pub estimate: DenseMatrix,
}

impl SolverTrace {
    /// Last recorded relative error, if a reference was supplied.
    pub fn final_rel_error(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rel_error)
    }

    pub fn final_objective(&self) -> f64 {
        self.rows.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }
}

/// Writes rows as CSV with the fixed header
/// `iter,seconds,objective,rel_error,min_eig`. Floats are written with 17
/// significant digits so equal runs produce byte-identical files; absent
/// optional fields stay empty. `zero_timing` writes the seconds column as
/// zero, making files from repeated runs comparable byte for byte.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow], zero_timing: bool) -> Result<()> {
    let mut out = String::from("iter,seconds,objective,rel_error,min_eig\n");
    for row in rows {
        let secs = if zero_timing { 0.0 } else { row.seconds };
        out.push_str(&format!("{},{:.16e},{:.16e},", row.iter, secs, row.objective));
        if let Some(e) = row.rel_error {
            out.push_str(&format!("{e:.16e}"));
        }
        out.push(',');
        if let Some(m) = row.min_eig {
            out.push_str(&format!("{m:.16e}"));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Least-squares slope of `ln(rel_error)` against the iteration counter,
/// with its R². Fitted on the prefix that ends at the first row within a
/// factor 2 of the best error (the linear-convergence phase, before the
/// floor flattens the curve). Returns `None` with fewer than three usable
/// points.
pub fn fit_log_error_slope(rows: &[TraceRow]) -> Option<(f64, f64)> {
    let usable: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.rel_error.filter(|e| *e > 0.0).map(|e| (r.iter as f64, e.ln())))
        .collect();
    let floor = usable.iter().map(|&(_, le)| le).fold(f64::INFINITY, f64::min);
    let cutoff = floor + std::f64::consts::LN_2;
    let end = usable.iter().position(|&(_, le)| le <= cutoff).map(|i| i + 1)?;
    let pts = &usable[..end];
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let syy: f64 = pts.iter().map(|&(_, y)| (y - my) * (y - my)).sum();
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 0.0 };
    Some((slope, r2))
}

/// What the convergence theory predicts for a given configuration.
///
/// The approximate projection inflates per-iteration error by
/// `ν = √(1 + (2/√(1−ε)) √(r*/(r−r*)))`, so one projected gradient step
/// contracts the distance to the optimum by `ρ = ν √(1 + M²η² − 2mη)` under
/// restricted strong convexity `m` and smoothness `M`. Everything here is
/// reported, not asserted: the run itself is the ground truth.
#[derive(Clone, Debug)]
pub struct TheoreticalDiagnostics {
    /// α = r / r*.
    pub rank_ratio: f64,
    /// ν; infinite when r = r* (the theory requires strict rank inflation).
    pub projection_factor: f64,
    /// ρ evaluated at the configured step size.
    pub contraction_at_step: f64,
    /// `[(1 − √α′)/M, (1 + √α′)/m]` with
    /// `α′ = √(α−1) / (√(1−ε)√(α−1) + 2)`; `None` when r = r*.
    pub step_window: Option<(f64, f64)>,
    /// Steps with ρ < 1, from the quadratic in η; `None` when empty.
    pub contraction_window: Option<(f64, f64)>,
    /// The rank-inflation constant this configuration can tolerate:
    /// `C₁ = (r/r*) (1−ε) (m/M)⁴`.
    pub implied_rank_constant: f64,
    /// True when r ≤ r*: the contraction factor is then vacuous and the
    /// configuration relies on empirical behavior alone.
    pub rank_inflation_required: bool,
}

/// Evaluates the contraction theory for a configuration against a known
/// target rank `r_star`, projection accuracy `epsilon ∈ [0, 1)`, and
/// restricted curvature estimates `0 < m_est ≤ big_m_est`.
pub fn theoretical_diagnostics(
    cfg: &SolverConfig,
    r_star: usize,
    epsilon: f64,
    m_est: f64,
    big_m_est: f64,
) -> TheoreticalDiagnostics {
    assert!(r_star >= 1, "target rank must be ≥ 1");
    assert!((0.0..1.0).contains(&epsilon), "projection accuracy must be in [0, 1)");
    assert!(
        0.0 < m_est && m_est <= big_m_est,
        "need 0 < m ≤ M, got m = {m_est}, M = {big_m_est}"
    );
    let r = cfg.projected_rank;
    let alpha = r as f64 / r_star as f64;
    let inflation_missing = r <= r_star;

    let nu = if inflation_missing {
        f64::INFINITY
    } else {
        let tail = (r_star as f64 / (r - r_star) as f64).sqrt();
        (1.0 + 2.0 / (1.0 - epsilon).sqrt() * tail).sqrt()
    };
    let eta = cfg.step_size;
    let contraction_at_step =
        nu * (1.0 + big_m_est * big_m_est * eta * eta - 2.0 * m_est * eta).max(0.0).sqrt();

    let step_window = if inflation_missing {
        None
    } else {
        let root = (alpha - 1.0).sqrt();
        let alpha_prime = root / ((1.0 - epsilon).sqrt() * root + 2.0);
        let s = alpha_prime.sqrt();
        Some(((1.0 - s) / big_m_est, (1.0 + s) / m_est))
    };

    // ρ < 1 ⟺ M²η² − 2mη + (1 − 1/ν²) < 0; real roots need a positive
    // discriminant m² − M²(1 − 1/ν²).
    let contraction_window = if nu.is_finite() {
        let disc = m_est * m_est - big_m_est * big_m_est * (1.0 - 1.0 / (nu * nu));
        if disc > 0.0 {
            let lo = (m_est - disc.sqrt()) / (big_m_est * big_m_est);
            let hi = (m_est + disc.sqrt()) / (big_m_est * big_m_est);
            if hi > 0.0 {
                Some((lo.max(0.0), hi))
            } else {
                None
            }
        } else {
            None
        }
    } else {
        None
    };

    let ratio = m_est / big_m_est;
    TheoreticalDiagnostics {
        rank_ratio: alpha,
        projection_factor: nu,
        contraction_at_step,
        step_window,
        contraction_window,
        implied_rank_constant: alpha * (1.0 - epsilon) * ratio.powi(4),
        rank_inflation_required: inflation_missing,
    }
}
