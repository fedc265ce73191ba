//! Linear measurement operators `𝒜 : R^{p×p} → R^n` for matrix sensing.
//!
//! The workhorse is the subsampled Hadamard construction: vectorize `L`
//! row-major, flip signs with a Rademacher diagonal `D`, run the fast
//! Walsh–Hadamard transform (zero-padding `p²` up to a power of two when
//! needed), and keep `n` uniformly sampled distinct rows. One application
//! costs `O(p² log p)` instead of the `O(n p²)` of explicit measurement
//! matrices, and the transform is its own transpose, so the adjoint runs
//! the identical pipeline backwards.
//!
//! Both apply and adjoint carry a symmetric `1/√n` factor: this makes the
//! composite operator satisfy the restricted isometry normalization
//! (`E‖𝒜(L)‖₂² = ‖L‖_F²`), so losses built on top need no separate `1/n`
//! and step sizes stay comparable as `n` changes.
//!
//! A dense-list kind (explicit `A_i` matrices) exists for tests and tiny
//! problems; it shares the `1/√n` convention so the two kinds are
//! interchangeable.

use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::rng::StreamRng;

enum OperatorKind {
    FastHadamard {
        /// ±1 entries, length p² (applied before padding).
        sign_diagonal: Vec<f64>,
        /// n distinct sampled rows of the padded transform, sorted, < p².
        row_indices: Vec<usize>,
        /// Transform length: p² rounded up to a power of two.
        padded_dim: usize,
    },
    DenseList {
        /// Unscaled measurement matrices A_i.
        matrices: Vec<DenseMatrix>,
    },
}

/// A fixed linear measurement map; immutable after construction.
pub struct MeasurementOperator {
    p: usize,
    n: usize,
    kind: OperatorKind,
}

/// Builds the subsampled Hadamard operator. Deterministic in `seed`: the
/// Rademacher diagonal is drawn first, then the row sample.
pub fn build_fast_operator(p: usize, n: usize, seed: u64) -> Result<MeasurementOperator> {
    if p == 0 {
        return Err(Error::InvalidArg("operator side p must be ≥ 1".into()));
    }
    let dim = p * p;
    if n == 0 || n > dim {
        return Err(Error::InvalidArg(format!(
            "measurement count {n} must be in 1..={dim} for p={p}"
        )));
    }
    let padded_dim = dim.next_power_of_two();
    let mut rng = StreamRng::new(seed);
    let sign_diagonal: Vec<f64> = (0..dim).map(|_| rng.sign()).collect();
    let row_indices = rng.distinct_indices(dim, n);
    Ok(MeasurementOperator {
        p,
        n,
        kind: OperatorKind::FastHadamard { sign_diagonal, row_indices, padded_dim },
    })
}

/// Wraps explicit measurement matrices (each p×p) as an operator.
pub fn build_dense_operator(matrices: Vec<DenseMatrix>) -> Result<MeasurementOperator> {
    let n = matrices.len();
    if n == 0 {
        return Err(Error::InvalidArg("dense operator needs at least one matrix".into()));
    }
    let p = matrices[0].rows();
    for (i, m) in matrices.iter().enumerate() {
        if m.shape() != (p, p) {
            return Err(Error::DimMismatch {
                op: "build_dense_operator",
                details: format!("matrix {i} is {:?}, expected ({p}, {p})", m.shape()),
            });
        }
    }
    Ok(MeasurementOperator { p, n, kind: OperatorKind::DenseList { matrices } })
}

impl MeasurementOperator {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn measurement_count(&self) -> usize {
        self.n
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            OperatorKind::FastHadamard { .. } => "fast-hadamard",
            OperatorKind::DenseList { .. } => "dense-list",
        }
    }

    /// Upper bound on the spectral norm of `𝒜*𝒜`.
    ///
    /// The `1/√n` normalization makes `E‖𝒜(L)‖² = ‖L‖²`, but the worst
    /// case is larger: the padded Hadamard rows are orthogonal with squared
    /// norm equal to the transform length `d`, so `𝒜𝒜* = (d/n)·I` exactly
    /// and `‖𝒜(L)‖² ≤ (d/n)‖L‖²` with equality on the sampled row space.
    /// Smoothness estimates that ignore this factor produce divergent step
    /// sizes whenever `n ≪ d`. For the dense kind the bound is estimated by
    /// power iteration on `𝒜*𝒜` (deterministic start).
    pub fn frame_bound(&self) -> f64 {
        match &self.kind {
            OperatorKind::FastHadamard { padded_dim, .. } => {
                *padded_dim as f64 / self.n as f64
            }
            OperatorKind::DenseList { .. } => {
                let mut v = DenseMatrix::from_fn(self.p, self.p, |i, j| {
                    // Fixed pseudo-random start with no zero pattern.
                    (1.0 + ((i * 31 + j * 17 + 1) as f64).sin()) / 2.0 + 0.1
                });
                let mut lambda = 0.0;
                for _ in 0..40 {
                    let w = self.adjoint(&self.apply(&v));
                    let norm = w.frobenius_norm();
                    if norm == 0.0 {
                        return 0.0;
                    }
                    lambda = norm / v.frobenius_norm().max(f64::MIN_POSITIVE);
                    v = w.scale(1.0 / norm);
                }
                lambda
            }
        }
    }

    /// The shared normalization: both directions multiply by `1/√n`.
    fn scale(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }

    /// `𝒜(L)`: component i is `⟨A_i, L⟩ / √n`.
    pub fn apply(&self, l: &DenseMatrix) -> Vec<f64> {
        assert_eq!(l.shape(), (self.p, self.p), "apply: operator is for {0}×{0}", self.p);
        let scale = self.scale();
        match &self.kind {
            OperatorKind::FastHadamard { sign_diagonal, row_indices, padded_dim } => {
                let mut buf = vec![0.0; *padded_dim];
                for (b, (&x, &s)) in buf.iter_mut().zip(l.data().iter().zip(sign_diagonal)) {
                    *b = x * s;
                }
                fwht(&mut buf);
                row_indices.iter().map(|&r| buf[r] * scale).collect()
            }
            OperatorKind::DenseList { matrices } => {
                matrices.iter().map(|a| a.frobenius_dot(l) * scale).collect()
            }
        }
    }

    /// `𝒜*(v) = (1/√n) Σ_i v_i A_i` — the exact adjoint of [`apply`]:
    /// `⟨𝒜(L), v⟩ = ⟨L, 𝒜*(v)⟩` for all `L, v`.
    ///
    /// [`apply`]: MeasurementOperator::apply
    pub fn adjoint(&self, v: &[f64]) -> DenseMatrix {
        assert_eq!(v.len(), self.n, "adjoint: expected {} components", self.n);
        let scale = self.scale();
        match &self.kind {
            OperatorKind::FastHadamard { sign_diagonal, row_indices, padded_dim } => {
                let mut buf = vec![0.0; *padded_dim];
                for (&r, &x) in row_indices.iter().zip(v) {
                    buf[r] = x;
                }
                fwht(&mut buf);
                let mut out = DenseMatrix::zeros(self.p, self.p);
                for ((o, b), &s) in out.data_mut().iter_mut().zip(&buf).zip(sign_diagonal) {
                    *o = b * s * scale;
                }
                out
            }
            OperatorKind::DenseList { matrices } => {
                let mut out = DenseMatrix::zeros(self.p, self.p);
                for (a, &x) in matrices.iter().zip(v) {
                    out = out.add_scaled(x * scale, a);
                }
                out
            }
        }
    }

    /// The unscaled measurement matrix `A_i` (multiply `⟨A_i, L⟩` by `1/√n`
    /// to reproduce `apply`). For the fast kind this densifies one
    /// transform row; intended for oracles and tiny problems only.
    pub fn materialize_row(&self, i: usize) -> DenseMatrix {
        assert!(i < self.n, "row {i} out of range ({} measurements)", self.n);
        match &self.kind {
            OperatorKind::FastHadamard { sign_diagonal, row_indices, .. } => {
                let r = row_indices[i];
                DenseMatrix::from_fn(self.p, self.p, |a, b| {
                    let j = a * self.p + b;
                    // Sylvester-ordered Hadamard entry H[r][j] = (−1)^{popcount(r & j)},
                    // exactly what the butterfly transform computes.
                    let h = if (r & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    h * sign_diagonal[j]
                })
            }
            OperatorKind::DenseList { matrices } => matrices[i].clone(),
        }
    }
}

/// In-place unnormalized fast Walsh–Hadamard transform (Sylvester order).
/// Self-inverse up to the factor `len`: applying twice multiplies by `len`.
fn fwht(buf: &mut [f64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for chunk in buf.chunks_exact_mut(2 * h) {
            let (lo, hi) = chunk.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}
