//! Quadratic-variation smoothing along the time axis.
//!
//! With `Ψ` the `(T−1) × T` first-difference operator, the smoothing
//! subproblem `min ½‖Ψ Zᵀ‖²_F + (α/2)‖Z − B‖²_F` has the normal equations
//! `Z (ΨᵀΨ + αI) = αB`. `ΨᵀΨ + αI` is symmetric tridiagonal, so every row
//! of `Z` comes out of one Thomas sweep; the factorization is shared by
//! all rows and the sweep runs over columns so memory access stays
//! contiguous.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::SpatioTemporalMatrix;

/// `Σ_{t=2..T} ‖z_t − z_{t−1}‖²`.
pub fn quadratic_variation(z: &SpatioTemporalMatrix) -> f64 {
    let v = z.values();
    (1..v.ncols())
        .map(|t| (v.column(t) - v.column(t - 1)).norm_squared())
        .sum()
}

/// The first-difference operator `Ψ = Ψ₂ − Ψ₁` as a dense `(T−1) × T` matrix.
pub fn difference_operator(t: usize) -> DMatrix<f64> {
    let rows = t.saturating_sub(1);
    DMatrix::from_fn(rows, t, |r, c| {
        if c == r + 1 {
            1.0
        } else if c == r {
            -1.0
        } else {
            0.0
        }
    })
}

/// `‖Ψ Zᵀ‖²_F` computed through the dense operator. Intended for small `T`.
pub fn quadratic_variation_matrix_form(z: &SpatioTemporalMatrix) -> f64 {
    let psi = difference_operator(z.cols());
    (psi * z.values().transpose()).norm_squared()
}

/// The tridiagonal system `ΨᵀΨ + αI_T` together with its LU factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSystem {
    alpha: f64,
    diag: Vec<f64>,
    off: Vec<f64>,
    // Thomas factors: pivots of the elimination and scaled super-diagonal.
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl SmoothingSystem {
    #[inline]
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Main diagonal: `1+α, 2+α, …, 2+α, 1+α` (just `α` when `T = 1`).
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Both off-diagonals (the system is symmetric); all `−1`.
    pub fn off_diagonal(&self) -> &[f64] {
        &self.off
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for k in 0..n.saturating_sub(1) {
            a[(k, k + 1)] = self.off[k];
            a[(k + 1, k)] = self.off[k];
        }
        a
    }
}

pub fn build_system(t: usize, alpha: f64) -> Result<SmoothingSystem> {
    if t == 0 {
        return Err(Error::InvalidParameter("time length must be positive".into()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothing ratio must be positive and finite, got {alpha}"
        )));
    }
    let diag: Vec<f64> = (0..t)
        .map(|k| {
            let neighbours = usize::from(k > 0) + usize::from(k + 1 < t);
            neighbours as f64 + alpha
        })
        .collect();
    let off = vec![-1.0; t - 1];

    let mut pivots = Vec::with_capacity(t);
    let mut upper = Vec::with_capacity(t.saturating_sub(1));
    pivots.push(diag[0]);
    for k in 1..t {
        let c = off[k - 1] / pivots[k - 1];
        upper.push(c);
        pivots.push(diag[k] - off[k - 1] * c);
    }
    // SPD for α > 0, so pivots stay ≥ α.
    debug_assert!(pivots.iter().all(|&p| p > 0.0));
    Ok(SmoothingSystem {
        alpha,
        diag,
        off,
        pivots,
        upper,
    })
}

/// Solves `Z (ΨᵀΨ + αI) = α B` row by row.
pub fn solve_smoothing(
    b: &SpatioTemporalMatrix,
    sys: &SmoothingSystem,
) -> Result<SpatioTemporalMatrix> {
    if b.cols() != sys.len() {
        return Err(Error::ShapeMismatch {
            expected: (b.rows(), sys.len()),
            actual: b.shape(),
        });
    }
    let (rows, n) = b.shape();
    let mut z = b.values() * sys.alpha;
    let data = z.as_mut_slice();

    // Forward elimination. Column k of the M × T buffer is data[k*rows..(k+1)*rows].
    for r in 0..rows {
        data[r] /= sys.pivots[0];
    }
    for k in 1..n {
        let (prev, cur) = data.split_at_mut(k * rows);
        let prev = &prev[(k - 1) * rows..];
        let cur = &mut cur[..rows];
        let sub = sys.off[k - 1];
        let pivot = sys.pivots[k];
        for r in 0..rows {
            cur[r] = (cur[r] - sub * prev[r]) / pivot;
        }
    }
    // Back substitution.
    for k in (0..n.saturating_sub(1)).rev() {
        let (cur, next) = data.split_at_mut((k + 1) * rows);
        let cur = &mut cur[k * rows..];
        let next = &next[..rows];
        let c = sys.upper[k];
        for r in 0..rows {
            cur[r] -= c * next[r];
        }
    }
    Ok(SpatioTemporalMatrix::new(z))
}
