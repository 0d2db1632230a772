//! Orthogonal transforms acting along the day axis (mode 3).
//!
//! The forward transform replaces the mode-3 unfolding `A` by `Φᵀ A`; the
//! inverse by `Φ A`. With the tensor layout of [`crate::tensor`], the
//! tensor buffer viewed as an `(M·I) × J` column-major matrix is `Aᵀ`, so
//! both directions reduce to one right-multiplication of that view.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// Left singular vectors of the mode-3 unfolding of the current estimate.
    DataDriven,
    /// Orthonormal DCT-II.
    Dct,
    Identity,
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransformKind::DataDriven => "data-driven",
            TransformKind::Dct => "dct",
            TransformKind::Identity => "identity",
        })
    }
}

/// A `J × J` orthogonal matrix `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    kind: TransformKind,
    matrix: DMatrix<f64>,
    fallback: bool,
}

impl TransformMatrix {
    pub fn identity(order: usize) -> Self {
        Self {
            kind: TransformKind::Identity,
            matrix: DMatrix::identity(order, order),
            fallback: false,
        }
    }

    /// Wraps an arbitrary matrix; fails unless it is square and orthogonal to 1e-8.
    pub fn from_matrix(kind: TransformKind, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "transform must be square and non-empty, got {:?}",
                matrix.shape()
            )));
        }
        let err = orthogonality_error(&matrix);
        if err > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "transform is not orthogonal (max |ΦᵀΦ - I| = {err:.3e})"
            )));
        }
        Ok(Self {
            kind,
            matrix,
            fallback: false,
        })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }

    #[inline]
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// True when a data-driven fit fell back to the identity on all-zero input.
    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    /// Negates column `k`. Shrinkage results do not depend on column signs.
    pub fn with_flipped_column(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.matrix.column_mut(k).neg_mut();
        out
    }

    fn check_order(&self, x: &Tensor3) -> Result<()> {
        let days = x.dims().days();
        if self.order() != days {
            return Err(Error::OrderMismatch {
                order: self.order(),
                days,
            });
        }
        Ok(())
    }
}

/// `max |ΦᵀΦ − I|`.
pub fn orthogonality_error(phi: &DMatrix<f64>) -> f64 {
    let gram = phi.transpose() * phi;
    let n = gram.nrows();
    (gram - DMatrix::<f64>::identity(n, n)).amax()
}

fn day_columns(x: &Tensor3) -> DMatrixView<'_, f64> {
    let dims = x.dims();
    DMatrixView::from_slice(x.as_slice(), dims.sensors() * dims.intervals(), dims.days())
}

fn right_multiply(x: &Tensor3, rhs: &DMatrix<f64>) -> Tensor3 {
    if rhs.nrows() == 1 {
        return x.scaled(rhs[(0, 0)]);
    }
    let product = day_columns(x) * rhs;
    let data: Vec<f64> = product.data.into();
    Tensor3::from_vec(x.dims(), data).expect("product keeps the element count")
}

/// `fold₃(Φᵀ · unfold₃(x))`.
pub fn forward(x: &Tensor3, phi: &TransformMatrix) -> Result<Tensor3> {
    phi.check_order(x)?;
    if phi.kind == TransformKind::Identity {
        return Ok(x.clone());
    }
    Ok(right_multiply(x, &phi.matrix))
}

/// `fold₃(Φ · unfold₃(x))`.
pub fn inverse(x: &Tensor3, phi: &TransformMatrix) -> Result<Tensor3> {
    phi.check_order(x)?;
    if phi.kind == TransformKind::Identity {
        return Ok(x.clone());
    }
    Ok(right_multiply(x, &phi.matrix.transpose()))
}

/// Gram matrix `A Aᵀ` of the mode-3 unfolding, `J × J`.
pub fn day_gram(x: &Tensor3) -> DMatrix<f64> {
    let cols = day_columns(x);
    cols.tr_mul(&cols)
}

/// Data-driven transform: left singular vectors of the mode-3 unfolding,
/// ordered by descending singular value, with canonical column signs.
///
/// The vectors come from the eigendecomposition of the `J × J` Gram
/// matrix. An all-zero tensor yields the identity with
/// [`TransformMatrix::is_fallback`] set.
pub fn fit_data_driven(x: &Tensor3) -> Result<TransformMatrix> {
    if !x.is_finite() {
        return Err(Error::NumericBreakdown {
            slice: None,
            reason: "non-finite input to data-driven transform".into(),
        });
    }
    let order = x.dims().days();
    let gram = day_gram(x);
    if gram.amax() == 0.0 {
        log::warn!("data-driven transform requested for an all-zero tensor; using identity");
        let mut phi = TransformMatrix::identity(order);
        phi.kind = TransformKind::DataDriven;
        phi.fallback = true;
        return Ok(phi);
    }
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 0).ok_or_else(|| {
        Error::NumericBreakdown {
            slice: None,
            reason: "Gram eigendecomposition did not converge".into(),
        }
    })?;
    let mut idx: Vec<usize> = (0..order).collect();
    // stable: ties keep the solver's order
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut matrix = DMatrix::zeros(order, order);
    for (dst, &src) in idx.iter().enumerate() {
        matrix.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_signs(&mut matrix);
    Ok(TransformMatrix {
        kind: TransformKind::DataDriven,
        matrix,
        fallback: false,
    })
}

/// Makes the largest-magnitude entry of each column positive (first index on ties).
pub fn canonicalize_signs(matrix: &mut DMatrix<f64>) {
    for mut col in matrix.column_iter_mut() {
        let mut best = 0;
        for (k, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = k;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthonormal DCT-II basis: `C[k, n] = s_k cos(π (2n + 1) k / 2J)` with
/// `s_0 = √(1/J)` and `s_k = √(2/J)` otherwise.
///
/// The basis vectors (rows of `C`) become the columns of `Φ = Cᵀ`, the same
/// convention as the data-driven transform, so [`forward`] computes the
/// DCT-II of every tube.
pub fn dct_matrix(order: usize) -> Result<TransformMatrix> {
    if order == 0 {
        return Err(Error::InvalidParameter("DCT order must be positive".into()));
    }
    let n = order as f64;
    let matrix = DMatrix::from_fn(order, order, |t, k| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * (2 * t + 1) as f64 * k as f64 / (2.0 * n)).cos()
    });
    Ok(TransformMatrix {
        kind: TransformKind::Dct,
        matrix,
        fallback: false,
    })
}

/// Transform of the given kind for a tensor; data-driven kinds are fitted to `x`.
pub fn build_transform(kind: TransformKind, x: &Tensor3) -> Result<TransformMatrix> {
    match kind {
        TransformKind::DataDriven => fit_data_driven(x),
        TransformKind::Dct => dct_matrix(x.dims().days()),
        TransformKind::Identity => Ok(TransformMatrix::identity(x.dims().days())),
    }
}
