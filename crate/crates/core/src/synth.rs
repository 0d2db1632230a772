//! Seeded synthetic data with a known low tubal rank.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{matricize_owned, SpatioTemporalMatrix, Tensor3, TensorDims};
use crate::transform::{canonicalize_signs, inverse, TransformKind, TransformMatrix};

/// A synthetic dataset together with the transform it is low-rank under.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub matrix: SpatioTemporalMatrix,
    /// Noiseless tensor before noise was added.
    pub clean: Tensor3,
    pub basis: TransformMatrix,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal(order: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let qr = gaussian(rng, order, order).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (k, mut col) in q.column_iter_mut().enumerate() {
        if r[(k, k)] < 0.0 {
            col.neg_mut();
        }
    }
    canonicalize_signs(&mut q);
    q
}

/// Builds `x = Φ*⁻¹[S]` where slice `j` of `S` is `U_j V_jᵀ / (j + 1)` with
/// Gaussian `M × r` and `I × r` factors, so every slice of `Φ*[x]` has rank
/// at most `r`. Slice weights decrease with `j` so the slices carry
/// distinct energy. Gaussian noise of scale `sigma` is added afterwards.
pub fn synth_with_basis(
    dims: TensorDims,
    rank: usize,
    sigma: f64,
    seed: u64,
) -> Result<SyntheticData> {
    let max_rank = dims.sensors().min(dims.intervals());
    if rank == 0 || rank > max_rank {
        return Err(Error::InvalidParameter(format!(
            "tubal rank must lie in 1..={max_rank}, got {rank}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise scale must be nonnegative, got {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = TransformMatrix::from_matrix(
        TransformKind::DataDriven,
        random_orthogonal(dims.days(), &mut rng),
    )?;

    let (m, i) = (dims.sensors(), dims.intervals());
    let mut spectral = Vec::with_capacity(dims.len());
    for j in 0..dims.days() {
        let u = gaussian(&mut rng, m, rank);
        let v = gaussian(&mut rng, i, rank);
        let slice = (u * v.transpose()) / (j as f64 + 1.0);
        spectral.extend_from_slice(slice.as_slice());
    }
    let clean = inverse(&Tensor3::from_vec(dims, spectral)?, &basis)?;
    let mut noisy = clean.clone();
    if sigma > 0.0 {
        for v in noisy.as_mut_slice() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * e;
        }
    }
    Ok(SyntheticData {
        matrix: matricize_owned(noisy),
        clean,
        basis,
    })
}

pub fn synth(dims: TensorDims, rank: usize, sigma: f64, seed: u64) -> Result<SpatioTemporalMatrix> {
    synth_with_basis(dims, rank, sigma, seed).map(|d| d.matrix)
}
