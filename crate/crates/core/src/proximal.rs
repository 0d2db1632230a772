//! Singular value thresholding for matrices and for tensors in a transformed domain.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use crate::transform::{forward, inverse, TransformMatrix};

/// Relative cutoff below which singular values count as zero in rank reports.
const RANK_REPORT_CUTOFF: f64 = 1e-12;

const SVD_MAX_ITERS: usize = 0;

/// Per-slice summary of one thresholding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvtReport {
    pub slice: usize,
    pub tau: f64,
    /// Number of singular values strictly above `tau`.
    pub retained_rank: usize,
    pub largest_retained: Option<f64>,
    pub smallest_retained: Option<f64>,
    /// Nuclear norm of the thresholded slice, `Σ max(σ − τ, 0)`.
    pub shrunk_nuclear_norm: f64,
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let tall = if a.nrows() >= a.ncols() { a.clone() } else { a.transpose() };
    let mut sv: Vec<f64> = tall
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::NumericBreakdown {
            slice: None,
            reason: "SVD did not converge".into(),
        })?
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Proximal operator of `tau · ‖·‖_*`: `U max(Σ − τ, 0) Vᵀ`.
pub fn matrix_svt(a: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, SvtReport)> {
    svt_slice(a, tau, 0)
}

fn svt_slice(a: &DMatrix<f64>, tau: f64, slice: usize) -> Result<(DMatrix<f64>, SvtReport)> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "threshold must be positive and finite, got {tau}"
        )));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericBreakdown {
            slice: Some(slice),
            reason: "non-finite entries before SVD".into(),
        });
    }
    let mut report = SvtReport {
        slice,
        tau,
        retained_rank: 0,
        largest_retained: None,
        smallest_retained: None,
        shrunk_nuclear_norm: 0.0,
    };
    if a.is_empty() {
        return Ok((a.clone(), report));
    }
    // Factor the orientation with fewer columns and transpose back.
    let transposed = a.nrows() < a.ncols();
    let work = if transposed { a.transpose() } else { a.clone() };
    let (nrows, ncols) = work.shape();
    let svd = work
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::NumericBreakdown {
            slice: Some(slice),
            reason: "SVD did not converge".into(),
        })?;
    let u = svd.u.as_ref().expect("left vectors requested");
    let v_t = svd.v_t.as_ref().expect("right vectors requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.amax();

    let kept: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] > tau).collect();
    let mut out = DMatrix::zeros(nrows, ncols);
    if !kept.is_empty() {
        let mut us = DMatrix::zeros(nrows, kept.len());
        let mut vt = DMatrix::zeros(kept.len(), ncols);
        for (c, &k) in kept.iter().enumerate() {
            let shrunk = sigma[k] - tau;
            us.set_column(c, &(u.column(k) * shrunk));
            vt.set_row(c, &v_t.row(k));
        }
        out.gemm(1.0, &us, &vt, 0.0);
    }

    for &k in &kept {
        let s = sigma[k];
        report.shrunk_nuclear_norm += s - tau;
        if s > RANK_REPORT_CUTOFF * sigma_max {
            report.retained_rank += 1;
            report.largest_retained = Some(report.largest_retained.map_or(s, |m: f64| m.max(s)));
            report.smallest_retained = Some(report.smallest_retained.map_or(s, |m: f64| m.min(s)));
        }
    }
    if transposed {
        out = out.transpose();
    }
    Ok((out, report))
}

/// Thresholds every frontal slice of `Φ[z]` and maps the result back.
pub fn tensor_svt(z: &Tensor3, phi: &TransformMatrix, tau: f64) -> Result<Tensor3> {
    tensor_svt_with_reports(z, phi, tau).map(|(x, _)| x)
}

/// [`tensor_svt`] plus one [`SvtReport`] per slice. Slices run in parallel.
pub fn tensor_svt_with_reports(
    z: &Tensor3,
    phi: &TransformMatrix,
    tau: f64,
) -> Result<(Tensor3, Vec<SvtReport>)> {
    let dims = z.dims();
    let (m, i) = (dims.sensors(), dims.intervals());
    let mut transformed = forward(z, phi)?;
    let reports = transformed
        .as_mut_slice()
        .par_chunks_mut(m * i)
        .enumerate()
        .map(|(j, block)| {
            let slice = DMatrix::from_column_slice(m, i, block);
            let (shrunk, report) = svt_slice(&slice, tau, j)?;
            block.copy_from_slice(shrunk.as_slice());
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((inverse(&transformed, phi)?, reports))
}
