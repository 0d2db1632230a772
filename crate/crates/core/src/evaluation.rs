//! Missing-pattern generation and imputation metrics.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proximal::singular_values;
use crate::tensor::{ObservationMask, SpatioTemporalMatrix, Tensor3, TensorDims};
use crate::transform::{forward, TransformMatrix};

/// Entries with `|y|` below this are left out of MAPE.
pub const MAPE_ZERO_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPattern {
    /// Entries are held out independently.
    Rm,
    /// Whole (sensor, day) fibers are held out.
    Nm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub pattern: MissingPattern,
    pub rate: f64,
    pub seed: u64,
    /// Hold out exactly `round(rate · units)` units instead of drawing each one.
    #[serde(default)]
    pub exact_quota: bool,
}

impl MaskSpec {
    pub fn new(pattern: MissingPattern, rate: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            pattern,
            rate,
            seed,
            exact_quota: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "missing rate must lie in (0, 1), got {}",
                self.rate
            )));
        }
        Ok(())
    }
}

/// Splits `base` into a training mask and a held-out test mask.
///
/// Units (entries for RM, observed (sensor, day) fibers for NM) are visited
/// in a fixed order and each is drawn from a ChaCha8 stream seeded with
/// `spec.seed`, so the split is a pure function of `(base, dims, spec)`.
pub fn generate_mask(
    base: &ObservationMask,
    dims: TensorDims,
    spec: &MaskSpec,
) -> Result<(ObservationMask, ObservationMask)> {
    spec.validate()?;
    let (rows, cols) = (dims.sensors(), dims.total_time());
    if base.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch {
            expected: (rows, cols),
            actual: base.shape(),
        });
    }
    if base.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let entries = base.linear_indices();

    let held_out: Vec<usize> = match spec.pattern {
        MissingPattern::Rm => {
            let chosen = choose_units(entries.len(), spec, &mut rng);
            chosen.into_iter().map(|k| entries[k]).collect()
        }
        MissingPattern::Nm => {
            let intervals = dims.intervals();
            // fibers in (sensor, day) order; entries are row-major so each
            // fiber's entries are contiguous
            let mut fibers: Vec<(usize, usize)> = Vec::new();
            let mut start = 0;
            while start < entries.len() {
                let key = fiber_of(entries[start], cols, intervals);
                let mut end = start + 1;
                while end < entries.len() && fiber_of(entries[end], cols, intervals) == key {
                    end += 1;
                }
                fibers.push((start, end));
                start = end;
            }
            choose_units(fibers.len(), spec, &mut rng)
                .into_iter()
                .flat_map(|f| {
                    let (s, e) = fibers[f];
                    entries[s..e].iter().copied()
                })
                .collect()
        }
    };

    if held_out.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    if held_out.len() == entries.len() {
        return Err(Error::EmptySplit("train"));
    }
    let test = ObservationMask::from_linear(rows, cols, held_out)?;
    let train_idx: Vec<usize> = entries
        .into_iter()
        .filter(|&k| !test.contains(k / cols, k % cols))
        .collect();
    let train = ObservationMask::from_linear(rows, cols, train_idx)?;
    Ok((train, test))
}

fn fiber_of(linear: usize, cols: usize, intervals: usize) -> (usize, usize) {
    (linear / cols, (linear % cols) / intervals)
}

/// Indices of the units to hold out, ascending.
fn choose_units(units: usize, spec: &MaskSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if spec.exact_quota {
        let quota = ((spec.rate * units as f64).round() as usize).min(units);
        let mut chosen = sample(rng, units, quota).into_vec();
        chosen.sort_unstable();
        chosen
    } else {
        (0..units).filter(|_| rng.random::<f64>() < spec.rate).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean absolute percentage error, in percent.
    pub mape: f64,
    pub rmse: f64,
    pub n_eval: usize,
    pub n_skipped_zero: usize,
}

fn check_eval_inputs(
    truth: &SpatioTemporalMatrix,
    recovered: &SpatioTemporalMatrix,
    test: &ObservationMask,
) -> Result<()> {
    if truth.shape() != recovered.shape() {
        return Err(Error::ShapeMismatch {
            expected: truth.shape(),
            actual: recovered.shape(),
        });
    }
    if test.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            expected: truth.shape(),
            actual: test.shape(),
        });
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    Ok(())
}

/// MAPE and RMSE over the held-out entries.
pub fn evaluate(
    truth: &SpatioTemporalMatrix,
    recovered: &SpatioTemporalMatrix,
    test: &ObservationMask,
) -> Result<EvalReport> {
    check_eval_inputs(truth, recovered, test)?;
    let mut sq = 0.0;
    let mut ape = 0.0;
    let mut n = 0usize;
    let mut skipped = 0usize;
    for (r, c) in test.iter() {
        let (y, yh) = (truth.get(r, c), recovered.get(r, c));
        let d = y - yh;
        sq += d * d;
        n += 1;
        if y.abs() < MAPE_ZERO_CUTOFF {
            skipped += 1;
        } else {
            ape += (d / y).abs();
        }
    }
    let mape_n = n - skipped;
    Ok(EvalReport {
        mape: if mape_n > 0 { 100.0 * ape / mape_n as f64 } else { 0.0 },
        rmse: (sq / n as f64).sqrt(),
        n_eval: n,
        n_skipped_zero: skipped,
    })
}

/// `y − ŷ` for each held-out entry, in row-major order.
pub fn residuals(
    truth: &SpatioTemporalMatrix,
    recovered: &SpatioTemporalMatrix,
    test: &ObservationMask,
) -> Result<Vec<f64>> {
    check_eval_inputs(truth, recovered, test)?;
    Ok(test
        .iter()
        .map(|(r, c)| truth.get(r, c) - recovered.get(r, c))
        .collect())
}

/// Singular values of every frontal slice of `Φ[x]`, each list descending.
pub fn spectrum(x: &Tensor3, phi: &TransformMatrix) -> Result<Vec<Vec<f64>>> {
    let transformed = forward(x, phi)?;
    (0..x.dims().days())
        .map(|j| {
            singular_values(&transformed.frontal_slice(j)).map_err(|e| match e {
                Error::NumericBreakdown { reason, .. } => Error::NumericBreakdown {
                    slice: Some(j),
                    reason,
                },
                other => other,
            })
        })
        .collect()
}
