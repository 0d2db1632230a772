//! Dense containers for sensor × interval × day data.
//!
//! A [`Tensor3`] stores its `M × I × J` entries in column-major order:
//! entry `(m, i, j)` lives at `m + M * (i + I * j)`. Each frontal slice
//! (one day) is therefore a contiguous column-major `M × I` block, and the
//! mode-1 unfolding shares the same memory order.
//!
//! A [`SpatioTemporalMatrix`] is the `M × T` view with `T = I * J`; column
//! `t` is interval `t mod I` of day `t / I`. Tensorization maps
//! `y[m, j * I + i]` to `x[m, i, j]`, which with the layouts above is a
//! plain move of the underlying buffer.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorDims {
    sensors: usize,
    intervals: usize,
    days: usize,
}

impl TensorDims {
    pub fn new(sensors: usize, intervals: usize, days: usize) -> Result<Self> {
        if sensors == 0 || intervals == 0 || days == 0 {
            return Err(Error::InvalidDims(format!(
                "all dimensions must be positive, got ({sensors}, {intervals}, {days})"
            )));
        }
        intervals
            .checked_mul(days)
            .and_then(|t| t.checked_mul(sensors))
            .ok_or_else(|| Error::InvalidDims("element count overflows".into()))?;
        Ok(Self {
            sensors,
            intervals,
            days,
        })
    }

    /// Dimensions for an `M × T` matrix whose time axis splits into `intervals` per day.
    pub fn from_matrix_shape(sensors: usize, total_time: usize, intervals: usize) -> Result<Self> {
        if intervals == 0 || total_time % intervals != 0 {
            return Err(Error::InvalidDims(format!(
                "{total_time} time points do not split into days of {intervals} intervals"
            )));
        }
        Self::new(sensors, intervals, total_time / intervals)
    }

    #[inline]
    pub fn sensors(&self) -> usize {
        self.sensors
    }

    #[inline]
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    #[inline]
    pub fn days(&self) -> usize {
        self.days
    }

    #[inline]
    pub fn total_time(&self) -> usize {
        self.intervals * self.days
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sensors * self.intervals * self.days
    }

    /// Always false; dimensions are positive by construction.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Shape of the mode-`k` unfolding.
    pub fn unfolding_shape(&self, mode: usize) -> Result<(usize, usize)> {
        let (m, i, j) = (self.sensors, self.intervals, self.days);
        match mode {
            1 => Ok((m, i * j)),
            2 => Ok((i, m * j)),
            3 => Ok((j, m * i)),
            other => Err(Error::InvalidMode(other)),
        }
    }
}

/// Dense third-order tensor, see the module docs for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: TensorDims,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: TensorDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn from_vec(dims: TensorDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::InvalidDims(format!(
                "expected {} elements, got {}",
                dims.len(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: TensorDims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for j in 0..dims.days {
            for i in 0..dims.intervals {
                for m in 0..dims.sensors {
                    data.push(f(m, i, j));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> TensorDims {
        self.dims
    }

    #[inline]
    fn offset(&self, m: usize, i: usize, j: usize) -> usize {
        debug_assert!(m < self.dims.sensors && i < self.dims.intervals && j < self.dims.days);
        m + self.dims.sensors * (i + self.dims.intervals * j)
    }

    #[inline]
    pub fn get(&self, m: usize, i: usize, j: usize) -> f64 {
        self.data[self.offset(m, i, j)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, i: usize, j: usize, value: f64) {
        let k = self.offset(m, i, j);
        self.data[k] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Frontal slice `j` as an owned `M × I` matrix.
    pub fn frontal_slice(&self, j: usize) -> DMatrix<f64> {
        let (m, i) = (self.dims.sensors, self.dims.intervals);
        let block = &self.data[j * m * i..(j + 1) * m * i];
        DMatrix::from_column_slice(m, i, block)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self + alpha * other`, element-wise.
    pub fn axpy(&self, alpha: f64, other: &Tensor3) -> Result<Tensor3> {
        check_same_dims(self.dims, other.dims)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            data,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }
}

fn check_same_dims(a: TensorDims, b: TensorDims) -> Result<()> {
    if a != b {
        return Err(Error::InvalidDims(format!(
            "tensor dimensions differ: {a:?} vs {b:?}"
        )));
    }
    Ok(())
}

/// The `M × (I·J)` time-series matrix. Columns are consecutive time points.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalMatrix {
    values: DMatrix<f64>,
}

impl SpatioTemporalMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            values: DMatrix::zeros(rows, cols),
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: (rows, cols),
                actual: (data.len(), 1),
            });
        }
        Ok(Self {
            values: DMatrix::from_row_slice(rows, cols, data),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[(row, col)] = value;
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Values in row-major `(sensor, time)` order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.values.transpose().as_slice().to_vec()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: self.shape(),
            });
        }
        Ok(())
    }
}

impl From<DMatrix<f64>> for SpatioTemporalMatrix {
    fn from(values: DMatrix<f64>) -> Self {
        Self::new(values)
    }
}

/// Mode-`k` unfolding (Kolda–Bader column ordering).
///
/// * mode 1: `M × (I·J)`, entry `(m, i + I·j)`
/// * mode 2: `I × (M·J)`, entry `(i, m + M·j)`
/// * mode 3: `J × (M·I)`, entry `(j, m + M·i)`
pub fn unfold(t: &Tensor3, mode: usize) -> Result<DMatrix<f64>> {
    let dims = t.dims;
    let (rows, cols) = dims.unfolding_shape(mode)?;
    let (sm, si, sj) = (dims.sensors, dims.intervals, dims.days);
    let mut out = DMatrix::zeros(rows, cols);
    for j in 0..sj {
        for i in 0..si {
            for m in 0..sm {
                let v = t.get(m, i, j);
                let (r, c) = match mode {
                    1 => (m, i + si * j),
                    2 => (i, m + sm * j),
                    _ => (j, m + sm * i),
                };
                out[(r, c)] = v;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold`] for the same mode and dimensions.
pub fn fold(matrix: &DMatrix<f64>, mode: usize, dims: TensorDims) -> Result<Tensor3> {
    let expected = dims.unfolding_shape(mode)?;
    if matrix.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: matrix.shape(),
        });
    }
    let (sm, si) = (dims.sensors, dims.intervals);
    Ok(Tensor3::from_fn(dims, |m, i, j| match mode {
        1 => matrix[(m, i + si * j)],
        2 => matrix[(i, m + sm * j)],
        _ => matrix[(j, m + sm * i)],
    }))
}

/// Splits the time axis into (interval, day): `x[m, i, j] = y[m, j·I + i]`.
pub fn tensorize(y: &SpatioTemporalMatrix, dims: TensorDims) -> Result<Tensor3> {
    y.check_shape((dims.sensors, dims.total_time()))?;
    // Column-major M×T storage coincides with the tensor layout.
    Tensor3::from_vec(dims, y.values.as_slice().to_vec())
}

/// Owned variant of [`tensorize`] that reuses the buffer.
pub fn tensorize_owned(y: SpatioTemporalMatrix, dims: TensorDims) -> Result<Tensor3> {
    y.check_shape((dims.sensors, dims.total_time()))?;
    let data: Vec<f64> = y.values.data.into();
    Tensor3::from_vec(dims, data)
}

/// Inverse of [`tensorize`].
pub fn matricize(x: &Tensor3) -> SpatioTemporalMatrix {
    let dims = x.dims;
    SpatioTemporalMatrix::new(DMatrix::from_column_slice(
        dims.sensors,
        dims.total_time(),
        &x.data,
    ))
}

pub fn matricize_owned(x: Tensor3) -> SpatioTemporalMatrix {
    let dims = x.dims;
    SpatioTemporalMatrix::new(DMatrix::from_vec(dims.sensors, dims.total_time(), x.data))
}

/// Entries of an `M × T` matrix that were observed.
///
/// Stored as a dense boolean grid when more than one entry in eight is
/// observed, otherwise as a sorted list of row-major linear indices
/// `m * T + t`. Iteration is always in row-major order.
#[derive(Debug, Clone)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    count: usize,
    repr: MaskRepr,
}

#[derive(Debug, Clone)]
enum MaskRepr {
    /// Column-major `rows × cols` grid, aligned with matrix storage.
    Dense(Vec<bool>),
    /// Sorted row-major linear indices.
    Sparse(Vec<usize>),
}

impl ObservationMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_grid(rows, cols, vec![true; rows * cols])
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            count: 0,
            repr: MaskRepr::Sparse(Vec::new()),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut grid = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                grid.push(f(r, c));
            }
        }
        Self::from_grid(rows, cols, grid)
    }

    /// Builds a mask from `(row, col)` pairs; duplicates are ignored.
    pub fn from_pairs(
        rows: usize,
        cols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut linear = Vec::new();
        for (r, c) in pairs {
            if r >= rows || c >= cols {
                return Err(Error::InvalidDims(format!(
                    "mask index ({r}, {c}) out of range for {rows}×{cols}"
                )));
            }
            linear.push(r * cols + c);
        }
        Self::from_linear(rows, cols, linear)
    }

    /// Builds a mask from row-major linear indices `row * cols + col`.
    pub fn from_linear(rows: usize, cols: usize, mut linear: Vec<usize>) -> Result<Self> {
        let total = rows * cols;
        linear.sort_unstable();
        linear.dedup();
        if let Some(&last) = linear.last() {
            if last >= total {
                return Err(Error::InvalidDims(format!(
                    "mask index {last} out of range for {rows}×{cols}"
                )));
            }
        }
        let count = linear.len();
        if count * 8 > total {
            let mut grid = vec![false; total];
            for k in linear {
                let (r, c) = (k / cols, k % cols);
                grid[c * rows + r] = true;
            }
            Ok(Self {
                rows,
                cols,
                count,
                repr: MaskRepr::Dense(grid),
            })
        } else {
            Ok(Self {
                rows,
                cols,
                count,
                repr: MaskRepr::Sparse(linear),
            })
        }
    }

    fn from_grid(rows: usize, cols: usize, grid: Vec<bool>) -> Self {
        let count = grid.iter().filter(|&&b| b).count();
        let total = rows * cols;
        if count * 8 > total {
            Self {
                rows,
                cols,
                count,
                repr: MaskRepr::Dense(grid),
            }
        } else {
            let mut linear: Vec<usize> = grid
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(k, _)| (k % rows) * cols + k / rows)
                .collect();
            linear.sort_unstable();
            Self {
                rows,
                cols,
                count,
                repr: MaskRepr::Sparse(linear),
            }
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn observed_count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, MaskRepr::Dense(_))
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        if row >= self.rows || col >= self.cols {
            return false;
        }
        match &self.repr {
            MaskRepr::Dense(grid) => grid[col * self.rows + row],
            MaskRepr::Sparse(list) => list.binary_search(&(row * self.cols + col)).is_ok(),
        }
    }

    /// Observed `(row, col)` pairs in row-major order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        let cols = self.cols;
        match &self.repr {
            MaskRepr::Dense(grid) => {
                let rows = self.rows;
                Box::new(
                    (0..rows)
                        .flat_map(move |r| (0..cols).map(move |c| (r, c)))
                        .filter(move |&(r, c)| grid[c * rows + r]),
                )
            }
            MaskRepr::Sparse(list) => Box::new(list.iter().map(move |&k| (k / cols, k % cols))),
        }
    }

    /// Observed entries as sorted row-major linear indices.
    pub fn linear_indices(&self) -> Vec<usize> {
        match &self.repr {
            MaskRepr::Sparse(list) => list.clone(),
            MaskRepr::Dense(_) => self.iter().map(|(r, c)| r * self.cols + c).collect(),
        }
    }

    /// Entries not in the mask.
    pub fn complement(&self) -> ObservationMask {
        ObservationMask::from_fn(self.rows, self.cols, |r, c| !self.contains(r, c))
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: shape,
            });
        }
        Ok(())
    }

    /// Calls `f(column_major_offset)` for each observed entry.
    fn for_each_offset(&self, mut f: impl FnMut(usize)) {
        match &self.repr {
            MaskRepr::Dense(grid) => grid
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .for_each(|(k, _)| f(k)),
            MaskRepr::Sparse(list) => {
                for &k in list {
                    f((k % self.cols) * self.rows + k / self.cols);
                }
            }
        }
    }
}

impl PartialEq for ObservationMask {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self.count == other.count
            && self.iter().eq(other.iter())
    }
}

impl Eq for ObservationMask {}

/// Orthogonal projection onto the observed entries: `y` on the mask, zero elsewhere.
pub fn project(y: &SpatioTemporalMatrix, mask: &ObservationMask) -> Result<SpatioTemporalMatrix> {
    mask.check_shape(y.shape())?;
    let mut out = DMatrix::zeros(y.rows(), y.cols());
    let src = y.values.as_slice();
    let dst = out.as_mut_slice();
    mask.for_each_offset(|k| dst[k] = src[k]);
    Ok(SpatioTemporalMatrix::new(out))
}

/// `y` on the mask, `z` elsewhere.
pub fn overwrite_observed(
    z: &SpatioTemporalMatrix,
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
) -> Result<SpatioTemporalMatrix> {
    let mut out = z.clone();
    overwrite_observed_in_place(&mut out, y, mask)?;
    Ok(out)
}

pub fn overwrite_observed_in_place(
    z: &mut SpatioTemporalMatrix,
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
) -> Result<()> {
    z.check_shape(y.shape())?;
    mask.check_shape(y.shape())?;
    let src = y.values.as_slice();
    let dst = z.values.as_mut_slice();
    mask.for_each_offset(|k| dst[k] = src[k]);
    Ok(())
}
