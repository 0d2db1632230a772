//! On-disk formats.
//!
//! # Binary dataset (`.lstc`)
//!
//! All integers little-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `LSTCDAT\0`                       |
//! | 8      | 4    | version, `1`                            |
//! | 12     | 4    | value encoding, `1` = f64 little-endian |
//! | 16     | 8    | `M` (sensors)                           |
//! | 24     | 8    | `I` (intervals per day)                 |
//! | 32     | 8    | `J` (days)                              |
//! | 40     | 8·M·I·J | values, row-major by (sensor, time)  |
//!
//! Unobserved entries are stored as NaN.
//!
//! # Delimited dataset (`.csv`, `.txt`)
//!
//! One line per sensor, comma-separated, `nan` for unobserved entries.
//! Values are written with 17 significant digits. The file carries no
//! shape, so readers must supply intervals per day.
//!
//! # Mask (`.mask`)
//!
//! Magic `LSTCMSK\0`, version `u32 = 1`, reserved `u32 = 0`, then `M`, `T`
//! and the entry count as `u64`, followed by that many sorted row-major
//! linear indices `m·T + t` as `u64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::MaskSpec;
use crate::solver::SolverConfig;
use crate::tensor::{ObservationMask, SpatioTemporalMatrix, TensorDims};

pub const DATA_MAGIC: [u8; 8] = *b"LSTCDAT\0";
pub const MASK_MAGIC: [u8; 8] = *b"LSTCMSK\0";
pub const FORMAT_VERSION: u32 = 1;
const ENCODING_F64_LE: u32 = 1;
const HEADER_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Delimited,
    Binary,
}

impl MatrixFormat {
    /// `.csv`/`.txt`/`.tsv` are delimited; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv" | "txt" | "tsv") => MatrixFormat::Delimited,
            _ => MatrixFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub dims: TensorDims,
}

impl DatasetHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..8].copy_from_slice(&DATA_MAGIC);
        out[8..12].copy_from_slice(&self.version.to_le_bytes());
        out[12..16].copy_from_slice(&ENCODING_F64_LE.to_le_bytes());
        out[16..24].copy_from_slice(&(self.dims.sensors() as u64).to_le_bytes());
        out[24..32].copy_from_slice(&(self.dims.intervals() as u64).to_le_bytes());
        out[32..40].copy_from_slice(&(self.dims.days() as u64).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("file too short for a dataset header".into()));
        }
        if bytes[0..8] != DATA_MAGIC {
            return Err(Error::Format("bad magic; not an LSTC dataset".into()));
        }
        let version = u32_at(bytes, 8);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let encoding = u32_at(bytes, 12);
        if encoding != ENCODING_F64_LE {
            return Err(Error::Format(format!("unsupported value encoding {encoding}")));
        }
        let dim = |at| {
            usize::try_from(u64_at(bytes, at))
                .map_err(|_| Error::Format("dimension does not fit in memory".into()))
        };
        let dims = TensorDims::new(dim(16)?, dim(24)?, dim(32)?)
            .map_err(|e| Error::Format(format!("malformed header: {e}")))?;
        Ok(Self { version, dims })
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed write leaves no partial output.
pub fn write_atomically(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads a dataset; unobserved (NaN) cells are zero-filled and left out of the mask.
///
/// `intervals` is required for delimited files and, when given for binary
/// files, must match the header.
pub fn read_matrix(
    path: &Path,
    format: MatrixFormat,
    intervals: Option<usize>,
) -> Result<(SpatioTemporalMatrix, ObservationMask, TensorDims)> {
    let (rows, cols, values, dims) = match format {
        MatrixFormat::Binary => {
            let mut bytes = Vec::new();
            File::open(path)?.read_to_end(&mut bytes)?;
            let header = DatasetHeader::from_bytes(&bytes)?;
            let dims = header.dims;
            if let Some(i) = intervals {
                if i != dims.intervals() {
                    return Err(Error::InvalidDims(format!(
                        "header says {} intervals per day, caller expected {i}",
                        dims.intervals()
                    )));
                }
            }
            let payload = &bytes[HEADER_LEN..];
            if payload.len() != dims.len() * 8 {
                return Err(Error::Format(format!(
                    "header promises {} values but payload holds {} bytes",
                    dims.len(),
                    payload.len()
                )));
            }
            let values: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            (dims.sensors(), dims.total_time(), values, dims)
        }
        MatrixFormat::Delimited => {
            let intervals = intervals.ok_or_else(|| {
                Error::InvalidParameter("delimited input needs the intervals per day".into())
            })?;
            let reader = BufReader::new(File::open(path)?);
            let mut values = Vec::new();
            let mut rows = 0;
            let mut cols = None;
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let before = values.len();
                for cell in line.split([',', '\t', ' ']).filter(|c| !c.is_empty()) {
                    values.push(parse_cell(cell).ok_or_else(|| {
                        Error::Format(format!(
                            "line {}: cannot parse {cell:?} as a number",
                            lineno + 1
                        ))
                    })?);
                }
                let width = values.len() - before;
                match cols {
                    None => cols = Some(width),
                    Some(c) if c != width => {
                        return Err(Error::Format(format!(
                            "line {} has {width} columns, expected {c}",
                            lineno + 1
                        )))
                    }
                    _ => {}
                }
                rows += 1;
            }
            let cols = cols.ok_or_else(|| Error::Format("no data rows".into()))?;
            let dims = TensorDims::from_matrix_shape(rows, cols, intervals)?;
            (rows, cols, values, dims)
        }
    };

    let mut observed = Vec::new();
    let mut clean = values;
    for (k, v) in clean.iter_mut().enumerate() {
        if v.is_nan() {
            *v = 0.0;
        } else if !v.is_finite() {
            return Err(Error::Format(format!(
                "entry ({}, {}) is infinite",
                k / cols,
                k % cols
            )));
        } else {
            observed.push(k);
        }
    }
    let matrix = SpatioTemporalMatrix::from_row_major(rows, cols, &clean)?;
    let mask = ObservationMask::from_linear(rows, cols, observed)?;
    Ok((matrix, mask, dims))
}

fn parse_cell(cell: &str) -> Option<f64> {
    if cell.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    cell.parse::<f64>().ok()
}

/// Writes a dataset; entries outside `mask` are stored as NaN.
pub fn write_matrix(
    path: &Path,
    matrix: &SpatioTemporalMatrix,
    mask: &ObservationMask,
    dims: TensorDims,
    format: MatrixFormat,
) -> Result<()> {
    let shape = (dims.sensors(), dims.total_time());
    if matrix.shape() != shape || mask.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: shape,
            actual: matrix.shape(),
        });
    }
    let value = |r: usize, c: usize| {
        if mask.contains(r, c) {
            matrix.get(r, c)
        } else {
            f64::NAN
        }
    };
    write_atomically(path, |w| {
        match format {
            MatrixFormat::Binary => {
                w.write_all(
                    &DatasetHeader {
                        version: FORMAT_VERSION,
                        dims,
                    }
                    .to_bytes(),
                )?;
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        w.write_all(&value(r, c).to_le_bytes())?;
                    }
                }
            }
            MatrixFormat::Delimited => {
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        if c > 0 {
                            w.write_all(b",")?;
                        }
                        let v = value(r, c);
                        if v.is_nan() {
                            w.write_all(b"nan")?;
                        } else {
                            write!(w, "{v:.16e}")?;
                        }
                    }
                    w.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    })
}

pub fn write_mask(path: &Path, mask: &ObservationMask) -> Result<()> {
    let indices = mask.linear_indices();
    write_atomically(path, |w| {
        w.write_all(&MASK_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for n in [mask.rows(), mask.cols(), indices.len()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for k in indices {
            w.write_all(&(k as u64).to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_mask(path: &Path) -> Result<ObservationMask> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 40 || bytes[0..8] != MASK_MAGIC {
        return Err(Error::Format("not an LSTC mask file".into()));
    }
    let version = u32_at(&bytes, 8);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported mask version {version}")));
    }
    let rows = u64_at(&bytes, 16) as usize;
    let cols = u64_at(&bytes, 24) as usize;
    let count = u64_at(&bytes, 32) as usize;
    let payload = &bytes[40..];
    if payload.len() != count.saturating_mul(8) {
        return Err(Error::Format(format!(
            "mask header promises {count} entries but payload holds {} bytes",
            payload.len()
        )));
    }
    let indices = payload
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    ObservationMask::from_linear(rows, cols, indices)
}

/// One value per line.
pub fn write_values(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    write_atomically(path, |w| {
        writeln!(w, "{header}")?;
        for v in values {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    })
}

/// Per-slice singular values as `slice,index,value` lines.
pub fn write_spectrum(path: &Path, spectrum: &[Vec<f64>]) -> Result<()> {
    write_atomically(path, |w| {
        writeln!(w, "slice,index,singular_value")?;
        for (j, list) in spectrum.iter().enumerate() {
            for (k, s) in list.iter().enumerate() {
                writeln!(w, "{j},{k},{s:.16e}")?;
            }
        }
        Ok(())
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomically(path, |w| {
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form extra settings, e.g. synthetic-data parameters.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            mask: None,
            solver: None,
            seed: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(self.to_text()? + "\n"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
