//! Bit-exact persistence: the MCWB binary container for named tensors and
//! sparse factors, and the JSON report document.
//!
//! A container is `MCWB` + version + entry count, then one record per
//! entry: name length, UTF-8 name, kind byte (0 dense, 1 sparse), number
//! of dimensions, the dimensions as 64-bit integers, and the payload.
//! Dense payloads are little-endian doubles with the last dimension
//! fastest; sparse payloads are an entry count followed by
//! `(row, col, value)` triplets in row-major order. All integers are
//! little-endian. Writing then reading then writing again reproduces the
//! bytes exactly.
//!
//! Factors of a decomposition are stored under the naming convention
//! `<layer>.W`, `<layer>.X`, `<layer>.Y` for inputs and `<layer>.U`,
//! `<layer>.Vc`, `<layer>.Vi`, `<layer>.S` for outputs.

use crate::layermodel::{LayerShape, LayerTensor};
use crate::matrixcore::{DenseMatrix, SparseMatrix};
use crate::metrics::CompressionReport;

/// Container format identifier.
pub const MAGIC: [u8; 4] = *b"MCWB";
/// The one supported container version.
pub const VERSION: u32 = 1;

/// Errors raised while reading or writing containers and reports.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StorageError {
    #[error("bad magic {0:02x?}, expected \"MCWB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("container truncated while reading {0}")]
    Truncated(&'static str),
    #[error("duplicate entry name {0}")]
    DuplicateName(String),
    #[error("entry name is not valid UTF-8")]
    BadName,
    #[error("entry {name}: unknown kind byte {kind}")]
    UnknownKind { name: String, kind: u8 },
    #[error("entry {name}: sparse entries are two-dimensional, got rank {rank}")]
    SparseRank { name: String, rank: u8 },
    #[error("entry {name}: dimension product overflows")]
    DimsOverflow { name: String },
    #[error("entry {name}: {got} values do not fill dimensions ({expected} values)")]
    PayloadMismatch { name: String, expected: u64, got: u64 },
    #[error("entry {name}: triplets are not in sorted row-major order")]
    UnsortedTriplets { name: String },
    #[error("entry {name}: triplet ({row}, {col}) is outside {rows}x{cols}")]
    TripletOutOfBounds {
        name: String,
        row: u64,
        col: u64,
        rows: u64,
        cols: u64,
    },
    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error("entry {name}: expected a {expected} entry")]
    WrongEntryKind { name: String, expected: &'static str },
    #[error("entry {name}: expected rank {expected}, got {got}")]
    WrongRank {
        name: String,
        expected: &'static str,
        got: u8,
    },
    #[error("report document is invalid: {0}")]
    ReportSchema(String),
}

/// Payload of one container entry.
#[derive(Debug, Clone, PartialEq)]
pub enum EntryData {
    /// Dense tensor: dimensions plus values with the last dimension fastest.
    Dense { dims: Vec<u64>, values: Vec<f64> },
    /// Sparse matrix: shape plus `(row, col, value)` triplets sorted
    /// row-major.
    Sparse {
        rows: u64,
        cols: u64,
        triplets: Vec<(u64, u64, f64)>,
    },
}

/// A named container entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// Unique entry name.
    pub name: String,
    /// The stored tensor or sparse matrix.
    pub data: EntryData,
}

fn checked_product(name: &str, dims: &[u64]) -> Result<u64, StorageError> {
    dims.iter().try_fold(1u64, |acc, &d| {
        acc.checked_mul(d).ok_or_else(|| StorageError::DimsOverflow {
            name: name.to_string(),
        })
    })
}

fn validate_entry(entry: &Entry) -> Result<(), StorageError> {
    match &entry.data {
        EntryData::Dense { dims, values } => {
            let expected = checked_product(&entry.name, dims)?;
            if values.len() as u64 != expected {
                return Err(StorageError::PayloadMismatch {
                    name: entry.name.clone(),
                    expected,
                    got: values.len() as u64,
                });
            }
        }
        EntryData::Sparse {
            rows,
            cols,
            triplets,
        } => {
            for pair in triplets.windows(2) {
                if (pair[1].0, pair[1].1) <= (pair[0].0, pair[0].1) {
                    return Err(StorageError::UnsortedTriplets {
                        name: entry.name.clone(),
                    });
                }
            }
            for &(row, col, _) in triplets {
                if row >= *rows || col >= *cols {
                    return Err(StorageError::TripletOutOfBounds {
                        name: entry.name.clone(),
                        row,
                        col,
                        rows: *rows,
                        cols: *cols,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Serializes entries into MCWB bytes.
///
/// Entries are validated first: names must be unique, dense payloads must
/// fill their dimensions, and triplets must be sorted and in bounds.
pub fn write_container(entries: &[Entry]) -> Result<Vec<u8>, StorageError> {
    for (i, entry) in entries.iter().enumerate() {
        validate_entry(entry)?;
        if entries[..i].iter().any(|e| e.name == entry.name) {
            return Err(StorageError::DuplicateName(entry.name.clone()));
        }
    }
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for entry in entries {
        bytes.extend_from_slice(&(entry.name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(entry.name.as_bytes());
        match &entry.data {
            EntryData::Dense { dims, values } => {
                bytes.push(0);
                bytes.push(dims.len() as u8);
                for &d in dims {
                    bytes.extend_from_slice(&d.to_le_bytes());
                }
                for &v in values {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            EntryData::Sparse {
                rows,
                cols,
                triplets,
            } => {
                bytes.push(1);
                bytes.push(2);
                bytes.extend_from_slice(&rows.to_le_bytes());
                bytes.extend_from_slice(&cols.to_le_bytes());
                bytes.extend_from_slice(&(triplets.len() as u64).to_le_bytes());
                for &(row, col, value) in triplets {
                    bytes.extend_from_slice(&row.to_le_bytes());
                    bytes.extend_from_slice(&col.to_le_bytes());
                    bytes.extend_from_slice(&value.to_le_bytes());
                }
            }
        }
    }
    Ok(bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, context: &'static str) -> Result<&'a [u8], StorageError> {
        let end = self
            .at
            .checked_add(len)
            .filter(|&end| end <= self.bytes.len())
            .ok_or(StorageError::Truncated(context))?;
        let slice = &self.bytes[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, StorageError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    fn u64(&mut self, context: &'static str) -> Result<u64, StorageError> {
        Ok(u64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }

    fn f64(&mut self, context: &'static str) -> Result<f64, StorageError> {
        Ok(f64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }
}

/// Parses MCWB bytes back into entries, rejecting any malformed input.
pub fn read_container(bytes: &[u8]) -> Result<Vec<Entry>, StorageError> {
    let mut cursor = Cursor { bytes, at: 0 };
    let magic: [u8; 4] = cursor.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(StorageError::BadMagic(magic));
    }
    let version = cursor.u32("version")?;
    if version != VERSION {
        return Err(StorageError::UnsupportedVersion(version));
    }
    let count = cursor.u32("entry count")?;
    let mut entries: Vec<Entry> = Vec::new();
    for _ in 0..count {
        let name_len = cursor.u32("name length")? as usize;
        let name = std::str::from_utf8(cursor.take(name_len, "entry name")?)
            .map_err(|_| StorageError::BadName)?
            .to_string();
        if entries.iter().any(|e| e.name == name) {
            return Err(StorageError::DuplicateName(name));
        }
        let kind = cursor.take(1, "entry kind")?[0];
        let rank = cursor.take(1, "entry rank")?[0];
        let data = match kind {
            0 => {
                let mut dims = Vec::with_capacity(rank as usize);
                for _ in 0..rank {
                    dims.push(cursor.u64("dense dimensions")?);
                }
                let len = checked_product(&name, &dims)?;
                let mut values = Vec::with_capacity(len.min(1 << 20) as usize);
                for _ in 0..len {
                    values.push(cursor.f64("dense payload")?);
                }
                EntryData::Dense { dims, values }
            }
            1 => {
                if rank != 2 {
                    return Err(StorageError::SparseRank { name, rank });
                }
                let rows = cursor.u64("sparse dimensions")?;
                let cols = cursor.u64("sparse dimensions")?;
                let nnz = cursor.u64("sparse entry count")?;
                let mut triplets = Vec::with_capacity(nnz.min(1 << 20) as usize);
                for _ in 0..nnz {
                    let row = cursor.u64("sparse triplet")?;
                    let col = cursor.u64("sparse triplet")?;
                    let value = cursor.f64("sparse triplet")?;
                    triplets.push((row, col, value));
                }
                EntryData::Sparse {
                    rows,
                    cols,
                    triplets,
                }
            }
            other => return Err(StorageError::UnknownKind { name, kind: other }),
        };
        let entry = Entry { name, data };
        validate_entry(&entry)?;
        entries.push(entry);
    }
    if cursor.at != bytes.len() {
        return Err(StorageError::TrailingBytes(bytes.len() - cursor.at));
    }
    Ok(entries)
}

/// Wraps a matrix as a rank-2 dense entry.
pub fn matrix_entry(name: &str, m: &DenseMatrix) -> Entry {
    Entry {
        name: name.to_string(),
        data: EntryData::Dense {
            dims: vec![m.rows() as u64, m.cols() as u64],
            values: m.row_major(),
        },
    }
}

/// Wraps a sparse matrix as a sparse entry.
pub fn sparse_entry(name: &str, s: &SparseMatrix) -> Entry {
    Entry {
        name: name.to_string(),
        data: EntryData::Sparse {
            rows: s.rows() as u64,
            cols: s.cols() as u64,
            triplets: s
                .triplets()
                .iter()
                .map(|&(r, c, v)| (r as u64, c as u64, v))
                .collect(),
        },
    }
}

/// Wraps a layer tensor as a dense entry: rank 4 `(k, k, d, n)` for
/// convolutions, rank 2 `(n, p)` for fully connected layers.
pub fn tensor_entry(name: &str, t: &LayerTensor) -> Entry {
    let dims = match t.shape() {
        LayerShape::Conv { k, d, n } => vec![k as u64, k as u64, d as u64, n as u64],
        LayerShape::Fc { n, p } => vec![n as u64, p as u64],
    };
    Entry {
        name: name.to_string(),
        data: EntryData::Dense {
            dims,
            values: t.data().to_vec(),
        },
    }
}

/// Reads a rank-2 dense entry back into a matrix.
pub fn matrix_from_entry(entry: &Entry) -> Result<DenseMatrix, StorageError> {
    match &entry.data {
        EntryData::Dense { dims, values } if dims.len() == 2 => {
            DenseMatrix::from_row_major(dims[0] as usize, dims[1] as usize, values).map_err(|e| {
                StorageError::ReportSchema(format!("entry {}: {e}", entry.name))
            })
        }
        EntryData::Dense { dims, .. } => Err(StorageError::WrongRank {
            name: entry.name.clone(),
            expected: "2",
            got: dims.len() as u8,
        }),
        EntryData::Sparse { .. } => Err(StorageError::WrongEntryKind {
            name: entry.name.clone(),
            expected: "dense",
        }),
    }
}

/// Reads a sparse entry back into a sparse matrix.
pub fn sparse_from_entry(entry: &Entry) -> Result<SparseMatrix, StorageError> {
    match &entry.data {
        EntryData::Sparse {
            rows,
            cols,
            triplets,
        } => SparseMatrix::from_triplets(
            *rows as usize,
            *cols as usize,
            triplets
                .iter()
                .map(|&(r, c, v)| (r as usize, c as usize, v))
                .collect(),
        )
        .map_err(|e| StorageError::ReportSchema(format!("entry {}: {e}", entry.name))),
        EntryData::Dense { .. } => Err(StorageError::WrongEntryKind {
            name: entry.name.clone(),
            expected: "sparse",
        }),
    }
}

/// Reads a dense entry back into a layer tensor; rank 4 becomes a
/// convolution, rank 2 a fully connected layer. The position in the
/// network is supplied by the caller since containers list layers in
/// network order.
pub fn tensor_from_entry(
    entry: &Entry,
    layer_name: &str,
    depth_index: usize,
) -> Result<LayerTensor, StorageError> {
    let bad = |detail: String| StorageError::ReportSchema(detail);
    match &entry.data {
        EntryData::Dense { dims, values } => match dims.len() {
            4 => LayerTensor::conv(
                layer_name,
                depth_index,
                (dims[0] as usize, dims[1] as usize),
                dims[2] as usize,
                dims[3] as usize,
                values.clone(),
            )
            .map_err(|e| bad(format!("entry {}: {e}", entry.name))),
            2 => LayerTensor::fully_connected(
                layer_name,
                depth_index,
                dims[0] as usize,
                dims[1] as usize,
                values.clone(),
            )
            .map_err(|e| bad(format!("entry {}: {e}", entry.name))),
            other => Err(StorageError::WrongRank {
                name: entry.name.clone(),
                expected: "2 or 4",
                got: other as u8,
            }),
        },
        EntryData::Sparse { .. } => Err(StorageError::WrongEntryKind {
            name: entry.name.clone(),
            expected: "dense",
        }),
    }
}

/// Serializes a report as pretty-printed JSON.
pub fn write_report(report: &CompressionReport) -> String {
    serde_json::to_string_pretty(report).expect("reports contain only serializable values")
}

/// Parses and validates a report document.
pub fn read_report(document: &str) -> Result<CompressionReport, StorageError> {
    serde_json::from_str(document).map_err(|e| StorageError::ReportSchema(e.to_string()))
}
