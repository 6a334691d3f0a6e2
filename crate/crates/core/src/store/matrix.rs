use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::{norm, Scalar};

pub const MAGIC: &[u8; 8] = b"EMBMAT01";
const HEADER_LEN: usize = 16;
const ZERO_ROW_EPS: f64 = 1e-12;

/// Dense row-major embedding matrix keyed by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    ids: Vec<String>,
    values: Array2<T>,
    normalized: bool,
    index: HashMap<String, usize>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    /// Builds a matrix, checking id uniqueness, shape and finiteness.
    pub fn new(ids: Vec<String>, values: Array2<T>) -> Result<Self> {
        if ids.len() != values.nrows() {
            return Err(Error::IdCountMismatch {
                ids: ids.len(),
                rows: values.nrows(),
            });
        }
        if values.ncols() == 0 {
            return Err(Error::DimMismatch("dim must be positive".into()));
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput { row, col });
            }
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            ids,
            values,
            normalized: false,
            index,
        })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::DimMismatch(format!(
                "row {bad} has length {} but dim is {dim}",
                rows[bad].len()
            )));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::DimMismatch(e.to_string()))?;
        Self::new(ids, values)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.values.row(i)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row_by_id(&self, id: &str) -> Option<ArrayView1<'_, T>> {
        self.index_of(id).map(|i| self.values.row(i))
    }

    /// Sub-matrix with rows in the order of `ids`.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let mut values = Array2::zeros((ids.len(), self.dim()));
        for (out, id) in ids.iter().enumerate() {
            let i = self
                .index_of(id)
                .ok_or_else(|| Error::MissingItem(id.clone()))?;
            values.row_mut(out).assign(&self.values.row(i));
        }
        let mut m = Self::new(ids.to_vec(), values)?;
        m.normalized = self.normalized;
        Ok(m)
    }

    /// Converts to another scalar type (e.g. `f32` storage → `f64` math).
    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            ids: self.ids.clone(),
            values: self.values.mapv(|v| U::lit(v.as_f64())),
            normalized: self.normalized,
            index: self.index.clone(),
        }
    }

    /// Divides every row by its L2 norm.
    pub fn l2_normalize(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for (i, mut row) in values.rows_mut().into_iter().enumerate() {
            let n = norm(row.as_slice().expect("standard layout"));
            if n.as_f64() < ZERO_ROW_EPS {
                return Err(Error::ZeroRow(i));
            }
            row.mapv_inplace(|x| x / n);
        }
        Ok(Self {
            ids: self.ids.clone(),
            values,
            normalized: true,
            index: self.index.clone(),
        })
    }

    /// Writes the binary container and the id sidecar next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.save_with_ids(path, sidecar_ids_path(path))
    }

    pub fn save_with_ids(&self, path: impl AsRef<Path>, ids_path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_matrix_payload(path, self.values.view())?;
        let ids_path = ids_path.as_ref();
        let mut text = String::with_capacity(self.ids.len() * 8);
        for id in &self.ids {
            text.push_str(id);
            text.push('\n');
        }
        fs::write(ids_path, text).map_err(|e| Error::io(ids_path, e))
    }

    /// Loads a matrix and its default `.ids` sidecar. No normalization applied.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::load_with_ids(path, sidecar_ids_path(path))
    }

    pub fn load_with_ids(path: impl AsRef<Path>, ids_path: impl AsRef<Path>) -> Result<Self> {
        let values = read_matrix_payload::<T>(path.as_ref())?;
        let ids_path = ids_path.as_ref();
        let text = fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
        let ids: Vec<String> = text.lines().map(str::to_owned).collect();
        Self::new(ids, values)
    }
}

/// `foo.bin` → `foo.ids`.
pub fn sidecar_ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids")
}

/// Writes only the EMBMAT01 container (header + little-endian f32 payload).
pub fn write_matrix_payload<T: Scalar>(path: &Path, values: ArrayView2<'_, T>) -> Result<()> {
    let (rows, dim) = values.dim();
    let rows32 = u32::try_from(rows).map_err(|_| Error::DimMismatch("too many rows".into()))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::DimMismatch("dim too large".into()))?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&rows32.to_le_bytes())?;
    write(&dim32.to_le_bytes())?;
    for v in values.iter() {
        write(&v.to_storage().to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an EMBMAT01 container into a `rows × dim` array.
pub fn read_matrix_payload<T: Scalar>(path: &Path) -> Result<Array2<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

pub fn decode_matrix<T: Scalar>(bytes: &[u8]) -> Result<Array2<T>> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::DimMismatch("truncated header".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::DimMismatch("header overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::DimMismatch(format!(
            "payload is {} bytes, header declares {rows}x{dim} ({expected} bytes)",
            payload.len()
        )));
    }
    let flat: Vec<T> = payload
        .chunks_exact(4)
        .map(|c| T::from_storage(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Array2::from_shape_vec((rows, dim), flat).map_err(|e| Error::DimMismatch(e.to_string()))
}
