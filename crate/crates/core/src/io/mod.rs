//! Flat binary array files with a JSON sidecar header.
//!
//! A fixture named `stem` is stored as `stem.json` (header) and `stem.bin`
//! (little-endian `f64` payload). The header lists each array's name, shape
//! and byte offset into the payload, plus a free-form `meta` object.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, SsbError};

pub const FLAT_FORMAT: &str = "ssb-flat";
pub const FLAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FlatArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl FlatArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(SsbError::shape(
                format!("{expected} elements for shape {shape:?}"),
                format!("{}", data.len()),
            ));
        }
        Ok(FlatArray {
            name: name.into(),
            shape,
            data,
        })
    }

    pub fn from_array<D: ndarray::Dimension>(name: impl Into<String>, a: &ndarray::Array<f64, D>) -> Self {
        FlatArray {
            name: name.into(),
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array2(&self) -> Result<ndarray::Array2<f64>> {
        if self.shape.len() != 2 {
            return Err(SsbError::shape("rank-2 array", format!("shape {:?}", self.shape)));
        }
        ndarray::Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data.clone())
            .map_err(|e| SsbError::arg(e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
    meta: Value,
    arrays: Vec<Entry>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn write_flat(stem: &Path, meta: Value, arrays: &[FlatArray]) -> Result<()> {
    let (json_path, bin_path) = paths(stem);
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(arrays.len());
    for a in arrays {
        entries.push(Entry {
            name: a.name.clone(),
            shape: a.shape.clone(),
            offset: payload.len() as u64,
        });
        for v in &a.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format: FLAT_FORMAT.into(),
        version: FLAT_VERSION,
        dtype: "f64-le".into(),
        meta,
        arrays: entries,
    };
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SsbError::io(dir, e))?;
    }
    fs::write(&bin_path, &payload).map_err(|e| SsbError::io(&bin_path, e))?;
    let text = serde_json::to_string_pretty(&header)?;
    fs::write(&json_path, text + "\n").map_err(|e| SsbError::io(&json_path, e))?;
    Ok(())
}

pub fn read_flat(stem: &Path) -> Result<(Value, Vec<FlatArray>)> {
    let (json_path, bin_path) = paths(stem);
    let text = fs::read_to_string(&json_path).map_err(|e| SsbError::io(&json_path, e))?;
    let header: Header = serde_json::from_str(&text)?;
    if header.format != FLAT_FORMAT || header.dtype != "f64-le" {
        return Err(SsbError::Format {
            offset: 0,
            message: format!("unsupported flat format {} / {}", header.format, header.dtype),
        });
    }
    if header.version != FLAT_VERSION {
        return Err(SsbError::Format {
            offset: 0,
            message: format!("unsupported flat version {}", header.version),
        });
    }
    let payload = fs::read(&bin_path).map_err(|e| SsbError::io(&bin_path, e))?;
    let mut arrays = Vec::with_capacity(header.arrays.len());
    for e in header.arrays {
        let count: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + 8 * count;
        if end > payload.len() {
            return Err(SsbError::Format {
                offset: payload.len() as u64,
                message: format!("array '{}' needs bytes {start}..{end}", e.name),
            });
        }
        let data = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        arrays.push(FlatArray {
            name: e.name,
            shape: e.shape,
            data,
        });
    }
    Ok((header.meta, arrays))
}

/// Looks up an array by name.
pub fn find<'a>(arrays: &'a [FlatArray], name: &str) -> Result<&'a FlatArray> {
    arrays
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| SsbError::Format {
            offset: 0,
            message: format!("missing array '{name}'"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("sub/fixture");
        let a = FlatArray::new(
            "a",
            vec![2, 3],
            vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5, 1e300, -7.25],
        )
        .unwrap();
        let b = FlatArray::new("b", vec![1], vec![std::f64::consts::PI]).unwrap();
        write_flat(&stem, serde_json::json!({"k": 2}), &[a.clone(), b.clone()]).unwrap();
        let (meta, arrays) = read_flat(&stem).unwrap();
        assert_eq!(meta["k"], 2);
        assert_eq!(arrays.len(), 2);
        for (x, y) in arrays.iter().zip([a, b]) {
            assert_eq!(x.name, y.name);
            let xb: Vec<u64> = x.data.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("f");
        let a = FlatArray::new("a", vec![4], vec![1.0; 4]).unwrap();
        write_flat(&stem, Value::Null, &[a]).unwrap();
        let bin = stem.with_extension("bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..20]).unwrap();
        assert!(matches!(
            read_flat(&stem),
            Err(SsbError::Format { offset: 20, .. })
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(FlatArray::new("a", vec![2, 2], vec![0.0; 3]).is_err());
    }
}
