//! Serialization: raw `.f32` tensor files, the checkpoint container shared by
//! codec/diffusion/baseline models, and content hashing.
//!
//! Tensor files are raw little-endian IEEE-754 float32, row-major; shapes live
//! only in the manifest or container header. All writes are atomic
//! (write-temp-then-rename).

use crate::error::{Result, SaiiError};
use ndarray::{Array1, Array2, Array4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Writes bytes via a temp file in the same directory and renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp: PathBuf = dir.to_path_buf();
    let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or("tensor");
    tmp.push(format!(".{stem}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn f64s_to_f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn f32_bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 4 != 0 {
        return Err(SaiiError::Format(format!(
            "f32 buffer length {} not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes a 2D field as raw little-endian f32, row-major.
pub fn write_f32_grid(path: &Path, values: &Array2<f64>) -> Result<()> {
    atomic_write(path, &f64s_to_f32_bytes(values.iter().cloned()))
}

/// Reads a raw f32 file into the declared shape.
pub fn read_f32_grid(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path)?;
    let vals = f32_bytes_to_f64s(&bytes)?;
    if vals.len() != rows * cols {
        return Err(SaiiError::Format(format!(
            "{}: expected {}x{} = {} values, file holds {}",
            path.display(),
            rows,
            cols,
            rows * cols,
            vals.len()
        )));
    }
    Array2::from_shape_vec((rows, cols), vals).map_err(|e| SaiiError::Format(e.to_string()))
}

/// A named tensor inside a checkpoint container.
#[derive(Debug, Clone)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn from_array4(name: impl Into<String>, a: &Array4<f64>) -> Self {
        let (d0, d1, d2, d3) = a.dim();
        Self {
            name: name.into(),
            shape: vec![d0, d1, d2, d3],
            data: a.iter().cloned().collect(),
        }
    }

    pub fn from_array1(name: impl Into<String>, a: &Array1<f64>) -> Self {
        Self { name: name.into(), shape: vec![a.len()], data: a.to_vec() }
    }

    pub fn to_array4(&self) -> Result<Array4<f64>> {
        if self.shape.len() != 4 {
            return Err(SaiiError::Format(format!(
                "tensor {} has rank {}, expected 4",
                self.name,
                self.shape.len()
            )));
        }
        Array4::from_shape_vec(
            (self.shape[0], self.shape[1], self.shape[2], self.shape[3]),
            self.data.clone(),
        )
        .map_err(|e| SaiiError::Format(e.to_string()))
    }

    pub fn to_array1(&self) -> Result<Array1<f64>> {
        Ok(Array1::from_vec(self.data.clone()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorIndexEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContainerHeader {
    format: String,
    meta: serde_json::Value,
    tensors: Vec<TensorIndexEntry>,
}

/// Writes a checkpoint container: `u64` little-endian header length, JSON
/// header, then concatenated f32 blobs.
pub fn write_container(
    path: &Path,
    format: &str,
    meta: &serde_json::Value,
    tensors: &[NamedTensor],
) -> Result<()> {
    let mut index = Vec::with_capacity(tensors.len());
    let mut data = Vec::new();
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(SaiiError::Format(format!(
                "tensor {}: shape {:?} vs {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        let offset = data.len();
        data.extend(f64s_to_f32_bytes(t.data.iter().cloned()));
        index.push(TensorIndexEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            len: t.data.len(),
        });
    }
    let header = ContainerHeader { format: format.to_string(), meta: meta.clone(), tensors: index };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + header_bytes.len() + data.len());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&data);
    atomic_write(path, &out)
}

/// Reads a container, checking the format string.
pub fn read_container(
    path: &Path,
    expected_format: &str,
) -> Result<(serde_json::Value, Vec<NamedTensor>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 {
        return Err(SaiiError::Format(format!("{}: truncated container", path.display())));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(SaiiError::Format(format!("{}: truncated header", path.display())));
    }
    let header: ContainerHeader = serde_json::from_slice(&bytes[8..8 + header_len])?;
    if header.format != expected_format {
        return Err(SaiiError::Format(format!(
            "{}: format {:?}, expected {:?}",
            path.display(),
            header.format,
            expected_format
        )));
    }
    let data = &bytes[8 + header_len..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let end = e.offset + 4 * e.len;
        if end > data.len() {
            return Err(SaiiError::Format(format!(
                "{}: tensor {} overruns data section",
                path.display(),
                e.name
            )));
        }
        tensors.push(NamedTensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data: f32_bytes_to_f64s(&data[e.offset..end])?,
        });
    }
    Ok((header.meta, tensors))
}

/// SHA-256 of a file, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn f32_grid_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.f32");
        let a = Array2::from_shape_fn((5, 7), |(i, j)| (i * 7 + j) as f64 * 0.125);
        write_f32_grid(&path, &a).unwrap();
        let back = read_f32_grid(&path, 5, 7).unwrap();
        assert_eq!(a, back); // values exactly representable in f32
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.f32");
        write_f32_grid(&path, &Array2::zeros((3, 3))).unwrap();
        assert!(read_f32_grid(&path, 4, 4).is_err());
    }

    #[test]
    fn container_roundtrip_preserves_names_shapes_meta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let t1 = NamedTensor {
            name: "enc.w".into(),
            shape: vec![2, 1, 3, 3],
            data: (0..18).map(|v| v as f64 * 0.5).collect(),
        };
        let t2 = NamedTensor { name: "enc.b".into(), shape: vec![2], data: vec![1.0, -2.0] };
        let meta = serde_json::json!({"width": 16, "note": "test"});
        write_container(&path, "saii-codec/1", &meta, &[t1.clone(), t2.clone()]).unwrap();
        let (meta_back, tensors) = read_container(&path, "saii-codec/1").unwrap();
        assert_eq!(meta_back["width"], 16);
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].name, "enc.w");
        assert_eq!(tensors[0].shape, vec![2, 1, 3, 3]);
        assert_eq!(tensors[0].data, t1.data);
        assert_eq!(tensors[1].data, t2.data);
    }

    #[test]
    fn format_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_container(&path, "saii-codec/1", &serde_json::json!({}), &[]).unwrap();
        assert!(read_container(&path, "saii-diffusion/1").is_err());
    }

    #[test]
    fn hashing_is_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        atomic_write(&p1, b"hello").unwrap();
        atomic_write(&p2, b"hello").unwrap();
        assert_eq!(sha256_file(&p1).unwrap(), sha256_file(&p2).unwrap());
        atomic_write(&p2, b"world").unwrap();
        assert_ne!(sha256_file(&p1).unwrap(), sha256_file(&p2).unwrap());
    }
}
