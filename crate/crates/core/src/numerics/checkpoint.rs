//! Flat checkpoint directory: `manifest.json` plus one little-endian `f64`
//! blob per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
    /// Free-form owner data (trainer state, config, ...).
    pub metadata: serde_json::Value,
}

fn blob_name(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.bin")
}

pub fn write_dir(dir: &Path, step: u64, tensors: &[(String, &Tensor)], metadata: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let file = blob_name(name);
        let mut bytes = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(&file), bytes)?;
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        step,
        tensors: entries,
        metadata,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_dir(dir: &Path) -> Result<(Manifest, Vec<(String, Tensor)>)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Incompatible(format!(
            "checkpoint format {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let bytes = fs::read(dir.join(&entry.file))?;
        let expected: usize = entry.shape.iter().product();
        if bytes.len() != expected * 8 {
            return Err(Error::Incompatible(format!(
                "{}: {} bytes for shape {:?}",
                entry.file,
                bytes.len(),
                entry.shape
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)?));
    }
    Ok((manifest, out))
}
