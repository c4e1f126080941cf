//! `OSHX` checkpoint files.
//!
//! Layout: magic `OSHX`, `u32` LE format version, `u64` LE metadata length,
//! UTF-8 JSON metadata, then every parameter as LE `f32` values in index
//! order. The metadata records the architecture spec, class names, task,
//! normalisation statistics and a parameter index with element offsets.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};

use super::graph::ModelGraph;
use super::spec::ArchSpec;

pub const MAGIC: &[u8; 4] = b"OSHX";
pub const VERSION: u32 = 1;

/// Run context stored next to the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub class_names: Vec<String>,
    pub task: Option<String>,
    pub normalization: Option<NormStats>,
    pub split_seed: Option<u64>,
    /// Train/val/test fractions used with `split_seed`.
    pub split_fractions: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f32` elements from the start of the blob section.
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Metadata {
    arch: ArchSpec,
    #[serde(flatten)]
    info: RunInfo,
    params: Vec<IndexEntry>,
}

/// A loaded model together with its run context.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelGraph<f32>,
    pub info: RunInfo,
}

pub fn encode(model: &ModelGraph<f32>, info: &RunInfo) -> Result<Vec<u8>> {
    let mut offset = 0;
    let params = model
        .params()
        .iter()
        .map(|p| {
            let e = IndexEntry { name: p.name.clone(), shape: p.tensor.shape().to_vec(), offset, trainable: p.tensor.requires_grad() };
            offset += p.tensor.numel();
            e
        })
        .collect();
    let meta = serde_json::to_vec(&Metadata { arch: model.spec().clone(), info: info.clone(), params })?;
    let mut out = Vec::with_capacity(16 + meta.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for p in model.params().iter() {
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing OSHX magic".into()));
    }
    if bytes.len() < 16 {
        return Err(Error::Corruption(format!("header truncated at {} bytes", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported format version {version} (expected {VERSION})")));
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let blob_start = 16usize
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Corruption(format!("metadata length {meta_len} exceeds file size {}", bytes.len())))?;
    let meta: Metadata = serde_json::from_slice(&bytes[16..blob_start])
        .map_err(|e| Error::Corruption(format!("metadata is not valid: {e}")))?;
    let blob = &bytes[blob_start..];
    let expected: usize = meta.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if blob.len() != 4 * expected {
        return Err(Error::Corruption(format!(
            "parameter section holds {} bytes, index describes {}",
            blob.len(),
            4 * expected
        )));
    }
    let mut model = ModelGraph::<f32>::skeleton(&meta.arch)?;
    if model.params().len() != meta.params.len() {
        return Err(Error::Corruption(format!(
            "index lists {} tensors, {} needs {}",
            meta.params.len(),
            meta.arch.name,
            model.params().len()
        )));
    }
    for (i, e) in meta.params.iter().enumerate() {
        let p = model.params().at(i);
        if p.name != e.name || p.tensor.shape() != e.shape.as_slice() {
            return Err(Error::Corruption(format!(
                "index entry {i} is {} {:?}, expected {} {:?}",
                e.name,
                e.shape,
                p.name,
                p.tensor.shape()
            )));
        }
        let n = p.tensor.numel();
        let end = e.offset.checked_add(n).filter(|&end| end <= expected);
        let Some(end) = end else {
            return Err(Error::Corruption(format!("offset of {} is out of range", e.name)));
        };
        let data = blob[4 * e.offset..4 * end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        model.params_mut().set_data(i, data)?;
        model.params_mut().set_trainable(i, e.trainable);
    }
    Ok(Checkpoint { model, info: meta.info })
}

/// Writes atomically: a temporary sibling file is renamed over `path`.
pub fn save(model: &ModelGraph<f32>, info: &RunInfo, path: &Path) -> Result<()> {
    let bytes = encode(model, info)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint that must classify exactly `num_classes` classes.
pub fn load_expecting(path: &Path, num_classes: usize) -> Result<Checkpoint> {
    let ck = load(path)?;
    if ck.model.num_classes() != num_classes {
        return Err(Error::SpecMismatch(format!(
            "{} was trained for {} classes, this context needs {num_classes}",
            path.display(),
            ck.model.num_classes()
        )));
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArchName, Scale};

    fn model() -> ModelGraph<f32> {
        ModelGraph::build(&ArchSpec::preset(ArchName::Hybrid, Scale::Tiny, 2), 7).unwrap()
    }

    fn info() -> RunInfo {
        RunInfo {
            class_names: vec!["NT".into(), "VT".into()],
            task: Some("binary".into()),
            normalization: Some(NormStats { mean: [0.1, 0.2, 0.3], std: [0.5, 0.25, 0.125] }),
            split_seed: Some(42),
            split_fractions: Some([0.6, 0.15, 0.25]),
        }
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let m = model();
        let a = encode(&m, &info()).unwrap();
        let back = decode(&a).unwrap();
        assert_eq!(back.info, info());
        assert_eq!(back.model.spec(), m.spec());
        assert_eq!(back.model.params().checksum(), m.params().checksum());
        assert_eq!(back.model.count_parameters(), m.count_parameters());
        assert_eq!(encode(&back.model, &back.info).unwrap(), a);
    }

    #[test]
    fn failures_are_typed() {
        let bytes = encode(&model(), &info()).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Corruption(_))));
        assert!(matches!(decode(&bytes[..20]), Err(Error::Corruption(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn class_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.oshx");
        save(&model(), &info(), &path).unwrap();
        assert!(load_expecting(&path, 2).is_ok());
        assert!(matches!(load_expecting(&path, 4), Err(Error::SpecMismatch(_))));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
