//! Checkpoint persistence.
//!
//! One file per checkpoint: a JSON header line describing the layout, then
//! every parameter tensor as little-endian f64 in canonical visit order.
//! Values widen to f64 on disk, which is lossless for both supported scalar
//! types; loading demands the precision that was saved so nothing narrows
//! silently. Writes go through a temp file and rename, so a crash never
//! leaves a half-written checkpoint under the real name.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::{ModelConfig, Scalar};

const FORMAT: &str = "seq2seq-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format at {path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> CheckpointError {
    CheckpointError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
    step: u64,
    config: ModelConfig,
    tensors: Vec<TensorMeta>,
}

/// Canonical file name for the checkpoint taken at `step`.
pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step-{step:06}.ckpt"))
}

/// Write `params` to `dir`, returning the checkpoint path.
pub fn save_checkpoint<F: Scalar>(
    dir: &Path,
    params: &Parameters<F>,
    step: u64,
) -> Result<PathBuf, CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tensors = Vec::new();
    params.visit_slices(&mut |name, slice| {
        tensors.push(TensorMeta {
            name: name.to_string(),
            len: slice.len(),
        })
    });
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        dtype: F::NAME.to_string(),
        step,
        config: params.config.clone(),
        tensors,
    };
    let mut blob = Vec::with_capacity(params.param_count() * 8);
    params.visit_slices(&mut |_, slice| {
        for &v in slice {
            blob.extend_from_slice(&v.to_f64().to_le_bytes());
        }
    });

    let path = checkpoint_path(dir, step);
    let tmp = dir.join(format!(".step-{step:06}.ckpt.tmp"));
    {
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &header)
            .map_err(|e| format_err(&tmp, format!("header encode: {e}")))?;
        w.write_all(b"\n").map_err(io_err(&tmp))?;
        w.write_all(&blob).map_err(io_err(&tmp))?;
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(path)
}

/// Load a checkpoint saved with the same scalar type.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<(Parameters<F>, u64), CheckpointError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut header_line = String::new();
    reader.read_line(&mut header_line).map_err(io_err(path))?;
    let header: Header = serde_json::from_str(header_line.trim_end())
        .map_err(|e| format_err(path, format!("header decode: {e}")))?;
    if header.format != FORMAT {
        return Err(format_err(path, format!("unknown format {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(format_err(path, format!("unsupported version {}", header.version)));
    }
    if header.dtype != F::NAME {
        return Err(format_err(
            path,
            format!("saved as {}, asked to load as {}", header.dtype, F::NAME),
        ));
    }
    header
        .config
        .validate()
        .map_err(|e| format_err(path, format!("bad config: {e}")))?;

    let mut params = Parameters::<F>::zeros(&header.config);
    let mut expected = Vec::new();
    params.visit_slices(&mut |name, slice| expected.push((name.to_string(), slice.len())));
    if expected.len() != header.tensors.len() {
        return Err(format_err(
            path,
            format!(
                "tensor count {} does not match config ({} expected)",
                header.tensors.len(),
                expected.len()
            ),
        ));
    }
    for ((name, len), meta) in expected.iter().zip(&header.tensors) {
        if name != &meta.name || *len != meta.len {
            return Err(format_err(
                path,
                format!(
                    "tensor mismatch: header has {} ({}), config implies {} ({})",
                    meta.name, meta.len, name, len
                ),
            ));
        }
    }

    let total: usize = expected.iter().map(|(_, len)| len).sum();
    let mut blob = vec![0u8; total * 8];
    reader.read_exact(&mut blob).map_err(io_err(path))?;
    let mut extra = [0u8; 1];
    let trailing = reader.read(&mut extra).map_err(io_err(path))?;
    if trailing != 0 {
        return Err(format_err(path, "trailing data after tensors"));
    }

    let mut cursor = 0;
    params.visit_slices_mut(&mut |_, slice| {
        for v in slice.iter_mut() {
            let bytes: [u8; 8] = blob[cursor..cursor + 8].try_into().expect("8-byte chunk");
            *v = F::from_f64(f64::from_le_bytes(bytes));
            cursor += 8;
        }
    });
    Ok((params, header.step))
}

/// Checkpoints in `dir`, sorted by step.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>, CheckpointError> {
    let mut found = Vec::new();
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(step_str) = name.strip_prefix("step-").and_then(|n| n.strip_suffix(".ckpt"))
        else {
            continue;
        };
        let Ok(step) = step_str.parse::<u64>() else {
            continue;
        };
        found.push((step, entry.path()));
    }
    found.sort();
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::model::{forward, Mode};
    use crate::seq2seq::params::init_params;
    use ndarray::array;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 13,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 12,
            max_len: 10,
            dropout: 0.0,
        }
    }

    #[test]
    fn round_trip_is_bit_exact_for_both_widths() {
        let dir = tempfile::tempdir().unwrap();
        let src = array![[4u32, 5, 6]];
        let tgt = array![[7u32, 8, 3]];

        let p64 = init_params::<f64>(&tiny(), 9).unwrap();
        let path = save_checkpoint(dir.path(), &p64, 42).unwrap();
        let (r64, step) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(step, 42);
        assert_eq!(r64, p64);
        let (a, _) = forward(&p64, &src, &tgt, Mode::Eval).unwrap();
        let (b, _) = forward(&r64, &src, &tgt, Mode::Eval).unwrap();
        assert_eq!(a, b);

        let p32 = init_params::<f32>(&tiny(), 9).unwrap();
        let path32 = save_checkpoint(dir.path(), &p32, 43).unwrap();
        let (r32, _) = load_checkpoint::<f32>(&path32).unwrap();
        assert_eq!(r32, p32);
    }

    #[test]
    fn refuses_other_width() {
        let dir = tempfile::tempdir().unwrap();
        let p64 = init_params::<f64>(&tiny(), 1).unwrap();
        let path = save_checkpoint(dir.path(), &p64, 5).unwrap();
        let err = load_checkpoint::<f32>(&path).unwrap_err();
        assert!(matches!(err, CheckpointError::Format { .. }));
        assert!(err.to_string().contains("saved as f64"));
    }

    #[test]
    fn detects_truncation_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params::<f64>(&tiny(), 2).unwrap();
        let path = save_checkpoint(dir.path(), &p, 7).unwrap();

        let bytes = fs::read(&path).unwrap();
        let cut = dir.path().join("step-000008.ckpt");
        fs::write(&cut, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&cut),
            Err(CheckpointError::Io { .. })
        ));

        let padded = dir.path().join("step-000009.ckpt");
        let mut grown = bytes.clone();
        grown.extend_from_slice(&[0u8; 8]);
        fs::write(&padded, &grown).unwrap();
        let err = load_checkpoint::<f64>(&padded).unwrap_err();
        assert!(err.to_string().contains("trailing data"));

        let junk = dir.path().join("step-000010.ckpt");
        fs::write(&junk, b"not a checkpoint\n").unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&junk),
            Err(CheckpointError::Format { .. })
        ));
    }

    #[test]
    fn listing_sorts_by_step_and_skips_strangers() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params::<f64>(&tiny(), 3).unwrap();
        save_checkpoint(dir.path(), &p, 30).unwrap();
        save_checkpoint(dir.path(), &p, 4).unwrap();
        save_checkpoint(dir.path(), &p, 100).unwrap();
        fs::write(dir.path().join("notes.txt"), "hi").unwrap();
        let listed = list_checkpoints(dir.path()).unwrap();
        let steps: Vec<u64> = listed.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![4, 30, 100]);
        // No temp files left behind by the atomic writes.
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert!(names.iter().all(|n| !n.ends_with(".tmp")));
    }
}
