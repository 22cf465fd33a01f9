//! Parameter checkpoints: flat little-endian doubles plus a JSON manifest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::netcore::mlp::ParamStore;
use crate::scalar::Scalar;

/// Writes `store` as little-endian f64 to `bin_path` and a manifest with
/// segment layout plus caller extras to `manifest_path`. Writes are
/// atomic (temp file + rename).
pub fn save_checkpoint<T: Scalar>(
    bin_path: &Path,
    manifest_path: &Path,
    store: &ParamStore<T>,
    seed: u64,
    step: usize,
    extra: serde_json::Value,
) -> Result<()> {
    let tmp = bin_path.with_extension("bin.tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        for &x in store.data() {
            f.write_all(&x.as_f64().to_le_bytes())?;
        }
        f.flush()?;
    }
    std::fs::rename(&tmp, bin_path)?;

    let segments: Vec<serde_json::Value> = store
        .segments()
        .iter()
        .map(|s| {
            serde_json::json!({
                "name": s.name,
                "shape": s.shape,
                "offset": s.offset,
                "len": s.len,
            })
        })
        .collect();
    let manifest = serde_json::json!({
        "format": "tenframe-checkpoint-v1",
        "n_params": store.len(),
        "segments": segments,
        "seed": seed,
        "step": step,
        "extra": extra,
    });
    let tmp = manifest_path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&manifest).expect("manifest"))?;
    std::fs::rename(&tmp, manifest_path)?;
    Ok(())
}

/// Raw checkpoint contents. Reconstructing models from the manifest is
/// the caller's job; this only restores the flat parameter vector.
pub struct Checkpoint {
    pub params: Vec<f64>,
    pub manifest: serde_json::Value,
}

pub fn load_checkpoint(bin_path: &Path, manifest_path: &Path) -> Result<Checkpoint> {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest_path)?).map_err(|e| {
            Error::Format {
                path: manifest_path.display().to_string(),
                msg: e.to_string(),
            }
        })?;
    let mut bytes = Vec::new();
    std::fs::File::open(bin_path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format {
            path: bin_path.display().to_string(),
            msg: "length not a multiple of 8".to_string(),
        });
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(n) = manifest.get("n_params").and_then(|v| v.as_u64()) {
        if n as usize != params.len() {
            return Err(Error::Format {
                path: bin_path.display().to_string(),
                msg: format!("expected {n} params, file holds {}", params.len()),
            });
        }
    }
    Ok(Checkpoint { params, manifest })
}
