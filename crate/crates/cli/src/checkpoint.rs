//! Checkpoint directories: `manifest.json` plus one little-endian `f64`
//! file per parameter tensor. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uipc_core::data::Fingerprint;
use uipc_core::linalg::Matrix;
use uipc_core::train::TrainConfig;
use uipc_core::{Model, ModelKind, ModelShape};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: u32,
    /// Model name as given on the command line, e.g. `uipc-mf-l1`.
    pub label: String,
    pub kind: ModelKind,
    pub shape: ModelShape,
    pub fingerprint: String,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_validation_hr: f64,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointManifest {
    pub fn fingerprint(&self) -> Result<Fingerprint> {
        Fingerprint::parse_hex(&self.fingerprint).map_err(|e| anyhow!("checkpoint fingerprint: {e}"))
    }
}

/// What a checkpoint records besides the tensors.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub label: String,
    pub fingerprint: Fingerprint,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_validation_hr: f64,
}

fn encode(m: &Matrix) -> Vec<u8> {
    m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn save(dir: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tensors = Vec::new();
    for (name, m) in model.tensors() {
        let bytes = encode(m);
        let file = format!("{name}.bin");
        fs::write(dir.join(&file), &bytes)?;
        tensors.push(TensorEntry {
            name: name.to_owned(),
            rows: m.rows(),
            cols: m.cols(),
            file,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = CheckpointManifest {
        format: FORMAT_VERSION,
        label: meta.label.clone(),
        kind: model.kind(),
        shape: model.shape(),
        fingerprint: meta.fingerprint.to_string(),
        config: meta.config.clone(),
        best_epoch: meta.best_epoch,
        best_validation_hr: meta.best_validation_hr,
        tensors,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST), json + "\n")?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("{} is not a checkpoint", dir.display()))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
    if manifest.format != FORMAT_VERSION {
        bail!("{}: unsupported checkpoint format {}", path.display(), manifest.format);
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(Model, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            bail!("{}: checksum mismatch", path.display());
        }
        if bytes.len() != entry.rows * entry.cols * 8 {
            bail!("{}: expected {}x{} values, found {} bytes", path.display(), entry.rows, entry.cols, bytes.len());
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Matrix::from_vec(entry.rows, entry.cols, data).map_err(|e| anyhow!("{}: {e}", entry.name))?);
    }
    let model = Model::from_tensors(manifest.kind, &manifest.shape, tensors)
        .map_err(|e| anyhow!("{}: {e}", dir.display()))?;
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let shape = ModelShape {
            n_users: 5,
            n_items: 7,
            dim: 4,
            n_user_prototypes: 3,
            n_item_prototypes: 2,
            n_anchors: 2,
        };
        let fp = Fingerprint::of_keys(&["a".into()], &["b".into()]);
        for kind in ModelKind::ALL {
            let model = Model::init(kind, &shape, 11).unwrap();
            let d = tempfile::tempdir().unwrap();
            let meta = CheckpointMeta {
                label: kind.name().into(),
                fingerprint: fp,
                config: TrainConfig::default(),
                best_epoch: 3,
                best_validation_hr: 0.1 + 0.2,
            };
            save(d.path(), &model, &meta).unwrap();
            let (back, manifest) = load(d.path()).unwrap();
            assert_eq!(back, model);
            assert_eq!(manifest.fingerprint().unwrap(), fp);
            assert_eq!(manifest.best_validation_hr.to_bits(), (0.1f64 + 0.2).to_bits());
            assert_eq!(manifest.config, TrainConfig::default());
        }
    }

    #[test]
    fn corrupted_tensor_is_rejected() {
        let shape = ModelShape {
            n_users: 2,
            n_items: 2,
            dim: 2,
            n_user_prototypes: 1,
            n_item_prototypes: 1,
            n_anchors: 1,
        };
        let model = Model::init(ModelKind::Mf, &shape, 1).unwrap();
        let d = tempfile::tempdir().unwrap();
        let meta = CheckpointMeta {
            label: "mf".into(),
            fingerprint: Fingerprint([0; 32]),
            config: TrainConfig::default(),
            best_epoch: 1,
            best_validation_hr: 0.0,
        };
        save(d.path(), &model, &meta).unwrap();
        let entry = &read_manifest(d.path()).unwrap().tensors[0];
        fs::write(d.path().join(&entry.file), [0u8; 8]).unwrap();
        assert!(load(d.path()).unwrap_err().to_string().contains("checksum"));
    }
}
