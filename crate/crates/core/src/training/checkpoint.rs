use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ParamSet, Tensor};
use crate::model::{param_shapes, ModelConfig};
use crate::training::{EvalPoint, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub history: Vec<EvalPoint>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub history: Vec<EvalPoint>,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn manifest(&self) -> Manifest {
        let mut offset = 0;
        let tensors = self
            .params
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.len();
                e
            })
            .collect();
        Manifest {
            version: CHECKPOINT_VERSION,
            model: self.model.clone(),
            train: self.train.clone(),
            step: self.step,
            history: self.history.clone(),
            tensors,
        }
    }

    /// Little-endian f32 values of every tensor, in parameter order.
    pub fn blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Writes `manifest.json` and `params.bin` into `dir`, creating it if needed.
pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = serde_json::to_string_pretty(&ckpt.manifest()).expect("manifest serializes");
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let bpath = dir.join(BLOB_FILE);
    fs::write(&bpath, ckpt.blob()).map_err(|e| Error::io(&bpath, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let bpath = dir.join(BLOB_FILE);
    let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    decode(&text, &blob)
}

/// Rebuilds a checkpoint from manifest text and blob bytes.
pub fn decode(manifest: &str, blob: &[u8]) -> Result<Checkpoint> {
    let version = serde_json::from_str::<serde_json::Value>(manifest)
        .map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::validation("manifest has no version"))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let m: Manifest = serde_json::from_str(manifest).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    m.model.validate()?;

    let expected = param_shapes(&m.model);
    if expected.len() != m.tensors.len() {
        return Err(Error::validation(format!(
            "manifest lists {} tensors, configuration needs {}",
            m.tensors.len(),
            expected.len()
        )));
    }
    let mut offset = 0;
    for ((name, shape), entry) in expected.iter().zip(&m.tensors) {
        if *name != entry.name {
            return Err(Error::validation(format!(
                "manifest tensor `{}` where `{name}` was expected",
                entry.name
            )));
        }
        if *shape != entry.shape {
            return Err(Error::ShapeMismatch {
                name: name.clone(),
                expected: shape.clone(),
                found: entry.shape.clone(),
            });
        }
        if entry.offset != offset {
            return Err(Error::validation(format!(
                "tensor `{name}` at offset {}, expected {offset}",
                entry.offset
            )));
        }
        offset += 4 * shape.iter().product::<usize>();
    }
    if blob.len() < offset {
        return Err(Error::Truncated {
            expected: offset,
            found: blob.len(),
        });
    }
    if blob.len() > offset {
        return Err(Error::validation(format!(
            "blob has {} trailing bytes",
            blob.len() - offset
        )));
    }

    let mut params = ParamSet::new();
    for entry in &m.tensors {
        let n: usize = entry.shape.iter().product();
        let data = blob[entry.offset..entry.offset + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.insert(&entry.name, Tensor::new(entry.shape.clone(), data)?)?;
    }
    Ok(Checkpoint {
        model: m.model,
        train: m.train,
        step: m.step,
        history: m.history,
        params,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::init_params;

    fn small() -> ModelConfig {
        ModelConfig {
            d_frame: 4,
            d_app: 3,
            spatial_levels: vec![2],
            hidden_dim: 3,
            embed_dim: 4,
            attn_dim: 2,
            num_classes: 2,
            ..ModelConfig::default()
        }
    }

    fn random_ckpt() -> Checkpoint {
        let model = small();
        let mut params = init_params(&model, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for id in params.ids() {
            for v in params.get_mut(id).data_mut() {
                *v =
                    f32::from_bits(rng.random_range(0..0x7f00_0000u32)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
        }
        Checkpoint {
            model,
            train: TrainConfig::default(),
            step: 42,
            history: vec![
                EvalPoint {
                    step: 0,
                    train_loss: None,
                    val_map: 0.1,
                },
                EvalPoint {
                    step: 40,
                    train_loss: Some(1.5),
                    val_map: 0.25,
                },
            ],
            params,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = random_ckpt();
        save_checkpoint(&ckpt, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, ckpt);
        let first = fs::read(dir.path().join(BLOB_FILE)).unwrap();
        let again = tempfile::tempdir().unwrap();
        save_checkpoint(&back, again.path()).unwrap();
        assert_eq!(fs::read(again.path().join(BLOB_FILE)).unwrap(), first);
        assert_eq!(
            fs::read(again.path().join(MANIFEST_FILE)).unwrap(),
            fs::read(dir.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn edited_hidden_dim_is_a_shape_mismatch() {
        let ckpt = random_ckpt();
        let mut m = ckpt.manifest();
        m.model.hidden_dim = 5;
        let text = serde_json::to_string(&m).unwrap();
        assert!(matches!(decode(&text, &ckpt.blob()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn truncated_blob() {
        let ckpt = random_ckpt();
        let text = serde_json::to_string(&ckpt.manifest()).unwrap();
        let mut blob = ckpt.blob();
        blob.pop();
        assert!(matches!(
            decode(&text, &blob),
            Err(Error::Truncated { expected, found }) if found + 1 == expected
        ));
    }

    #[test]
    fn wrong_version() {
        let ckpt = random_ckpt();
        let mut m = ckpt.manifest();
        m.version = 7;
        let text = serde_json::to_string(&m).unwrap();
        assert!(matches!(
            decode(&text, &ckpt.blob()),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn garbage_manifest_is_a_parse_error() {
        assert!(matches!(decode("{not json", &[]), Err(Error::Parse { .. })));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Io { .. })));
    }
}
