//! Versioned JSON checkpoints: architecture dims plus every stored array
//! by name, flat and row-major. Floats are written in shortest round-trip
//! form, so loading a checkpoint and saving it again reproduces the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::distill::{StudentDims, StudentModel, StudentNet};
use crate::error::{Error, Result};
use crate::repr::{EncoderDims, GruEncoder};
use crate::teacher::{TeacherDims, TeacherNet};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint<D> {
    pub format_version: u32,
    pub kind: String,
    pub dims: D,
    pub arrays: BTreeMap<String, Vec<f64>>,
    pub rng_seed: u64,
    pub training_step: u64,
}

/// A model that can be rebuilt from its dims and named arrays.
pub trait Checkpointable: Sized {
    type Dims: Serialize + DeserializeOwned + Clone;
    const KIND: &'static str;

    fn checkpoint_dims(&self) -> Self::Dims;
    fn zeros_from(dims: &Self::Dims) -> Result<Self>;
    fn named_arrays(&self) -> Vec<(String, &[f64])>;
    fn arrays_in_order_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Checkpointable for TeacherNet {
    type Dims = TeacherDims;
    const KIND: &'static str = "teacher";

    fn checkpoint_dims(&self) -> TeacherDims {
        self.dims()
    }

    fn zeros_from(dims: &TeacherDims) -> Result<Self> {
        TeacherNet::zeros(dims)
    }

    fn named_arrays(&self) -> Vec<(String, &[f64])> {
        self.arrays()
    }

    fn arrays_in_order_mut(&mut self) -> Vec<&mut [f64]> {
        self.arrays_mut()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentModelDims {
    pub net: StudentDims,
    pub encoder: Option<EncoderDims>,
}

impl Checkpointable for StudentModel {
    type Dims = StudentModelDims;
    const KIND: &'static str = "student";

    fn checkpoint_dims(&self) -> StudentModelDims {
        StudentModelDims {
            net: self.net.dims(),
            encoder: self.encoder.as_ref().map(GruEncoder::dims),
        }
    }

    fn zeros_from(dims: &StudentModelDims) -> Result<Self> {
        Ok(StudentModel {
            encoder: dims.encoder.map(GruEncoder::zeros),
            net: StudentNet::zeros(&dims.net)?,
        })
    }

    fn named_arrays(&self) -> Vec<(String, &[f64])> {
        self.arrays()
    }

    fn arrays_in_order_mut(&mut self) -> Vec<&mut [f64]> {
        self.arrays_mut()
    }
}

pub fn to_checkpoint<M: Checkpointable>(model: &M, rng_seed: u64, training_step: u64) -> Checkpoint<M::Dims> {
    Checkpoint {
        format_version: FORMAT_VERSION,
        kind: M::KIND.to_string(),
        dims: model.checkpoint_dims(),
        arrays: model
            .named_arrays()
            .into_iter()
            .map(|(name, a)| (name, a.to_vec()))
            .collect(),
        rng_seed,
        training_step,
    }
}

pub fn from_checkpoint<M: Checkpointable>(ck: &Checkpoint<M::Dims>) -> Result<M> {
    if ck.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            ck.format_version
        )));
    }
    if ck.kind != M::KIND {
        return Err(Error::Checkpoint(format!("expected a {} checkpoint, found `{}`", M::KIND, ck.kind)));
    }
    let mut model = M::zeros_from(&ck.dims)?;
    let names: Vec<String> = model.named_arrays().into_iter().map(|(n, _)| n).collect();
    if let Some(extra) = ck.arrays.keys().find(|k| !names.contains(k)) {
        return Err(Error::Checkpoint(format!("unexpected array `{extra}`")));
    }
    for (name, dst) in names.iter().zip(model.arrays_in_order_mut()) {
        let src = ck
            .arrays
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))?;
        if src.len() != dst.len() {
            return Err(Error::Checkpoint(format!(
                "array `{name}` has {} values, dims imply {}",
                src.len(),
                dst.len()
            )));
        }
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("array `{name}` has non-finite values")));
        }
        dst.copy_from_slice(src);
    }
    Ok(model)
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn checkpoint_json<D: Serialize>(ck: &Checkpoint<D>) -> Result<String> {
    let mut s = serde_json::to_string(ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn save_model<M: Checkpointable>(path: &Path, model: &M, rng_seed: u64, training_step: u64) -> Result<()> {
    write_atomic(path, checkpoint_json(&to_checkpoint(model, rng_seed, training_step))?.as_bytes())
}

pub fn read_checkpoint<D: DeserializeOwned>(path: &Path) -> Result<Checkpoint<D>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_model<M: Checkpointable>(path: &Path) -> Result<(M, Checkpoint<M::Dims>)> {
    let ck = read_checkpoint::<M::Dims>(path)?;
    let model = from_checkpoint::<M>(&ck)?;
    Ok((model, ck))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::TeacherDims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn teacher() -> TeacherNet {
        let dims = TeacherDims {
            feature_dim: 13,
            action_dim: 49,
            hidden: vec![8, 4],
            encoder: Some(EncoderDims {
                input: 52,
                hidden: 10,
                layers: 3,
                window: 3,
                train_h0: false,
            }),
            encoder_frozen: false,
        };
        TeacherNet::init(&dims, 0.01, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    #[test]
    fn load_then_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let net = teacher();
        save_model(&a, &net, 42, 17).unwrap();
        let (loaded, ck): (TeacherNet, _) = load_model(&a).unwrap();
        assert_eq!(loaded, net);
        save_model(&b, &loaded, ck.rng_seed, ck.training_step).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn rejects_mismatches() {
        let mut ck = to_checkpoint(&teacher(), 0, 0);
        ck.arrays.get_mut("head.layer1.bias").unwrap().push(0.0);
        assert!(matches!(from_checkpoint::<TeacherNet>(&ck), Err(Error::Checkpoint(_))));

        let mut ck = to_checkpoint(&teacher(), 0, 0);
        ck.kind = "student".into();
        assert!(from_checkpoint::<TeacherNet>(&ck).is_err());

        let mut ck = to_checkpoint(&teacher(), 0, 0);
        ck.arrays.insert("bogus".into(), vec![]);
        assert!(from_checkpoint::<TeacherNet>(&ck).is_err());
    }
}
