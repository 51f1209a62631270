//! Checkpoints: a JSON manifest (`<stem>.json`) next to a blob of
//! little-endian `f64`s (`<stem>.bin`). The blob holds every tensor in
//! manifest order, followed by both Adam moment buffers when
//! `optimizer_state` is set.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    names: Vec<String>,
    shapes: Vec<[usize; 2]>,
    optimizer_state: bool,
    optimizer_step: u64,
    global_step: u64,
    /// Caller-defined model description (architecture, environment, ...).
    meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub global_step: u64,
    pub meta: serde_json::Value,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn save_checkpoint(stem: &Path, ckpt: &Checkpoint, with_optimizer: bool) -> Result<()> {
    let (manifest_path, blob_path) = paths(stem);
    let p = &ckpt.params;
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        names: p.names().to_vec(),
        shapes: p.slots().iter().map(|s| [s.rows, s.cols]).collect(),
        optimizer_state: with_optimizer,
        optimizer_step: p.step,
        global_step: ckpt.global_step,
        meta: ckpt.meta.clone(),
    };
    let mut blob = Vec::with_capacity(8 * p.len() * if with_optimizer { 3 } else { 1 });
    let mut push = |xs: &[f64]| xs.iter().for_each(|x| blob.extend_from_slice(&x.to_le_bytes()));
    push(&p.data);
    if with_optimizer {
        push(&p.first_moment);
        push(&p.second_moment);
    }
    fs::write(&blob_path, blob)?;
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text)?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<Checkpoint> {
    let (manifest_path, blob_path) = paths(stem);
    let read = |p: &Path| match fs::read(p) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(p.to_owned())),
        Err(e) => Err(e.into()),
    };
    let schema = |path: &Path, msg: String| Error::Schema {
        path: path.to_owned(),
        msg,
    };
    let manifest: Manifest =
        serde_json::from_slice(&read(&manifest_path)?).map_err(|e| schema(&manifest_path, e.to_string()))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: manifest_path,
            found: manifest.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if manifest.names.len() != manifest.shapes.len() {
        return Err(schema(&manifest_path, "names and shapes differ in length".into()));
    }
    let mut params = ParamStore::new();
    for (name, [r, c]) in manifest.names.iter().zip(&manifest.shapes) {
        params.alloc(name.clone(), *r, *c);
    }
    let n = params.len();
    let blob = read(&blob_path)?;
    let expected = 8 * n * if manifest.optimizer_state { 3 } else { 1 };
    if blob.len() != expected {
        return Err(schema(&blob_path, format!("blob has {} bytes, expected {expected}", blob.len())));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    params.data.copy_from_slice(&values[..n]);
    if manifest.optimizer_state {
        params.first_moment.copy_from_slice(&values[n..2 * n]);
        params.second_moment.copy_from_slice(&values[2 * n..]);
        params.step = manifest.optimizer_step;
    }
    if params.data.iter().any(|v| !v.is_finite()) {
        return Err(schema(&blob_path, "non-finite parameter".into()));
    }
    Ok(Checkpoint {
        params,
        global_step: manifest.global_step,
        meta: manifest.meta,
    })
}
