//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "ADVMIAMD"
//! version      u32      currently 1
//! n_dims       u32
//! layer_dims   n_dims x u32
//! per layer    weight [out * in] f64, then bias [out] f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::MlpClassifier;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"ADVMIAMD";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated parameter block: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model(w: &mut impl Write, model: &MlpClassifier) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    let dims = model.layer_dims();
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        w.write_all(&(*d as u32).to_le_bytes())?;
    }
    for layer in model.layers() {
        write_f64s(w, layer.weight.values())?;
        write_f64s(w, layer.bias.values())?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<MlpClassifier> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("missing magic: {e}")))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Checkpoint(
            "not a model checkpoint (bad magic)".into(),
        ));
    }
    let version = read_u32(r)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let n_dims = read_u32(r)? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(Error::Checkpoint(format!(
            "implausible layer count {n_dims}"
        )));
    }
    let dims = (0..n_dims)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut model = MlpClassifier::zeros(&dims).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let params = read_f64s(r, model.parameter_count())?;
    model.set_parameters_flat(&params)?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &MlpClassifier) -> Result<()> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    crate::runner::export::write_atomic(path, &buf)
}

pub fn load_model(path: &Path) -> Result<MlpClassifier> {
    let bytes = std::fs::read(path)?;
    read_model(&mut bytes.as_slice())
}
