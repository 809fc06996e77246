//! Checkpoint layout: the magic line, a little-endian u64 header length, a
//! JSON header (config, input width, tensor table) and the parameters as
//! little-endian f64 values in layout order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ZarModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &str = "ZARKIT-CKPT-1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    input_dim: usize,
    tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes<F: Scalar>(model: &ZarModel<F>) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config().clone(),
        input_dim: model.input_dim(),
        tensors: model
            .layout()
            .tensors()
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                rows: t.rows,
                cols: t.cols,
                offset: t.offset,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out =
        Vec::with_capacity(CHECKPOINT_MAGIC.len() + 9 + json.len() + model.params().len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    Ok(out)
}

pub fn checkpoint_from_bytes<F: Scalar>(bytes: &[u8]) -> Result<ZarModel<F>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let magic = format!("{CHECKPOINT_MAGIC}\n");
    let rest = bytes
        .strip_prefix(magic.as_bytes())
        .ok_or_else(|| bad("missing magic line"))?;
    if rest.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let (len_bytes, rest) = rest.split_at(8);
    let len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
    if rest.len() < len {
        return Err(bad("truncated header"));
    }
    let (json, data) = rest.split_at(len);
    let header: Header = serde_json::from_slice(json)?;
    if data.len() % 8 != 0 {
        return Err(bad("parameter block is not a whole number of f64 values"));
    }
    let params: Vec<F> = data
        .chunks_exact(8)
        .map(|c| F::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    let model = ZarModel::from_params(header.config, header.input_dim, params)?;
    let consistent = model.layout().tensors().len() == header.tensors.len()
        && model
            .layout()
            .tensors()
            .iter()
            .zip(&header.tensors)
            .all(|(a, b)| {
                a.name == b.name && a.rows == b.rows && a.cols == b.cols && a.offset == b.offset
            });
    if !consistent {
        return Err(bad(
            "tensor table does not match the configured architecture",
        ));
    }
    Ok(model)
}

pub fn save_checkpoint<F: Scalar>(model: &ZarModel<F>, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<ZarModel<F>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    checkpoint_from_bytes(&bytes)
}
