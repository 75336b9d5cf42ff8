//! Parameter container: one JSON header line, then every tensor as
//! little-endian f64 values in header order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{KgeError, KgeModel, ModelDims, ModelKind};
use crate::optim::Tensor;

pub const FORMAT: &str = "sappkg-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub kind: String,
    pub dims: Value,
    pub entity_count: usize,
    pub relation_count: usize,
    pub seed: u64,
    pub config: Value,
    pub blocks: Vec<BlockInfo>,
}

pub fn write_checkpoint(mut w: impl Write, header: &CheckpointHeader, tensors: &[Tensor]) -> Result<(), KgeError> {
    let line = serde_json::to_string(header).map_err(|e| KgeError::Checkpoint(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for t in tensors {
        for x in &t.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(r: impl Read) -> Result<(CheckpointHeader, Vec<Tensor>), KgeError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| KgeError::Checkpoint(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(KgeError::Checkpoint(format!("unsupported format `{}`", header.format)));
    }
    let mut tensors = Vec::with_capacity(header.blocks.len());
    let mut buf = [0u8; 8];
    for block in &header.blocks {
        let mut t = Tensor::zeros(block.name.clone(), &block.shape);
        for x in &mut t.data {
            r.read_exact(&mut buf)
                .map_err(|_| KgeError::Checkpoint(format!("truncated block `{}`", block.name)))?;
            *x = f64::from_le_bytes(buf);
        }
        tensors.push(t);
    }
    if r.read(&mut buf)? != 0 {
        return Err(KgeError::Checkpoint("trailing bytes after last block".into()));
    }
    Ok((header, tensors))
}

pub(crate) fn to_value(v: &impl Serialize) -> Result<Value, KgeError> {
    serde_json::to_value(v).map_err(|e| KgeError::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &KgeModel,
    seed: u64,
    config: &impl Serialize,
) -> Result<(), KgeError> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        kind: model.kind.name().into(),
        dims: to_value(&model.dims)?,
        entity_count: model.entity_count,
        relation_count: model.relation_count,
        seed,
        config: to_value(config)?,
        blocks: model
            .params
            .iter()
            .map(|t| BlockInfo {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    write_checkpoint(BufWriter::new(File::create(path)?), &header, &model.params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(KgeModel, CheckpointHeader), KgeError> {
    let (header, params) = read_checkpoint(File::open(path)?)?;
    let kind: ModelKind = header.kind.parse()?;
    let dims: ModelDims =
        serde_json::from_value(header.dims.clone()).map_err(|e| KgeError::Checkpoint(format!("dims: {e}")))?;
    let mut model = KgeModel::zeros(kind, dims, header.entity_count, header.relation_count)?;
    if model.params.len() != params.len()
        || model.params.iter().zip(&params).any(|(a, b)| a.name != b.name || a.shape != b.shape)
    {
        return Err(KgeError::Checkpoint("parameter blocks do not match the model layout".into()));
    }
    model.params = params;
    Ok((model, header))
}
