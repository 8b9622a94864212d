//! Binary checkpoints: the magic `MSBL1`, then named blocks until end of
//! file. Each block is a u32 name length, the UTF-8 name, a u32 rank, u64
//! dims and f64 data, all little-endian. A `meta` block holds
//! `[beta, no_context, jaccard_min, window_len]`; everything else is
//! inferred from block shapes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureConfig;

use super::model::{Ablations, HierarchicalModel, ModelConfig};
use super::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"MSBL1";

fn put_block(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for d in t.shape() {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn to_bytes(model: &HierarchicalModel) -> Vec<u8> {
    let cfg = &model.config;
    let meta = Tensor::from_vec(
        &[4],
        vec![
            cfg.beta,
            cfg.ablations.no_context as u8 as f64,
            cfg.features.jaccard_min,
            cfg.window_len as f64,
        ],
    )
    .expect("four values");
    let mut out = MAGIC.to_vec();
    put_block(&mut out, "meta", &meta);
    for (name, t) in model.blocks() {
        put_block(&mut out, &name, t);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::invalid("truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn read_blocks(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::invalid("not a checkpoint (bad magic)"));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let mut blocks = BTreeMap::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::invalid("block name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::invalid(format!("block {name} has rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        if n > (bytes.len() - r.pos) / 8 {
            return Err(Error::invalid("truncated checkpoint"));
        }
        let data = r
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if blocks.insert(name.clone(), Tensor::from_vec(&dims, data)?).is_some() {
            return Err(Error::invalid(format!("duplicate block {name}")));
        }
    }
    Ok(blocks)
}

fn dim(blocks: &BTreeMap<String, Tensor>, name: &str, axis: usize) -> Result<usize> {
    blocks
        .get(name)
        .and_then(|t| t.shape().get(axis).copied())
        .ok_or_else(|| Error::invalid(format!("checkpoint lacks block {name}")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<HierarchicalModel> {
    let mut blocks = read_blocks(bytes)?;
    let meta = blocks.remove("meta").ok_or_else(|| Error::invalid("checkpoint lacks meta block"))?;
    let [beta, no_context, jaccard_min, window_len] = <[f64; 4]>::try_from(meta.data())
        .map_err(|_| Error::invalid("meta block must hold four values"))?;
    let no_hierarchy = !blocks.contains_key("coarse.bg.fwd.wx");
    let plain_bilstm = !blocks.contains_key("fine.dr.fwd.wx");
    let speaker_dim = dim(&blocks, "emb.speaker", 1)?;
    let position_bins = dim(&blocks, "emb.position", 0)?;
    let position_dim = dim(&blocks, "emb.position", 1)?;
    let semantic_types = dim(&blocks, "emb.semantic", 0)?;
    let semantic_dim = dim(&blocks, "emb.semantic", 1)?;
    let hidden = dim(&blocks, "fine.bg.fwd.wh", 1)?;
    let first = if no_hierarchy { "fine.bg.fwd.wx" } else { "coarse.bg.fwd.wx" };
    let feature_dim = dim(&blocks, first, 1)?;
    let text_dim = feature_dim
        .checked_sub(speaker_dim + position_dim + semantic_dim)
        .filter(|d| *d > 0)
        .ok_or_else(|| Error::shape("feature width smaller than its context segments".to_string()))?;
    let config = ModelConfig {
        features: FeatureConfig {
            text_dim,
            speaker_dim,
            position_dim,
            position_bins,
            semantic_dim,
            semantic_types,
            jaccard_min,
        },
        hidden,
        beta,
        window_len: window_len as usize,
        ablations: Ablations {
            no_hierarchy,
            plain_bilstm,
            no_context: no_context != 0.0,
        },
    };
    let mut model = HierarchicalModel::zeros(config)?;
    for (name, t) in model.blocks_mut() {
        let src = blocks
            .remove(&name)
            .ok_or_else(|| Error::invalid(format!("checkpoint lacks block {name}")))?;
        if src.shape() != t.shape() {
            return Err(Error::shape(format!(
                "block {name} has shape {:?}, expected {:?}",
                src.shape(),
                t.shape()
            )));
        }
        *t = src;
    }
    if let Some(extra) = blocks.keys().next() {
        return Err(Error::invalid(format!("unexpected checkpoint block {extra}")));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &HierarchicalModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<HierarchicalModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Names of the blocks stored in a checkpoint, sorted.
pub fn block_names(bytes: &[u8]) -> Result<Vec<String>> {
    read_blocks(bytes).map(|b| b.into_keys().collect())
}
