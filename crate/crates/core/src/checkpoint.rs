//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "HHARCKPT"
//! version  u32
//! meta_len u32, then meta_len bytes of UTF-8 JSON (config, hierarchy, run metadata)
//! count    u32, then `count` parameter blocks:
//!     name_len u32, name bytes
//!     rank     u32, then rank × u64 dims
//!     values   prod(dims) × f64, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::hierarchy::{GraphPair, LabelHierarchy};
use crate::model::{Model, ModelConfig};

const MAGIC: &[u8; 8] = b"HHARCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    hierarchy: String,
    terminal_eligible: Vec<bool>,
    #[serde(default)]
    run: BTreeMap<String, String>,
}

/// Serializes `model` plus free-form run metadata (seed, split, ...).
pub fn to_bytes(model: &Model, run: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let meta = Meta {
        config: model.config.clone(),
        hierarchy: model.hierarchy.to_edge_text(),
        terminal_eligible: model.terminal_eligible.clone(),
        run: run.clone(),
    };
    let meta = serde_json::to_vec(&meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&len_u32(meta.len())?.to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&len_u32(model.params.len())?.to_le_bytes());
    for (name, t) in model.params.iter() {
        out.extend_from_slice(&len_u32(name.len())?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&len_u32(t.rank())?.to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model, BTreeMap<String, String>)> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not an H-HAR checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let meta: Meta = serde_json::from_slice(take(&mut r, meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let hierarchy = LabelHierarchy::parse(&meta.hierarchy)?;

    let count = read_u32(&mut r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let name = std::str::from_utf8(take(&mut r, name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > 3 {
            return Err(Error::Checkpoint(format!("`{name}` has unsupported rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let len: usize = shape.iter().product();
        let raw = take(&mut r, len.checked_mul(8).ok_or_else(|| Error::Checkpoint("shape overflow".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.insert(name, Tensor::new(&shape, data)?);
    }
    if !r.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
    }
    if meta.terminal_eligible.len() != hierarchy.len() {
        return Err(Error::Checkpoint("terminal mask does not match hierarchy".into()));
    }
    let graphs = GraphPair::new(&hierarchy);
    let model = Model { config: meta.config, hierarchy, graphs, params, terminal_eligible: meta.terminal_eligible };
    Ok((model, meta.run))
}

pub fn save(path: impl AsRef<Path>, model: &Model, run: &BTreeMap<String, String>) -> Result<()> {
    let bytes = to_bytes(model, run)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(Model, BTreeMap<String, String>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} does not fit in u32")))
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(Error::Checkpoint("unexpected end of file".into()));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    buf.copy_from_slice(take(r, buf.len())?);
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
