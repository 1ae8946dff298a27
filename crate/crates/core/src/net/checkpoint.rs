//! Flat binary parameter files.
//!
//! Layout (all integers little-endian): magic `EBMDDGCK`, `u32` version,
//! `u32` metadata length and UTF-8 JSON metadata, `u32` tensor count, then per
//! tensor `u32` name length, name bytes, `u32` rank and `u64` dims; finally
//! every tensor's values as `f64` in table order.

use std::path::Path;

use super::{NetError, ParamEntry, ParamSet};

const MAGIC: &[u8; 8] = b"EBMDDGCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub params: ParamSet,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let meta = serde_json::to_vec(&ckpt.meta).expect("json value serializes");
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(ckpt.params.entries.len() as u32).to_le_bytes());
    for e in &ckpt.params.entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for e in &ckpt.params.entries {
        for v in &e.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NetError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NetError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(NetError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(NetError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = c.u32()? as usize;
    let meta = serde_json::from_slice(c.take(meta_len)?).map_err(|e| NetError::Checkpoint(format!("metadata: {e}")))?;
    let count = c.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let n = c.u32()? as usize;
        let name = String::from_utf8(c.take(n)?.to_vec()).map_err(|_| NetError::Checkpoint("name is not utf-8".into()))?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        entries.push(ParamEntry { name, shape, value: Vec::new(), grad: Vec::new() });
    }
    for e in &mut entries {
        let n: usize = e.shape.iter().product();
        e.value = c.take(n * 8)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        e.grad = vec![0.0; n];
    }
    if c.pos != bytes.len() {
        return Err(NetError::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(Checkpoint { meta, params: ParamSet { entries } })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NetError> {
    Ok(std::fs::write(path, encode_checkpoint(ckpt))?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    decode_checkpoint(&std::fs::read(path)?)
}
