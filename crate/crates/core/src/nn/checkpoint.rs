//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian: magic `RPAC`, `u32` version,
//! `u32` parameter count, then per parameter a `u32` name length, the UTF-8
//! name, a `u32` rank, `rank` × `u64` dims and the `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layers::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RPAC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint_to(store: &ParamStore, mut w: impl Write) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, value) in store.names().iter().zip(store.values()) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(value.shape().len() as u32).to_le_bytes())?;
        for &d in value.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in value.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    write_checkpoint_to(store, BufWriter::new(File::create(path)?))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads every record into a fresh store.
pub fn read_checkpoint_from(mut r: impl Read) -> Result<ParamStore> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 1 << 16 {
            return Err(Error::Format(format!("parameter name of {len} bytes")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("parameter {name} has rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.filter(|&n| n <= 1 << 28).ok_or_else(|| Error::Format(format!("parameter {name} too large")))?;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        store.add(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

pub fn read_checkpoint(path: &Path) -> Result<ParamStore> {
    read_checkpoint_from(BufReader::new(File::open(path)?))
}

/// Copies values from `loaded` into `store`, requiring identical names,
/// order and shapes.
pub fn restore_into(store: &mut ParamStore, loaded: &ParamStore) -> Result<()> {
    if store.names() != loaded.names() {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameters that do not match the model's {}",
            loaded.len(),
            store.len()
        )));
    }
    for (i, value) in loaded.values().enumerate() {
        store.set(ParamId::from_index(i), value.clone()).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(())
}
