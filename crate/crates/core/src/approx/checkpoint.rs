//! Parameter checkpoints: a little-endian binary blob plus a JSON sidecar
//! naming the slices.
//!
//! ```text
//! "DVFP" | version u32 | seed u64 | slices u32 | (rows u32, cols u32)* | count u64 | f64*
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{ParamSlice, ParameterStore};
use super::ApproxError;

const MAGIC: &[u8; 4] = b"DVFP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    seed: u64,
    slices: Vec<ParamSlice>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(store: &ParameterStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * store.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&store.seed().to_le_bytes());
    out.extend_from_slice(&(store.slices().len() as u32).to_le_bytes());
    for s in store.slices() {
        out.extend_from_slice(&(s.rows as u32).to_le_bytes());
        out.extend_from_slice(&(s.cols as u32).to_le_bytes());
    }
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for v in store.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K], ApproxError> {
        let bytes = self
            .buf
            .get(self.pos..self.pos + K)
            .ok_or_else(|| ApproxError::Checkpoint("truncated file".into()))?;
        self.pos += K;
        Ok(bytes.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32, ApproxError> {
        self.take::<4>().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, ApproxError> {
        self.take::<8>().map(u64::from_le_bytes)
    }
}

/// Decode a blob; returns the seed, the `(rows, cols)` of every slice and the values.
pub fn decode(bytes: &[u8]) -> Result<(u64, Vec<(usize, usize)>, Vec<f64>), ApproxError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(ApproxError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ApproxError::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let k = r.u32()? as usize;
    let dims = (0..k)
        .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
        .collect::<Result<Vec<_>, ApproxError>>()?;
    let count = r.u64()? as usize;
    if dims.iter().map(|(a, b)| a * b).sum::<usize>() != count {
        return Err(ApproxError::Checkpoint("slice dimensions do not cover the values".into()));
    }
    let values = (0..count)
        .map(|_| r.take::<8>().map(f64::from_le_bytes))
        .collect::<Result<Vec<_>, _>>()?;
    if r.pos != bytes.len() {
        return Err(ApproxError::Checkpoint("trailing bytes".into()));
    }
    Ok((seed, dims, values))
}

pub fn save(store: &ParameterStore, path: &Path) -> Result<(), ApproxError> {
    let io = |e: std::io::Error| ApproxError::Io(format!("{}: {e}", path.display()));
    fs::write(path, encode(store)).map_err(io)?;
    let sidecar = Sidecar {
        version: CHECKPOINT_VERSION,
        seed: store.seed(),
        slices: store.slices().to_vec(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("serialisable");
    fs::write(sidecar_path(path), json + "\n").map_err(io)
}

pub fn load(path: &Path) -> Result<ParameterStore, ApproxError> {
    let io = |p: &Path, e: std::io::Error| ApproxError::Io(format!("{}: {e}", p.display()));
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    let (seed, dims, values) = decode(&bytes)?;
    let side_path = sidecar_path(path);
    let text = fs::read_to_string(&side_path).map_err(|e| io(&side_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| ApproxError::Checkpoint(e.to_string()))?;
    let side_dims: Vec<(usize, usize)> = sidecar.slices.iter().map(|s| (s.rows, s.cols)).collect();
    if side_dims != dims || sidecar.seed != seed {
        return Err(ApproxError::Checkpoint("sidecar does not match blob".into()));
    }
    Ok(ParameterStore::from_parts(values, sidecar.slices, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip_bytes() {
        let mut store = ParameterStore::new(7);
        store.add_glorot("a", 2, 3, &mut seeded(0));
        store.add_const("b", 1, 3, 0.5);
        let (seed, dims, values) = decode(&encode(&store)).unwrap();
        assert_eq!(seed, 7);
        assert_eq!(dims, vec![(2, 3), (1, 3)]);
        assert_eq!(values, store.values());
    }

    #[test]
    fn corrupt_blobs_rejected() {
        let store = ParameterStore::new(1);
        let mut bytes = encode(&store);
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
        let bytes = encode(&store);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
