//! Binary parameter checkpoints with a text manifest sidecar.
//!
//! File layout, little-endian:
//!
//! ```text
//! magic    8 bytes  "LPOLICY\0"
//! version  u32      1
//! bins     u32      K
//! dim      u32      feature dimension
//! heads    u32      4
//! temp     f64      default sampling temperature
//! per head (x, y, w, h):
//!   weights (K + 1) * dim f64, row-major
//!   bias    (K + 1) f64
//! ```
//!
//! The manifest lives next to the checkpoint as `<path>.manifest` and holds
//! `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use super::model::{PolicyParams, HEADS};
use super::PolicyError;

pub const MAGIC: &[u8; 8] = b"LPOLICY\0";
pub const VERSION: u32 = 1;

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn encode(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + params.data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&params.bins.to_le_bytes());
    out.extend_from_slice(&(params.dim as u32).to_le_bytes());
    out.extend_from_slice(&(HEADS as u32).to_le_bytes());
    out.extend_from_slice(&params.temperature.to_le_bytes());
    for v in &params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn decode(bytes: &[u8]) -> Result<PolicyParams, PolicyError> {
    let bad = |m: &str| PolicyError::Checkpoint(m.to_string());
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r).map_err(|_| bad("truncated header"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let bins = read_u32(&mut r).map_err(|_| bad("truncated header"))?;
    let dim = read_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
    let heads = read_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
    let temperature = read_f64(&mut r).map_err(|_| bad("truncated header"))?;
    if heads != HEADS || bins == 0 || dim == 0 {
        return Err(bad("invalid shape in header"));
    }
    let len = HEADS * (bins as usize + 1) * (dim + 1);
    if r.len() != len * 8 {
        return Err(bad(&format!("expected {} parameter bytes, found {}", len * 8, r.len())));
    }
    let data = r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let params = PolicyParams { bins, dim, temperature, data };
    if !params.is_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(params)
}

/// Writes the checkpoint and its manifest.
pub fn save(params: &PolicyParams, path: &Path, manifest: &BTreeMap<String, String>) -> Result<(), PolicyError> {
    fs::File::create(path)?.write_all(&encode(params))?;
    let mut text = String::new();
    for (k, v) in manifest {
        text.push_str(&format!("{k}={v}\n"));
    }
    fs::write(manifest_path(path), text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyParams, PolicyError> {
    decode(&fs::read(path)?)
}

/// Reads the manifest sidecar; a missing file yields an empty map.
pub fn load_manifest(path: &Path) -> Result<BTreeMap<String, String>, PolicyError> {
    let p = manifest_path(path);
    if !p.exists() {
        return Ok(BTreeMap::new());
    }
    Ok(fs::read_to_string(p)?
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}
