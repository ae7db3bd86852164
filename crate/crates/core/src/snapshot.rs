//! Binary network snapshots.
//!
//! Layout: the 5 bytes `KSPL1`, the depth `L` as u64 LE, the layer sizes
//! `l_0 ..= l_L` as u64 LE, then every parameter as f64 LE. A JSON sidecar
//! with the same stem records the problem fingerprint and training log.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kolmogorov::{LogRecord, TrainedSurrogate};
use crate::nn::{FlatParams, NetworkArchitecture};

pub const MAGIC: &[u8; 5] = b"KSPL1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub fingerprint: String,
    pub architecture: Vec<usize>,
    pub param_count: usize,
    pub log: Vec<LogRecord>,
}

pub fn encode(params: &FlatParams) -> Vec<u8> {
    let sizes = params.architecture().layer_sizes();
    let mut out = Vec::with_capacity(5 + 8 * (sizes.len() + 1 + params.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&((sizes.len() - 1) as u64).to_le_bytes());
    for &l in sizes {
        out.extend_from_slice(&(l as u64).to_le_bytes());
    }
    for &w in params.theta() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FlatParams> {
    let mut words = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::Format("missing KSPL1 magic".into()))?
        .chunks(8);
    let mut next = |what: &str| -> Result<[u8; 8]> {
        match words.next() {
            Some(w) if w.len() == 8 => Ok(w.try_into().unwrap()),
            _ => Err(Error::Format(format!("truncated snapshot while reading {what}"))),
        }
    };
    let depth = u64::from_le_bytes(next("depth")?);
    if depth == 0 || depth > 1024 {
        return Err(Error::Format(format!("implausible depth {depth}")));
    }
    let sizes = (0..=depth)
        .map(|_| next("layer sizes").map(|w| u64::from_le_bytes(w) as usize))
        .collect::<Result<Vec<_>>>()?;
    let arch = NetworkArchitecture::new(sizes)?;
    let theta = (0..arch.param_count())
        .map(|_| next("parameters").map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    if next("end").is_ok() {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    FlatParams::new(arch, theta)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` and its JSON sidecar.
pub fn save(net: &TrainedSurrogate, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode(&net.params))?;
    let sidecar = Sidecar {
        fingerprint: net.fingerprint.clone(),
        architecture: net.params.architecture().layer_sizes().to_vec(),
        param_count: net.params.len(),
        log: net.log.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a snapshot; the sidecar is used when present.
pub fn load(path: &Path) -> Result<TrainedSurrogate> {
    let params = decode(&fs::read(path)?)?;
    let side = sidecar_path(path);
    let (fingerprint, log) = if side.exists() {
        let s: Sidecar = serde_json::from_slice(&fs::read(side)?)?;
        if s.architecture != params.architecture().layer_sizes() {
            return Err(Error::Format("sidecar architecture does not match snapshot".into()));
        }
        (s.fingerprint, s.log)
    } else {
        (String::new(), Vec::new())
    };
    Ok(TrainedSurrogate {
        params,
        fingerprint,
        log,
    })
}
