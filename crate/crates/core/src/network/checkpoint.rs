//! Checkpoint file format: an 8-byte magic, a little-endian u32 header
//! length, a JSON header (format version, network config, parameter count),
//! then the flat parameter vector as little-endian 64-bit floats.

use super::{Layout, NetworkConfig, ParamVector};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"RAPINN01";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
    #[error("parameter count mismatch: header says {header}, file holds {actual}")]
    CountMismatch { header: usize, actual: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetworkConfig,
    param_count: usize,
}

pub fn save(path: &Path, cfg: &NetworkConfig, params: &ParamVector) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io { path: path.display().to_string(), source };
    let header = Header {
        format_version: 1,
        config: cfg.clone(),
        param_count: params.len(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(MAGIC).map_err(io_err)?;
    f.write_all(&(header_json.len() as u32).to_le_bytes()).map_err(io_err)?;
    f.write_all(&header_json).map_err(io_err)?;
    let mut buf = Vec::with_capacity(params.len() * 8);
    for v in &params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf).map_err(io_err)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(NetworkConfig, ParamVector), CheckpointError> {
    let io_err = |source| CheckpointError::Io { path: path.display().to_string(), source };
    let mut f = std::fs::File::open(path).map_err(io_err)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len_bytes = [0u8; 4];
    f.read_exact(&mut len_bytes).map_err(io_err)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    f.read_exact(&mut header_json).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    let mut rest = Vec::new();
    f.read_to_end(&mut rest).map_err(io_err)?;
    if rest.len() != header.param_count * 8 {
        return Err(CheckpointError::CountMismatch {
            header: header.param_count,
            actual: rest.len() / 8,
        });
    }
    let values: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let layout = Layout::for_config(&header.config);
    if layout.total != values.len() {
        return Err(CheckpointError::CountMismatch { header: layout.total, actual: values.len() });
    }
    Ok((header.config, ParamVector { values, layout }))
}
