//! Versioned binary checkpoint container: a JSON header describing the
//! module and its architecture, followed by the flat parameter vector as
//! little-endian f64. Byte-identical for identical (seed, config, data).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DynamicsConfig, GlobalDynamics};
use crate::encoder::{EncoderConfig, SpatialEncoder};
use crate::error::{Error, Result};
use crate::predictor::{LocalPredictor, PredictorConfig};

const MAGIC: &[u8; 8] = b"RDBCKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    module: String,
    seed: u64,
    config: serde_json::Value,
}

/// A trained module ready to persist or rebuild.
#[derive(Debug, Clone)]
pub enum ModuleCheckpoint {
    Encoder {
        cfg: EncoderConfig,
        seed: u64,
        params: Vec<f64>,
    },
    Dynamics {
        cfg: DynamicsConfig,
        seed: u64,
        params: Vec<f64>,
    },
    Predictor {
        cfg: PredictorConfig,
        seed: u64,
        params: Vec<f64>,
    },
}

impl ModuleCheckpoint {
    pub fn module_name(&self) -> &'static str {
        match self {
            ModuleCheckpoint::Encoder { .. } => "encoder",
            ModuleCheckpoint::Dynamics { .. } => "dynamics",
            ModuleCheckpoint::Predictor { .. } => "predictor",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModuleCheckpoint::Encoder { seed, .. }
            | ModuleCheckpoint::Dynamics { seed, .. }
            | ModuleCheckpoint::Predictor { seed, .. } => *seed,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (config, params) = match self {
            ModuleCheckpoint::Encoder { cfg, params, .. } => {
                (serde_json::to_value(cfg).expect("encoder config serializes"), params)
            }
            ModuleCheckpoint::Dynamics { cfg, params, .. } => {
                (serde_json::to_value(cfg).expect("dynamics config serializes"), params)
            }
            ModuleCheckpoint::Predictor { cfg, params, .. } => {
                (serde_json::to_value(cfg).expect("predictor config serializes"), params)
            }
        };
        let header = Header {
            version: 1,
            module: self.module_name().to_string(),
            seed: self.seed(),
            config,
        };
        let header_bytes = serde_json::to_vec(&header).expect("header serializes");
        let mut buf = Vec::with_capacity(16 + header_bytes.len() + params.len() * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header_bytes);
        buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Checkpoint {
            path: path.into(),
            msg: msg.into(),
        };
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing RDBCKPT1 magic"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12 + header_len;
        if bytes.len() < header_end + 8 {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| bad(&format!("header parse: {e}")))?;
        if header.version != 1 {
            return Err(bad(&format!("unsupported version {}", header.version)));
        }
        let count =
            u64::from_le_bytes(bytes[header_end..header_end + 8].try_into().unwrap()) as usize;
        let data = &bytes[header_end + 8..];
        if data.len() != count * 8 {
            return Err(bad(&format!(
                "expected {count} parameters, found {} bytes",
                data.len()
            )));
        }
        let params: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let seed = header.seed;
        match header.module.as_str() {
            "encoder" => Ok(ModuleCheckpoint::Encoder {
                cfg: serde_json::from_value(header.config)
                    .map_err(|e| bad(&format!("encoder config: {e}")))?,
                seed,
                params,
            }),
            "dynamics" => Ok(ModuleCheckpoint::Dynamics {
                cfg: serde_json::from_value(header.config)
                    .map_err(|e| bad(&format!("dynamics config: {e}")))?,
                seed,
                params,
            }),
            "predictor" => Ok(ModuleCheckpoint::Predictor {
                cfg: serde_json::from_value(header.config)
                    .map_err(|e| bad(&format!("predictor config: {e}")))?,
                seed,
                params,
            }),
            other => Err(bad(&format!("unknown module `{other}`"))),
        }
    }

    pub fn into_encoder(self) -> Result<SpatialEncoder> {
        match self {
            ModuleCheckpoint::Encoder { cfg, params, .. } => {
                SpatialEncoder::from_params(cfg, params)
            }
            other => Err(Error::Compatibility(format!(
                "expected an encoder checkpoint, found {}",
                other.module_name()
            ))),
        }
    }

    pub fn into_dynamics(self) -> Result<GlobalDynamics> {
        match self {
            ModuleCheckpoint::Dynamics { cfg, params, .. } => {
                GlobalDynamics::from_params(cfg, params)
            }
            other => Err(Error::Compatibility(format!(
                "expected a dynamics checkpoint, found {}",
                other.module_name()
            ))),
        }
    }

    pub fn into_predictor(self) -> Result<LocalPredictor> {
        match self {
            ModuleCheckpoint::Predictor { cfg, params, .. } => {
                LocalPredictor::from_params(cfg, params)
            }
            other => Err(Error::Compatibility(format!(
                "expected a predictor checkpoint, found {}",
                other.module_name()
            ))),
        }
    }
}

/// Hex SHA-256 of a file's contents (used for freeze verification and run
/// manifests).
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
