//! Binary network files: magic, version, a JSON header with the layer specs
//! and class names, then every parameter as a little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CrnnError, LayerSpec, Network, Result};
use crate::features::FeatureConfig;

pub const NETWORK_MAGIC: &[u8; 8] = b"SPCRNN\0\0";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    classes: Vec<String>,
    frontend: FeatureConfig,
    config_hash: String,
    /// Block lengths per layer, for validation on load.
    blocks: Vec<Vec<usize>>,
}

impl Network {
    pub fn config_hash(&self) -> String {
        self.frontend.fingerprint()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            input_shape: self.input_shape.clone(),
            specs: self.specs.clone(),
            classes: self.classes.clone(),
            frontend: self.frontend,
            config_hash: self.config_hash(),
            blocks: self.params.iter().map(|l| l.iter().map(Vec::len).collect()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.param_count());
        out.extend_from_slice(NETWORK_MAGIC);
        out.extend_from_slice(&NETWORK_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.params.iter().flatten().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
        let bad = |m: &str| CrnnError::Format(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != NETWORK_MAGIC {
            return Err(bad("missing network magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != NETWORK_VERSION {
            return Err(CrnnError::Format(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])?;
        if header.frontend.fingerprint() != header.config_hash {
            return Err(bad("config hash does not match the stored front-end config"));
        }
        let mut net = Network::new(header.input_shape, header.specs, header.classes, 0)?;
        net.frontend = header.frontend;
        let expected: Vec<Vec<usize>> = net.params.iter().map(|l| l.iter().map(Vec::len).collect()).collect();
        if expected != header.blocks {
            return Err(bad("parameter layout does not match the layer specs"));
        }
        let blob = &body[header_len..];
        if blob.len() != 8 * net.param_count() {
            return Err(CrnnError::Format(format!(
                "expected {} parameter bytes, found {}",
                8 * net.param_count(),
                blob.len()
            )));
        }
        let mut chunks = blob.chunks_exact(8);
        for v in net.params.iter_mut().flatten().flatten() {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        Network::from_bytes(&fs::read(path)?)
    }
}
