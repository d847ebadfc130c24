use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, WmNetwork};
use super::train::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"WMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Network weights plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: WmNetwork,
    pub train_config: Option<TrainConfig>,
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    param_count: usize,
    train_config: Option<TrainConfig>,
    loss_history: Vec<f64>,
}

/// Layout: `WMCK`, u32 version, u32 header length, JSON header, then
/// `param_count` little-endian f64 values.
pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<()> {
    let header = Header {
        architecture: ck.network.architecture().clone(),
        param_count: ck.network.param_count(),
        train_config: ck.train_config.clone(),
        loss_history: ck.loss_history.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for p in ck.network.params() {
        w.write_all(&p.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let bad = |message: &str| Error::Malformed { what: "checkpoint", message: message.into() };
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(|_| bad("truncated magic"))?;
    if &buf4 != MAGIC {
        return Err(bad("bad magic"));
    }
    r.read_exact(&mut buf4).map_err(|_| bad("truncated version"))?;
    let version = u32::from_le_bytes(buf4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnknownVersion {
            what: "checkpoint",
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    r.read_exact(&mut buf4).map_err(|_| bad("truncated header length"))?;
    let mut json = vec![0u8; u32::from_le_bytes(buf4) as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut params = Vec::with_capacity(header.param_count);
    let mut buf8 = [0u8; 8];
    for _ in 0..header.param_count {
        r.read_exact(&mut buf8).map_err(|_| bad("truncated parameters"))?;
        params.push(f64::from_le_bytes(buf8));
    }
    if r.read(&mut buf8).map_err(|e| Error::io("<checkpoint>", e))? != 0 {
        return Err(bad("trailing bytes"));
    }
    let network = WmNetwork::from_params(header.architecture, params)?;
    Ok(Checkpoint { network, train_config: header.train_config, loss_history: header.loss_history })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(f), ck)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample() -> Checkpoint {
        let arch = Architecture { input_size: 4, hidden_sizes: vec![3, 2], output_size: 2, dropout: 0.1 };
        let network = WmNetwork::init(arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9)).unwrap();
        Checkpoint { network, train_config: Some(TrainConfig::default()), loss_history: vec![0.7, 0.4] }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ck).unwrap();
        assert_eq!(&bytes[..4], b"WMCK");
        assert_eq!(read_checkpoint(bytes.as_slice()).unwrap(), ck);
    }

    #[test]
    fn future_version_rejected() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(read_checkpoint(bytes.as_slice()), Err(Error::UnknownVersion { .. })));
    }

    #[test]
    fn truncation_detected() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }
}
