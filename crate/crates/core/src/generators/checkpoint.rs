//! Binary model checkpoint.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 8     | magic `MVPDNM01`                        |
//! | 4     | u32 format version (1)                  |
//! | 4×5   | u32 in_channels, hidden, blocks, out_channels, embed_dim |
//! | 4     | u32 flags; bit 0 = explicit mask channel |
//! | 4     | u32 schedule steps                      |
//! | 8×2   | f64 β start, β end                      |
//! | 8     | u64 parameter count N                   |
//! | 8×N   | f64 parameters in model order           |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::denoiser::{DenoiserConfig, DenoiserModel};
use super::schedule::ScheduleConfig;

pub const MAGIC: &[u8; 8] = b"MVPDNM01";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DenoiserModel,
    pub mask_channel: bool,
    pub schedule: ScheduleConfig,
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let c = &ck.model.config;
    w.write_all(MAGIC)?;
    for v in [VERSION, c.in_channels as u32, c.hidden as u32, c.blocks as u32, c.out_channels as u32, c.embed_dim as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(ck.mask_channel as u32).to_le_bytes())?;
    w.write_all(&(ck.schedule.steps as u32).to_le_bytes())?;
    w.write_all(&ck.schedule.beta_start.to_le_bytes())?;
    w.write_all(&ck.schedule.beta_end.to_le_bytes())?;
    w.write_all(&(ck.model.params.len() as u64).to_le_bytes())?;
    for p in &ck.model.params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u32(&mut r)? as usize;
    }
    let config = DenoiserConfig {
        in_channels: dims[0],
        hidden: dims[1],
        blocks: dims[2],
        out_channels: dims[3],
        embed_dim: dims[4],
    };
    let flags = read_u32(&mut r)?;
    let schedule = ScheduleConfig {
        steps: read_u32(&mut r)? as usize,
        beta_start: read_f64(&mut r)?,
        beta_end: read_f64(&mut r)?,
    };
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    let expected = DenoiserModel::new(config, super::denoiser::Init::Zeros).parameter_count();
    if n != expected {
        return Err(CheckpointError::Corrupt(format!("{n} parameters for a model of {expected}")));
    }
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push(read_f64(&mut r)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    let model = DenoiserModel::from_params(config, params).map_err(CheckpointError::Corrupt)?;
    Ok(Checkpoint {
        model,
        mask_channel: flags & 1 != 0,
        schedule,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    write_checkpoint(BufWriter::new(File::create(path)?), ck)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::denoiser::Init;

    fn sample() -> Checkpoint {
        let cfg = DenoiserConfig {
            in_channels: 5,
            hidden: 3,
            blocks: 2,
            out_channels: 3,
            embed_dim: 4,
        };
        Checkpoint {
            model: DenoiserModel::new(cfg, Init::Random { seed: 2, zero_output: false }),
            mask_channel: true,
            schedule: ScheduleConfig::default(),
        }
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn corruption_is_detected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(CheckpointError::Magic)));
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_checkpoint(long.as_slice()), Err(CheckpointError::Corrupt(_))));
    }
}
