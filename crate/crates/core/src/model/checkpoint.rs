use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &str = "augformer-checkpoint v1";

/// Writes named tensors as `u32 count` followed by, per block, `u32` name
/// length, name bytes, `u32` rank, `u64` dims and little-endian `f64` data.
pub fn write_blocks<W: Write>(mut w: W, blocks: &[(&str, &Tensor)]) -> Result<()> {
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for (name, t) in blocks {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

const MAX_NAME: u32 = 1 << 12;
const MAX_RANK: u32 = 8;

pub fn read_blocks<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let count = read_u32(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)?;
        if len > MAX_NAME {
            return Err(Error::Checkpoint(format!("block name length {len} is implausible")));
        }
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)?;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::Checkpoint(format!("block {name:?} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0 && n < 1 << 34)
            .ok_or_else(|| Error::Checkpoint(format!("block {name:?} has bad shape {shape:?}")))?;
        let mut data = Vec::with_capacity(numel);
        let mut b = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut b).map_err(truncated)?;
            data.push(f64::from_le_bytes(b));
        }
        out.push((name, Tensor::new(&shape, data)?));
    }
    Ok(out)
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams) -> Result<()> {
    let mut header = String::from(CHECKPOINT_MAGIC);
    for (k, v) in params.config().to_pairs() {
        header.push_str(&format!(" {k}={v}"));
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    let blocks: Vec<(&str, &Tensor)> =
        params.names().iter().map(String::as_str).zip(params.blocks()).collect();
    write_blocks(&mut w, &blocks)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<ModelParams> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let rest = header
        .trim_end()
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| Error::Checkpoint("missing checkpoint header".into()))?;
    let mut pairs = Vec::new();
    for field in rest.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("malformed header field {field:?}")))?;
        pairs.push((k, v));
    }
    let config = ModelConfig::from_pairs(pairs)?;
    let blocks = read_blocks(&mut r)?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last block".into()));
    }
    ModelParams::from_blocks(&config, blocks)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig { n_layers: 1, d_post: 8, ..ModelConfig::desk() };
        let p = ModelParams::init(&cfg, 11).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p).unwrap();
        let q = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(q.config(), p.config());
        assert_eq!(q.names(), p.names());
        assert_eq!(q.blocks(), p.blocks());
        let mut again = Vec::new();
        write_checkpoint(&mut again, &q).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn truncation_and_garbage_are_rejected() {
        let cfg = ModelConfig { n_layers: 1, ..ModelConfig::desk() };
        let p = ModelParams::init(&cfg, 0).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        assert!(read_checkpoint(&b"not a checkpoint\n"[..]).is_err());
    }
}
