//! Binary network checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      4 bytes  "FNCK"
//! version    u32      1
//! networks   u32      number of networks that follow
//! per network:
//!   layers   u32      number of layer sizes L (input first)
//!   sizes    L × u32
//!   count    u64      number of parameters P
//!   params   P × f64  layer by layer: weights (out × in, row-major), then biases
//! normalizer u8       0 = absent, 1 = present
//! if present:
//!   dim      u32
//!   count    f64      samples seen
//!   mean     dim × f64
//!   m2       dim × f64  sum of squared deviations
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Mlp, RunningNormalizer};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<Mlp>,
    pub normalizer: Option<RunningNormalizer>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.networks.len() as u32).to_le_bytes());
        for net in &self.networks {
            b.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
            for &s in net.sizes() {
                b.extend_from_slice(&(s as u32).to_le_bytes());
            }
            b.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
            for p in net.params() {
                b.extend_from_slice(&p.to_le_bytes());
            }
        }
        match &self.normalizer {
            None => b.push(0),
            Some(n) => {
                b.push(1);
                b.extend_from_slice(&(n.dim() as u32).to_le_bytes());
                b.extend_from_slice(&n.count().to_le_bytes());
                for v in n.mean().iter().chain(n.m2()) {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| "truncated header")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err("bad magic".into());
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let count = read_u32(&mut r)?;
        let mut networks = Vec::new();
        for _ in 0..count {
            let layers = read_u32(&mut r)? as usize;
            if layers > 64 {
                return Err("implausible layer count".into());
            }
            let sizes = (0..layers)
                .map(|_| read_u32(&mut r).map(|s| s as usize))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let n = read_u64(&mut r)? as usize;
            if n > r.len() / 8 {
                return Err("truncated parameters".into());
            }
            let params = (0..n).map(|_| read_f64(&mut r)).collect::<std::result::Result<Vec<_>, _>>()?;
            networks.push(Mlp::from_params(&sizes, params).map_err(|e| e.to_string())?);
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(|_| "truncated normalizer flag")?;
        let normalizer = match flag[0] {
            0 => None,
            1 => {
                let dim = read_u32(&mut r)? as usize;
                if dim > r.len() / 8 {
                    return Err("truncated normalizer".into());
                }
                let count = read_f64(&mut r)?;
                let mean = (0..dim).map(|_| read_f64(&mut r)).collect::<std::result::Result<Vec<_>, _>>()?;
                let m2 = (0..dim).map(|_| read_f64(&mut r)).collect::<std::result::Result<Vec<_>, _>>()?;
                Some(RunningNormalizer::from_parts(count, mean, m2).map_err(|e| e.to_string())?)
            }
            f => return Err(format!("bad normalizer flag {f}")),
        };
        if !r.is_empty() {
            return Err(format!("{} trailing bytes", r.len()));
        }
        Ok(Self { networks, normalizer })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}

fn read_u32(r: &mut &[u8]) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| "truncated")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> std::result::Result<u64, String> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| "truncated")?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> std::result::Result<f64, String> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| "truncated")?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = crate::rng::stream(3, 0);
        let mut norm = RunningNormalizer::new(2);
        norm.update(&[1.0, 2.0, -0.5, 7.0]).unwrap();
        let ck = Checkpoint {
            networks: vec![
                Mlp::glorot(&[2, 5, 3], &mut rng).unwrap(),
                Mlp::glorot(&[2, 4, 1], &mut rng).unwrap(),
            ],
            normalizer: Some(norm),
        };
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"FNCK");
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
