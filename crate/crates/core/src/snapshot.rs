//! "KKS1" spin snapshot format: 4-byte magic, little-endian u64 site count,
//! then one i8 per spin. The loader recomputes the smoothed cache.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::kernel::KacKernel;
use crate::lattice::SpinConfig;

const MAGIC: &[u8; 4] = b"KKS1";

pub fn write_snapshot<W: Write>(cfg: &SpinConfig, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(cfg.sites() as u64).to_le_bytes())?;
    let bytes: Vec<u8> = cfg.spins().iter().map(|&s| s as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R, kernel: &KacKernel) -> Result<SpinConfig> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadSnapshot(format!("bad magic {magic:?}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let n = u64::from_le_bytes(len) as usize;
    let mut raw = vec![0u8; n];
    r.read_exact(&mut raw)?;
    let spins: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
    if spins.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::BadSnapshot("spin byte outside {-1,+1}".into()));
    }
    SpinConfig::new(spins, kernel)
}
