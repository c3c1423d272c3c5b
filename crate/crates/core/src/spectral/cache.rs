//! Binary spectral cache.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 8            | magic `CHLBSPEC`                          |
//! | 4            | format version (u32)                      |
//! | 8            | n (u64)                                   |
//! | 8            | seed (u64)                                |
//! | 4 + L        | mass law as JSON, length-prefixed (u32)   |
//! | 8 n          | masses                                    |
//! | 8 n          | omega                                     |
//! | 8 n^2        | phi_p, column-major                       |
//! | 8 (n-1)^2    | phi_r, column-major                       |
//! | 8 + 8 c      | count c, then near-degenerate indices (u64) |
//!
//! `phi_p_tilde` is recomputed from `phi_p` and the masses with the same
//! arithmetic as `build_spectral`, so a cache hit is bit-identical.

use super::{build_spectral, SpectralData};
use crate::chain_model::{DisorderedChain, MassLaw};
use crate::error::{ChainError, Result};
use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"CHLBSPEC";
pub const CACHE_VERSION: u32 = 1;

pub fn write_spectral<W: Write>(spec: &SpectralData, chain: &DisorderedChain, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(spec.n as u64).to_le_bytes())?;
    w.write_all(&chain.seed.to_le_bytes())?;
    let law = serde_json::to_vec(&chain.mass_law).map_err(|e| ChainError::Format(e.to_string()))?;
    w.write_all(&(law.len() as u32).to_le_bytes())?;
    w.write_all(&law)?;
    let mut buf = Vec::with_capacity(8 * (spec.n * spec.n * 2 + 4 * spec.n));
    for x in spec
        .masses
        .iter()
        .chain(&spec.omega)
        .chain(spec.phi_p.as_slice())
        .chain(spec.phi_r.as_slice())
    {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf.extend_from_slice(&(spec.near_degenerate.len() as u64).to_le_bytes());
    for &k in &spec.near_degenerate {
        buf.extend_from_slice(&(k as u64).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * count];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Reads a cache file; returns the stored `(seed, law)` alongside the data.
pub fn read_spectral<R: Read>(mut r: R) -> Result<(SpectralData, u64, MassLaw)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ChainError::Format("not a spectral cache file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(ChainError::Format(format!(
            "cache version {version}, expected {CACHE_VERSION}"
        )));
    }
    let n = read_u64(&mut r)? as usize;
    if n < 2 || n > 1 << 20 {
        return Err(ChainError::Format(format!("implausible n = {n}")));
    }
    let seed = read_u64(&mut r)?;
    let len = read_u32(&mut r)? as usize;
    let mut law = vec![0u8; len];
    r.read_exact(&mut law)?;
    let law: MassLaw = serde_json::from_slice(&law).map_err(|e| ChainError::Format(e.to_string()))?;
    let masses = read_f64s(&mut r, n)?;
    let omega = read_f64s(&mut r, n)?;
    let phi_p = DMatrix::from_vec(n, n, read_f64s(&mut r, n * n)?);
    let phi_r = DMatrix::from_vec(n - 1, n - 1, read_f64s(&mut r, (n - 1) * (n - 1))?);
    let count = read_u64(&mut r)? as usize;
    if count > n {
        return Err(ChainError::Format("corrupt degeneracy block".into()));
    }
    let near_degenerate = (0..count)
        .map(|_| read_u64(&mut r).map(|k| k as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut phi_p_tilde = phi_p.clone();
    for (x, m) in masses.iter().enumerate() {
        phi_p_tilde.row_mut(x).scale_mut(1.0 / m.sqrt());
    }
    Ok((
        SpectralData {
            n,
            omega,
            phi_p,
            phi_p_tilde,
            phi_r,
            masses,
            near_degenerate,
        },
        seed,
        law,
    ))
}

pub fn cache_path(dir: &Path, chain: &DisorderedChain) -> PathBuf {
    use sha2::{Digest, Sha256};
    let law = serde_json::to_string(&chain.mass_law).unwrap_or_default();
    let h = Sha256::digest(law.as_bytes());
    dir.join(format!(
        "spectral_n{}_s{}_{}.bin",
        chain.n,
        chain.seed,
        &hex::encode(h)[..12]
    ))
}

/// Loads the cached decomposition of `chain` or computes and stores it.
pub fn load_or_build(dir: &Path, chain: &DisorderedChain) -> Result<SpectralData> {
    let path = cache_path(dir, chain);
    if let Ok(f) = std::fs::File::open(&path) {
        match read_spectral(std::io::BufReader::new(f)) {
            Ok((spec, seed, law)) if seed == chain.seed && law == chain.mass_law && spec.masses == chain.masses => {
                return Ok(spec);
            }
            Ok(_) => log::warn!("cache {} does not match the chain; recomputing", path.display()),
            Err(e) => log::warn!("unreadable cache {}: {e}; recomputing", path.display()),
        }
    }
    let spec = build_spectral(chain)?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    {
        let f = std::fs::File::create(&tmp)?;
        let mut w = std::io::BufWriter::new(f);
        write_spectral(&spec, chain, &mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, &path)?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::sample_masses;

    #[test]
    fn cache_hit_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample_masses(80, MassLaw::default(), 4).unwrap();
        let a = load_or_build(dir.path(), &c).unwrap();
        assert!(cache_path(dir.path(), &c).exists());
        let b = load_or_build(dir.path(), &c).unwrap();
        let fresh = build_spectral(&c).unwrap();
        for s in [&a, &b] {
            assert_eq!(s.omega, fresh.omega);
            assert_eq!(s.phi_p, fresh.phi_p);
            assert_eq!(s.phi_p_tilde, fresh.phi_p_tilde);
            assert_eq!(s.phi_r, fresh.phi_r);
        }
    }

    #[test]
    fn rejects_wrong_version_and_magic() {
        let c = sample_masses(10, MassLaw::default(), 4).unwrap();
        let s = build_spectral(&c).unwrap();
        let mut buf = Vec::new();
        write_spectral(&s, &c, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[8] = 99;
        assert!(read_spectral(&bad[..]).is_err());
        bad = buf.clone();
        bad[0] = b'X';
        assert!(read_spectral(&bad[..]).is_err());
        assert!(read_spectral(&buf[..buf.len() - 3]).is_err());
    }
}
