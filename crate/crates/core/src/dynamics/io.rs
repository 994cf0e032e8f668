use std::io::{Read, Write};

use super::ParticleEnsemble;
use crate::error::{Error, Result};

pub const FPART_MAGIC: &[u8; 8] = b"FPART1\0\0";

/// Header (24 bytes: magic, `Np` as u64, weight) then `x, y, vx, vy` per
/// particle as little-endian f64.
pub fn write_fpart<W: Write>(mut out: W, ensemble: &ParticleEnsemble) -> Result<()> {
    out.write_all(FPART_MAGIC)?;
    out.write_all(&(ensemble.len() as u64).to_le_bytes())?;
    out.write_all(&ensemble.weight.to_le_bytes())?;
    let mut buf = Vec::with_capacity(ensemble.len() * 32);
    for (x, v) in ensemble.pos.iter().zip(&ensemble.vel) {
        for c in [x[0], x[1], v[0], v[1]] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a dump. The seed is not stored and comes back as 0.
pub fn read_fpart<R: Read>(mut input: R) -> Result<ParticleEnsemble> {
    let mut header = [0u8; 24];
    input.read_exact(&mut header)?;
    if &header[..8] != FPART_MAGIC {
        return Err(Error::Format("missing FPART1 magic".into()));
    }
    let np = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let weight = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    if np == 0 || np > 1 << 32 {
        return Err(Error::Format(format!("implausible particle count {np}")));
    }
    let mut raw = vec![0u8; np * 32];
    input.read_exact(&mut raw)?;
    let mut pos = Vec::with_capacity(np);
    let mut vel = Vec::with_capacity(np);
    for rec in raw.chunks_exact(32) {
        let c = |i: usize| f64::from_le_bytes(rec[8 * i..8 * i + 8].try_into().expect("8 bytes"));
        pos.push([c(0), c(1)]);
        vel.push([c(2), c(3)]);
    }
    ParticleEnsemble::new(pos, vel, weight, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let e = ParticleEnsemble::new(vec![[0.1, -2.0], [3.5, 1e-300]], vec![[1.0, 2.0], [-0.25, 7.0]], 0.5, 0).unwrap();
        let mut buf = Vec::new();
        write_fpart(&mut buf, &e).unwrap();
        assert_eq!(buf.len(), 24 + 2 * 32);
        assert_eq!(read_fpart(buf.as_slice()).unwrap(), e);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(read_fpart(&b"FGRID1\0\0xxxxxxxxxxxxxxxx"[..]), Err(Error::Format(_))));
        let e = ParticleEnsemble::new(vec![[0.0, 0.0]], vec![[0.0, 0.0]], 1.0, 0).unwrap();
        let mut buf = Vec::new();
        write_fpart(&mut buf, &e).unwrap();
        buf.truncate(40);
        assert!(matches!(read_fpart(buf.as_slice()), Err(Error::Io(_))));
    }
}
