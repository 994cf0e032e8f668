//! `FGRID1` planar grid dumps.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{Field, PlanarField};

pub const FGRID_MAGIC: &[u8; 8] = b"FGRID1\0\0";

/// Header (32 bytes: magic, `N` as u64, `h`, mass) then `N²` little-endian f64, row-major.
pub fn write_fgrid<W: Write>(mut out: W, field: &PlanarField) -> Result<()> {
    out.write_all(FGRID_MAGIC)?;
    out.write_all(&(field.n() as u64).to_le_bytes())?;
    out.write_all(&field.h().to_le_bytes())?;
    out.write_all(&field.mass().to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.len() * 8);
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a dump; returns the field and the stored mass.
pub fn read_fgrid<R: Read>(mut input: R) -> Result<(PlanarField, f64)> {
    let mut header = [0u8; 32];
    input.read_exact(&mut header)?;
    if &header[..8] != FGRID_MAGIC {
        return Err(Error::Format("missing FGRID1 magic".into()));
    }
    let word = |i: usize| -> [u8; 8] { header[i..i + 8].try_into().expect("8 bytes") };
    let n = u64::from_le_bytes(word(8)) as usize;
    let h = f64::from_le_bytes(word(16));
    let mass = f64::from_le_bytes(word(24));
    if n == 0 || n > 1 << 16 {
        return Err(Error::Format(format!("implausible grid size {n}")));
    }
    let mut raw = vec![0u8; n * n * 8];
    input.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((PlanarField::new(n, h, values)?, mass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let f = PlanarField::from_fn(8, 0.3, |x, y| (x * 1.7 + y).sin()).unwrap();
        let mut buf = Vec::new();
        write_fgrid(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 32 + 64 * 8);
        let (g, mass) = read_fgrid(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        assert_eq!(mass.to_bits(), f.mass().to_bits());
    }

    #[test]
    fn bad_magic_rejected() {
        let buf = vec![0u8; 64];
        assert!(matches!(read_fgrid(buf.as_slice()), Err(Error::Format(_))));
    }
}
