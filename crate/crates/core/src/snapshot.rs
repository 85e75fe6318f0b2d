//! Binary field snapshots.
//!
//! Layout, all little-endian:
//! `b"SSPD"`, `u32` version, `f64` α, `u32` d, `u32` nx, `f64` R, `f64` dt, `u64` n_steps,
//! `f64` time, `n_cells` × `f64` densities (row-major, last axis fastest),
//! `u64` ledger length, then `(u64 step, u64 cell, f64 r)` per jump.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::prm_noise::{JumpRecord, SpaceTimeGrid};

pub const MAGIC: [u8; 4] = *b"SSPD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub alpha: f64,
    pub field: DensityField,
    pub ledger: Vec<JumpRecord>,
}

pub fn write_snapshot<W: Write>(mut w: W, snap: &Snapshot) -> Result<()> {
    let g = &snap.field.grid;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&snap.alpha.to_le_bytes())?;
    w.write_all(&(g.d as u32).to_le_bytes())?;
    w.write_all(&(g.nx as u32).to_le_bytes())?;
    w.write_all(&g.box_halfwidth.to_le_bytes())?;
    w.write_all(&g.dt.to_le_bytes())?;
    w.write_all(&(g.n_steps as u64).to_le_bytes())?;
    w.write_all(&snap.field.time.to_le_bytes())?;
    for v in &snap.field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(snap.ledger.len() as u64).to_le_bytes())?;
    for j in &snap.ledger {
        w.write_all(&(j.step as u64).to_le_bytes())?;
        w.write_all(&(j.cell as u64).to_le_bytes())?;
        w.write_all(&j.r.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn f64_<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(take(r)?))
}

fn u64_<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(take(r)?))
}

fn u32_<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r)?))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    if take::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32_(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let alpha = f64_(&mut r)?;
    let d = u32_(&mut r)? as usize;
    let nx = u32_(&mut r)? as usize;
    let box_halfwidth = f64_(&mut r)?;
    let dt = f64_(&mut r)?;
    let n_steps = u64_(&mut r)? as usize;
    let grid = SpaceTimeGrid::new(d, box_halfwidth, nx, dt, n_steps).map_err(|e| Error::Format(e.to_string()))?;
    let time = f64_(&mut r)?;
    let values = (0..grid.n_cells()).map(|_| f64_(&mut r)).collect::<Result<Vec<_>>>()?;
    let field = DensityField::from_values(grid, values, time).map_err(|e| Error::Format(e.to_string()))?;
    let n = u64_(&mut r)?;
    let mut ledger = Vec::new();
    for _ in 0..n {
        let step = u64_(&mut r)? as usize;
        let cell = u64_(&mut r)? as usize;
        ledger.push(JumpRecord { step, cell, r: f64_(&mut r)? });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes".into()));
    }
    Ok(Snapshot { alpha, field, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn snap(values: Vec<f64>, ledger: Vec<JumpRecord>) -> Snapshot {
        let g = SpaceTimeGrid::new(2, 1.5, 4, 1e-3, 7).unwrap();
        Snapshot { alpha: 1.5, field: DensityField::from_values(g, values, 0.004).unwrap(), ledger }
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &snap(vec![0.5; 16], vec![])).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 4 + 4 + 8 + 8 + 8 + 8 + 16 * 8 + 8);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(read_snapshot(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_snapshot(&long[..]).is_err());
        let mut v2 = buf;
        v2[4] = 2;
        assert!(read_snapshot(&v2[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(0.0f64..1e6, 16),
                      jumps in prop::collection::vec((0usize..7, 0usize..16, 1e-9f64..1e9), 0..20)) {
            let ledger = jumps.into_iter().map(|(step, cell, r)| JumpRecord { step, cell, r }).collect();
            let s = snap(values, ledger);
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &s).unwrap();
            prop_assert_eq!(read_snapshot(&buf[..]).unwrap(), s);
        }
    }
}
