//! Binary field snapshots.
//!
//! Layout (all little-endian): magic `"CHTX1"` (5 bytes), version byte,
//! `nx`/`ny` as `u64`, `lx`/`ly` as IEEE-754 `f64`, then `nx·ny` `f64`
//! values row-major. Round trips are bit-exact; a 3×3 field is exactly
//! `6 + 16 + 16 + 72 = 110` bytes.

use crate::mesh::{Grid, ScalarField};
use crate::{Error, Result};
use std::path::Path;

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"CHTX1";
pub const SNAPSHOT_VERSION: u8 = 1;

/// Serialize a field to the snapshot wire format.
pub fn snapshot_to_bytes(field: &ScalarField) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(6 + 32 + 8 * g.n_cells());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.push(SNAPSHOT_VERSION);
    out.extend_from_slice(&(g.nx() as u64).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u64).to_le_bytes());
    out.extend_from_slice(&g.lx().to_le_bytes());
    out.extend_from_slice(&g.ly().to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a snapshot, rejecting bad magic/version, truncation and trailing
/// garbage.
pub fn snapshot_from_bytes(bytes: &[u8]) -> Result<ScalarField> {
    if bytes.len() < 6 {
        return Err(Error::TruncatedSnapshot);
    }
    if &bytes[..5] != SNAPSHOT_MAGIC {
        return Err(Error::SnapshotFormat("bad magic".into()));
    }
    if bytes[5] != SNAPSHOT_VERSION {
        return Err(Error::SnapshotFormat(format!(
            "unsupported version {}",
            bytes[5]
        )));
    }
    if bytes.len() < 6 + 32 {
        return Err(Error::TruncatedSnapshot);
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let nx = u64_at(6) as usize;
    let ny = u64_at(14) as usize;
    let lx = f64_at(22);
    let ly = f64_at(30);
    let grid = Grid::new(nx, ny, lx, ly)
        .map_err(|e| Error::SnapshotFormat(format!("bad header: {e}")))?;
    let n = grid.n_cells();
    let expected = 38 + 8 * n;
    if bytes.len() < expected {
        return Err(Error::TruncatedSnapshot);
    }
    if bytes.len() > expected {
        return Err(Error::SnapshotFormat("trailing bytes".into()));
    }
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        values.push(f64_at(38 + 8 * k));
    }
    ScalarField::from_values(grid, values)
}

pub fn write_snapshot(field: &ScalarField, path: &Path) -> Result<()> {
    std::fs::write(path, snapshot_to_bytes(field))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<ScalarField> {
    snapshot_from_bytes(&std::fs::read(path)?)
}
