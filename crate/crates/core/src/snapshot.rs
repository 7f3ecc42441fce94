//! Binary trajectory persistence and CSV export.
//!
//! One snapshot record, all integers and floats little-endian regardless of
//! host:
//!
//! ```text
//! magic   b"PAMF"
//! version u32
//! dx, dt, t   f64
//! site_count  u64
//! values      site_count x f64
//! meta_len    u32
//! meta        meta_len bytes of UTF-8 JSON
//! ```
//!
//! A trajectory checkpoint is the concatenation of its snapshot records; the
//! first record's metadata carries everything needed to rebuild the grid and
//! provenance (seed, stream_id, scheme, boundary, domain, initial data).

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Boundary, GridSpec, InitialData, Scheme};
use crate::sim::{LatticeField, Trajectory};

pub const MAGIC: [u8; 4] = *b"PAMF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:02x?}, expected \"PAMF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u32),
    #[error("truncated record: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("metadata is not valid JSON: {0}")]
    BadMetadata(#[from] serde_json::Error),
    #[error("checkpoint holds no snapshot records")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub seed: u64,
    pub stream_id: u64,
    pub scheme: Scheme,
    pub boundary: Boundary,
    pub x_min: f64,
    pub x_max: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub init: InitialData,
    #[serde(default)]
    pub noise_window: Option<(usize, usize)>,
    #[serde(default)]
    pub diverged: bool,
    #[serde(default)]
    pub diverged_at_step: Option<u64>,
}

impl SnapshotMeta {
    fn from_trajectory(traj: &Trajectory) -> Self {
        SnapshotMeta {
            seed: traj.master_seed,
            stream_id: traj.stream_id,
            scheme: traj.grid.scheme,
            boundary: traj.grid.boundary,
            x_min: traj.grid.x_min,
            x_max: traj.grid.x_max,
            t_end: traj.grid.t_end,
            snapshot_times: traj.grid.snapshot_times.clone(),
            init: traj.init.clone(),
            noise_window: traj.noise_window,
            diverged: traj.diverged,
            diverged_at_step: traj.diverged_at_step,
        }
    }
}

fn write_record(out: &mut Vec<u8>, field: &LatticeField, meta_json: &str) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&field.grid.dx.to_le_bytes());
    out.extend_from_slice(&field.grid.dt.to_le_bytes());
    out.extend_from_slice(&field.t.to_le_bytes());
    out.extend_from_slice(&(field.values.len() as u64).to_le_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(meta_json.as_bytes());
}

/// Serialize a trajectory to the record-stream checkpoint format.
pub fn checkpoint(traj: &Trajectory) -> Vec<u8> {
    let meta = SnapshotMeta::from_trajectory(traj);
    let meta_json = serde_json::to_string(&meta).expect("metadata serializes");
    let mut out = Vec::new();
    for field in &traj.snapshots {
        write_record(&mut out, field, &meta_json);
    }
    if traj.snapshots.is_empty() {
        // Keep provenance even for snapshot-free runs: one record with t = 0
        // and no values would be ambiguous, so store the record with the
        // initial profile instead.
        let values = traj.init.realize(&traj.grid).unwrap_or_default();
        let field = LatticeField {
            t: 0.0,
            values,
            grid: traj.grid.clone(),
        };
        write_record(&mut out, &field, &meta_json);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Rebuild a trajectory from checkpoint bytes. Fails loudly on truncation or
/// magic/version mismatch; never returns a partial trajectory.
pub fn restore(bytes: &[u8]) -> Result<Trajectory, FormatError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let mut records: Vec<(f64, f64, f64, Vec<f64>, SnapshotMeta)> = Vec::new();
    while cur.pos < bytes.len() {
        let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(FormatError::BadVersion(version));
        }
        let dx = cur.f64()?;
        let dt = cur.f64()?;
        let t = cur.f64()?;
        let count = cur.u64()? as usize;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(cur.f64()?);
        }
        let meta_len = cur.u32()? as usize;
        let meta_bytes = cur.take(meta_len)?;
        let meta: SnapshotMeta = serde_json::from_slice(meta_bytes)?;
        records.push((dx, dt, t, values, meta));
    }
    let (dx, dt, _, _, meta) = records.first().ok_or(FormatError::Empty)?;
    let grid = Arc::new(GridSpec {
        dx: *dx,
        dt: *dt,
        x_min: meta.x_min,
        x_max: meta.x_max,
        boundary: meta.boundary,
        scheme: meta.scheme,
        t_end: meta.t_end,
        snapshot_times: meta.snapshot_times.clone(),
    });
    let meta = records[0].4.clone();
    let snapshots = records
        .into_iter()
        .map(|(_, _, t, values, _)| LatticeField {
            t,
            values,
            grid: grid.clone(),
        })
        .collect();
    Ok(Trajectory {
        snapshots,
        grid,
        init: meta.init,
        master_seed: meta.seed,
        stream_id: meta.stream_id,
        noise_window: meta.noise_window,
        diverged: meta.diverged,
        diverged_at_step: meta.diverged_at_step,
    })
}

/// CSV export with columns `t,x,u`, one row per snapshot node.
pub fn trajectory_to_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,x,u")?;
    for snap in &traj.snapshots {
        for (i, v) in snap.values.iter().enumerate() {
            writeln!(out, "{},{},{}", snap.t, snap.x(i), v)?;
        }
    }
    Ok(())
}
