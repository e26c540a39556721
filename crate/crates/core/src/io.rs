//! CSV series, binary snapshots, plot scripts and run manifests.
//!
//! Particle snapshot (little-endian): `b"QVM1"`, `d: u32`, `N: u64`, `L: f64`,
//! `time: f64`, then per particle `d` position components and 3 spin
//! components as `f64`.
//!
//! Field snapshot (little-endian): `b"QVH1"`, `nx, ny, nz: u64`, `dx: f64`,
//! `time: f64`, then `rho`, `V_x`, `V_y`, `V_z`, each as `nx*ny*nz` row-major `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{OrderSample, ParticleState};
use crate::hydro::HydroFields;
use crate::observables::DensityProfile;
use crate::params::Dimension;
use crate::{Error, Result, Vector3};

pub const PARTICLE_MAGIC: &[u8; 4] = b"QVM1";
pub const FIELD_MAGIC: &[u8; 4] = b"QVH1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("unrecognized snapshot format")]
    BadMagic,
    #[error("snapshot truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("snapshot has {0} trailing bytes")]
    Trailing(usize),
    #[error("corrupt snapshot header: {0}")]
    Header(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

pub const ORDER_HEADER: &str = "step,time,phi";
pub const PROFILE_HEADER: &str = "bin_center,density";

pub fn order_series_csv(samples: &[OrderSample]) -> String {
    let mut out = format!("{ORDER_HEADER}\n");
    for s in samples {
        let _ = writeln!(out, "{},{},{}", s.step, s.time, s.phi);
    }
    out
}

pub fn write_series(path: &Path, samples: &[OrderSample]) -> Result<()> {
    write_file(path, order_series_csv(samples))
}

pub fn read_series(path: &Path) -> Result<Vec<OrderSample>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(ORDER_HEADER) {
        return Err(Error::Other(format!("{}: missing `{ORDER_HEADER}` header", path.display())));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad = || Error::Other(format!("{}: malformed row {}", path.display(), k + 1));
            let mut f = line.split(',');
            let (Some(a), Some(b), Some(c), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad());
            };
            Ok(OrderSample {
                step: a.parse().map_err(|_| bad())?,
                time: b.parse().map_err(|_| bad())?,
                phi: c.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn profile_csv(profile: &DensityProfile) -> String {
    let mut out = format!("{PROFILE_HEADER}\n");
    for (b, d) in profile.densities.iter().enumerate() {
        let _ = writeln!(out, "{},{}", profile.bin_center(b), d);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            SnapshotError::Truncated {
                needed: self.pos.saturating_add(n),
                found: self.bytes.len(),
            },
        )?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), SnapshotError> {
        if self.bytes.len() < 4 || &self.bytes[..4] != expected {
            return Err(SnapshotError::BadMagic);
        }
        self.pos = 4;
        Ok(())
    }

    fn finish(&self) -> Result<(), SnapshotError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(SnapshotError::Trailing(n)),
        }
    }
}

/// Positions and spins; velocities and the step counter are not stored.
pub fn encode_particle_snapshot(state: &ParticleState) -> Vec<u8> {
    let d = state.dims.get();
    let mut out = Vec::with_capacity(32 + state.len() * (d + 3) * 8);
    out.extend_from_slice(PARTICLE_MAGIC);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(state.len() as u64).to_le_bytes());
    out.extend_from_slice(&state.box_length.to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    for (r, s) in state.positions.iter().zip(&state.spins) {
        for c in 0..d {
            out.extend_from_slice(&r[c].to_le_bytes());
        }
        for c in 0..3 {
            out.extend_from_slice(&s[c].to_le_bytes());
        }
    }
    out
}

pub fn decode_particle_snapshot(bytes: &[u8]) -> Result<ParticleState, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(PARTICLE_MAGIC)?;
    let d = r.u32()?;
    let dims = Dimension::from_usize(d as usize)
        .ok_or_else(|| SnapshotError::Header(format!("dimension {d}")))?;
    let n = r.u64()?;
    let box_length = r.f64()?;
    let time = r.f64()?;
    let d = dims.get();
    let needed = (n as usize)
        .checked_mul((d + 3) * 8)
        .ok_or_else(|| SnapshotError::Header(format!("particle count {n}")))?;
    if bytes.len() - r.pos < needed {
        return Err(SnapshotError::Truncated {
            needed: r.pos + needed,
            found: bytes.len(),
        });
    }
    let mut positions = Vec::with_capacity(n as usize);
    let mut spins = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut p = Vector3::zeros();
        for c in 0..d {
            p[c] = r.f64()?;
        }
        let s = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
        positions.push(p);
        spins.push(s);
    }
    r.finish()?;
    let mut state = ParticleState::new(dims, box_length, positions, spins);
    state.time = time;
    Ok(state)
}

pub fn write_snapshot(path: &Path, state: &ParticleState) -> Result<()> {
    write_file(path, encode_particle_snapshot(state))
}

pub fn read_snapshot(path: &Path) -> Result<ParticleState> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(decode_particle_snapshot(&bytes)?)
}

/// Contents of a field snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub dims: [usize; 3],
    pub dx: f64,
    pub time: f64,
    pub rho: Vec<f64>,
    pub velocity: [Vec<f64>; 3],
}

pub fn encode_field_snapshot(fields: &HydroFields) -> Vec<u8> {
    let n = fields.grid.len();
    let mut out = Vec::with_capacity(44 + 4 * n * 8);
    out.extend_from_slice(FIELD_MAGIC);
    for d in fields.grid.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&fields.grid.dx.to_le_bytes());
    out.extend_from_slice(&fields.time.to_le_bytes());
    for f in std::iter::once(&fields.rho).chain(fields.velocity.iter()) {
        for x in f {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_field_snapshot(bytes: &[u8]) -> Result<FieldSnapshot, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(FIELD_MAGIC)?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.u64()? as usize;
    }
    let dx = r.f64()?;
    let time = r.f64()?;
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(32).is_some())
        .ok_or_else(|| SnapshotError::Header(format!("grid {dims:?}")))?;
    if bytes.len() - r.pos < n * 32 {
        return Err(SnapshotError::Truncated {
            needed: r.pos + n * 32,
            found: bytes.len(),
        });
    }
    let mut read_field = || (0..n).map(|_| r.f64()).collect::<Result<Vec<f64>, _>>();
    let rho = read_field()?;
    let velocity = [read_field()?, read_field()?, read_field()?];
    r.finish()?;
    Ok(FieldSnapshot {
        dims,
        dx,
        time,
        rho,
        velocity,
    })
}

pub fn write_field_snapshot(path: &Path, fields: &HydroFields) -> Result<()> {
    write_file(path, encode_field_snapshot(fields))
}

pub fn read_field_snapshot(path: &Path) -> Result<FieldSnapshot> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(decode_field_snapshot(&bytes)?)
}

/// A gnuplot script plotting columns of a CSV file with a header row.
pub fn gnuplot_script(csv_name: &str, title: &str, x_col: usize, y_cols: &[(usize, &str)], x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel '{x_label}'");
    let _ = writeln!(s, "set ylabel '{y_label}'");
    let plots: Vec<String> = y_cols
        .iter()
        .map(|(c, name)| format!("'{csv_name}' using {x_col}:{c} with lines title '{name}'"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Run manifest written as `manifest.json` next to the artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub mode: String,
    pub seed: u64,
    pub threads: usize,
    pub version: String,
    pub config: String,
    pub artifacts: Vec<String>,
    pub wall_time_seconds: f64,
    /// Mode-specific summary numbers.
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Other(e.to_string()))?;
        write_file(&dir.join("manifest.json"), json + "\n")
    }
}
