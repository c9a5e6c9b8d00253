//! CSV records and little-endian binary blobs.
//!
//! Branch blob: `n: u64`, `dr: f64`, `count: u64`, then per sample `E: f64`
//! followed by `Q` and `R` as `n` values each.
//!
//! Checkpoint blob: `t: f64`, `n: u64`, `dr: f64`, `gauge: f64`, then `n`
//! interleaved `(re, im)` pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::FieldState;
use crate::experiments::NfRow;
use crate::frame::SolitonFrame;
use crate::ground_state::GroundStateBranch;

#[derive(Serialize)]
struct FrameRow {
    t: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "Theta")]
    theta: f64,
    a: f64,
    b: f64,
    #[serde(rename = "Re_z")]
    re_z: f64,
    #[serde(rename = "Im_z")]
    im_z: f64,
    abs_z: f64,
    #[serde(rename = "eta_L2loc")]
    eta_l2loc: f64,
    #[serde(rename = "eta_L4")]
    eta_l4: f64,
    mass: f64,
    energy: f64,
}

pub fn write_frames(path: &Path, frames: &[SolitonFrame]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if frames.is_empty() {
        w.write_record(["t", "E", "Theta", "a", "b", "Re_z", "Im_z", "abs_z", "eta_L2loc", "eta_L4", "mass", "energy"])?;
    }
    for f in frames {
        w.serialize(FrameRow {
            t: f.t,
            e: f.e,
            theta: f.theta,
            a: f.a,
            b: f.b,
            re_z: f.z.re,
            im_z: f.z.im,
            abs_z: f.z.norm(),
            eta_l2loc: f.eta_l2loc,
            eta_l4: f.eta_l4,
            mass: f.mass,
            energy: f.energy,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_nf(path: &Path, rows: &[NfRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["t", "rho", "omega", "bracket_lo", "bracket_hi"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BranchRow {
    #[serde(rename = "E")]
    e: f64,
    w: f64,
    mass: f64,
    residual: f64,
}

/// `branch.csv` plus `branch.bin` (layout in the module docs).
pub fn write_branch(csv_path: &Path, blob_path: &Path, branch: &GroundStateBranch) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    for gs in &branch.samples {
        w.serialize(BranchRow { e: gs.e, w: gs.w, mass: gs.mass(), residual: gs.residual })?;
    }
    w.flush()?;
    let mut out = BufWriter::new(File::create(blob_path)?);
    let (n, dr) = branch.samples.first().map_or((0, 0.0), |g| (g.grid.n, g.grid.dr));
    out.write_all(&(n as u64).to_le_bytes())?;
    out.write_all(&dr.to_le_bytes())?;
    out.write_all(&(branch.samples.len() as u64).to_le_bytes())?;
    for gs in &branch.samples {
        out.write_all(&gs.e.to_le_bytes())?;
        for v in gs.q.iter().chain(&gs.r) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Samples `(E, Q, R)` and the header `(n, dr)` of a branch blob.
pub type BranchBlob = (usize, f64, Vec<(f64, Vec<f64>, Vec<f64>)>);

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_branch_blob(path: &Path) -> Result<BranchBlob> {
    let mut r = BufReader::new(File::open(path)?);
    let n = read_u64(&mut r)? as usize;
    let dr = read_f64(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let e = read_f64(&mut r)?;
        let q = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let rr = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        samples.push((e, q, rr));
    }
    Ok((n, dr, samples))
}

pub fn write_checkpoint(path: &Path, state: &FieldState, dr: f64) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&state.t.to_le_bytes())?;
    out.write_all(&(state.psi.len() as u64).to_le_bytes())?;
    out.write_all(&dr.to_le_bytes())?;
    out.write_all(&state.gauge.to_le_bytes())?;
    for z in &state.psi {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Returns the state and the grid spacing stored in the header.
pub fn read_checkpoint(path: &Path) -> Result<(FieldState, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let t = read_f64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    let dr = read_f64(&mut r)?;
    let gauge = read_f64(&mut r)?;
    if n > 1 << 28 {
        return Err(Error::Config(format!("checkpoint header claims {n} nodes")));
    }
    let mut psi = Vec::with_capacity(n);
    for _ in 0..n {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        psi.push(Complex64::new(re, im));
    }
    Ok((FieldState { t, psi, gauge }, dr))
}

/// Plain CSV with a header row and numeric columns.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}
