//! Persistence of solved equilibria: a binary artifact plus a JSON
//! metadata sidecar.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic  b"MFGSOL1\0"
//! u32    scenario id      u32 steps        u32 state dim
//! u32    grid dim D, then D x (f64 lo, f64 hi, u32 bins)
//! f64    horizon          f64 weight       f64 tol
//! u32    quad points      u8 converged     u32 iterations
//! u8     has_randomization, u64 randomization
//! f64[(steps+1) * d]          B path
//! f64[(steps+1) * bins]       histogram flow
//! f64[(steps+1) * bins]       value table
//! u32[steps * bins]           policy table
//! u32    trace length, f64[len] trace
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::StateGrid;
use crate::timegrid::TimeGrid;

use super::picard::MfeSolution;
use super::scenario::CommonScenario;

const MAGIC: &[u8; 8] = b"MFGSOL1\0";

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub scenario_id: usize,
    pub weight: f64,
    pub converged: bool,
    pub iterations: usize,
    pub tol: f64,
    pub quad_points: usize,
    pub steps: usize,
    pub state_dim: usize,
    pub bins: Vec<usize>,
    pub grid_lo: Vec<f64>,
    pub grid_hi: Vec<f64>,
    pub horizon: f64,
    pub config_hash: String,
    pub final_trace: Option<f64>,
}

fn w_u32(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u32).to_le_bytes())?;
    Ok(())
}

fn w_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn r_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn r_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_solution(sol: &MfeSolution, w: &mut impl Write) -> Result<()> {
    let steps = sol.time_grid.steps;
    let bins = sol.grid.total_bins();
    let d = sol.grid.dim();
    w.write_all(MAGIC)?;
    w_u32(w, sol.scenario.id)?;
    w_u32(w, steps)?;
    w_u32(w, d)?;
    w_u32(w, sol.grid.dim())?;
    for c in 0..sol.grid.dim() {
        w_f64(w, sol.grid.lo[c])?;
        w_f64(w, sol.grid.hi[c])?;
        w_u32(w, sol.grid.bins[c])?;
    }
    w_f64(w, sol.time_grid.horizon)?;
    w_f64(w, sol.scenario.weight)?;
    w_f64(w, sol.tol)?;
    w_u32(w, sol.quad_points)?;
    w.write_all(&[u8::from(sol.converged)])?;
    w_u32(w, sol.iterations)?;
    match sol.scenario.randomization {
        Some(u) => {
            w.write_all(&[1u8])?;
            w.write_all(&u.to_le_bytes())?;
        }
        None => {
            w.write_all(&[0u8])?;
            w.write_all(&0u64.to_le_bytes())?;
        }
    }
    for v in sol.scenario.b_path.iter() {
        w_f64(w, *v)?;
    }
    for v in sol.hist.iter() {
        w_f64(w, *v)?;
    }
    for v in sol.value.iter() {
        w_f64(w, *v)?;
    }
    for a in sol.policy.iter() {
        w_u32(w, *a)?;
    }
    let _ = bins;
    w_u32(w, sol.trace.len())?;
    for v in &sol.trace {
        w_f64(w, *v)?;
    }
    Ok(())
}

pub fn read_solution(r: &mut impl Read) -> Result<MfeSolution> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LabError::Domain("bad solution magic".into()));
    }
    let scenario_id = r_u32(r)?;
    let steps = r_u32(r)?;
    let d = r_u32(r)?;
    let grid_dim = r_u32(r)?;
    let mut lo = Vec::with_capacity(grid_dim);
    let mut hi = Vec::with_capacity(grid_dim);
    let mut bins_per = Vec::with_capacity(grid_dim);
    for _ in 0..grid_dim {
        lo.push(r_f64(r)?);
        hi.push(r_f64(r)?);
        bins_per.push(r_u32(r)?);
    }
    let grid = StateGrid::new(lo, hi, bins_per)?;
    let horizon = r_f64(r)?;
    let weight = r_f64(r)?;
    let tol = r_f64(r)?;
    let quad_points = r_u32(r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let converged = flag[0] != 0;
    let iterations = r_u32(r)?;
    r.read_exact(&mut flag)?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let randomization = if flag[0] != 0 {
        Some(u64::from_le_bytes(u64buf))
    } else {
        None
    };

    let bins = grid.total_bins();
    let mut b_path = Array2::zeros((steps + 1, d));
    for v in b_path.iter_mut() {
        *v = r_f64(r)?;
    }
    let mut hist = Array2::zeros((steps + 1, bins));
    for v in hist.iter_mut() {
        *v = r_f64(r)?;
    }
    let mut value = Array2::zeros((steps + 1, bins));
    for v in value.iter_mut() {
        *v = r_f64(r)?;
    }
    let mut policy = Array2::zeros((steps, bins));
    for a in policy.iter_mut() {
        *a = r_u32(r)?;
    }
    let trace_len = r_u32(r)?;
    let mut trace = Vec::with_capacity(trace_len);
    for _ in 0..trace_len {
        trace.push(r_f64(r)?);
    }

    Ok(MfeSolution {
        scenario: CommonScenario {
            id: scenario_id,
            b_path,
            weight,
            randomization,
        },
        grid,
        time_grid: TimeGrid::new(horizon, steps)?,
        hist,
        policy,
        value,
        trace,
        converged,
        iterations,
        tol,
        quad_points,
    })
}

/// Write `<base>.bin` and `<base>.json`.
pub fn save_solution(sol: &MfeSolution, base: &Path, config_hash: &str) -> Result<()> {
    let mut bin = std::fs::File::create(base.with_extension("bin"))?;
    write_solution(sol, &mut bin)?;
    let meta = SolutionMeta {
        scenario_id: sol.scenario.id,
        weight: sol.scenario.weight,
        converged: sol.converged,
        iterations: sol.iterations,
        tol: sol.tol,
        quad_points: sol.quad_points,
        steps: sol.time_grid.steps,
        state_dim: sol.grid.dim(),
        bins: sol.grid.bins.clone(),
        grid_lo: sol.grid.lo.clone(),
        grid_hi: sol.grid.hi.clone(),
        horizon: sol.time_grid.horizon,
        config_hash: config_hash.to_string(),
        final_trace: sol.trace.last().copied(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| LabError::Internal(format!("serialize metadata: {e}")))?;
    std::fs::write(base.with_extension("json"), json)?;
    Ok(())
}

pub fn load_solution(base: &Path) -> Result<MfeSolution> {
    let mut bin = std::fs::File::open(base.with_extension("bin"))?;
    read_solution(&mut bin)
}
