//! Simulated trajectory bundles and their on-disk formats.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic  b"MFGTRAJ1"
//! u32    n players
//! u32    N_t steps
//! u32    d  state dimension
//! f64    dt
//! f64[n * (N_t+1) * d]   states, [player][node][component]
//! u32[n * N_t]           action indices, [player][step]
//! ```

use std::io::{Read, Write};

use ndarray::{Array2, Array3};

use crate::error::{LabError, Result};
use crate::model::MeasureSummary;
use crate::timegrid::TimeGrid;

#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub grid: TimeGrid,
    /// n x (steps+1) x d.
    pub states: Array3<f64>,
    /// n x steps action indices.
    pub actions: Array2<usize>,
    /// Empirical measure per node, uniform weights over particles.
    pub measure_flow: Vec<MeasureSummary>,
}

const MAGIC: &[u8; 8] = b"MFGTRAJ1";

impl TrajectoryBundle {
    #[inline]
    pub fn n_players(&self) -> usize {
        self.states.shape()[0]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.states.shape()[2]
    }

    pub fn state(&self, player: usize, node: usize) -> &[f64] {
        let d = self.dim();
        let base = (player * self.states.shape()[1] + node) * d;
        &self.states.as_slice().unwrap()[base..base + d]
    }

    /// Truncated running maximum norm `sup_{s <= T} |X_s|` per player.
    pub fn sup_norm(&self, player: usize) -> f64 {
        let mut best: f64 = 0.0;
        for node in 0..self.grid.nodes() {
            let x = self.state(player, node);
            best = best.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        best
    }

    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let n = self.n_players();
        let steps = self.grid.steps;
        let d = self.dim();
        w.write_all(MAGIC)?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&(steps as u32).to_le_bytes())?;
        w.write_all(&(d as u32).to_le_bytes())?;
        w.write_all(&self.grid.dt().to_le_bytes())?;
        for &v in self.states.as_slice().unwrap() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &a in self.actions.iter() {
            w.write_all(&(a as u32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read, moment_orders: &[f64]) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LabError::Domain("bad trajectory magic".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut f64buf = [0u8; 8];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let n = read_u32(r)? as usize;
        let steps = read_u32(r)? as usize;
        let d = read_u32(r)? as usize;
        r.read_exact(&mut f64buf)?;
        let dt = f64::from_le_bytes(f64buf);
        let grid = TimeGrid::new(dt * steps as f64, steps)?;

        let mut states = Array3::zeros((n, steps + 1, d));
        for v in states.iter_mut() {
            r.read_exact(&mut f64buf)?;
            *v = f64::from_le_bytes(f64buf);
        }
        let mut actions = Array2::zeros((n, steps));
        for a in actions.iter_mut() {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf)?;
            *a = u32::from_le_bytes(buf) as usize;
        }
        let measure_flow = empirical_flow(&states, moment_orders);
        Ok(Self {
            grid,
            states,
            actions,
            measure_flow,
        })
    }

    /// CSV of per-node empirical moments.
    pub fn write_moments_csv(&self, w: &mut impl Write) -> Result<()> {
        let d = self.dim();
        let mean_cols: Vec<String> = (0..d).map(|c| format!("mean_{c}")).collect();
        writeln!(w, "node,t,{},abs_m1,abs_m2,variance", mean_cols.join(","))?;
        for (j, m) in self.measure_flow.iter().enumerate() {
            let means: Vec<String> = m.mean().iter().map(|v| format!("{v}")).collect();
            writeln!(
                w,
                "{j},{},{},{},{},{}",
                self.grid.time(j),
                means.join(","),
                m.moment(1.0),
                m.moment(2.0),
                m.variance(),
            )?;
        }
        Ok(())
    }
}

/// Empirical measure per node with uniform particle weights.
pub fn empirical_flow(states: &Array3<f64>, moment_orders: &[f64]) -> Vec<MeasureSummary> {
    let (n, nodes, d) = states.dim();
    (0..nodes)
        .map(|j| {
            let mut pts = Array2::zeros((n, d));
            for i in 0..n {
                for c in 0..d {
                    pts[(i, c)] = states[(i, j, c)];
                }
            }
            MeasureSummary::from_points(std::sync::Arc::new(pts), moment_orders)
                .expect("nonempty particle cloud")
        })
        .collect()
}
