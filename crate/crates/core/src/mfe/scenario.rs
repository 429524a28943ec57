//! Discretized common-noise scenarios.
//!
//! The common noise is discretized as a finite set of sampled B paths;
//! the fixed point is solved per scenario, and the scenario id doubles as
//! the realization of the common signal for S-closed-loop policies.

use ndarray::Array2;

use crate::error::{LabError, Result};
use crate::rng::{self, stream};
use crate::sde::CommonSignal;
use crate::timegrid::TimeGrid;

#[derive(Debug, Clone)]
pub struct CommonScenario {
    pub id: usize,
    /// Cumulative B path on the nodes, (steps+1) x d, starting at zero.
    pub b_path: Array2<f64>,
    /// Probability weight within its scenario set.
    pub weight: f64,
    /// Extra finite randomization index for weak-equilibrium experiments.
    pub randomization: Option<u64>,
}

impl CommonScenario {
    pub fn validate(&self) -> Result<()> {
        for c in 0..self.b_path.ncols() {
            if self.b_path[(0, c)] != 0.0 {
                return Err(LabError::Domain("scenario path must start at 0".into()));
            }
        }
        if !(self.weight > 0.0) || self.weight > 1.0 {
            return Err(LabError::Domain("scenario weight must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.b_path.nrows() - 1
    }

    /// Increments dB_j, steps x d.
    pub fn increments(&self) -> Array2<f64> {
        let (nodes, d) = self.b_path.dim();
        let mut db = Array2::zeros((nodes - 1, d));
        for j in 0..nodes - 1 {
            for c in 0..d {
                db[(j, c)] = self.b_path[(j + 1, c)] - self.b_path[(j, c)];
            }
        }
        db
    }

    pub fn signal(&self) -> CommonSignal {
        CommonSignal {
            scenario_id: self.id,
            randomization: self.randomization,
        }
    }
}

/// Sample `count` equally weighted Brownian scenarios.
pub fn generate_scenarios(
    seed: u64,
    count: usize,
    grid: TimeGrid,
    dim: usize,
) -> Result<Vec<CommonScenario>> {
    if count == 0 {
        return Err(LabError::Config("need at least one scenario".into()));
    }
    let sqrt_dt = grid.dt().sqrt();
    let mut out = Vec::with_capacity(count);
    for id in 0..count {
        let mut path = Array2::zeros((grid.steps + 1, dim));
        for j in 0..grid.steps {
            for c in 0..dim {
                let z = rng::standard_normal(seed, stream::SCENARIO, id as u64, j as u64, c as u64);
                path[(j + 1, c)] = path[(j, c)] + sqrt_dt * z;
            }
        }
        out.push(CommonScenario {
            id,
            b_path: path,
            weight: 1.0 / count as f64,
            randomization: None,
        });
    }
    Ok(out)
}

/// A zero common-noise scenario (useful for symmetric toy checks).
pub fn zero_scenario(grid: TimeGrid, dim: usize) -> CommonScenario {
    CommonScenario {
        id: 0,
        b_path: Array2::zeros((grid.steps + 1, dim)),
        weight: 1.0,
        randomization: None,
    }
}
