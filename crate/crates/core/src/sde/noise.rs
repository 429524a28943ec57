//! Seeded noise bundles.
//!
//! The common-noise stream is keyed independently of the population size,
//! so bundles sharing a seed share dB exactly across n: common random
//! numbers for coupled comparisons between population sizes.

use ndarray::{Array2, Array3};

use crate::error::{LabError, Result};
use crate::model::ModelSpec;
use crate::rng::{self, stream};
use crate::timegrid::TimeGrid;

/// Guard against accidentally requesting astronomically sized bundles.
pub const MAX_NOISE_ELEMENTS: usize = 1 << 28;

#[derive(Debug, Clone)]
pub struct NoiseBundle {
    pub seed: u64,
    pub grid: TimeGrid,
    /// Common-noise increments, steps x d.
    pub db: Array2<f64>,
    /// Idiosyncratic increments, n x steps x d.
    pub dw: Array3<f64>,
    /// Initial states, n x d.
    pub x0: Array2<f64>,
    /// True when `x0` was sampled i.i.d. from the model's initial law.
    pub x0_iid: bool,
}

impl NoiseBundle {
    #[inline]
    pub fn n_players(&self) -> usize {
        self.dw.shape()[0]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.db.ncols()
    }

    /// Cumulative common-noise path on the nodes, (steps+1) x d, B_0 = 0.
    pub fn common_path(&self) -> Array2<f64> {
        cumulative(&self.db)
    }
}

pub fn cumulative(increments: &Array2<f64>) -> Array2<f64> {
    let (steps, d) = increments.dim();
    let mut path = Array2::zeros((steps + 1, d));
    for j in 0..steps {
        for c in 0..d {
            path[(j + 1, c)] = path[(j, c)] + increments[(j, c)];
        }
    }
    path
}

/// Gaussian N(0, dt I) increments per substream plus i.i.d. initial states.
pub fn generate_noise(seed: u64, n: usize, grid: TimeGrid, spec: &ModelSpec) -> Result<NoiseBundle> {
    generate_noise_with_common(seed, n, grid, spec, None)
}

/// Same, but with the common-noise increments overridden (scenario
/// injection). The override must be steps x d.
pub fn generate_noise_with_common(
    seed: u64,
    n: usize,
    grid: TimeGrid,
    spec: &ModelSpec,
    common_override: Option<&Array2<f64>>,
) -> Result<NoiseBundle> {
    if n < 1 {
        return Err(LabError::Config("need at least one player".into()));
    }
    let d = spec.dim;
    let steps = grid.steps;
    if n * steps * d > MAX_NOISE_ELEMENTS {
        return Err(LabError::Resource(format!(
            "noise bundle of {} elements exceeds the {} element budget",
            n * steps * d,
            MAX_NOISE_ELEMENTS
        )));
    }
    let sqrt_dt = grid.dt().sqrt();

    let db = match common_override {
        Some(ov) => {
            if ov.dim() != (steps, d) {
                return Err(LabError::GridMismatch(format!(
                    "common-noise override has shape {:?}, want ({steps}, {d})",
                    ov.dim()
                )));
            }
            ov.clone()
        }
        None => {
            let mut db = Array2::zeros((steps, d));
            for j in 0..steps {
                for c in 0..d {
                    db[(j, c)] =
                        sqrt_dt * rng::standard_normal(seed, stream::COMMON, 0, j as u64, c as u64);
                }
            }
            db
        }
    };

    let mut dw = Array3::zeros((n, steps, d));
    for i in 0..n {
        for j in 0..steps {
            for c in 0..d {
                dw[(i, j, c)] = sqrt_dt
                    * rng::standard_normal(
                        seed,
                        stream::IDIOSYNCRATIC,
                        i as u64,
                        j as u64,
                        c as u64,
                    );
            }
        }
    }

    let mut x0 = Array2::zeros((n, d));
    let mut row = vec![0.0; d];
    for i in 0..n {
        spec.initial_law
            .sample_into(seed, stream::INITIAL, i as u64, &mut row);
        for c in 0..d {
            x0[(i, c)] = row[c];
        }
    }

    Ok(NoiseBundle {
        seed,
        grid,
        db,
        dw,
        x0,
        x0_iid: true,
    })
}
