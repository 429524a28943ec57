//! Deterministic forward push of a histogram under a policy table,
//! conditional on a scenario.
//!
//! Each bin's mass moves through the one-step Gaussian kernel (mean shift
//! `b dt + gamma dB_j`, covariance `sigma sigma^T dt`) discretized by
//! quadrature, deposited back onto the lattice by multilinear weights.
//! Out-of-grid quadrature mass is clamped to the edge bins and reported,
//! so total mass is conserved exactly up to rounding.

use ndarray::Array2;

use crate::error::{LabError, Result};
use crate::grid::StateGrid;
use crate::model::{mat_vec, InitialLaw, MeasureSummary, ModelSpec};
use crate::quad::GaussHermite;

use super::scenario::CommonScenario;

pub const MASS_LEAK_LIMIT: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Histogram flow, nodes x bins.
    pub hist: Array2<f64>,
    /// Mass that clamped at the boundary, per step.
    pub clamped: Vec<f64>,
}

/// Push `initial` forward under the policy table. The drift's measure
/// argument is the developing flow itself, so a fixed point of the damped
/// iteration is exactly a consistent flow.
pub fn forward_fp(
    spec: &ModelSpec,
    scenario: &CommonScenario,
    table: &Array2<usize>,
    grid: &StateGrid,
    initial: &[f64],
    quad_points: usize,
) -> Result<ForwardOutput> {
    let steps = scenario.steps();
    let bins = grid.total_bins();
    if table.dim() != (steps, bins) {
        return Err(LabError::GridMismatch(format!(
            "policy table {:?} does not match ({steps}, {bins})",
            table.dim()
        )));
    }
    if initial.len() != bins {
        return Err(LabError::GridMismatch("initial histogram size".into()));
    }
    let d = spec.dim;
    let dt = spec.horizon / steps as f64;
    let sqrt_dt = dt.sqrt();
    let quad = GaussHermite::new(quad_points)?;
    let db = scenario.increments();
    let orders = spec.moment_orders();

    let mut hist = Array2::zeros((steps + 1, bins));
    for b in 0..bins {
        hist[(0, b)] = initial[b];
    }
    let mut clamped_per_step = Vec::with_capacity(steps);

    let mut centers = vec![0.0; d];
    let mut drift = [0.0f64; 8];
    let mut gam_db = [0.0f64; 8];
    let mut sig_z = [0.0f64; 8];
    let mut x_base = [0.0f64; 8];
    let mut x_next = [0.0f64; 8];

    for j in 0..steps {
        let t = j as f64 * dt;
        let row: Vec<f64> = (0..bins).map(|b| hist[(j, b)]).collect();
        let summary = summary_from_histogram(grid, &row, &orders)?;
        let db_j: Vec<f64> = (0..d).map(|c| db[(j, c)]).collect();
        mat_vec(&spec.gamma, &db_j, &mut gam_db[..d]);

        let mut next = vec![0.0; bins];
        let mut clamped = 0.0;
        for bin in 0..bins {
            let mass = hist[(j, bin)];
            if mass == 0.0 {
                continue;
            }
            grid.center(bin, &mut centers);
            let action = spec.action(table[(j, bin)]);
            spec.drift_into(t, &centers, &summary, action, &mut drift[..d]);
            for c in 0..d {
                x_base[c] = centers[c] + drift[c] * dt + gam_db[c];
            }
            quad.product_rule(d, |z, w| {
                mat_vec(&spec.sigma, z, &mut sig_z[..d]);
                for c in 0..d {
                    x_next[c] = x_base[c] + sig_z[c] * sqrt_dt;
                }
                clamped += grid.deposit(&mut next, &x_next[..d], mass * w);
            });
        }
        let total: f64 = next.iter().sum();
        if (total - 1.0).abs() > MASS_LEAK_LIMIT {
            return Err(LabError::Internal(format!(
                "mass leak at step {j}: total {total}"
            )));
        }
        for b in 0..bins {
            hist[(j + 1, b)] = next[b];
        }
        clamped_per_step.push(clamped);
    }

    Ok(ForwardOutput {
        hist,
        clamped: clamped_per_step,
    })
}

/// Histogram of the initial law on the grid: per-dimension CDF differences
/// with the tails absorbed into the edge bins (components independent).
pub fn histogram_from_law(law: &InitialLaw, grid: &StateGrid) -> Vec<f64> {
    let d = grid.dim();
    // per-dimension bin masses
    let mut per_dim: Vec<Vec<f64>> = Vec::with_capacity(d);
    for c in 0..d {
        let k = grid.bins[c];
        let w = grid.width(c);
        let mut masses = vec![0.0; k];
        for i in 0..k {
            let lo_edge = grid.lo[c] + i as f64 * w;
            let hi_edge = lo_edge + w;
            let lo_cdf = if i == 0 { 0.0 } else { law.cdf_1d(c, lo_edge) };
            let hi_cdf = if i == k - 1 { 1.0 } else { law.cdf_1d(c, hi_edge) };
            masses[i] = (hi_cdf - lo_cdf).max(0.0);
        }
        per_dim.push(masses);
    }
    let mut hist = vec![0.0; grid.total_bins()];
    let mut idx = vec![0usize; d];
    for (flat, h) in hist.iter_mut().enumerate() {
        grid.unflatten(flat, &mut idx);
        *h = (0..d).map(|c| per_dim[c][idx[c]]).product();
    }
    hist
}

/// Finite-support summary of a histogram: atoms at the bin centers.
pub fn summary_from_histogram(
    grid: &StateGrid,
    hist: &[f64],
    orders: &[f64],
) -> Result<MeasureSummary> {
    let bins = grid.total_bins();
    let d = grid.dim();
    let total: f64 = hist.iter().sum();
    if !(total > 0.0) {
        return Err(LabError::Domain("histogram has no mass".into()));
    }
    let mut pts = Array2::zeros((bins, d));
    let mut centers = vec![0.0; d];
    let mut weights = Vec::with_capacity(bins);
    for b in 0..bins {
        grid.center(b, &mut centers);
        for c in 0..d {
            pts[(b, c)] = centers[c];
        }
        weights.push(hist[b] / total);
    }
    MeasureSummary::from_weighted(std::sync::Arc::new(pts), weights, orders)
}
