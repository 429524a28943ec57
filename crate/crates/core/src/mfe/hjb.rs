//! Backward dynamic program on the state grid, conditional on a scenario.
//!
//! The recursion is
//!
//! ```text
//! V(T, x)   = g(x, mu_T)
//! V(t_j, x) = max_a { f(t_j, x, mu_j, a) dt
//!                     + E_xi[ V(t_{j+1}, x + b dt + sigma xi sqrt(dt) + gamma dB_j) ] }
//! ```
//!
//! with the Gaussian expectation by Gauss-Hermite quadrature, multilinear
//! interpolation between bin centers, and edge clamping outside the grid.
//! Ties in the max break toward the lowest action index.

use ndarray::Array2;

use crate::error::{LabError, Result};
use crate::grid::StateGrid;
use crate::model::{mat_vec, MeasureSummary, ModelSpec};
use crate::quad::GaussHermite;

use super::scenario::CommonScenario;

/// Fraction of (measure-weighted) quadrature mass that may clamp at the
/// boundary before the grid is declared too small.
pub const CLAMP_LIMIT: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct HjbOutput {
    /// Value table, nodes x bins.
    pub value: Array2<f64>,
    /// Argmax policy, steps x bins.
    pub policy: Array2<usize>,
    /// Worst measure-weighted clamped quadrature fraction over nodes.
    pub max_clamped: f64,
}

/// One-step state-action value against `v_next`, plus the quadrature mass
/// that clamped at the grid boundary. Shared by the solver, the policy
/// evaluator and the best-response program so their arithmetic agrees
/// bit-for-bit.
#[allow(clippy::too_many_arguments)]
pub fn one_step_value(
    spec: &ModelSpec,
    grid: &StateGrid,
    quad: &GaussHermite,
    v_next: &[f64],
    t: f64,
    x: &[f64],
    m: &MeasureSummary,
    action_idx: usize,
    db_j: &[f64],
    dt: f64,
) -> (f64, f64) {
    let d = spec.dim;
    let mut drift = [0.0f64; 8];
    let mut gam_db = [0.0f64; 8];
    let mut sig_z = [0.0f64; 8];
    let mut x_base = [0.0f64; 8];
    let mut x_next = [0.0f64; 8];
    let action = spec.action(action_idx);
    spec.drift_into(t, x, m, action, &mut drift[..d]);
    mat_vec(&spec.gamma, db_j, &mut gam_db[..d]);
    for c in 0..d {
        x_base[c] = x[c] + drift[c] * dt + gam_db[c];
    }
    let sqrt_dt = dt.sqrt();
    let mut expectation = 0.0;
    let mut clamped_mass = 0.0;
    quad.product_rule(d, |z, w| {
        mat_vec(&spec.sigma, z, &mut sig_z[..d]);
        for c in 0..d {
            x_next[c] = x_base[c] + sig_z[c] * sqrt_dt;
        }
        let (v, clamped) = grid.interpolate(v_next, &x_next[..d]);
        expectation += w * v;
        if clamped {
            clamped_mass += w;
        }
    });
    (
        spec.run_cost(t, x, m, action) * dt + expectation,
        clamped_mass,
    )
}

/// Measure-weighted per-bin masses used for the grid-coverage accounting.
fn bin_masses(grid: &StateGrid, m: &MeasureSummary) -> Vec<f64> {
    let mut masses = vec![0.0; grid.total_bins()];
    m.for_each_atom(|x, w| masses[grid.nearest_bin(x)] += w);
    masses
}

/// Backward solve against a fixed measure flow, scenario-conditional.
pub fn solve_hjb(
    spec: &ModelSpec,
    scenario: &CommonScenario,
    mu_flow: &[MeasureSummary],
    grid: &StateGrid,
    quad_points: usize,
) -> Result<HjbOutput> {
    backward_pass(spec, scenario, mu_flow, grid, quad_points, None)
}

/// Value of a fixed policy table against the same flow; shares the one-step
/// arithmetic with the solver.
pub fn evaluate_policy_table(
    spec: &ModelSpec,
    scenario: &CommonScenario,
    mu_flow: &[MeasureSummary],
    grid: &StateGrid,
    quad_points: usize,
    table: &Array2<usize>,
) -> Result<Array2<f64>> {
    let out = backward_pass(spec, scenario, mu_flow, grid, quad_points, Some(table))?;
    Ok(out.value)
}

fn backward_pass(
    spec: &ModelSpec,
    scenario: &CommonScenario,
    mu_flow: &[MeasureSummary],
    grid: &StateGrid,
    quad_points: usize,
    fixed_table: Option<&Array2<usize>>,
) -> Result<HjbOutput> {
    let steps = scenario.steps();
    if mu_flow.len() != steps + 1 {
        return Err(LabError::GridMismatch(format!(
            "measure flow has {} nodes for {steps} steps",
            mu_flow.len()
        )));
    }
    let bins = grid.total_bins();
    let d = spec.dim;
    let dt = spec.horizon / steps as f64;
    let quad = GaussHermite::new(quad_points)?;
    let db = scenario.increments();

    let mut centers = vec![0.0; d];
    let mut value = Array2::zeros((steps + 1, bins));
    let mut policy = Array2::zeros((steps, bins));

    for bin in 0..bins {
        grid.center(bin, &mut centers);
        value[(steps, bin)] = spec.term_cost(&centers, &mu_flow[steps]);
    }

    let mut max_clamped = 0.0f64;
    for j in (0..steps).rev() {
        let t = j as f64 * dt;
        let m = &mu_flow[j];
        let masses = bin_masses(grid, m);
        let db_j: Vec<f64> = (0..d).map(|c| db[(j, c)]).collect();
        let v_next: Vec<f64> = (0..bins).map(|b| value[(j + 1, b)]).collect();
        let mut node_clamped = 0.0;
        for bin in 0..bins {
            grid.center(bin, &mut centers);
            let (best_q, best_a, clamp) = match fixed_table {
                Some(table) => {
                    let a = table[(j, bin)];
                    let (q, cl) = one_step_value(
                        spec, grid, &quad, &v_next, t, &centers, m, a, &db_j, dt,
                    );
                    (q, a, cl)
                }
                None => {
                    let mut best_q = f64::NEG_INFINITY;
                    let mut best_a = 0;
                    let mut best_clamp = 0.0;
                    for a in 0..spec.n_actions() {
                        let (q, cl) = one_step_value(
                            spec, grid, &quad, &v_next, t, &centers, m, a, &db_j, dt,
                        );
                        if q > best_q {
                            best_q = q;
                            best_a = a;
                            best_clamp = cl;
                        }
                    }
                    (best_q, best_a, best_clamp)
                }
            };
            value[(j, bin)] = best_q;
            policy[(j, bin)] = best_a;
            node_clamped += masses[bin] * clamp;
        }
        max_clamped = max_clamped.max(node_clamped);
    }

    if max_clamped > CLAMP_LIMIT {
        return Err(LabError::Config(format!(
            "state grid too small relative to the diffusion spread: {:.2}% of \
             measure-weighted quadrature mass clamps at the boundary",
            100.0 * max_clamped
        )));
    }

    Ok(HjbOutput {
        value,
        policy,
        max_clamped,
    })
}
