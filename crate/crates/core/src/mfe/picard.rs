//! Damped Picard iteration for the per-scenario fixed point, plus the
//! consistency and exploitability diagnostics of a solved equilibrium.

use ndarray::Array2;

use crate::error::{LabError, Result};
use crate::grid::StateGrid;
use crate::measures;
use crate::model::{MeasureSummary, ModelSpec};
use crate::sde::{self, ExogenousEnv, Policy, TablePolicy};
use crate::timegrid::TimeGrid;

use super::fokker_planck::{forward_fp, histogram_from_law, summary_from_histogram};
use super::hjb::{evaluate_policy_table, solve_hjb};
use super::scenario::CommonScenario;

/// Solved equilibrium for one common-noise scenario.
#[derive(Debug, Clone)]
pub struct MfeSolution {
    pub scenario: CommonScenario,
    pub grid: StateGrid,
    pub time_grid: TimeGrid,
    /// Equilibrium measure flow as histograms, nodes x bins.
    pub hist: Array2<f64>,
    /// Semi-Markov policy restricted to this scenario, re-solved against
    /// the final flow; steps x bins.
    pub policy: Array2<usize>,
    /// Value table against the final flow, nodes x bins.
    pub value: Array2<f64>,
    /// Per-iteration sup-node W1 distance between successive iterates.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub tol: f64,
    pub quad_points: usize,
}

impl MfeSolution {
    pub fn node_summaries(&self, spec: &ModelSpec) -> Result<Vec<MeasureSummary>> {
        let orders = spec.moment_orders();
        (0..self.hist.nrows())
            .map(|j| {
                let row: Vec<f64> = self.hist.row(j).to_vec();
                summary_from_histogram(&self.grid, &row, &orders)
            })
            .collect()
    }

    /// Initial histogram (the discretized initial law).
    pub fn initial_hist(&self) -> Vec<f64> {
        self.hist.row(0).to_vec()
    }

    pub fn table_policy(&self) -> Policy {
        Policy::Table(std::sync::Arc::new(TablePolicy {
            grid: self.grid.clone(),
            actions: self.policy.clone(),
        }))
    }
}

/// Damped iteration `mu <- (1-theta) mu + theta state-flow(best response to mu)`.
///
/// Stops when the sup-node W1 between iterates drops below `tol`; hitting
/// `max_iter` returns the last iterate flagged as non-converged rather
/// than an error. The stored policy and value tables are re-solved against
/// the final flow so that the returned triple is internally consistent.
pub fn picard_iterate(
    spec: &ModelSpec,
    scenario: &CommonScenario,
    grid: &StateGrid,
    theta: f64,
    tol: f64,
    max_iter: usize,
    quad_points: usize,
) -> Result<MfeSolution> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(LabError::Config("damping must be in (0, 1]".into()));
    }
    if !(tol > 0.0) {
        return Err(LabError::Config("tolerance must be positive".into()));
    }
    grid.check_coverage(spec)?;
    scenario.validate()?;
    let steps = scenario.steps();
    let bins = grid.total_bins();
    let orders = spec.moment_orders();
    let time_grid = TimeGrid::new(spec.horizon, steps)?;
    let moment_envelope = gronwall_envelope(spec);

    let initial = histogram_from_law(&spec.initial_law, grid);

    // mu^0: the initial law pushed forward under action index 0
    let zero_table = Array2::zeros((steps, bins));
    let mut hist = forward_fp(spec, scenario, &zero_table, grid, &initial, quad_points)?.hist;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let summaries = summaries_of(&hist, grid, &orders)?;
        check_moment_envelope(spec, &summaries, moment_envelope)?;
        let solved = solve_hjb(spec, scenario, &summaries, grid, quad_points)?;
        let pushed = forward_fp(spec, scenario, &solved.policy, grid, &initial, quad_points)?.hist;

        let mut mixed = Array2::zeros((steps + 1, bins));
        for j in 0..=steps {
            for b in 0..bins {
                mixed[(j, b)] = (1.0 - theta) * hist[(j, b)] + theta * pushed[(j, b)];
            }
        }

        let dist = flow_w1(&hist, &mixed, grid, &orders)?;
        trace.push(dist);
        hist = mixed;
        if dist < tol {
            converged = true;
            break;
        }
    }

    let summaries = summaries_of(&hist, grid, &orders)?;
    let final_solve = solve_hjb(spec, scenario, &summaries, grid, quad_points)?;

    Ok(MfeSolution {
        scenario: scenario.clone(),
        grid: grid.clone(),
        time_grid,
        hist,
        policy: final_solve.policy,
        value: final_solve.value,
        trace,
        converged,
        iterations,
        tol,
        quad_points,
    })
}

/// Generous discrete-Gronwall envelope for the p'-moment of the flow:
/// `sup_t M_{p'}(mu_t) <= C (1 + M_{p'}(lambda))` with C built from the
/// drift growth constant, the horizon and the diffusion norms. The bound
/// only needs to catch runaway iterates, not to be tight.
fn gronwall_envelope(spec: &ModelSpec) -> Option<f64> {
    if spec.p_prime == 0.0 {
        return None; // bounded-coefficient models carry no moment budget
    }
    let q = spec.p_prime;
    let t = spec.horizon;
    let diffusion = spec.sigma_frobenius() + spec.gamma_frobenius();
    let c = (2.0 + 2.0 * spec.c1 * t).powf(q)
        * (q * (1.0 + spec.c1) * t).exp()
        * (1.0 + (diffusion * (2.0 * q * t).sqrt()).powf(q));
    Some(c * (1.0 + spec.initial_law.abs_moment(q)))
}

fn check_moment_envelope(
    spec: &ModelSpec,
    summaries: &[MeasureSummary],
    envelope: Option<f64>,
) -> Result<()> {
    let Some(bound) = envelope else {
        return Ok(());
    };
    for (j, m) in summaries.iter().enumerate() {
        let moment = m.moment(spec.p_prime);
        if !(moment <= bound) {
            return Err(LabError::Internal(format!(
                "flow moment blow-up: M_p'(mu_{j}) = {moment:.3e} exceeds the Gronwall envelope {bound:.3e}"
            )));
        }
    }
    Ok(())
}

fn summaries_of(
    hist: &Array2<f64>,
    grid: &StateGrid,
    orders: &[f64],
) -> Result<Vec<MeasureSummary>> {
    (0..hist.nrows())
        .map(|j| {
            let row: Vec<f64> = hist.row(j).to_vec();
            summary_from_histogram(grid, &row, orders)
        })
        .collect()
}

/// Sup-over-nodes W1 between two histogram flows on the same grid.
fn flow_w1(a: &Array2<f64>, b: &Array2<f64>, grid: &StateGrid, orders: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in 0..a.nrows() {
        let sa = summary_from_histogram(grid, &a.row(j).to_vec(), orders)?;
        let sb = summary_from_histogram(grid, &b.row(j).to_vec(), orders)?;
        worst = worst.max(measures::wasserstein(&sa, &sb, 1.0)?.value);
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    /// W1 between the particle cloud and the solved flow, per node.
    pub per_node_w1: Vec<f64>,
    /// Monte Carlo standard error proxy (cloud spread / sqrt(m)), per node.
    pub mc_se: Vec<f64>,
    pub bin_width: f64,
    pub max_w1: f64,
}

/// Simulates the solved policy in its own environment and measures the
/// distance between the resulting conditional-law estimate and the solved
/// flow: the empirical consistency condition.
pub fn consistency_residual(
    spec: &ModelSpec,
    sol: &MfeSolution,
    m_particles: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    let flow = sol.node_summaries(spec)?;
    let db = sol.scenario.increments();
    let env = ExogenousEnv {
        db: db.view(),
        flow: &flow,
        signal: Some(sol.scenario.signal()),
    };
    let policy = sol.table_policy();
    let cloud = sde::simulate_exogenous_mkv(spec, &env, &policy, m_particles, seed)?;

    let mut per_node = Vec::with_capacity(flow.len());
    let mut ses = Vec::with_capacity(flow.len());
    for j in 0..flow.len() {
        let d = measures::wasserstein(&cloud.measure_flow[j], &flow[j], 1.0)?;
        per_node.push(d.value);
        let spread = cloud.measure_flow[j].variance().sqrt();
        ses.push(spread / (m_particles as f64).sqrt());
    }
    let max_w1 = per_node.iter().copied().fold(0.0, f64::max);
    Ok(ConsistencyReport {
        per_node_w1: per_node,
        mc_se: ses,
        bin_width: sol.grid.max_width(),
        max_w1,
    })
}

#[derive(Debug, Clone)]
pub struct ExploitReport {
    /// Optimal value minus the stored policy's value at the initial law.
    pub gap: f64,
    /// max(1, sup |V|); the natural unit for relative exploitability.
    pub value_scale: f64,
}

/// Exploitability of a solution's policy against its own flow: the value
/// of a fresh backward solve minus the policy-evaluation value, both
/// integrated against the initial histogram. Nonnegative up to rounding;
/// zero at a grid fixed point.
pub fn exploitability(spec: &ModelSpec, sol: &MfeSolution) -> Result<ExploitReport> {
    exploitability_of_table(spec, sol, &sol.policy)
}

/// Same diagnostic for an arbitrary policy table.
pub fn exploitability_of_table(
    spec: &ModelSpec,
    sol: &MfeSolution,
    table: &Array2<usize>,
) -> Result<ExploitReport> {
    let flow = sol.node_summaries(spec)?;
    let solved = solve_hjb(spec, &sol.scenario, &flow, &sol.grid, sol.quad_points)?;
    let evaluated = evaluate_policy_table(
        spec,
        &sol.scenario,
        &flow,
        &sol.grid,
        sol.quad_points,
        table,
    )?;
    let hist0 = sol.initial_hist();
    let mut gap = 0.0;
    for b in 0..hist0.len() {
        gap += hist0[b] * (solved.value[(0, b)] - evaluated[(0, b)]);
    }
    let scale = solved
        .value
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    Ok(ExploitReport {
        gap,
        value_scale: scale,
    })
}
