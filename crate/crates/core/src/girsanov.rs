//! Drift-difference processes, stochastic exponentials, and the
//! measure-change equivalence check.
//!
//! For a baseline population and a candidate deviation `beta` of player k,
//! the drift-difference process along the BASELINE trajectory is
//!
//! ```text
//! Xi_j = sigma^{-1} [ b(t_j, X^k_j, mu^n_j, beta_j) - b(t_j, X^k_j, mu^n_j, a^k_j) ],
//! ```
//!
//! and the stochastic exponential accumulates in the log domain,
//!
//! ```text
//! log zeta_{j+1} = log zeta_j + Xi_j . dW^k_j - |Xi_j|^2 dt / 2,
//! ```
//!
//! which is an exact discrete-time martingale for Gaussian increments.
//! Reweighting baseline expectations by zeta reproduces the law of the
//! deviated system; `verify_measure_change` tests that identity by Monte
//! Carlo on coupled bundles.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::model::{mat_vec, MeasureSummary, ModelSpec};
use crate::sde::{
    self, simulate_deviation, simulate_nplayer, CommonSignal, NoiseBundle, Policy, PolicyCtx,
    TrajectoryBundle,
};

/// Saturating bound on |log zeta|; hitting it sets the `clipped` flag.
pub const LOG_WEIGHT_CLIP: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct GirsanovWeights {
    /// Drift-difference path, steps x d.
    pub xi: Array2<f64>,
    /// Log stochastic exponential on the nodes; log_zeta[0] = 0.
    pub log_zeta: Vec<f64>,
    /// True iff any |log zeta| was saturated at the clip bound.
    pub clipped: bool,
}

impl GirsanovWeights {
    #[inline]
    pub fn zeta(&self, node: usize) -> f64 {
        self.log_zeta[node].exp()
    }

    pub fn zeta_path(&self) -> Vec<f64> {
        self.log_zeta.iter().map(|l| l.exp()).collect()
    }
}

/// Evaluate `beta`'s action for player k at node j along a baseline
/// trajectory.
pub fn beta_action_along(
    traj: &TrajectoryBundle,
    b_path: &Array2<f64>,
    k: usize,
    beta: &Policy,
    signal: Option<&CommonSignal>,
    node: usize,
) -> Result<usize> {
    let states_at_node = traj.states.slice(ndarray::s![.., node, ..]);
    let ctx = PolicyCtx {
        node,
        player: k,
        own_state: traj.state(k, node),
        all_states: Some(states_at_node),
        flow_so_far: &traj.measure_flow[..=node],
        b_so_far: b_path.slice(ndarray::s![..=node, ..]),
        signal,
    };
    beta.action_index(&ctx)
}

/// Drift-difference path for player k, evaluated along the baseline.
pub fn xi_process(
    spec: &ModelSpec,
    traj: &TrajectoryBundle,
    b_path: &Array2<f64>,
    k: usize,
    beta: &Policy,
    signal: Option<&CommonSignal>,
) -> Result<Array2<f64>> {
    let d = spec.dim;
    let steps = traj.grid.steps;
    let mut xi = Array2::zeros((steps, d));
    let mut drift_base = vec![0.0; d];
    let mut drift_beta = vec![0.0; d];
    let mut diff = vec![0.0; d];
    let mut out = vec![0.0; d];
    for j in 0..steps {
        let t = traj.grid.time(j);
        let x = traj.state(k, j);
        let m = &traj.measure_flow[j];
        let a_base = spec.action(traj.actions[(k, j)]);
        let a_beta_idx = beta_action_along(traj, b_path, k, beta, signal, j)?;
        let a_beta = spec.action(a_beta_idx);
        spec.drift_into(t, x, m, a_base, &mut drift_base);
        spec.drift_into(t, x, m, a_beta, &mut drift_beta);
        for c in 0..d {
            diff[c] = drift_beta[c] - drift_base[c];
        }
        mat_vec(&spec.sigma_inv, &diff, &mut out);
        for c in 0..d {
            xi[(j, c)] = out[c];
        }
    }
    Ok(xi)
}

/// Log-Euler stochastic exponential of `xi` against player k's increments.
pub fn zeta_process(xi: &Array2<f64>, dw_k: ndarray::ArrayView2<f64>, dt: f64) -> Result<GirsanovWeights> {
    let (steps, d) = xi.dim();
    if dw_k.dim() != (steps, d) {
        return Err(LabError::GridMismatch(format!(
            "xi has shape {:?}, increments {:?}",
            xi.dim(),
            dw_k.dim()
        )));
    }
    let mut log_zeta = vec![0.0; steps + 1];
    let mut clipped = false;
    for j in 0..steps {
        let mut dot = 0.0;
        let mut norm2 = 0.0;
        for c in 0..d {
            dot += xi[(j, c)] * dw_k[(j, c)];
            norm2 += xi[(j, c)] * xi[(j, c)];
        }
        let next = log_zeta[j] + dot - 0.5 * norm2 * dt;
        if !next.is_finite() {
            return Err(LabError::Divergence {
                player: 0,
                step: j + 1,
                detail: format!("log weight became {next}"),
            });
        }
        if next.abs() > LOG_WEIGHT_CLIP {
            clipped = true;
            log_zeta[j + 1] = next.clamp(-LOG_WEIGHT_CLIP, LOG_WEIGHT_CLIP);
        } else {
            log_zeta[j + 1] = next;
        }
    }
    Ok(GirsanovWeights {
        xi: xi.clone(),
        log_zeta,
        clipped,
    })
}

/// Weights for every player of a baseline bundle against a common `beta`.
pub fn weights_all_players(
    spec: &ModelSpec,
    traj: &TrajectoryBundle,
    noise: &NoiseBundle,
    beta: &Policy,
    signal: Option<&CommonSignal>,
) -> Result<Vec<GirsanovWeights>> {
    let b_path = noise.common_path();
    (0..traj.n_players())
        .map(|k| {
            let xi = xi_process(spec, traj, &b_path, k, beta, signal)?;
            zeta_process(&xi, noise.dw.slice(ndarray::s![k, .., ..]), traj.grid.dt())
        })
        .collect()
}

/// A bounded path functional `phi(t, X^k, mu^n, B)`: evaluation is clipped
/// to `[-clip, clip]`, which is also recorded in reports.
pub struct BoundedFunctional {
    pub name: String,
    pub clip: f64,
    #[allow(clippy::type_complexity)]
    pub eval: std::sync::Arc<
        dyn Fn(usize, &TrajectoryBundle, usize, &[MeasureSummary], &Array2<f64>) -> f64
            + Send
            + Sync,
    >,
}

impl BoundedFunctional {
    /// The deviating player's terminal (or node-t) state, clipped.
    pub fn clipped_state(clip: f64) -> Self {
        Self {
            name: format!("clipped_state_{clip}"),
            clip,
            eval: std::sync::Arc::new(|node, traj, k, _flow, _b| traj.state(k, node)[0]),
        }
    }

    pub fn apply(
        &self,
        node: usize,
        traj: &TrajectoryBundle,
        k: usize,
        b_path: &Array2<f64>,
    ) -> f64 {
        let raw = (self.eval)(node, traj, k, &traj.measure_flow, b_path);
        raw.clamp(-self.clip, self.clip)
    }
}

/// Reweighted baseline expectation `(1/R) sum_r zeta^k_t phi(...)`.
pub fn reweighted_expectation(
    trajs: &[TrajectoryBundle],
    weights: &[GirsanovWeights],
    b_paths: &[Array2<f64>],
    functional: &BoundedFunctional,
    k: usize,
    node: usize,
) -> (f64, f64) {
    let samples: Vec<f64> = trajs
        .iter()
        .zip(weights)
        .zip(b_paths)
        .map(|((traj, w), b)| w.zeta(node) * functional.apply(node, traj, k, b))
        .collect();
    sde::mean_se(&samples)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub functional: String,
    pub clip: f64,
    pub left: f64,
    pub right: f64,
    pub se_left: f64,
    pub se_right: f64,
    /// Standard error of the paired difference (the bundles are coupled).
    pub se_paired: f64,
    pub band: f64,
    pub dt_allowance: f64,
    pub replicas: usize,
    pub any_clipped: bool,
    pub pass: bool,
}

/// Two estimates of `E[phi]` under the deviated dynamics: LEFT reweights
/// the baseline by zeta, RIGHT simulates the deviation directly on the
/// same bundles. Pass iff they agree within `3 * SE + dt allowance`.
#[allow(clippy::too_many_arguments)]
pub fn verify_measure_change(
    spec: &ModelSpec,
    bundles: &[NoiseBundle],
    policies: &[Policy],
    k: usize,
    beta: &Policy,
    functional: &BoundedFunctional,
    node: usize,
    signal: Option<&CommonSignal>,
    dt_allowance: f64,
) -> Result<EquivalenceReport> {
    if bundles.is_empty() {
        return Err(LabError::Config("need at least one noise bundle".into()));
    }
    let per_bundle: Vec<(f64, f64, bool)> = bundles
        .par_iter()
        .map(|bundle| -> Result<(f64, f64, bool)> {
            let base = simulate_nplayer(spec, bundle, policies, signal)?;
            let b_path = bundle.common_path();
            let xi = xi_process(spec, &base, &b_path, k, beta, signal)?;
            let w = zeta_process(&xi, bundle.dw.slice(ndarray::s![k, .., ..]), base.grid.dt())?;
            let left = w.zeta(node) * functional.apply(node, &base, k, &b_path);
            let dev = simulate_deviation(spec, bundle, policies, k, beta, signal)?;
            let right = functional.apply(node, &dev, k, &b_path);
            Ok((left, right, w.clipped))
        })
        .collect::<Result<Vec<_>>>()?;

    let lefts: Vec<f64> = per_bundle.iter().map(|p| p.0).collect();
    let rights: Vec<f64> = per_bundle.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = per_bundle.iter().map(|p| p.0 - p.1).collect();
    let any_clipped = per_bundle.iter().any(|p| p.2);
    let (left, se_left) = sde::mean_se(&lefts);
    let (right, se_right) = sde::mean_se(&rights);
    let (diff_mean, se_paired) = sde::mean_se(&diffs);
    let band = 3.0 * se_paired + dt_allowance;
    Ok(EquivalenceReport {
        functional: functional.name.clone(),
        clip: functional.clip,
        left,
        right,
        se_left,
        se_right,
        se_paired,
        band,
        dt_allowance,
        replicas: bundles.len(),
        any_clipped,
        pass: diff_mean.abs() <= band,
    })
}

/// Average relative entropy estimate `(1/n) sum_k E[zeta^k_t log zeta^k_t]`
/// from an ensemble of per-replica weight sets.
pub fn entropy_estimate(weight_sets: &[Vec<GirsanovWeights>], node: usize) -> (f64, f64) {
    let samples: Vec<f64> = weight_sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|w| {
                    let z = w.zeta(node);
                    z * z.ln()
                })
                .sum::<f64>()
                / set.len() as f64
        })
        .collect();
    sde::mean_se(&samples)
}

/// Per-node population weight mass `(1/n) sum_k zeta^k_j`, one value per
/// replica; used for the mass-one diagnostic of the reweighted flow.
pub fn mass_per_node(weight_sets: &[Vec<GirsanovWeights>], nodes: usize) -> Vec<(f64, f64)> {
    (0..nodes)
        .map(|j| {
            let samples: Vec<f64> = weight_sets
                .iter()
                .map(|set| set.iter().map(|w| w.zeta(j)).sum::<f64>() / set.len() as f64)
                .collect();
            sde::mean_se(&samples)
        })
        .collect()
}
