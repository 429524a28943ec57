//! Best responses and epsilon-Nash gap estimation.
//!
//! The deviation supremum is approximated by a table-policy dynamic
//! program against a FROZEN environment: the baseline population is
//! simulated once per noise bundle, the other players' trajectories are
//! frozen, and the deviator solves a grid DP in which its own candidate
//! state is re-inserted into the empirical measure with weight 1/n. The
//! resulting policy is then evaluated honestly by coupled simulation, so
//! every reported gap is a Monte Carlo LOWER bound on the true supremum.
//!
//! Deviation classes:
//! - `Markovian`: one table over (time, own-state bin), shared across all
//!   bundles (the certainty-equivalent heuristic pools the environments).
//! - `SClosedLoop`: one table per scenario id, i.e. the deviator may also
//!   read the common signal.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::StateGrid;
use crate::mfe::{one_step_value, MfeSolution};
use crate::model::{MeasureSummary, ModelSpec};
use crate::quad::GaussHermite;
use crate::rng::{self, stream};
use crate::sde::{
    self, objective, simulate_deviation, simulate_nplayer, CommonSignal, NoiseBundle, Policy, ScenarioTablePolicy, TablePolicy, TrajectoryBundle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeviationClass {
    Markovian,
    SClosedLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GapMode {
    PerPlayerMax,
    Averaged,
}

/// A noise bundle tagged with its common-signal realization.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub noise: NoiseBundle,
    pub signal: Option<CommonSignal>,
}

/// The constructed symmetric profile: n copies of one shared per-scenario
/// table, each player reading only its own state and the common signal.
pub fn constructed_equilibrium(sols: &[MfeSolution], n: usize) -> Result<Vec<Policy>> {
    if sols.is_empty() {
        return Err(LabError::Dependency("no solved scenarios".into()));
    }
    if n == 0 {
        return Err(LabError::Config("need at least one player".into()));
    }
    let grid = sols[0].grid.clone();
    let max_id = sols.iter().map(|s| s.scenario.id).max().unwrap();
    let steps = sols[0].policy.nrows();
    let mut tables = vec![Array2::zeros((steps, grid.total_bins())); max_id + 1];
    let mut seen = vec![false; max_id + 1];
    for sol in sols {
        if sol.grid != grid {
            return Err(LabError::GridMismatch(
                "scenario solutions use different state grids".into(),
            ));
        }
        if seen[sol.scenario.id] {
            return Err(LabError::Domain(format!(
                "duplicate scenario id {}",
                sol.scenario.id
            )));
        }
        seen[sol.scenario.id] = true;
        tables[sol.scenario.id] = sol.policy.clone();
    }
    let shared = Arc::new(ScenarioTablePolicy { grid, tables });
    Ok((0..n).map(|_| Policy::SClosedLoop(Arc::clone(&shared))).collect())
}

/// Frozen environment extracted from one baseline simulation: the other
/// players' per-node summaries and the deviator's start point.
struct FrozenEnv {
    others: Vec<MeasureSummary>,
    db: Array2<f64>,
    x0: Vec<f64>,
    scenario_id: usize,
}

fn freeze_environment(
    spec: &ModelSpec,
    traj: &TrajectoryBundle,
    bundle: &ScenarioBundle,
    k: usize,
) -> FrozenEnv {
    let n = traj.n_players();
    let d = spec.dim;
    let nodes = traj.grid.nodes();
    let orders = spec.moment_orders();
    let mut others = Vec::with_capacity(nodes);
    for j in 0..nodes {
        let mut pts = Array2::zeros((n - 1, d));
        let mut row = 0;
        for i in 0..n {
            if i == k {
                continue;
            }
            let x = traj.state(i, j);
            for c in 0..d {
                pts[(row, c)] = x[c];
            }
            row += 1;
        }
        others.push(
            MeasureSummary::from_points(Arc::new(pts), &orders).expect("n >= 2 players"),
        );
    }
    FrozenEnv {
        others,
        db: bundle.noise.db.clone(),
        x0: traj.state(k, 0).to_vec(),
        scenario_id: bundle.signal.map_or(0, |s| s.scenario_id),
    }
}

/// Group-averaged backward DP over the frozen environments. Returns the
/// argmax table and the DP value at the deviators' start points.
fn frozen_dp(
    spec: &ModelSpec,
    envs: &[&FrozenEnv],
    n: usize,
    grid: &StateGrid,
    quad: &GaussHermite,
    steps: usize,
    dt: f64,
) -> (Array2<usize>, f64) {
    let bins = grid.total_bins();
    let d = spec.dim;
    let self_weight = 1.0 / n as f64;
    let mut centers = vec![0.0; d];

    let mut value = vec![0.0; bins];
    for (bin, v) in value.iter_mut().enumerate() {
        grid.center(bin, &mut centers);
        let mut acc = 0.0;
        for env in envs {
            let m = env.others[steps].with_atom(&centers, self_weight);
            acc += spec.term_cost(&centers, &m);
        }
        *v = acc / envs.len() as f64;
    }

    let mut table = Array2::zeros((steps, bins));
    for j in (0..steps).rev() {
        let t = j as f64 * dt;
        let mut next = vec![0.0; bins];
        for bin in 0..bins {
            grid.center(bin, &mut centers);
            // augmented measures and increments are action-independent
            let ms: Vec<MeasureSummary> = envs
                .iter()
                .map(|env| env.others[j].with_atom(&centers, self_weight))
                .collect();
            let dbs: Vec<Vec<f64>> = envs
                .iter()
                .map(|env| (0..d).map(|c| env.db[(j, c)]).collect())
                .collect();
            let mut best_q = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..spec.n_actions() {
                let mut acc = 0.0;
                for (e, _env) in envs.iter().enumerate() {
                    let (q, _) = one_step_value(
                        spec, grid, quad, &value, t, &centers, &ms[e], a, &dbs[e], dt,
                    );
                    acc += q;
                }
                let q = acc / envs.len() as f64;
                if q > best_q {
                    best_q = q;
                    best_a = a;
                }
            }
            next[bin] = best_q;
            table[(j, bin)] = best_a;
        }
        value = next;
    }

    let dp_value = envs
        .iter()
        .map(|env| grid.interpolate(&value, &env.x0).0)
        .sum::<f64>()
        / envs.len() as f64;
    (table, dp_value)
}

#[derive(Debug, Clone)]
pub struct BestResponse {
    pub policy: Policy,
    /// Frozen-environment DP estimate of the deviation value (heuristic).
    pub dp_value: f64,
    /// Honest coupled Monte Carlo value of the DP policy.
    pub mc_value: f64,
    pub mc_se: f64,
    pub baseline_value: f64,
    pub baseline_se: f64,
    /// Paired gap statistics (same bundles for baseline and deviation).
    pub gap: f64,
    pub gap_se: f64,
}

/// Approximate best response of player k against the frozen baseline.
pub fn best_response(
    spec: &ModelSpec,
    bundles: &[ScenarioBundle],
    policies: &[Policy],
    k: usize,
    class: DeviationClass,
    grid: &StateGrid,
    quad_points: usize,
) -> Result<BestResponse> {
    if bundles.is_empty() {
        return Err(LabError::Config("need at least one bundle".into()));
    }
    let n = policies.len();
    if n < 2 {
        return Err(LabError::Config(
            "the frozen-environment program needs at least two players".into(),
        ));
    }
    if class == DeviationClass::SClosedLoop && bundles.iter().any(|b| b.signal.is_none()) {
        return Err(LabError::Config(
            "S-closed-loop deviations need scenario-tagged bundles".into(),
        ));
    }
    let steps = bundles[0].noise.grid.steps;
    let dt = bundles[0].noise.grid.dt();
    let quad = GaussHermite::new(quad_points)?;

    // baseline simulations, coupled across the whole computation
    let baselines: Vec<TrajectoryBundle> = bundles
        .par_iter()
        .map(|b| simulate_nplayer(spec, &b.noise, policies, b.signal.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let envs: Vec<FrozenEnv> = baselines
        .iter()
        .zip(bundles)
        .map(|(traj, b)| freeze_environment(spec, traj, b, k))
        .collect();

    // Per-scenario DP, grouped by the signal tags (one pooled group when
    // the bundles carry no signals).
    let tagged = bundles.iter().all(|b| b.signal.is_some());
    let group_ids: Vec<usize> = if tagged {
        let max_id = envs.iter().map(|e| e.scenario_id).max().unwrap();
        (0..=max_id).collect()
    } else {
        vec![0]
    };
    let mut group_tables: Vec<(usize, Array2<usize>, Array2<f64>)> = Vec::new();
    let mut dp_acc = 0.0;
    for &id in &group_ids {
        let members: Vec<&FrozenEnv> = if tagged {
            envs.iter().filter(|e| e.scenario_id == id).collect()
        } else {
            envs.iter().collect()
        };
        if members.is_empty() {
            continue;
        }
        let (table, dp) = frozen_dp(spec, &members, n, grid, &quad, steps, dt);
        dp_acc += dp * members.len() as f64;
        // reference mean path of the group's baselines, for the
        // state-based scenario inference of Markovian deviations
        let d = spec.dim;
        let mut reference = Array2::zeros((steps + 1, d));
        for m in &members {
            for j in 0..=steps {
                for c in 0..d {
                    reference[(j, c)] += m.others[j].mean()[c] / members.len() as f64;
                }
            }
        }
        group_tables.push((id, table, reference));
    }
    let dp_value = dp_acc / envs.len() as f64;

    let br_policy = match class {
        DeviationClass::SClosedLoop => {
            let max_id = group_ids.iter().copied().max().unwrap();
            let mut tables = vec![Array2::zeros((steps, grid.total_bins())); max_id + 1];
            for (id, table, _) in &group_tables {
                tables[*id] = table.clone();
            }
            Policy::SClosedLoop(Arc::new(ScenarioTablePolicy {
                grid: grid.clone(),
                tables,
            }))
        }
        DeviationClass::Markovian if group_tables.len() == 1 => {
            // a single environment group degenerates to a plain table
            Policy::Table(Arc::new(TablePolicy {
                grid: grid.clone(),
                actions: group_tables[0].1.clone(),
            }))
        }
        DeviationClass::Markovian => {
            // signal-free deviation: weight each group's table by the
            // pseudo-likelihood of the observed empirical-mean path around
            // that group's reference path, and play the posterior-weighted
            // action. Early on the posterior is flat (the response to the
            // mixture); it concentrates exponentially once the scenarios
            // separate. The classifier reads only the state history (a
            // closed-loop quantity), never the signal.
            let noise_var = {
                // per-step variance of a member's mean increment around the
                // reference increment; increments are nearly independent
                // across steps, unlike the mean levels
                let mut acc = 0.0;
                let mut count = 0usize;
                for (id, _, reference) in &group_tables {
                    for env in envs.iter().filter(|e| !tagged || e.scenario_id == *id) {
                        for j in 1..env.others.len() {
                            for c in 0..spec.dim {
                                let dm = env.others[j].mean()[c] - env.others[j - 1].mean()[c];
                                let dr = reference[(j, c)] - reference[(j - 1, c)];
                                acc += (dm - dr).powi(2);
                            }
                            count += 1;
                        }
                    }
                }
                (acc / count.max(1) as f64).max(1e-12)
            };
            let grid = grid.clone();
            let tables: Vec<(Array2<usize>, Array2<f64>)> = group_tables
                .iter()
                .map(|(_, t, r)| (t.clone(), r.clone()))
                .collect();
            let actions: Vec<Vec<f64>> = spec.actions.clone();
            let d = spec.dim;
            Policy::SemiMarkov(Arc::new(move |node, own: &[f64], flow, _b_ignored| {
                let row = node.min(steps - 1);
                let bin = grid.nearest_bin(own);
                let mut log_w = Vec::with_capacity(tables.len());
                for (_, reference) in &tables {
                    let mut dist = 0.0;
                    for l in 1..flow.len() {
                        let mean = flow[l].mean();
                        let prev = flow[l - 1].mean();
                        for c in 0..d {
                            let dm = mean[c] - prev[c];
                            let dr = reference[(l, c)] - reference[(l - 1, c)];
                            dist += (dm - dr).powi(2);
                        }
                    }
                    log_w.push(-dist / (2.0 * noise_var));
                }
                let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut weights: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                // posterior-mean action, snapped to the grid
                let k = actions[0].len();
                let mut mean_action = vec![0.0; k];
                for (slot, (table, _)) in tables.iter().enumerate() {
                    let a = &actions[table[(row, bin)]];
                    for c in 0..k {
                        mean_action[c] += weights[slot] * a[c];
                    }
                }
                let mut best_idx = 0;
                let mut best_dist = f64::INFINITY;
                for (idx, a) in actions.iter().enumerate() {
                    let dist: f64 = a
                        .iter()
                        .zip(&mean_action)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    if dist < best_dist {
                        best_dist = dist;
                        best_idx = idx;
                    }
                }
                best_idx
            }))
        }
    };

    // honest evaluation of the fixed policy on the same bundles
    let per_bundle: Vec<(f64, f64)> = bundles
        .par_iter()
        .zip(&baselines)
        .map(|(b, base)| -> Result<(f64, f64)> {
            let dev = simulate_deviation(spec, &b.noise, policies, k, &br_policy, b.signal.as_ref())?;
            Ok((objective(spec, base, k), objective(spec, &dev, k)))
        })
        .collect::<Result<Vec<_>>>()?;
    let base_vals: Vec<f64> = per_bundle.iter().map(|p| p.0).collect();
    let dev_vals: Vec<f64> = per_bundle.iter().map(|p| p.1).collect();
    let gaps: Vec<f64> = per_bundle.iter().map(|p| p.1 - p.0).collect();
    let (baseline_value, baseline_se) = sde::mean_se(&base_vals);
    let (mc_value, mc_se) = sde::mean_se(&dev_vals);
    let (gap, gap_se) = sde::mean_se(&gaps);

    Ok(BestResponse {
        policy: br_policy,
        dp_value,
        mc_value,
        mc_se,
        baseline_value,
        baseline_se,
        gap,
        gap_se,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PlayerGap {
    pub player: usize,
    pub baseline: f64,
    pub baseline_se: f64,
    pub br_value: f64,
    pub br_se: f64,
    pub gap: f64,
    pub gap_se: f64,
    pub dp_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub n: usize,
    pub mode: GapMode,
    pub class: DeviationClass,
    pub per_player: Vec<PlayerGap>,
    pub averaged_gap: f64,
    pub averaged_se: f64,
    pub max_gap: f64,
    pub max_gap_se: f64,
    /// True when symmetry let the report reuse player 0's best response.
    pub exchangeable: bool,
    /// Set when a gap is negative beyond three standard errors, which
    /// indicates a best-response defect rather than noise.
    pub suspicious: bool,
}

fn policies_exchangeable(policies: &[Policy], bundles: &[ScenarioBundle]) -> bool {
    if !bundles.iter().all(|b| b.noise.x0_iid) {
        return false;
    }
    let first = &policies[0];
    policies.iter().all(|p| match (first, p) {
        (Policy::ConstantAction(a), Policy::ConstantAction(b)) => a == b,
        (Policy::Table(a), Policy::Table(b)) => Arc::ptr_eq(a, b),
        (Policy::SClosedLoop(a), Policy::SClosedLoop(b)) => Arc::ptr_eq(a, b),
        (Policy::Markovian(a), Policy::Markovian(b)) => Arc::ptr_eq(a, b),
        (Policy::SemiMarkov(a), Policy::SemiMarkov(b)) => Arc::ptr_eq(a, b),
        _ => false,
    })
}

/// Nash-gap report over the requested deviation class and aggregation
/// mode. Under exchangeability (identical policies, i.i.d. starts) the
/// best response is computed once for player 0 and reused.
pub fn nash_gap(
    spec: &ModelSpec,
    bundles: &[ScenarioBundle],
    policies: &[Policy],
    mode: GapMode,
    class: DeviationClass,
    grid: &StateGrid,
    quad_points: usize,
) -> Result<GapReport> {
    let n = policies.len();
    let exchangeable = policies_exchangeable(policies, bundles);
    let players: Vec<usize> = if exchangeable {
        vec![0]
    } else {
        (0..n).collect()
    };

    let mut per_player = Vec::with_capacity(players.len());
    for &k in &players {
        let br = best_response(spec, bundles, policies, k, class, grid, quad_points)?;
        per_player.push(PlayerGap {
            player: k,
            baseline: br.baseline_value,
            baseline_se: br.baseline_se,
            br_value: br.mc_value,
            br_se: br.mc_se,
            gap: br.gap,
            gap_se: br.gap_se,
            dp_value: br.dp_value,
        });
    }

    let (averaged_gap, averaged_se, max_gap, max_gap_se) = if exchangeable {
        let g = &per_player[0];
        (g.gap, g.gap_se, g.gap, g.gap_se)
    } else {
        let avg = per_player.iter().map(|g| g.gap).sum::<f64>() / per_player.len() as f64;
        let avg_se = per_player
            .iter()
            .map(|g| g.gap_se * g.gap_se)
            .sum::<f64>()
            .sqrt()
            / per_player.len() as f64;
        let worst = per_player
            .iter()
            .max_by(|a, b| a.gap.partial_cmp(&b.gap).unwrap())
            .unwrap();
        (avg, avg_se, worst.gap, worst.gap_se)
    };

    let suspicious = per_player
        .iter()
        .any(|g| g.gap < -3.0 * (g.gap_se + 1e-15));

    Ok(GapReport {
        n,
        mode,
        class,
        per_player,
        averaged_gap,
        averaged_se,
        max_gap,
        max_gap_se,
        exchangeable,
        suspicious,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassInclusionReport {
    pub gap_markovian: f64,
    pub se_markovian: f64,
    pub gap_s_closed_loop: f64,
    pub se_s_closed_loop: f64,
    pub combined_se: f64,
    /// Richer deviation class yields no extra gain beyond noise.
    pub pass: bool,
}

/// Runs the same baseline under both deviation classes: the broadened
/// information set should not improve the best response beyond noise.
pub fn class_inclusion_experiment(
    spec: &ModelSpec,
    bundles: &[ScenarioBundle],
    policies: &[Policy],
    grid: &StateGrid,
    quad_points: usize,
) -> Result<ClassInclusionReport> {
    let markov = nash_gap(
        spec,
        bundles,
        policies,
        GapMode::Averaged,
        DeviationClass::Markovian,
        grid,
        quad_points,
    )?;
    let scl = nash_gap(
        spec,
        bundles,
        policies,
        GapMode::Averaged,
        DeviationClass::SClosedLoop,
        grid,
        quad_points,
    )?;
    let combined_se = (markov.averaged_se.powi(2) + scl.averaged_se.powi(2)).sqrt();
    Ok(ClassInclusionReport {
        gap_markovian: markov.averaged_gap,
        se_markovian: markov.averaged_se,
        gap_s_closed_loop: scl.averaged_gap,
        se_s_closed_loop: scl.averaged_se,
        combined_se,
        pass: scl.averaged_gap <= markov.averaged_gap + 3.0 * combined_se,
    })
}

/// Random search over table policies: a crude comparison bound for the DP
/// best response. Returns the best coupled MC value found and its SE.
pub fn random_search_bound(
    spec: &ModelSpec,
    bundles: &[ScenarioBundle],
    policies: &[Policy],
    k: usize,
    grid: &StateGrid,
    tries: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let steps = bundles[0].noise.grid.steps;
    let bins = grid.total_bins();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for trial in 0..tries {
        let mut table = Array2::zeros((steps, bins));
        for j in 0..steps {
            for b in 0..bins {
                let u = rng::uniform(seed, stream::SEARCH, trial as u64, j as u64, b as u64);
                table[(j, b)] = ((u * spec.n_actions() as f64) as usize).min(spec.n_actions() - 1);
            }
        }
        let beta = Policy::Table(Arc::new(TablePolicy {
            grid: grid.clone(),
            actions: table,
        }));
        let vals: Vec<f64> = bundles
            .par_iter()
            .map(|b| -> Result<f64> {
                let dev = simulate_deviation(spec, &b.noise, policies, k, &beta, b.signal.as_ref())?;
                Ok(objective(spec, &dev, k))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mean, se) = sde::mean_se(&vals);
        if mean > best.0 {
            best = (mean, se);
        }
    }
    Ok(best)
}
