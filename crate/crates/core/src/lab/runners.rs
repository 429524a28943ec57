//! Experiment runners: each produces a set of report records plus a
//! required-criteria verdict, and writes nothing until asked.
//!
//! All work units are pure functions of (config, seeds); rayon only
//! parallelizes replica loops whose results are collected in input order,
//! so reruns are byte-identical regardless of worker count.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::girsanov::{self, BoundedFunctional};
use crate::measures;
use crate::mfe::{self, CommonScenario, MfeSolution};
use crate::model::{self, BuiltinModel, MeasureSummary, ModelSpec};
use crate::nash::{self, GapMode, ScenarioBundle};
use crate::rng::{self, stream};
use crate::sde::{self, Policy};
use crate::spde::{self, BumpTestFunction, ResidualKind};
use crate::timegrid::TimeGrid;

use super::config::ExperimentConfig;
use super::report::{write_records, ReportRecord};

/// Records plus the and-fold of the required criteria they encode.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub records: Vec<ReportRecord>,
    pub required_ok: bool,
}

impl SuiteOutcome {
    pub fn merge(&mut self, other: SuiteOutcome) {
        self.records.extend(other.records);
        self.required_ok &= other.required_ok;
    }

    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
            required_ok: true,
        }
    }
}

pub struct LabContext {
    pub cfg: ExperimentConfig,
    pub spec: ModelSpec,
    pub hash: String,
}

// salts separating the derived seed families of the different runners
const SALT_FORWARD: u64 = 1;
const SALT_CONVERSE: u64 = 2;
const SALT_MARTINGALE: u64 = 3;
const SALT_MOMENTS: u64 = 5;
const SALT_INCLUSION: u64 = 6;

impl LabContext {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.spec()?;
        let hash = cfg.hash();
        Ok(Self { cfg, spec, hash })
    }

    fn record(&self, experiment: &str, metric: &str, value: f64) -> ReportRecord {
        ReportRecord::new(experiment, &self.hash, self.cfg.seeds.noise, metric, value)
    }

    pub fn scenarios(&self) -> Result<Vec<CommonScenario>> {
        mfe::generate_scenarios(
            self.cfg.seeds.scenarios,
            self.cfg.scenarios.count,
            self.cfg.time_grid()?,
            self.spec.dim,
        )
    }

    /// Solve the fixed point for every scenario (parallel, ordered by id).
    pub fn solve_all(&self) -> Result<Vec<MfeSolution>> {
        let scenarios = self.scenarios()?;
        let grid = self.cfg.state_grid(&self.spec)?;
        let p = &self.cfg.picard;
        scenarios
            .par_iter()
            .map(|s| {
                mfe::picard_iterate(&self.spec, s, &grid, p.theta, p.tol, p.max_iter, p.quad_points)
            })
            .collect()
    }

    /// Persist solution artifacts plus the per-iteration trace log.
    pub fn save_solutions(&self, sols: &[MfeSolution], dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut trace = String::from("scenario,iteration,distance\n");
        for sol in sols {
            let base = dir.join(format!("mfe_scenario_{:03}", sol.scenario.id));
            mfe::save_solution(sol, &base, &self.hash)?;
            for (i, d) in sol.trace.iter().enumerate() {
                trace.push_str(&format!("{},{},{}\n", sol.scenario.id, i, d));
            }
        }
        std::fs::write(dir.join("picard_trace.csv"), trace)?;
        Ok(())
    }

    /// Scenario-tagged bundles with the scenario's B path injected as the
    /// common noise: the conditional coupling used throughout.
    fn scenario_bundles(
        &self,
        scenarios: &[CommonScenario],
        n: usize,
        per_scenario: usize,
        salt: u64,
    ) -> Result<Vec<ScenarioBundle>> {
        let grid = self.cfg.time_grid()?;
        let mut out = Vec::with_capacity(scenarios.len() * per_scenario);
        for s in scenarios {
            let db = s.increments();
            for r in 0..per_scenario {
                let seed = rng::derive_seed(
                    self.cfg.seeds.noise,
                    &[salt, n as u64, s.id as u64, r as u64],
                );
                let noise =
                    sde::generate_noise_with_common(seed, n, grid, &self.spec, Some(&db))?;
                out.push(ScenarioBundle {
                    noise,
                    signal: Some(s.signal()),
                });
            }
        }
        Ok(out)
    }

    /// Forward direction: under the constructed profile, the empirical
    /// flow approaches the scenario's equilibrium flow as n grows.
    pub fn run_forward_convergence(&self, sols: &[MfeSolution]) -> Result<SuiteOutcome> {
        let experiment = "forward_convergence";
        let tg = self.cfg.time_grid()?;
        let replicas = self.cfg.population.forward_replicas;
        let n_list = &self.cfg.population.n_list;
        let mut records = Vec::new();
        let mut ok = true;

        // per (scenario, n): mean +- se of the sup-node W1 distance
        let mut table = vec![vec![(0.0, 0.0); n_list.len()]; sols.len()];
        for (ni, &n) in n_list.iter().enumerate() {
            let policies = nash::constructed_equilibrium(sols, n)?;
            for (si, sol) in sols.iter().enumerate() {
                let flow = sol.node_summaries(&self.spec)?;
                let db = sol.scenario.increments();
                let signal = sol.scenario.signal();
                let dists: Vec<f64> = (0..replicas)
                    .into_par_iter()
                    .map(|r| -> Result<f64> {
                        let seed = rng::derive_seed(
                            self.cfg.seeds.noise,
                            &[SALT_FORWARD, n as u64, sol.scenario.id as u64, r as u64],
                        );
                        let noise = sde::generate_noise_with_common(
                            seed,
                            n,
                            tg,
                            &self.spec,
                            Some(&db),
                        )?;
                        let traj = sde::simulate_nplayer(
                            &self.spec,
                            &noise,
                            &policies,
                            Some(&signal),
                        )?;
                        let mut worst = 0.0f64;
                        for j in 0..flow.len() {
                            let d =
                                measures::wasserstein(&traj.measure_flow[j], &flow[j], 1.0)?;
                            worst = worst.max(d.value);
                        }
                        Ok(worst)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (mean, se) = sde::mean_se(&dists);
                table[si][ni] = (mean, se);
                records.push(
                    self.record(experiment, "forward_w1", mean)
                        .with_n(n)
                        .with_scenario(sol.scenario.id)
                        .with_se(se),
                );
            }
        }

        // strict improvement from the first to the last population size,
        // beyond three combined standard errors, per scenario
        for (si, sol) in sols.iter().enumerate() {
            let (d_first, se_first) = table[si][0];
            let (d_last, se_last) = table[si][n_list.len() - 1];
            let margin = d_first - d_last
                - 3.0 * (se_first * se_first + se_last * se_last).sqrt();
            let pass = margin > 0.0;
            ok &= pass;
            records.push(
                self.record(experiment, "forward_trend_margin", margin)
                    .with_scenario(sol.scenario.id)
                    .with_verdict(pass),
            );
        }
        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// Converse direction: the constructed profile's exploitability
    /// (lower-bounded by the frozen-environment program) shrinks with n.
    pub fn run_converse(&self, sols: &[MfeSolution]) -> Result<SuiteOutcome> {
        let experiment = "converse";
        let grid = self.cfg.state_grid(&self.spec)?;
        let class = self.cfg.deviation_class()?;
        let scenarios: Vec<CommonScenario> = sols.iter().map(|s| s.scenario.clone()).collect();
        let n_list = &self.cfg.population.n_list;
        let mut records = Vec::new();
        let mut ok = true;

        let mut eps = Vec::with_capacity(n_list.len());
        for &n in n_list {
            let policies = nash::constructed_equilibrium(sols, n)?;
            let bundles = self.scenario_bundles(
                &scenarios,
                n,
                self.cfg.population.gap_bundles_per_scenario,
                SALT_CONVERSE,
            )?;
            let report = nash::nash_gap(
                &self.spec,
                &bundles,
                &policies,
                GapMode::Averaged,
                class,
                &grid,
                self.cfg.picard.quad_points,
            )?;
            let nonneg = report.averaged_gap >= -3.0 * (report.averaged_se + 1e-15);
            ok &= nonneg && !report.suspicious;
            records.push(
                self.record(experiment, "epsilon_n", report.averaged_gap)
                    .with_n(n)
                    .with_se(report.averaged_se)
                    .with_verdict(nonneg),
            );
            if self.cfg.deviation.random_search_tries > 0 {
                let (search_value, search_se) = nash::random_search_bound(
                    &self.spec,
                    &bundles,
                    &policies,
                    0,
                    &grid,
                    self.cfg.deviation.random_search_tries,
                    self.cfg.seeds.search,
                )?;
                let search_gap = search_value - report.per_player[0].baseline;
                records.push(
                    self.record(experiment, "epsilon_n_random_search", search_gap)
                        .with_n(n)
                        .with_se(search_se)
                        .informational("informational"),
                );
            }
            eps.push((report.averaged_gap, report.averaged_se));
        }

        let (e_first, se_first) = eps[0];
        let (e_last, se_last) = eps[eps.len() - 1];
        let combined = (0.25 * se_first * se_first + se_last * se_last).sqrt();
        let margin = 0.5 * e_first - e_last - combined;
        let pass = margin > 0.0;
        ok &= pass;
        records.push(
            self.record(experiment, "converse_trend_margin", margin)
                .with_verdict(pass),
        );
        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// State-dependent deviation with a moderate drift gap: a few grid
    /// steps around the neutral action, switching on the sign of the own
    /// state. Keeps the stochastic exponential light-tailed.
    fn sign_deviation_policy(spec: &ModelSpec) -> Policy {
        let mid = Self::mid_action(spec);
        let offset = (spec.n_actions() / 10).max(1);
        let hi = (mid + offset).min(spec.n_actions() - 1);
        let lo = mid.saturating_sub(offset);
        Policy::SemiMarkov(Arc::new(move |_node, own: &[f64], _flow, _b| {
            if own[0] < 0.0 {
                hi
            } else {
                lo
            }
        }))
    }

    fn mid_action(spec: &ModelSpec) -> usize {
        // the action closest to zero; for symmetric grids, the midpoint
        let mut best = 0;
        let mut best_norm = f64::INFINITY;
        for (i, a) in spec.actions.iter().enumerate() {
            let n: f64 = a.iter().map(|v| v * v).sum();
            if n < best_norm {
                best_norm = n;
                best = i;
            }
        }
        best
    }

    /// Martingale mean, reweighted-population mass and the measure-change
    /// equivalence matrix.
    pub fn run_girsanov_suite(&self) -> Result<SuiteOutcome> {
        let mut outcome = self.run_girsanov_martingale()?;
        outcome.merge(self.run_girsanov_matrix()?);
        Ok(outcome)
    }

    /// Stochastic-exponential diagnostics: terminal mean, per-node
    /// population weight mass, and entropy uniformity across a doubling
    /// of the population.
    pub fn run_girsanov_martingale(&self) -> Result<SuiteOutcome> {
        let experiment = "girsanov";
        let g = &self.cfg.girsanov;
        let tg = self.cfg.time_grid()?;
        let n = g.martingale_n;
        let baseline = Policy::ConstantAction(Self::mid_action(&self.spec));
        let policies = vec![baseline; n];
        let beta = Self::sign_deviation_policy(&self.spec);
        let mut records = Vec::new();
        let mut ok = true;

        // one weight path per player per replica
        let weight_sets: Vec<Vec<girsanov::GirsanovWeights>> = (0..g.martingale_replicas)
            .into_par_iter()
            .map(|r| -> Result<Vec<girsanov::GirsanovWeights>> {
                let seed =
                    rng::derive_seed(self.cfg.seeds.noise, &[SALT_MARTINGALE, r as u64]);
                let noise = sde::generate_noise(seed, n, tg, &self.spec)?;
                let traj = sde::simulate_nplayer(&self.spec, &noise, &policies, None)?;
                girsanov::weights_all_players(&self.spec, &traj, &noise, &beta, None)
            })
            .collect::<Result<Vec<_>>>()?;

        let terminal: Vec<f64> = weight_sets
            .iter()
            .map(|set| set.iter().map(|w| w.zeta(tg.steps)).sum::<f64>() / set.len() as f64)
            .collect();
        let (mean, se) = sde::mean_se(&terminal);
        let pass = (mean - 1.0).abs() <= 3.0 * se;
        ok &= pass;
        records.push(
            self.record(experiment, "zeta_terminal_mean", mean)
                .with_n(n)
                .with_se(se)
                .with_verdict(pass),
        );

        // population weight mass stays within 3 SE of one at every node
        let mass = girsanov::mass_per_node(&weight_sets, tg.nodes());
        let mut worst_dev = 0.0f64;
        let mut mass_ok = true;
        for (m, s) in mass.iter().skip(1) {
            let dev = (m - 1.0).abs();
            worst_dev = worst_dev.max(dev - 3.0 * s);
            mass_ok &= dev <= 3.0 * s;
        }
        ok &= mass_ok;
        records.push(
            self.record(experiment, "zeta_mass_worst_margin", worst_dev)
                .with_n(n)
                .with_verdict(mass_ok),
        );

        // entropy uniformity trend across a doubling of n
        let entropy_small = girsanov::entropy_estimate(&weight_sets, tg.steps);
        let big_sets: Vec<Vec<girsanov::GirsanovWeights>> = (0..g.martingale_replicas / 2)
            .into_par_iter()
            .map(|r| -> Result<Vec<girsanov::GirsanovWeights>> {
                let seed = rng::derive_seed(
                    self.cfg.seeds.noise,
                    &[SALT_MARTINGALE, 0xbb, r as u64],
                );
                let noise = sde::generate_noise(seed, 2 * n, tg, &self.spec)?;
                let big_policies = vec![policies[0].clone(); 2 * n];
                let traj = sde::simulate_nplayer(&self.spec, &noise, &big_policies, None)?;
                girsanov::weights_all_players(&self.spec, &traj, &noise, &beta, None)
            })
            .collect::<Result<Vec<_>>>()?;
        let entropy_big = girsanov::entropy_estimate(&big_sets, tg.steps);
        let uniform = entropy_big.0 <= 2.0 * entropy_small.0.max(1e-12)
            + 3.0 * (entropy_big.1 + entropy_small.1);
        ok &= uniform;
        records.push(
            self.record(experiment, "entropy_per_player", entropy_small.0)
                .with_n(n)
                .with_se(entropy_small.1)
                .with_verdict(true),
        );
        records.push(
            self.record(experiment, "entropy_per_player", entropy_big.0)
                .with_n(2 * n)
                .with_se(entropy_big.1)
                .with_verdict(uniform),
        );
        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// Measure-change equivalence on the builtin-model x seed matrix:
    /// reweighted-baseline vs direct-deviation estimates of a clipped
    /// terminal functional, with a dt-halving calibrated allowance.
    pub fn run_girsanov_matrix(&self) -> Result<SuiteOutcome> {
        let experiment = "girsanov";
        let g = &self.cfg.girsanov;
        let tg = self.cfg.time_grid()?;
        let n = g.martingale_n;
        let mut records = Vec::new();
        let mut ok = true;
        let models = [
            BuiltinModel::LqMonotone,
            BuiltinModel::LqCrowd,
            BuiltinModel::BoundedTanh,
        ];
        let functional = BoundedFunctional::clipped_state(g.clip);
        let mut cells = 0;
        let mut passed = 0;
        for (mi, builtin) in models.iter().enumerate() {
            let spec_m = self.cfg.spec_named(*builtin)?;
            let base_m = Policy::ConstantAction(Self::mid_action(&spec_m));
            let policies_m = vec![base_m; n];
            let beta_m = Self::sign_deviation_policy(&spec_m);
            let allowance = {
                // dt-halving calibration of the discretization allowance
                let diff_at = |steps: usize, salt: u64| -> Result<f64> {
                    let grid_c = TimeGrid::new(self.cfg.time.horizon, steps)?;
                    let bundles: Vec<sde::NoiseBundle> = (0..g.matrix_replicas)
                        .into_par_iter()
                        .map(|r| {
                            let seed = rng::derive_seed(
                                self.cfg.seeds.noise,
                                &[0xca11, mi as u64, salt, r as u64],
                            );
                            sde::generate_noise(seed, n, grid_c, &spec_m)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let rep = girsanov::verify_measure_change(
                        &spec_m,
                        &bundles,
                        &policies_m,
                        0,
                        &beta_m,
                        &functional,
                        grid_c.steps,
                        None,
                        0.0,
                    )?;
                    Ok(rep.left - rep.right)
                };
                let coarse = diff_at(self.cfg.time.steps, 1)?;
                let fine = diff_at(self.cfg.time.steps * 2, 2)?;
                (2.0 * (coarse.abs() - fine.abs())).max(0.0)
            };
            for &seed in &g.matrix_seeds {
                let bundles: Vec<sde::NoiseBundle> = (0..g.matrix_replicas)
                    .into_par_iter()
                    .map(|r| {
                        let s = rng::derive_seed(seed, &[0x9a7e, mi as u64, r as u64]);
                        sde::generate_noise(s, n, tg, &spec_m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let report = girsanov::verify_measure_change(
                    &spec_m,
                    &bundles,
                    &policies_m,
                    0,
                    &beta_m,
                    &functional,
                    tg.steps,
                    None,
                    allowance,
                )?;
                cells += 1;
                passed += usize::from(report.pass);
                records.push(
                    ReportRecord::new(
                        experiment,
                        &self.hash,
                        seed,
                        &format!("measure_change_gap_{}", builtin.name()),
                        report.left - report.right,
                    )
                    .with_n(n)
                    .with_se(report.se_paired)
                    .with_verdict(report.pass),
                );
            }
        }
        let rate = passed as f64 / cells as f64;
        let rate_ok = rate >= 0.95;
        ok &= rate_ok;
        records.push(
            self.record(experiment, "measure_change_pass_rate", rate)
                .with_verdict(rate_ok),
        );

        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// Residual scaling of the base SPDE and its reweighted variant.
    pub fn run_spde_suite(&self) -> Result<SuiteOutcome> {
        let experiment = "spde";
        let s = &self.cfg.spde;
        let tg = self.cfg.time_grid()?;
        let phi = BumpTestFunction::standard(vec![s.bump_center; self.spec.dim], s.bump_radius);
        let spec = self.spec.clone();
        let mid = Self::mid_action(&spec);
        let hi = spec.n_actions() - 1;
        let factory = move |n: usize| -> Vec<Policy> {
            // alternating constant actions keep the population spread out
            (0..n)
                .map(|i| Policy::ConstantAction(if i % 2 == 0 { mid } else { hi }))
                .collect()
        };
        let beta = Self::sign_deviation_policy(&self.spec);
        let mut records = Vec::new();
        let mut ok = true;

        let n_max = *s.n_list.iter().max().unwrap();
        let allowance = spde::calibrate_dt_allowance(
            &self.spec,
            tg,
            &factory,
            &phi,
            n_max,
            s.calibration_replicas,
            rng::derive_seed(self.cfg.seeds.noise, &[0xd7a1]),
        )?;

        let base = spde::residual_scaling(
            &self.spec,
            tg,
            &factory,
            &phi,
            &s.n_list,
            s.replicas,
            rng::derive_seed(self.cfg.seeds.noise, &[0x5bde, 1]),
            &ResidualKind::Base,
            allowance,
        )?;
        for row in &base.rows {
            let pass = row.below_bound;
            ok &= pass;
            records.push(
                self.record(experiment, "fp_residual_sq", row.estimate)
                    .with_n(row.n)
                    .with_se(row.se)
                    .with_verdict(pass),
            );
            records.push(
                self.record(experiment, "fp_residual_bound", row.bound)
                    .with_n(row.n),
            );
        }
        ok &= base.slope_in_band;
        records.push(
            self.record(experiment, "fp_residual_slope", base.slope)
                .with_verdict(base.slope_in_band),
        );

        let nu = spde::residual_scaling(
            &self.spec,
            tg,
            &factory,
            &phi,
            &s.n_list,
            s.replicas,
            rng::derive_seed(self.cfg.seeds.noise, &[0x5bde, 2]),
            &ResidualKind::Reweighted { beta: &beta },
            allowance,
        )?;
        for row in &nu.rows {
            records.push(
                self.record(experiment, "nu_residual_sq", row.estimate)
                    .with_n(row.n)
                    .with_se(row.se),
            );
        }
        ok &= nu.slope_in_band;
        records.push(
            self.record(experiment, "nu_residual_slope", nu.slope)
                .with_verdict(nu.slope_in_band),
        );
        records.push(self.record(experiment, "dt_allowance", allowance));

        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// Fixed-point quality: convergence, consistency residual, and
    /// exploitability per scenario.
    pub fn run_mfe_suite(&self, sols: &[MfeSolution]) -> Result<SuiteOutcome> {
        let experiment = "mfe";
        let mut records = Vec::new();
        let mut ok = true;
        for sol in sols {
            ok &= sol.converged;
            records.push(
                self.record(experiment, "picard_iterations", sol.iterations as f64)
                    .with_scenario(sol.scenario.id)
                    .with_verdict(sol.converged),
            );
            let consistency = mfe::consistency_residual(
                &self.spec,
                sol,
                self.cfg.picard.mkv_particles,
                rng::derive_seed(self.cfg.seeds.mkv, &[sol.scenario.id as u64]),
            )?;
            let worst_se = consistency
                .mc_se
                .iter()
                .copied()
                .fold(0.0f64, f64::max);
            let band = consistency.bin_width + 3.0 * worst_se;
            let cons_ok = consistency.max_w1 <= band;
            ok &= cons_ok;
            records.push(
                self.record(experiment, "consistency_w1", consistency.max_w1)
                    .with_scenario(sol.scenario.id)
                    .with_se(worst_se)
                    .with_verdict(cons_ok),
            );
            let exploit = mfe::exploitability(&self.spec, sol)?;
            let exp_ok = exploit.gap <= 1e-6 * exploit.value_scale;
            ok &= exp_ok;
            records.push(
                self.record(experiment, "exploitability", exploit.gap)
                    .with_scenario(sol.scenario.id)
                    .with_verdict(exp_ok),
            );
        }
        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// Standing-assumption validation plus the monotonicity check.
    pub fn run_model_suite(&self) -> Result<SuiteOutcome> {
        let experiment = "model";
        let mut records = Vec::new();
        let mut ok = true;
        let report =
            model::validate_assumptions(&self.spec, 10_000, self.cfg.seeds.validation)?;
        for clause in &report.clauses {
            ok &= clause.pass;
            records.push(
                self.record(experiment, &format!("assumption_{}", clause.clause), {
                    clause.worst_margin
                })
                .with_verdict(clause.pass),
            );
        }

        // monotonicity on random finite-support pairs
        let pairs = random_measure_pairs(&self.spec, 100, self.cfg.seeds.validation);
        let t_samples = [0.0, 0.5 * self.spec.horizon, self.spec.horizon];
        let mono = model::check_lasry_lions(&self.spec, &pairs, &t_samples)?;
        let expect = self.cfg.expect_monotone()?;
        let worst = mono.max_g_integral.max(mono.max_f1_integral);
        if expect {
            ok &= mono.pass;
            records.push(
                self.record(experiment, "lasry_lions_max_integral", worst)
                    .with_verdict(mono.pass),
            );
        } else {
            records.push(
                self.record(experiment, "lasry_lions_max_integral", worst)
                    .informational(if mono.pass {
                        "informational_pass"
                    } else {
                        "informational_fail"
                    }),
            );
        }
        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// Richer deviation information should not out-perform Markovian
    /// deviations against the constructed profile.
    pub fn run_class_inclusion(&self, sols: &[MfeSolution]) -> Result<SuiteOutcome> {
        let experiment = "class_inclusion";
        let n = 64;
        let grid = self.cfg.state_grid(&self.spec)?;
        let scenarios: Vec<CommonScenario> = sols.iter().map(|s| s.scenario.clone()).collect();
        let policies = nash::constructed_equilibrium(sols, n)?;
        let bundles = self.scenario_bundles(
            &scenarios,
            n,
            self.cfg.population.gap_bundles_per_scenario,
            SALT_INCLUSION,
        )?;
        let report = nash::class_inclusion_experiment(
            &self.spec,
            &bundles,
            &policies,
            &grid,
            self.cfg.picard.quad_points,
        )?;
        let records = vec![
            self.record(experiment, "gap_markovian", report.gap_markovian)
                .with_n(n)
                .with_se(report.se_markovian),
            self.record(experiment, "gap_s_closed_loop", report.gap_s_closed_loop)
                .with_n(n)
                .with_se(report.se_s_closed_loop)
                .with_verdict(report.pass),
        ];
        Ok(SuiteOutcome {
            records,
            required_ok: report.pass,
        })
    }

    /// Uniform-in-n moment bound on every builtin model.
    pub fn run_moment_uniformity(&self) -> Result<SuiteOutcome> {
        let experiment = "moments";
        let tg = self.cfg.time_grid()?;
        let replicas = 16usize;
        let mut records = Vec::new();
        let mut ok = true;
        for builtin in [
            BuiltinModel::LqMonotone,
            BuiltinModel::LqCrowd,
            BuiltinModel::BoundedTanh,
        ] {
            let spec_m = self.cfg.spec_named(builtin)?;
            let exponent = spec_m.p_prime.max(2.0); // p' = 0 means bounded; track the 2nd moment
            let hi = spec_m.n_actions() - 1;
            let value_at = |n: usize, salt: u64| -> Result<f64> {
                let samples: Vec<f64> = (0..replicas)
                    .into_par_iter()
                    .map(|r| -> Result<f64> {
                        let seed = rng::derive_seed(
                            self.cfg.seeds.noise,
                            &[SALT_MOMENTS, salt, n as u64, r as u64],
                        );
                        let noise = sde::generate_noise(seed, n, tg, &spec_m)?;
                        let policies = vec![Policy::ConstantAction(hi); n];
                        let traj = sde::simulate_nplayer(&spec_m, &noise, &policies, None)?;
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += traj.sup_norm(k).powf(exponent);
                        }
                        Ok(acc / n as f64)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(sde::mean_se(&samples).0)
            };
            let small = value_at(8, 1)?;
            let large = value_at(1024, 2)?;
            let pass = large <= 2.0 * small;
            ok &= pass;
            records.push(
                ReportRecord::new(
                    experiment,
                    &self.hash,
                    self.cfg.seeds.noise,
                    &format!("sup_norm_moment_{}", builtin.name()),
                    small,
                )
                .with_n(8),
            );
            records.push(
                ReportRecord::new(
                    experiment,
                    &self.hash,
                    self.cfg.seeds.noise,
                    &format!("sup_norm_moment_{}", builtin.name()),
                    large,
                )
                .with_n(1024)
                .with_verdict(pass),
            );
        }
        Ok(SuiteOutcome {
            records,
            required_ok: ok,
        })
    }

    /// Every verification suite in one sweep.
    pub fn run_verification_suites(&self, sols: &[MfeSolution]) -> Result<SuiteOutcome> {
        let mut outcome = SuiteOutcome::empty();
        outcome.merge(self.run_model_suite()?);
        outcome.merge(self.run_girsanov_suite()?);
        outcome.merge(self.run_spde_suite()?);
        outcome.merge(self.run_mfe_suite(sols)?);
        outcome.merge(self.run_class_inclusion(sols)?);
        outcome.merge(self.run_moment_uniformity()?);
        Ok(outcome)
    }

    /// Simulate the constructed profile once per scenario at the largest
    /// configured population size; write trajectory artifacts.
    pub fn run_simulate(&self, sols: &[MfeSolution], dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let n = *self.cfg.population.n_list.last().unwrap();
        let tg = self.cfg.time_grid()?;
        let policies = nash::constructed_equilibrium(sols, n)?;
        for sol in sols {
            let db = sol.scenario.increments();
            let seed = rng::derive_seed(
                self.cfg.seeds.noise,
                &[0x51f7, n as u64, sol.scenario.id as u64],
            );
            let noise = sde::generate_noise_with_common(seed, n, tg, &self.spec, Some(&db))?;
            let traj =
                sde::simulate_nplayer(&self.spec, &noise, &policies, Some(&sol.scenario.signal()))?;
            let base = dir.join(format!("trajectory_scenario_{:03}", sol.scenario.id));
            let mut bin = std::fs::File::create(base.with_extension("bin"))?;
            traj.write_binary(&mut bin)?;
            let mut csv = std::fs::File::create(base.with_extension("moments.csv"))?;
            traj.write_moments_csv(&mut csv)?;
        }
        Ok(())
    }
}

/// Random finite-support measure pairs drawn around the initial law.
pub fn random_measure_pairs(
    spec: &ModelSpec,
    count: usize,
    seed: u64,
) -> Vec<(MeasureSummary, MeasureSummary)> {
    let orders = spec.moment_orders();
    let make = |unit: u64| -> MeasureSummary {
        let atoms = 8;
        let mut pts = ndarray::Array2::zeros((atoms, spec.dim));
        let mut row = vec![0.0; spec.dim];
        for a in 0..atoms {
            spec.initial_law
                .sample_into(seed, stream::VALIDATION, unit * 31 + a as u64, &mut row);
            let scale = 1.0 + (unit % 3) as f64;
            for c in 0..spec.dim {
                pts[(a, c)] = row[c] * scale;
            }
        }
        MeasureSummary::from_points(Arc::new(pts), &orders).expect("atoms")
    };
    (0..count as u64)
        .map(|i| (make(2 * i + 1), make(2 * i + 2)))
        .collect()
}

/// Convenience wrapper: write a suite's records under the output dir.
pub fn persist(outcome: &SuiteOutcome, dir: &Path, name: &str) -> Result<()> {
    write_records(dir, name, &outcome.records)
}

pub fn require(outcome: &SuiteOutcome) -> Result<()> {
    if outcome.required_ok {
        Ok(())
    } else {
        Err(LabError::Dependency("criterion failure".into()))
    }
}
