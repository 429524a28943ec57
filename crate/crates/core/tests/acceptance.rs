//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (`cargo test --test acceptance -- --nocapture`).
//!
//! Heavy artifacts (the eight solved scenarios, the stochastic-exponential
//! ensemble, the residual scaling tables) are computed once per binary and
//! shared across criteria.

mod support;

use std::sync::OnceLock;
use std::time::Instant;

use mfglab::lab::{LabContext, SuiteOutcome};
use mfglab::model::InitialLaw;
use mfglab::nash::{self, DeviationClass};
use mfglab::quad::GaussHermite;
use mfglab::sde::{self, CommonSignal, Policy};
use mfglab::timegrid::TimeGrid;

use support::{acceptance_config, shared_lab};

fn verdicts(outcome: &SuiteOutcome, metric: &str) -> Vec<(Option<usize>, f64, bool)> {
    outcome
        .records
        .iter()
        .filter(|r| r.metric == metric)
        .map(|r| (r.n, r.value, r.passed()))
        .collect()
}

fn criterion(line: &str, pass: bool) {
    println!("[{}] {line}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{line}");
}

static GIRSANOV_MARTINGALE: OnceLock<(SuiteOutcome, f64)> = OnceLock::new();

fn girsanov_martingale() -> &'static (SuiteOutcome, f64) {
    GIRSANOV_MARTINGALE.get_or_init(|| {
        // single worker: the runtime budget is stated per worker
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("pool");
        let start = Instant::now();
        let outcome = pool
            .install(|| shared_lab().ctx.run_girsanov_martingale())
            .expect("martingale suite");
        (outcome, start.elapsed().as_secs_f64())
    })
}

static SPDE: OnceLock<(SuiteOutcome, f64)> = OnceLock::new();

fn spde_suite() -> &'static (SuiteOutcome, f64) {
    SPDE.get_or_init(|| {
        let start = Instant::now();
        let outcome = shared_lab().ctx.run_spde_suite().expect("spde suite");
        (outcome, start.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_01_girsanov_martingale_mean() {
    let (outcome, elapsed) = girsanov_martingale();
    let rows = verdicts(outcome, "zeta_terminal_mean");
    assert_eq!(rows.len(), 1);
    let (_, mean, pass) = rows[0];
    criterion(
        &format!(
            "criterion 1: |mean(zeta_T) - 1| = {:.2e} within 3 SE over 5e4 replicas (n=8, N_t=25), {elapsed:.0}s single-worker <= 120s",
            (mean - 1.0).abs()
        ),
        pass && *elapsed <= 120.0,
    );
}

#[test]
fn criterion_02_measure_change_equivalence() {
    let outcome = shared_lab()
        .ctx
        .run_girsanov_matrix()
        .expect("measure-change matrix");
    let rate = verdicts(&outcome, "measure_change_pass_rate");
    assert_eq!(rate.len(), 1);
    criterion(
        &format!(
            "criterion 2: measure-change equivalence pass rate {:.3} >= 0.95 on the 3-model x 3-seed matrix",
            rate[0].1
        ),
        rate[0].2,
    );
}

#[test]
fn criterion_03_spde_residual_scaling() {
    let (outcome, elapsed) = spde_suite();
    let slope = verdicts(outcome, "fp_residual_slope");
    let estimates = verdicts(outcome, "fp_residual_sq");
    assert_eq!(estimates.len(), 4, "n in {{16, 64, 256, 1024}}");
    let all_below = estimates.iter().all(|r| r.2);
    criterion(
        &format!(
            "criterion 3: E|M_T|^2 log-log slope {:.3} in [-1.3, -0.7], all {} estimates below the martingale bound, {elapsed:.0}s <= 600s",
            slope[0].1,
            estimates.len()
        ),
        slope[0].2 && all_below && *elapsed <= 600.0,
    );
}

#[test]
fn criterion_04_nu_flow_mass_and_residual() {
    let (mart, _) = girsanov_martingale();
    let mass = verdicts(mart, "zeta_mass_worst_margin");
    assert_eq!(mass.len(), 1);
    let (spde, _) = spde_suite();
    let slope = verdicts(spde, "nu_residual_slope");
    criterion(
        &format!(
            "criterion 4: (1/n) sum zeta within 3 SE of 1 at every node (worst margin {:.2e}); nu residual slope {:.3} in [-1.3, -0.7]",
            mass[0].1, slope[0].1
        ),
        mass[0].2 && slope[0].2,
    );
}

#[test]
fn criterion_05_mfe_fixed_point() {
    let lab = shared_lab();
    let outcome = lab
        .ctx
        .run_mfe_suite(&lab.solutions)
        .expect("mfe suite");
    let iters = verdicts(&outcome, "picard_iterations");
    let cons = verdicts(&outcome, "consistency_w1");
    let expl = verdicts(&outcome, "exploitability");
    assert_eq!(iters.len(), 8, "eight scenarios");
    let worst_iter = iters.iter().map(|r| r.1).fold(0.0, f64::max);
    criterion(
        &format!(
            "criterion 5: Picard converged in <= {worst_iter:.0} <= 50 iterations per scenario; consistency W1 within bin width + 3 MC SE; exploitability <= 1e-6 of the value scale"
        ),
        outcome.required_ok
            && worst_iter <= 50.0
            && cons.iter().all(|r| r.2)
            && expl.iter().all(|r| r.2),
    );
}

#[test]
fn criterion_06_riccati_oracle() {
    let lab = shared_lab();
    // defaults of the mean-coupled linear-quadratic instance
    let (c, c_g, a_max) = (0.5, 0.5, 1.0);
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    let mut tol = 0.0f64;
    for sol in &lab.solutions {
        let oracle = support::lq_scalar_oracle(&lab.ctx.spec, &sol.scenario.b_path, c, c_g, a_max);
        let summaries = sol.node_summaries(&lab.ctx.spec).expect("summaries");
        tol = 2.0 * sol.grid.max_width();
        for (j, m) in summaries.iter().enumerate() {
            worst_mean = worst_mean.max((m.mean1() - oracle.mean[j]).abs());
            worst_var = worst_var.max((m.variance() - oracle.variance[j]).abs());
        }
    }
    criterion(
        &format!(
            "criterion 6: solved flow matches the scalar equilibrium oracle at every node of every scenario: |mean err| {worst_mean:.3} and |var err| {worst_var:.3} within 2 bin widths = {tol:.3}"
        ),
        worst_mean <= tol && worst_var <= tol,
    );
}

#[test]
fn criterion_07_best_response_vs_brute_force() {
    // tiny instance: N_t = 2, 3 bins, |A| = 2, n = 2, frozen opponent
    let mut cfg = acceptance_config();
    cfg.model
        .params
        .insert("actions".to_string(), toml::Value::Float(2.0));
    cfg.time.steps = 2;
    cfg.state_grid.bins = 3;
    let ctx = LabContext::new(cfg).expect("tiny config");
    let mut spec = ctx.spec.clone();
    spec.initial_law = InitialLaw::PointMass { point: vec![0.0] };

    let grid = mfglab::grid::StateGrid::new(vec![-5.5], vec![5.5], vec![3]).unwrap();
    let tg = TimeGrid::new(spec.horizon, 2).unwrap();
    let noise = sde::generate_noise(4242, 2, tg, &spec).unwrap();
    let bundles = vec![nash::ScenarioBundle {
        noise: noise.clone(),
        signal: Some(CommonSignal {
            scenario_id: 0,
            randomization: None,
        }),
    }];
    let policies = vec![Policy::ConstantAction(0); 2];
    let quad_points = 5;
    let br = nash::best_response(
        &spec,
        &bundles,
        &policies,
        0,
        DeviationClass::Markovian,
        &grid,
        quad_points,
    )
    .expect("best response");

    // independent enumeration over all 2^(2 * 3) deviator tables
    let baseline = sde::simulate_nplayer(&spec, &noise, &policies, None).unwrap();
    let tiny = support::TinyInstance {
        dt: tg.dt(),
        sigma: spec.sigma[(0, 0)],
        gamma: spec.gamma[(0, 0)],
        c: 0.5,
        c_g: 0.5,
        actions: spec.actions.iter().map(|a| a[0]).collect(),
        centers: grid.centers_axis(0),
        opponent: (0..=2).map(|j| baseline.state(1, j)[0]).collect(),
        db: (0..2).map(|j| noise.db[(j, 0)]).collect(),
        x0: 0.0,
        quad: GaussHermite::new(quad_points).unwrap(),
    };
    let mut best = f64::NEG_INFINITY;
    for mask in 0..(1u32 << 6) {
        let table: Vec<usize> = (0..6).map(|b| ((mask >> b) & 1) as usize).collect();
        best = best.max(tiny.evaluate_table(&table));
    }
    let diff = (br.dp_value - best).abs();
    criterion(
        &format!(
            "criterion 7: frozen-environment DP value {:.12} equals the 64-policy enumeration {:.12} (diff {diff:.2e})",
            br.dp_value, best
        ),
        diff <= 1e-12,
    );
}

#[test]
fn criterion_08_converse_trend() {
    let lab = shared_lab();
    let mut cfg = acceptance_config();
    cfg.population.n_list = vec![16, 1024];
    let ctx = LabContext::new(cfg).expect("converse config");
    let outcome = ctx.run_converse(&lab.solutions).expect("converse runner");
    let eps = verdicts(&outcome, "epsilon_n");
    let trend = verdicts(&outcome, "converse_trend_margin");
    let e16 = eps.iter().find(|r| r.0 == Some(16)).unwrap().1;
    let e1024 = eps.iter().find(|r| r.0 == Some(1024)).unwrap().1;
    criterion(
        &format!(
            "criterion 8: epsilon_1024 = {e1024:.2e} < epsilon_16 / 2 = {:.2e} beyond the combined SE (margin {:.2e}); gaps nonnegative within noise",
            e16 / 2.0,
            trend[0].1
        ),
        outcome.required_ok,
    );
}

#[test]
fn criterion_09_forward_convergence_trend() {
    let lab = shared_lab();
    let mut cfg = acceptance_config();
    cfg.population.n_list = vec![16, 256];
    let ctx = LabContext::new(cfg).expect("forward config");
    let outcome = ctx
        .run_forward_convergence(&lab.solutions)
        .expect("forward runner");
    let margins = verdicts(&outcome, "forward_trend_margin");
    assert_eq!(margins.len(), 8, "one trend verdict per scenario");
    let worst = margins.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    criterion(
        &format!(
            "criterion 9: E[sup_t W1(mu^n, mu)] at n=256 below its n=16 value beyond 3 SE in every scenario (worst margin {worst:.3e})"
        ),
        outcome.required_ok,
    );
}

#[test]
fn criterion_10_class_inclusion() {
    let lab = shared_lab();
    let outcome = lab
        .ctx
        .run_class_inclusion(&lab.solutions)
        .expect("class inclusion");
    let m = verdicts(&outcome, "gap_markovian");
    let s = verdicts(&outcome, "gap_s_closed_loop");
    criterion(
        &format!(
            "criterion 10: gap(S-closed-loop) = {:.3e} <= gap(Markovian) = {:.3e} + 3 combined SE at n=64",
            s[0].1, m[0].1
        ),
        outcome.required_ok,
    );
}

#[test]
fn criterion_11_moment_uniformity() {
    let outcome = shared_lab()
        .ctx
        .run_moment_uniformity()
        .expect("moments");
    let mut detail = String::new();
    for name in ["lq_monotone", "lq_crowd", "bounded_tanh"] {
        let rows = verdicts(&outcome, &format!("sup_norm_moment_{name}"));
        let small = rows.iter().find(|r| r.0 == Some(8)).unwrap().1;
        let large = rows.iter().find(|r| r.0 == Some(1024)).unwrap().1;
        detail.push_str(&format!("{name}: {large:.3}/{small:.3} "));
    }
    criterion(
        &format!(
            "criterion 11: mean sup-norm moment at n=1024 <= 2x its n=8 value on every builtin model ({})",
            detail.trim()
        ),
        outcome.required_ok,
    );
}

#[test]
fn criterion_12_byte_identical_reruns() {
    let mut cfg = acceptance_config();
    cfg.scenarios.count = 2;
    cfg.time.steps = 10;
    cfg.state_grid.bins = 21;
    cfg.population.n_list = vec![4, 8];
    cfg.population.forward_replicas = 2;
    cfg.population.gap_bundles_per_scenario = 2;

    let run = |dir: &std::path::Path| {
        let ctx = LabContext::new(cfg.clone()).expect("config");
        let sols = ctx.solve_all().expect("solve");
        ctx.save_solutions(&sols, dir).expect("save");
        let outcome = ctx
            .run_forward_convergence(&sols)
            .expect("forward");
        mfglab::lab::persist(&outcome, dir, "converge").expect("persist");
        let model = ctx.run_model_suite().expect("model suite");
        mfglab::lab::persist(&model, dir, "validate").expect("persist");
    };

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run(dir_a.path());
    run(dir_b.path());

    let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() >= 6, "artifacts present: {names:?}");
    for name in &names {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "file {name} differs between reruns");
    }
    criterion(
        &format!(
            "criterion 12: rerun with identical config and seeds produced byte-identical report files ({} files)",
            names.len()
        ),
        true,
    );
}

#[test]
fn solutions_converged_for_all_scenarios() {
    // shared precondition surfaced separately for clearer failures
    let lab = shared_lab();
    assert_eq!(lab.solutions.len(), 8);
    for sol in &lab.solutions {
        assert!(
            sol.converged,
            "scenario {} did not converge: trace {:?}",
            sol.scenario.id,
            sol.trace
        );
    }
}
