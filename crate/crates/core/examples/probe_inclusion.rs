use mfglab::lab::{ExperimentConfig, LabContext};
use mfglab::nash::{self, DeviationClass};
use ndarray::s;

fn main() {
    let cfg = ExperimentConfig::default();
    let ctx = LabContext::new(cfg).unwrap();
    let sols = ctx.solve_all().unwrap();
    let scenarios: Vec<_> = sols.iter().map(|s| s.scenario.clone()).collect();
    let n = 64;
    let policies = nash::constructed_equilibrium(&sols, n).unwrap();
    let tg = ctx.cfg.time_grid().unwrap();
    let grid = ctx.cfg.state_grid(&ctx.spec).unwrap();

    let mut bundles = Vec::new();
    for s in &scenarios {
        let db = s.increments();
        for r in 0..ctx.cfg.population.gap_bundles_per_scenario {
            let seed = mfglab::rng::derive_seed(ctx.cfg.seeds.noise, &[6, n as u64, s.id as u64, r as u64]);
            let noise = mfglab::sde::generate_noise_with_common(seed, n, tg, &ctx.spec, Some(&db)).unwrap();
            bundles.push(nash::ScenarioBundle { noise, signal: Some(s.signal()) });
        }
    }
    let br_m = nash::best_response(&ctx.spec, &bundles, &policies, 0, DeviationClass::Markovian, &grid, 7).unwrap();
    let br_s = nash::best_response(&ctx.spec, &bundles, &policies, 0, DeviationClass::SClosedLoop, &grid, 7).unwrap();
    println!("markovian gap {:+.5} se {:.5}", br_m.gap, br_m.gap_se);
    println!("scl       gap {:+.5} se {:.5}", br_s.gap, br_s.gap_se);

    // action agreement between the two BR policies along a deviated path
    for &bi in &[0usize, 9, 18, 27] {
        let b = &bundles[bi];
        let dev = mfglab::sde::simulate_deviation(&ctx.spec, &b.noise, &policies, 0, &br_m.policy, b.signal.as_ref()).unwrap();
        let b_path = b.noise.common_path();
        let mut agree = 0;
        let mut acts = String::new();
        for j in 0..tg.steps {
            let states = dev.states.slice(s![.., j, ..]);
            let mk = |_p: usize| mfglab::sde::PolicyCtx {
                node: j,
                player: 0,
                own_state: dev.state(0, j),
                all_states: Some(states),
                flow_so_far: &dev.measure_flow[..=j],
                b_so_far: b_path.slice(s![..=j, ..]),
                signal: b.signal.as_ref(),
            };
            let am = br_m.policy.action_index(&mk(0)).unwrap();
            let asc = br_s.policy.action_index(&mk(0)).unwrap();
            if am == asc { agree += 1; }
            acts.push_str(&format!("{}{} ", am, if am == asc { "=" } else { "!" }));
        }
        println!("bundle {bi} (scenario {}): agreement {agree}/25  actions: {acts}", bi / 8);
    }
}
