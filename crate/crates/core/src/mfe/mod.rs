//! Per-scenario mean field equilibrium solver.
//!
//! The fixed point couples a backward dynamic program (optimal response to
//! a measure flow) with a forward Fokker-Planck push (the flow induced by
//! a policy), iterated with damping until the flow stops moving in
//! sup-node W1. Each common-noise scenario is an independent solve; the
//! per-scenario policy tables together realize the semi-Markov control
//! alpha(t, x, scenario).

mod fokker_planck;
mod hjb;
mod io;
mod picard;
mod scenario;

pub use fokker_planck::{forward_fp, histogram_from_law, summary_from_histogram, ForwardOutput,
                        MASS_LEAK_LIMIT};
pub use hjb::{evaluate_policy_table, one_step_value, solve_hjb, HjbOutput, CLAMP_LIMIT};
pub use io::{load_solution, read_solution, save_solution, write_solution, SolutionMeta};
pub use picard::{consistency_residual, exploitability, exploitability_of_table, picard_iterate,
                 ConsistencyReport, ExploitReport, MfeSolution};
pub use scenario::{generate_scenarios, zero_scenario, CommonScenario};
