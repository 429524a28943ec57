//! Control policies.
//!
//! A policy maps its declared information set to an index into the model's
//! action grid. Progressive measurability is enforced structurally: the
//! evaluation context only ever exposes histories up to the current node.

use std::sync::Arc;

use ndarray::ArrayView2;

use crate::error::{LabError, Result};
use crate::grid::StateGrid;
use crate::model::MeasureSummary;

/// Realization of the common signal: a scenario id (which common-noise
/// path is live) plus an optional extra randomization index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommonSignal {
    pub scenario_id: usize,
    pub randomization: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    ConstantAction,
    Markovian,
    SemiMarkov,
    Table,
    SClosedLoop,
}

/// Everything a policy may look at when choosing an action at a node.
pub struct PolicyCtx<'a> {
    pub node: usize,
    pub player: usize,
    pub own_state: &'a [f64],
    /// Current states of all players (n-player simulations only).
    pub all_states: Option<ArrayView2<'a, f64>>,
    /// Empirical or exogenous measure flow on nodes `0..=node`.
    pub flow_so_far: &'a [MeasureSummary],
    /// Cumulative common-noise path on nodes `0..=node`, rows = nodes.
    pub b_so_far: ArrayView2<'a, f64>,
    pub signal: Option<&'a CommonSignal>,
}

pub type MarkovianFn = dyn Fn(usize, ArrayView2<f64>, usize) -> usize + Send + Sync;
pub type SemiMarkovFn =
    dyn Fn(usize, &[f64], &[MeasureSummary], ArrayView2<f64>) -> usize + Send + Sync;

/// Action-index lookup over (time node, own-state bin).
#[derive(Debug, Clone)]
pub struct TablePolicy {
    pub grid: StateGrid,
    /// steps x bins action indices.
    pub actions: ndarray::Array2<usize>,
}

impl TablePolicy {
    pub fn lookup(&self, node: usize, x: &[f64]) -> usize {
        let row = node.min(self.actions.nrows() - 1);
        self.actions[(row, self.grid.nearest_bin(x))]
    }
}

/// Per-scenario tables: the policy reads its own state plus the scenario
/// id carried by the common signal.
#[derive(Debug, Clone)]
pub struct ScenarioTablePolicy {
    pub grid: StateGrid,
    /// One table per scenario id.
    pub tables: Vec<ndarray::Array2<usize>>,
}

#[derive(Clone)]
pub enum Policy {
    ConstantAction(usize),
    Markovian(Arc<MarkovianFn>),
    SemiMarkov(Arc<SemiMarkovFn>),
    Table(Arc<TablePolicy>),
    SClosedLoop(Arc<ScenarioTablePolicy>),
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Policy::{:?}", self.kind())
    }
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::ConstantAction(_) => PolicyKind::ConstantAction,
            Policy::Markovian(_) => PolicyKind::Markovian,
            Policy::SemiMarkov(_) => PolicyKind::SemiMarkov,
            Policy::Table(_) => PolicyKind::Table,
            Policy::SClosedLoop(_) => PolicyKind::SClosedLoop,
        }
    }

    pub fn action_index(&self, ctx: &PolicyCtx) -> Result<usize> {
        match self {
            Policy::ConstantAction(idx) => Ok(*idx),
            Policy::Markovian(f) => {
                let states = ctx.all_states.ok_or_else(|| {
                    LabError::Config(
                        "Markovian policy needs the full state vector, not available here".into(),
                    )
                })?;
                Ok(f(ctx.node, states, ctx.player))
            }
            Policy::SemiMarkov(f) => Ok(f(ctx.node, ctx.own_state, ctx.flow_so_far, ctx.b_so_far)),
            Policy::Table(t) => Ok(t.lookup(ctx.node, ctx.own_state)),
            Policy::SClosedLoop(t) => {
                let signal = ctx.signal.ok_or_else(|| {
                    LabError::Config(
                        "S-closed-loop policy requires a common signal (scenario id)".into(),
                    )
                })?;
                let table = t.tables.get(signal.scenario_id).ok_or_else(|| {
                    LabError::Domain(format!(
                        "scenario id {} not covered by the policy table",
                        signal.scenario_id
                    ))
                })?;
                let row = ctx.node.min(table.nrows() - 1);
                Ok(table[(row, t.grid.nearest_bin(ctx.own_state))])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    fn ctx<'a>(
        own: &'a [f64],
        flow: &'a [MeasureSummary],
        b: ArrayView2<'a, f64>,
        signal: Option<&'a CommonSignal>,
    ) -> PolicyCtx<'a> {
        PolicyCtx {
            node: 0,
            player: 0,
            own_state: own,
            all_states: None,
            flow_so_far: flow,
            b_so_far: b,
            signal,
        }
    }

    #[test]
    fn constant_policy_ignores_everything() {
        let p = Policy::ConstantAction(3);
        let b = Array2::zeros((1, 1));
        let flow = vec![MeasureSummary::dirac(&[0.0])];
        assert_eq!(p.action_index(&ctx(&[0.0], &flow, b.view(), None)).unwrap(), 3);
    }

    #[test]
    fn table_policy_bins_by_nearest_center() {
        let grid = StateGrid::new(vec![-1.0], vec![1.0], vec![2]).unwrap();
        let table = TablePolicy {
            grid,
            actions: arr2(&[[5usize, 9]]),
        };
        let p = Policy::Table(Arc::new(table));
        let b = Array2::zeros((1, 1));
        let flow = vec![MeasureSummary::dirac(&[0.0])];
        assert_eq!(p.action_index(&ctx(&[-0.9], &flow, b.view(), None)).unwrap(), 5);
        assert_eq!(p.action_index(&ctx(&[0.9], &flow, b.view(), None)).unwrap(), 9);
    }

    #[test]
    fn scenario_policy_requires_signal() {
        let grid = StateGrid::new(vec![-1.0], vec![1.0], vec![2]).unwrap();
        let p = Policy::SClosedLoop(Arc::new(ScenarioTablePolicy {
            grid,
            tables: vec![arr2(&[[1usize, 1]])],
        }));
        let b = Array2::zeros((1, 1));
        let flow = vec![MeasureSummary::dirac(&[0.0])];
        assert!(p.action_index(&ctx(&[0.0], &flow, b.view(), None)).is_err());
        let sig = CommonSignal {
            scenario_id: 0,
            randomization: None,
        };
        assert_eq!(
            p.action_index(&ctx(&[0.0], &flow, b.view(), Some(&sig))).unwrap(),
            1
        );
    }
}
