//! Lasry-Lions monotonicity checker.
//!
//! For a separable running cost `f = f1(t,x,m) + f2(t,x,a)`, the condition
//! asks that for all measures m, m',
//!
//! ```text
//! int [g(x,m) - g(x,m')] (m - m')(dx) <= 0,
//! int [f1(t,x,m) - f1(t,x,m')] (m - m')(dx) <= 0.
//! ```
//!
//! Both integrals are evaluated exactly over the finite supports.

use serde::Serialize;

use crate::error::{LabError, Result};

use super::{MeasureSummary, ModelSpec};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub max_g_integral: f64,
    pub max_f1_integral: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub pairs_checked: usize,
    pub worst_pair: Option<usize>,
}

fn signed_integral(
    m: &MeasureSummary,
    m_tilde: &MeasureSummary,
    diff: impl Fn(&[f64]) -> f64,
) -> f64 {
    let mut acc = 0.0;
    m.for_each_atom(|x, w| acc += w * diff(x));
    m_tilde.for_each_atom(|x, w| acc -= w * diff(x));
    acc
}

/// Evaluates the two monotonicity integrals for each measure pair and each
/// sample time; passes iff every value is below the tolerance.
pub fn check_lasry_lions(
    spec: &ModelSpec,
    measure_pairs: &[(MeasureSummary, MeasureSummary)],
    t_samples: &[f64],
) -> Result<MonotonicityReport> {
    let (f1, _f2) = spec.separable.as_ref().ok_or_else(|| {
        LabError::UnsupportedModel(
            "monotonicity check requires a separable running cost f = f1(t,x,m) + f2(t,x,a)"
                .into(),
        )
    })?;

    let mut max_g = f64::NEG_INFINITY;
    let mut max_f1 = f64::NEG_INFINITY;
    let mut worst_pair = None;

    for (idx, (m, m_tilde)) in measure_pairs.iter().enumerate() {
        let g_val = signed_integral(m, m_tilde, |x| {
            spec.term_cost(x, m) - spec.term_cost(x, m_tilde)
        });
        if g_val > max_g {
            max_g = g_val;
            worst_pair = Some(idx);
        }
        for &t in t_samples {
            let f_val = signed_integral(m, m_tilde, |x| f1(t, x, m) - f1(t, x, m_tilde));
            if f_val > max_f1 {
                max_f1 = f_val;
                worst_pair = Some(idx);
            }
        }
    }

    if measure_pairs.is_empty() {
        max_g = 0.0;
        max_f1 = 0.0;
    }
    if t_samples.is_empty() {
        max_f1 = 0.0;
    }

    let tolerance = DEFAULT_TOLERANCE;
    Ok(MonotonicityReport {
        max_g_integral: max_g,
        max_f1_integral: max_f1,
        tolerance,
        pass: max_g <= tolerance && max_f1 <= tolerance,
        pairs_checked: measure_pairs.len(),
        worst_pair,
    })
}
