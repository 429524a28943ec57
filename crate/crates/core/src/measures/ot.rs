//! Exact discrete optimal transport on small supports.
//!
//! Successive-shortest-path min-cost flow with node potentials on the
//! bipartite transportation graph. Costs must be nonnegative. Supports are
//! capped by the caller; with at most 64 atoms per side the dense Dijkstra
//! sweep is more than fast enough.

use crate::error::{LabError, Result};

const MASS_EPS: f64 = 1e-13;

/// Minimal transport cost between weighted atom lists under `cost(x, y)`.
pub fn transport_lp(
    a: &[(f64, f64)],
    b: &[(f64, f64)],
    cost: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let m = a.len();
    let n = b.len();
    let mut c = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            let v = cost(a[i].0, b[j].0);
            if !v.is_finite() || v < 0.0 {
                return Err(LabError::Domain(
                    "transport costs must be finite and nonnegative".into(),
                ));
            }
            c[i * n + j] = v;
        }
    }

    let mut supply: Vec<f64> = a.iter().map(|p| p.1).collect();
    let mut demand: Vec<f64> = b.iter().map(|p| p.1).collect();
    let mut flow = vec![0.0f64; m * n];
    // potentials keep reduced costs nonnegative across iterations
    let mut pot = vec![0.0f64; m + n];

    let total: f64 = supply.iter().sum();
    let mut shipped = 0.0;
    let max_iters = 8 * (m + n) * (m + n) + 64;
    let mut iters = 0;

    while total - shipped > MASS_EPS {
        iters += 1;
        if iters > max_iters {
            return Err(LabError::Internal(
                "transport LP failed to converge".into(),
            ));
        }

        // Dijkstra over m + n nodes; sources with remaining supply start at 0
        let nn = m + n;
        let mut dist = vec![f64::INFINITY; nn];
        let mut prev = vec![usize::MAX; nn];
        let mut done = vec![false; nn];
        for i in 0..m {
            if supply[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nn {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < m {
                // forward arcs i -> j (uncapacitated)
                for j in 0..n {
                    let rc = c[u * n + j] + pot[u] - pot[m + j];
                    let nd = dist[u] + rc.max(0.0);
                    if nd < dist[m + j] {
                        dist[m + j] = nd;
                        prev[m + j] = u;
                    }
                }
            } else {
                // reverse arcs j -> i where flow is positive
                let j = u - m;
                for i in 0..m {
                    if flow[i * n + j] > MASS_EPS {
                        let rc = -c[i * n + j] + pot[m + j] - pot[i];
                        let nd = dist[u] + rc.max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
            }
        }

        // cheapest reachable sink with remaining demand
        let mut sink = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..n {
            if demand[j] > MASS_EPS && dist[m + j] < best {
                best = dist[m + j];
                sink = m + j;
            }
        }
        if sink == usize::MAX {
            return Err(LabError::Internal(
                "transport LP: no augmenting path (unbalanced marginals?)".into(),
            ));
        }

        // walk back to a source, recording bottleneck
        let mut delta = demand[sink - m];
        let mut v = sink;
        loop {
            let u = prev[v];
            if u == usize::MAX {
                break;
            }
            if u < m && v >= m {
                // forward arc, capacity unlimited
            } else if u >= m && v < m {
                delta = delta.min(flow[v * n + (u - m)]);
            }
            v = u;
        }
        let source = v;
        delta = delta.min(supply[source]);
        if delta <= MASS_EPS {
            // numerically exhausted path; snap the smaller residuals to zero
            supply[source] = 0.0;
            continue;
        }

        let mut v = sink;
        loop {
            let u = prev[v];
            if u == usize::MAX {
                break;
            }
            if u < m && v >= m {
                flow[u * n + (v - m)] += delta;
            } else {
                flow[v * n + (u - m)] -= delta;
            }
            v = u;
        }
        supply[source] -= delta;
        demand[sink - m] -= delta;
        shipped += delta;

        for v in 0..nn {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
    }

    Ok((0..m * n).map(|k| flow[k] * c[k]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_computed_assignment() {
        // two atoms each, cross assignment cheaper under concave cost
        let a = [(0.0, 0.5), (1.0, 0.5)];
        let b = [(0.9, 0.5), (2.0, 0.5)];
        let sqrt_cost = |x: f64, y: f64| (x - y).abs().sqrt();
        let lp = transport_lp(&a, &b, sqrt_cost).unwrap();
        // enumerate both pure assignments and the monotone split
        let direct = 0.5 * (0.9f64).sqrt() + 0.5 * (1.0f64).sqrt();
        let crossed = 0.5 * (2.0f64).sqrt() + 0.5 * (0.1f64).sqrt();
        assert!(lp <= direct.min(crossed) + 1e-12);
        assert!((lp - direct.min(crossed)).abs() < 1e-9);
    }

    #[test]
    fn splits_mass_when_profitable() {
        let a = [(0.0, 1.0)];
        let b = [(-1.0, 0.5), (1.0, 0.5)];
        let lp = transport_lp(&a, &b, |x, y| (x - y).abs()).unwrap();
        assert!((lp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_on_identical_measures() {
        let a = [(0.3, 0.25), (0.7, 0.75)];
        let lp = transport_lp(&a, &a, |x, y| (x - y).abs()).unwrap();
        assert!(lp.abs() < 1e-12);
    }

    #[test]
    fn agrees_with_monotone_coupling_for_convex_cost() {
        // monotone coupling is optimal for |x - y| in 1-d
        let a = [(0.0, 0.2), (0.5, 0.3), (2.0, 0.5)];
        let b = [(0.25, 0.6), (1.5, 0.4)];
        let lp = transport_lp(&a, &b, |x, y| (x - y).abs()).unwrap();
        let monotone = {
            // quantile walk
            let mut i = 0;
            let mut j = 0;
            let mut ra = a[0].1;
            let mut rb = b[0].1;
            let mut tot = 0.0;
            loop {
                let m = ra.min(rb);
                tot += m * (a[i].0 - b[j].0).abs();
                ra -= m;
                rb -= m;
                if ra <= 1e-15 {
                    i += 1;
                    if i >= a.len() {
                        break;
                    }
                    ra = a[i].1;
                }
                if rb <= 1e-15 {
                    j += 1;
                    if j >= b.len() {
                        break;
                    }
                    rb = b[j].1;
                }
            }
            tot
        };
        assert!((lp - monotone).abs() < 1e-10, "lp {lp} vs monotone {monotone}");
    }
}
