//! Brute-force reference solver for tiny instances.
//!
//! Enumerates every undirected topology (at most one loop per component)
//! over the terminal atoms plus up to two free branch vertices, solves the
//! flows on each, descends the free vertex positions, and returns the global
//! best. Exponential and only meant to certify the local search on desk-size
//! problems.

use super::{net_divergence, solve_topology, OptimError};
use crate::costs::TransportCost;
use crate::graph::{Edge, TransportGraph};
use crate::measures::{DiscreteMeasure, Point};

/// Best graph found by exhaustive topology enumeration.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub graph: TransportGraph,
    pub cost: f64,
    /// Number of feasible topologies evaluated.
    pub topologies: usize,
}

/// Exhaustive search over acyclic-per-component topologies on the atoms plus
/// up to `max_steiner` free vertices. Limited to five atoms total and two
/// free vertices.
pub fn brute_force_oracle(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
    tau: &TransportCost,
    max_steiner: usize,
) -> Result<OracleResult, OptimError> {
    let atom_count = plus.atoms().len() + minus.atoms().len();
    if atom_count > 5 {
        return Err(OptimError::TooLarge(format!(
            "{atom_count} atoms exceed the oracle limit of 5"
        )));
    }
    if max_steiner > 2 {
        return Err(OptimError::TooLarge(format!(
            "{max_steiner} free vertices exceed the oracle limit of 2"
        )));
    }
    let mp = plus.total_mass();
    let mm = minus.total_mass();
    if (mp - mm).abs() > 1e-9 * mp.max(mm).max(1e-300) {
        return Err(OptimError::MassImbalance { plus: mp, minus: mm });
    }
    let dim = plus.dim();
    let (terminals, div) = net_divergence(plus, minus);
    let n_terminals = terminals.len();

    let barycentre = || -> Point {
        let n = terminals.len().max(1) as f64;
        Point(
            (0..dim)
                .map(|k| terminals.iter().map(|p| p.0[k]).sum::<f64>() / n)
                .collect(),
        )
    };

    // (cost, positions, topology, flows)
    let mut best: Option<Candidate> = None;
    let mut topologies = 0usize;

    for steiner in 0..=max_steiner {
        let mut positions = terminals.clone();
        let mut divs = div.clone();
        for s in 0..steiner {
            let mut hub = barycentre();
            // Distinct starting spots for two branch vertices.
            hub.0[0] += 0.05 * (s as f64 + 1.0);
            positions.push(hub);
            divs.push(0.0);
        }
        let n = positions.len();
        let mut candidate_edges: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                candidate_edges.push((i, j));
            }
        }
        let m = candidate_edges.len();
        // Any spanning structure with at most one loop per component uses at
        // most n edges.
        for mask in 0u32..(1u32 << m) {
            if mask.count_ones() as usize > n {
                continue;
            }
            let edges: Vec<(usize, usize)> = (0..m)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| candidate_edges[i])
                .collect();
            // Free vertices must branch; a degree ≤ 2 branch vertex is
            // redundant (covered by a smaller topology).
            let mut degree = vec![0usize; n];
            for &(a, b) in &edges {
                degree[a] += 1;
                degree[b] += 1;
            }
            if (n_terminals..n).any(|v| degree[v] > 0 && degree[v] < 3) {
                continue;
            }
            let Some((flows, cost)) = solve_topology(&positions, &divs, &edges, tau) else {
                continue;
            };
            topologies += 1;
            let uses_steiner = (n_terminals..n).any(|v| degree[v] >= 3);
            let (positions, flows, cost) = if uses_steiner {
                let (p, f, c) =
                    descend_oracle(&positions, n_terminals, &divs, &edges, tau);
                (p, f, c)
            } else {
                (positions.clone(), flows, cost)
            };
            if best.as_ref().is_none_or(|(c, ..)| cost < *c - 1e-15) {
                best = Some((cost, positions, edges, flows));
            }
        }
    }

    let (cost, positions, edges, flows) = best.expect("the empty topology is always feasible");
    let directed: Vec<Edge> = edges
        .iter()
        .zip(&flows)
        .filter(|(_, f)| f.abs() > 0.0)
        .map(|(&(a, b), &f)| {
            if f > 0.0 {
                Edge { tail: a, head: b, weight: f }
            } else {
                Edge { tail: b, head: a, weight: -f }
            }
        })
        .collect();
    let graph = TransportGraph::new(dim, positions, directed, plus.clone(), minus.clone())?;
    Ok(OracleResult {
        graph,
        cost,
        topologies,
    })
}

type Candidate = (f64, Vec<Point>, Vec<(usize, usize)>, Vec<f64>);

/// Multi-start position descent used by the oracle; returns the best
/// positions, flows and cost.
fn descend_oracle(
    positions: &[Point],
    n_fixed: usize,
    div: &[f64],
    edges: &[(usize, usize)],
    tau: &TransportCost,
) -> (Vec<Point>, Vec<f64>, f64) {
    let dim = positions[0].dim();
    let eval = |pos: &[Point]| -> f64 {
        solve_topology(pos, div, edges, tau)
            .map(|(_, c)| c)
            .unwrap_or(f64::INFINITY)
    };
    let starts: Vec<Vec<Point>> = (0..3)
        .map(|s| {
            let mut p = positions.to_vec();
            #[allow(clippy::needless_range_loop)]
            for v in n_fixed..p.len() {
                for k in 0..dim {
                    p[v].0[k] += 0.11 * (s as f64) * if (v + k) % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
            p
        })
        .collect();
    let mut best_pos = positions.to_vec();
    let mut best_cost = eval(&best_pos);
    for start in starts {
        let refined = gradient_descent(start, n_fixed, dim, &eval);
        let c = eval(&refined);
        if c < best_cost {
            best_cost = c;
            best_pos = refined;
        }
    }
    let (flows, cost) = solve_topology(&best_pos, div, edges, tau)
        .expect("descent preserves feasibility");
    (best_pos, flows, cost)
}

fn gradient_descent(
    mut positions: Vec<Point>,
    n_fixed: usize,
    dim: usize,
    eval: &dyn Fn(&[Point]) -> f64,
) -> Vec<Point> {
    let h = 1e-6;
    let mut step = 0.25;
    for _ in 0..400 {
        let base = eval(&positions);
        let mut grad = vec![0.0; (positions.len() - n_fixed) * dim];
        let mut norm2 = 0.0;
        for v in n_fixed..positions.len() {
            for k in 0..dim {
                let mut fwd = positions.clone();
                fwd[v].0[k] += h;
                let mut bwd = positions.clone();
                bwd[v].0[k] -= h;
                let g = (eval(&fwd) - eval(&bwd)) / (2.0 * h);
                grad[(v - n_fixed) * dim + k] = g;
                norm2 += g * g;
            }
        }
        let norm = norm2.sqrt();
        if norm < 1e-10 {
            break;
        }
        let mut t = step / norm;
        let mut moved = false;
        for _ in 0..40 {
            let mut trial = positions.clone();
            for v in n_fixed..trial.len() {
                for k in 0..dim {
                    trial[v].0[k] -= t * grad[(v - n_fixed) * dim + k];
                }
            }
            if eval(&trial) <= base - 1e-4 * t * norm2 {
                positions = trial;
                step = (2.0 * t * norm).min(0.5);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    positions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::p2;

    fn dirac2(x: f64, y: f64, m: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(2, vec![(p2(x, y), m)]).unwrap()
    }

    #[test]
    fn dirac_pair_is_a_segment() {
        let plus = dirac2(0.0, 0.0, 1.0);
        let minus = dirac2(3.0, 4.0, 1.0);
        let tau = TransportCost::branched(0.5).unwrap();
        let r = brute_force_oracle(&plus, &minus, &tau, 1).unwrap();
        assert_eq!(r.graph.edges().len(), 1);
        assert!((r.cost - 5.0).abs() < 1e-9);
        assert!(r.topologies >= 1);
    }

    #[test]
    fn collinear_sinks_use_the_ray() {
        // Source and two sinks on one ray: overlaying the segment is optimal
        // and no branch vertex helps.
        let plus = dirac2(0.0, 0.0, 1.0);
        let minus = DiscreteMeasure::new(
            2,
            vec![(p2(1.0, 0.0), 0.5), (p2(2.0, 0.0), 0.5)],
        )
        .unwrap();
        let tau = TransportCost::branched(0.75).unwrap();
        let r = brute_force_oracle(&plus, &minus, &tau, 1).unwrap();
        let expect = tau.eval(1.0) * 1.0 + tau.eval(0.5) * 1.0;
        assert!((r.cost - expect).abs() < 1e-9, "cost = {}", r.cost);
    }

    #[test]
    fn wide_v_stays_a_star() {
        let plus = dirac2(0.0, 0.0, 1.0);
        let minus = DiscreteMeasure::new(
            2,
            vec![(p2(1.0, 1.0), 0.5), (p2(1.0, -1.0), 0.5)],
        )
        .unwrap();
        let tau = TransportCost::branched(0.75).unwrap();
        let r = brute_force_oracle(&plus, &minus, &tau, 1).unwrap();
        let v_cost = 2.0 * tau.eval(0.5) * 2.0f64.sqrt();
        assert!((r.cost - v_cost).abs() < 1e-9, "cost = {}", r.cost);
    }

    #[test]
    fn narrow_v_branches() {
        let plus = dirac2(0.0, 0.0, 1.0);
        let minus = DiscreteMeasure::new(
            2,
            vec![(p2(2.0, 0.25), 0.5), (p2(2.0, -0.25), 0.5)],
        )
        .unwrap();
        let tau = TransportCost::branched(0.75).unwrap();
        let r = brute_force_oracle(&plus, &minus, &tau, 1).unwrap();
        let v_cost = 2.0 * tau.eval(0.5) * (4.0f64 + 0.0625).sqrt();
        assert!(r.cost < v_cost - 1e-6, "branching must beat the V");
        assert!(r.graph.check_conservation().is_empty());
        assert!(r.graph.vertices().len() > 3);
    }

    #[test]
    fn rejects_large_instances() {
        let atoms: Vec<(Point, f64)> = (0..6).map(|i| (p2(i as f64, 0.0), 1.0)).collect();
        let m = DiscreteMeasure::new(2, atoms).unwrap();
        let tau = TransportCost::branched(0.5).unwrap();
        assert!(matches!(
            brute_force_oracle(&m, &m, &tau, 1),
            Err(OptimError::TooLarge(_))
        ));
    }
}
