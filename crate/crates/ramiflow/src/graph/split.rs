//! Splitting a transport path at a time level into two composable halves.

use super::{Edge, GraphError, TransportGraph};
use crate::measures::{wasserstein1, DiscreteMeasure, Point};
use crate::numeric::ExactSum;

/// Outcome of [`TransportGraph::split_at_time`]: the sub-level graph, its
/// complement, and the measure sitting in between.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub before: TransportGraph,
    pub after: TransportGraph,
    pub mid: DiscreteMeasure,
    pub time: f64,
}

impl TransportGraph {
    /// Splits the graph at time `t ∈ (0,1)`.
    ///
    /// Vertices are timed by normalized longest-path (latest-arrival) labels;
    /// every edge is parameterized linearly between its endpoint times, and
    /// edges crossing the level are cut at the interpolated point. `before`
    /// then transports the source onto `mid = μ+ − div(before)`, `after`
    /// transports `mid` onto the sink, and the two costs add up to the cost
    /// of the whole graph.
    pub fn split_at_time(&self, t: f64) -> Result<SplitResult, GraphError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(GraphError::InvalidGraph(format!(
                "split time {t} must lie strictly inside (0,1)"
            )));
        }
        let order = self.topological_order().ok_or(GraphError::CyclicGraph)?;
        let worst = self
            .check_conservation()
            .iter()
            .map(|v| v.residual.abs())
            .fold(0.0, f64::max);
        if worst > 0.0 {
            return Err(GraphError::ConservationViolation(worst));
        }

        // Latest-arrival labels: longest path from the time-0 vertices.
        let n = self.vertices.len();
        let mut inbound: Vec<Vec<&Edge>> = vec![Vec::new(); n];
        for e in &self.edges {
            inbound[e.head].push(e);
        }
        let mut label = vec![0.0_f64; n];
        for &v in &order {
            for e in &inbound[v] {
                label[v] = label[v].max(label[e.tail] + self.edge_length(e));
            }
        }
        let horizon = label.iter().cloned().fold(0.0, f64::max);
        if horizon == 0.0 {
            // No edges: everything stays put, and the measure in between is
            // the (necessarily equal) source.
            let empty = self.with_edges(Vec::new());
            return Ok(SplitResult {
                before: empty.clone(),
                after: empty,
                mid: self.source.clone(),
                time: t,
            });
        }
        let level = t * horizon;

        let mut before_vertices = self.vertices.clone();
        let mut after_vertices = self.vertices.clone();
        let mut before_edges = Vec::new();
        let mut after_edges = Vec::new();
        // Mass parked at cut points, one atom per severed edge.
        let mut cut_atoms: Vec<(Point, f64)> = Vec::new();

        for e in &self.edges {
            let (lo, hi) = (label[e.tail], label[e.head]);
            debug_assert!(hi > lo);
            if hi <= level {
                before_edges.push(*e);
            } else if lo >= level {
                after_edges.push(*e);
            } else {
                let frac = (level - lo) / (hi - lo);
                let a = &self.vertices[e.tail];
                let b = &self.vertices[e.head];
                let cut = Point(
                    a.0.iter()
                        .zip(&b.0)
                        .map(|(x, y)| x + frac * (y - x))
                        .collect(),
                );
                let before_idx = before_vertices.len();
                before_vertices.push(cut.clone());
                before_edges.push(Edge {
                    tail: e.tail,
                    head: before_idx,
                    weight: e.weight,
                });
                let after_idx = after_vertices.len();
                after_vertices.push(cut.clone());
                after_edges.push(Edge {
                    tail: after_idx,
                    head: e.head,
                    weight: e.weight,
                });
                cut_atoms.push((cut, e.weight));
            }
        }

        // mid = μ+ − div(before): sink mass at finished vertices plus source
        // mass at untouched ones plus the severed-edge atoms.
        let mut mid_atoms: Vec<(Point, f64)> = cut_atoms;
        for (v, pos) in self.vertices.iter().enumerate() {
            let mut acc = ExactSum::new();
            acc.add(self.vertex_source[v]);
            for e in &before_edges {
                if e.head == v {
                    acc.add(e.weight);
                }
                if e.tail == v {
                    acc.add(-e.weight);
                }
            }
            let mass = acc.value();
            if mass > 0.0 {
                mid_atoms.push((pos.clone(), mass));
            } else if mass < -1e-9 * self.source.total_mass().max(1.0) {
                return Err(GraphError::InvalidGraph(format!(
                    "negative intermediate mass {mass} at vertex {v}"
                )));
            }
        }
        let mid = DiscreteMeasure::new(self.dim, mid_atoms)?;

        let before = TransportGraph::new(
            self.dim,
            before_vertices,
            before_edges,
            self.source.clone(),
            mid.clone(),
        )?;
        let after = TransportGraph::new(
            self.dim,
            after_vertices,
            after_edges,
            mid.clone(),
            self.sink.clone(),
        )?;
        Ok(SplitResult {
            before,
            after,
            mid,
            time: t,
        })
    }

    /// Bisects the split time until the measure in between sits at half the
    /// Wasserstein-1 distance from the source: `W1(μ+, mid) = ½·W1(μ+, μ−)`
    /// within `tol`.
    pub fn split_at_w1_midpoint(&self, tol: f64) -> Result<SplitResult, GraphError> {
        let total = wasserstein1(&self.source, &self.sink)?;
        let target = total / 2.0;
        let mut lo = 1e-12;
        let mut hi = 1.0 - 1e-12;
        let mut best: Option<(f64, SplitResult)> = None;
        for _ in 0..80 {
            let t = 0.5 * (lo + hi);
            let split = self.split_at_time(t)?;
            let w = wasserstein1(&self.source, &split.mid)?;
            let gap = w - target;
            if best.as_ref().is_none_or(|(g, _)| gap.abs() < g.abs()) {
                best = Some((gap.abs(), split));
            }
            if gap.abs() <= tol {
                break;
            }
            if gap < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
        }
        Ok(best.expect("bisection ran at least once").1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::TransportCost;
    use crate::measures::p2;

    #[test]
    fn splits_single_edge_at_midpoint() {
        let g = crate::graph::tests::single_edge(1.0);
        let s = g.split_at_time(0.5).unwrap();
        assert_eq!(s.mid.atoms().len(), 1);
        assert_eq!(s.mid.atoms()[0].pos, p2(0.5, 0.0));
        assert_eq!(s.mid.total_mass(), 1.0);
        let tau = TransportCost::branched(0.75).unwrap();
        let half = tau.eval(1.0) * 0.5;
        assert!((s.before.graph_cost(&tau).total - half).abs() < 1e-12);
        assert!((s.after.graph_cost(&tau).total - half).abs() < 1e-12);
        assert!(s.before.check_conservation().is_empty());
        assert!(s.after.check_conservation().is_empty());
    }

    #[test]
    fn splits_y_graph_after_branch() {
        // One source A feeding sinks C and D through a junction B. Just past
        // the branch time the middle measure holds the two branch weights.
        let g = TransportGraph::new(
            2,
            vec![p2(0.0, 0.0), p2(1.0, 0.0), p2(2.0, 1.0), p2(2.0, -1.0)],
            vec![
                Edge { tail: 0, head: 1, weight: 1.0 },
                Edge { tail: 1, head: 2, weight: 0.5 },
                Edge { tail: 1, head: 3, weight: 0.5 },
            ],
            DiscreteMeasure::new(2, vec![(p2(0.0, 0.0), 1.0)]).unwrap(),
            DiscreteMeasure::new(2, vec![(p2(2.0, 1.0), 0.5), (p2(2.0, -1.0), 0.5)]).unwrap(),
        )
        .unwrap();
        // Branch time: 1.0 out of the horizon 1 + sqrt(2).
        let branch = 1.0 / (1.0 + 2.0_f64.sqrt());
        let s = g.split_at_time(branch + 0.05).unwrap();
        assert_eq!(s.mid.atoms().len(), 2);
        for atom in s.mid.atoms() {
            assert_eq!(atom.mass, 0.5);
        }
        let tau = TransportCost::branched(0.5).unwrap();
        let lhs = s.before.graph_cost(&tau).total + s.after.graph_cost(&tau).total;
        let rhs = g.graph_cost(&tau).total;
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn divergences_compose() {
        let g = crate::graph::tests::single_edge(1.0);
        let s = g.split_at_time(0.3).unwrap();
        let combined = crate::measures::SignedDiscreteMeasure::new(
            2,
            s.before
                .divergence()
                .atoms()
                .iter()
                .chain(s.after.divergence().atoms())
                .map(|a| (a.pos.clone(), a.mass))
                .collect(),
        );
        assert!(combined.canonical_eq(&g.divergence()));
    }

    #[test]
    fn rejects_cyclic_graphs() {
        let zero = DiscreteMeasure::new(2, vec![]).unwrap();
        let g = TransportGraph::new(
            2,
            vec![p2(0.0, 0.0), p2(1.0, 0.0), p2(0.5, 1.0)],
            vec![
                Edge { tail: 0, head: 1, weight: 1.0 },
                Edge { tail: 1, head: 2, weight: 1.0 },
                Edge { tail: 2, head: 0, weight: 1.0 },
            ],
            zero.clone(),
            zero,
        )
        .unwrap();
        assert!(matches!(
            g.split_at_time(0.5),
            Err(GraphError::CyclicGraph)
        ));
    }

    #[test]
    fn w1_midpoint_on_single_edge() {
        let g = crate::graph::tests::single_edge(1.0);
        let s = g.split_at_w1_midpoint(1e-9).unwrap();
        let w = wasserstein1(&g.source, &s.mid).unwrap();
        assert!((w - 0.5).abs() <= 1e-6);
    }
}
