//! Cycle removal and tree reduction.
//!
//! Removing a directed cycle subtracts the minimum weight along it, which
//! never increases the cost of a nondecreasing `τ` and leaves the divergence
//! untouched. For concave `τ` the same idea applies to undirected loops: the
//! loop is shifted in the orientation with the smaller supergradient-weighted
//! length until an opposing edge drains, so the output is a forest.

use super::{Edge, GraphError, TransportGraph};
use crate::costs::TransportCost;

impl TransportGraph {
    /// Drains directed cycles one at a time (smallest DFS-discovered cycle
    /// first) until the graph is acyclic. The divergence is preserved edge
    /// for edge, and the cost cannot increase for any nondecreasing cost.
    pub fn remove_cycles(&self) -> TransportGraph {
        let mut edges = self.edges.clone();
        loop {
            match find_directed_cycle(self.vertices.len(), &edges) {
                None => break,
                Some(cycle) => {
                    let lambda = cycle
                        .iter()
                        .map(|&idx| edges[idx].weight)
                        .fold(f64::INFINITY, f64::min);
                    for &idx in &cycle {
                        edges[idx].weight -= lambda;
                    }
                    edges.retain(|e| e.weight > 0.0);
                }
            }
        }
        self.with_edges(edges)
    }

    /// Shifts undirected loops until none remain, producing a forest with
    /// the same divergence and (by concavity) no larger cost.
    ///
    /// Errors with [`GraphError::NonConcaveCost`] when `τ` is not concave;
    /// for such costs an optimal network may genuinely need loops.
    pub fn tree_reduce(&self, tau: &TransportCost) -> Result<TransportGraph, GraphError> {
        if !tau.is_concave() {
            return Err(GraphError::NonConcaveCost);
        }
        let mut edges = self.edges.clone();
        while let Some(loop_edges) = find_undirected_loop(self.vertices.len(), &edges) {
            // `dir = +1` means the edge follows the chosen loop orientation.
            let mut forward = Vec::new();
            let mut backward = Vec::new();
            for (idx, dir) in &loop_edges {
                if *dir > 0 {
                    forward.push(*idx);
                } else {
                    backward.push(*idx);
                }
            }
            let side_cost = |side: &[usize], edges: &[Edge]| -> f64 {
                side.iter()
                    .map(|&i| tau.supergradient(edges[i].weight) * self.edge_length(&edges[i]))
                    .sum()
            };
            // Shift in the direction of smaller marginal length-cost. A loop
            // whose edges all share one orientation is a directed cycle and
            // must drain, so the opposing side may never be empty.
            if backward.is_empty()
                || (!forward.is_empty()
                    && side_cost(&forward, &edges) > side_cost(&backward, &edges))
            {
                std::mem::swap(&mut forward, &mut backward);
            }
            let lambda = backward
                .iter()
                .map(|&i| edges[i].weight)
                .fold(f64::INFINITY, f64::min);
            for &i in &forward {
                edges[i].weight += lambda;
            }
            for &i in &backward {
                edges[i].weight -= lambda;
            }
            edges.retain(|e| e.weight > 0.0);
        }
        Ok(self.with_edges(edges))
    }

    /// Rank of the undirected cycle space (`0` means forest).
    pub fn cycle_rank(&self) -> usize {
        let n = self.vertices.len();
        let mut dsu = Dsu::new(n);
        let mut rank = 0;
        for e in &self.edges {
            if !dsu.union(e.tail, e.head) {
                rank += 1;
            }
        }
        rank
    }
}

/// First directed cycle in deterministic DFS order (vertices ascending,
/// edges by index), as edge indices.
fn find_directed_cycle(n: usize, edges: &[Edge]) -> Option<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, e) in edges.iter().enumerate() {
        out[e.tail].push(idx);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut stack: Vec<(usize, usize)> = Vec::new(); // (vertex, next out index)
    let mut path_edges: Vec<usize> = Vec::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        state[start] = 1;
        stack.push((start, 0));
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < out[v].len() {
                let edge_idx = out[v][*next];
                *next += 1;
                let to = edges[edge_idx].head;
                match state[to] {
                    0 => {
                        state[to] = 1;
                        path_edges.push(edge_idx);
                        stack.push((to, 0));
                    }
                    1 => {
                        // Back edge: slice the cycle out of the current path.
                        let mut cycle = vec![edge_idx];
                        let mut at = v;
                        for &pe in path_edges.iter().rev() {
                            if at == to {
                                break;
                            }
                            cycle.push(pe);
                            at = edges[pe].tail;
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
                path_edges.pop();
            }
        }
        path_edges.clear();
    }
    None
}

/// First undirected loop in deterministic DFS order, as `(edge index, ±1)`
/// pairs where `+1` marks edges aligned with the traversal direction.
/// Parallel and antiparallel edge pairs count as two-edge loops.
fn find_undirected_loop(n: usize, edges: &[Edge]) -> Option<Vec<(usize, i8)>> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, e) in edges.iter().enumerate() {
        incident[e.tail].push(idx);
        incident[e.head].push(idx);
    }
    let mut visited = vec![false; n];
    // Entries: (vertex, incident position, arrived-via edge)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    let mut path: Vec<(usize, i8)> = Vec::new();
    let mut on_path = vec![false; n];
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        on_path[start] = true;
        stack.push((start, 0, usize::MAX));
        while let Some(&mut (v, ref mut next, via)) = stack.last_mut() {
            if *next < incident[v].len() {
                let edge_idx = incident[v][*next];
                *next += 1;
                if edge_idx == via {
                    continue;
                }
                let e = &edges[edge_idx];
                let (to, dir) = if e.tail == v { (e.head, 1i8) } else { (e.tail, -1i8) };
                if on_path[to] {
                    // Loop closes at `to`.
                    let mut cycle = vec![(edge_idx, dir)];
                    let mut at = v;
                    for &(pe, pd) in path.iter().rev() {
                        if at == to {
                            break;
                        }
                        cycle.push((pe, pd));
                        let pedge = &edges[pe];
                        at = if pd > 0 { pedge.tail } else { pedge.head };
                    }
                    cycle.reverse();
                    return Some(cycle);
                }
                if !visited[to] {
                    visited[to] = true;
                    on_path[to] = true;
                    path.push((edge_idx, dir));
                    stack.push((to, 0, edge_idx));
                }
            } else {
                stack.pop();
                on_path[v] = false;
                path.pop();
            }
        }
        path.clear();
    }
    None
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    /// Returns false when both ends were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::TransportCost;
    use crate::measures::{p2, DiscreteMeasure};

    fn dirac2(x: f64, y: f64, m: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(2, vec![(p2(x, y), m)]).unwrap()
    }

    #[test]
    fn acyclic_input_unchanged() {
        let g = super::super::tests::single_edge(1.0);
        let r = g.remove_cycles();
        assert_eq!(r.edges(), g.edges());
    }

    #[test]
    fn superposed_triangle_drained() {
        // Path A→B→C with weight 1 plus a parasitic directed triangle
        // A→B→D→A carrying 0.25.
        let a = p2(0.0, 0.0);
        let b = p2(1.0, 0.0);
        let c = p2(2.0, 0.0);
        let d = p2(0.5, 1.0);
        let g = TransportGraph::new(
            2,
            vec![a, b, c, d],
            vec![
                Edge { tail: 0, head: 1, weight: 1.25 },
                Edge { tail: 1, head: 2, weight: 1.0 },
                Edge { tail: 1, head: 3, weight: 0.25 },
                Edge { tail: 3, head: 0, weight: 0.25 },
            ],
            dirac2(0.0, 0.0, 1.0),
            dirac2(2.0, 0.0, 1.0),
        )
        .unwrap();
        let before = g.divergence();
        let r = g.remove_cycles();
        assert!(r.is_acyclic());
        assert_eq!(r.edges().len(), 2);
        assert_eq!(r.edges()[0].weight, 1.0);
        assert!(before.canonical_eq(&r.divergence()));
        let tau = TransportCost::branched(0.75).unwrap();
        assert!(r.graph_cost(&tau).total <= g.graph_cost(&tau).total);
    }

    #[test]
    fn pure_cycle_becomes_empty() {
        let zero = DiscreteMeasure::new(2, vec![]).unwrap();
        let g = TransportGraph::new(
            2,
            vec![p2(0.0, 0.0), p2(1.0, 0.0), p2(0.5, 1.0)],
            vec![
                Edge { tail: 0, head: 1, weight: 0.25 },
                Edge { tail: 1, head: 2, weight: 0.25 },
                Edge { tail: 2, head: 0, weight: 0.25 },
            ],
            zero.clone(),
            zero,
        )
        .unwrap();
        let r = g.remove_cycles();
        assert!(r.edges().is_empty());
    }

    #[test]
    fn tree_reduce_collapses_parallelogram() {
        // Diamond: two routes from A to D; concave cost prefers a single one.
        let g = TransportGraph::new(
            2,
            vec![p2(0.0, 0.0), p2(1.0, 1.0), p2(1.0, -1.0), p2(2.0, 0.0)],
            vec![
                Edge { tail: 0, head: 1, weight: 0.5 },
                Edge { tail: 0, head: 2, weight: 0.5 },
                Edge { tail: 1, head: 3, weight: 0.5 },
                Edge { tail: 2, head: 3, weight: 0.5 },
            ],
            dirac2(0.0, 0.0, 1.0),
            dirac2(2.0, 0.0, 1.0),
        )
        .unwrap();
        let tau = TransportCost::branched(0.5).unwrap();
        let r = g.tree_reduce(&tau).unwrap();
        assert_eq!(r.cycle_rank(), 0);
        assert_eq!(r.edges().len(), 2);
        assert!(r.divergence().canonical_eq(&g.divergence()));
        let before = g.graph_cost(&tau).total;
        let after = r.graph_cost(&tau).total;
        assert!(after < before, "loop shift must strictly help here");
    }

    #[test]
    fn tree_reduce_keeps_trees() {
        let g = super::super::tests::single_edge(1.0);
        let tau = TransportCost::branched(0.5).unwrap();
        let r = g.tree_reduce(&tau).unwrap();
        assert_eq!(r.edges(), g.edges());
    }

    #[test]
    fn tree_reduce_rejects_step_cost() {
        let g = super::super::tests::single_edge(1.0);
        let tau = TransportCost::step(0.3).unwrap();
        assert!(matches!(
            g.tree_reduce(&tau),
            Err(GraphError::NonConcaveCost)
        ));
    }

    #[test]
    fn antiparallel_pair_is_a_loop() {
        let g = TransportGraph::new(
            2,
            vec![p2(0.0, 0.0), p2(1.0, 0.0)],
            vec![
                Edge { tail: 0, head: 1, weight: 1.5 },
                Edge { tail: 1, head: 0, weight: 0.5 },
            ],
            dirac2(0.0, 0.0, 1.0),
            dirac2(1.0, 0.0, 1.0),
        )
        .unwrap();
        let tau = TransportCost::branched(0.5).unwrap();
        let r = g.tree_reduce(&tau).unwrap();
        assert_eq!(r.edges().len(), 1);
        assert_eq!(r.edges()[0].weight, 1.0);
        assert!(r.divergence().canonical_eq(&g.divergence()));
    }
}
