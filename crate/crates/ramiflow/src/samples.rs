//! Deterministic sample instances for tests, probes and demos.
//!
//! Masses and edge weights are dyadic rationals (small multiples of a power
//! of two) and coordinates sit on a coarse dyadic grid, so mass bookkeeping
//! in f64 is exact: conservation residuals vanish bitwise and reductions
//! preserve divergences exactly. Everything is driven by a seeded ChaCha
//! stream, which keeps runs reproducible.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Edge, TransportGraph};
use crate::measures::{DiscreteMeasure, Point};
use crate::numeric::ExactSum;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const MASS_GRID: u32 = 1 << 10;
const COORD_GRID: i32 = 1 << 8;

fn dyadic_coord(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-COORD_GRID..=COORD_GRID) as f64 / COORD_GRID as f64
}

fn dyadic_point(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    Point((0..dim).map(|_| dyadic_coord(rng)).collect())
}

/// Dyadic masses summing exactly to one.
fn dyadic_partition(rng: &mut ChaCha8Rng, parts: usize) -> Vec<f64> {
    let mut cuts: Vec<u32> = (0..parts.saturating_sub(1))
        .map(|_| rng.gen_range(1..MASS_GRID))
        .collect();
    cuts.push(0);
    cuts.push(MASS_GRID);
    cuts.sort_unstable();
    cuts.windows(2)
        .map(|w| (w[1] - w[0]) as f64 / MASS_GRID as f64)
        .filter(|&m| m > 0.0)
        .collect()
}

/// A random probability measure with up to `atoms` atoms on the dyadic grid
/// inside `[−1,1]^dim`.
pub fn probability_measure(rng: &mut ChaCha8Rng, dim: usize, atoms: usize) -> DiscreteMeasure {
    let masses = dyadic_partition(rng, atoms.max(1));
    let list = masses
        .into_iter()
        .map(|m| (dyadic_point(rng, dim), m))
        .collect();
    DiscreteMeasure::new(dim, list).expect("generated atoms are valid")
}

/// Configuration for [`flow_graph`].
#[derive(Debug, Clone)]
pub struct FlowGraphConfig {
    pub dim: usize,
    pub vertices: usize,
    pub paths: usize,
    /// Parasitic directed cycles superposed on the flow.
    pub cycles: usize,
}

impl Default for FlowGraphConfig {
    fn default() -> Self {
        FlowGraphConfig {
            dim: 2,
            vertices: 10,
            paths: 5,
            cycles: 0,
        }
    }
}

/// A conservation-valid transport graph built by superposing unit total mass
/// of random source-to-sink path flows over a random DAG ordering, plus
/// optional directed cycles. Total source mass is exactly one; with
/// `cycles = 0` the graph is acyclic.
pub fn flow_graph(rng: &mut ChaCha8Rng, config: &FlowGraphConfig) -> TransportGraph {
    let n = config.vertices.max(2);
    // Distinct dyadic positions so no vertices merge away.
    let mut positions: Vec<Point> = Vec::with_capacity(n);
    while positions.len() < n {
        let p = dyadic_point(rng, config.dim);
        if positions.iter().all(|q| q.dist(&p) > 0.0) {
            positions.push(p);
        }
    }

    let weights = dyadic_partition(rng, config.paths.max(1));
    let mut edge_acc: std::collections::BTreeMap<(usize, usize), ExactSum> =
        std::collections::BTreeMap::new();
    let mut src_acc: Vec<ExactSum> = (0..n).map(|_| ExactSum::new()).collect();
    let mut snk_acc: Vec<ExactSum> = (0..n).map(|_| ExactSum::new()).collect();

    for w in weights {
        // Strictly increasing vertex indices form a path in the DAG order.
        let start = rng.gen_range(0..n - 1);
        let mut walk = vec![start];
        let mut at = start;
        while at < n - 1 {
            let next = rng.gen_range(at + 1..n.min(at + 4).max(at + 2));
            walk.push(next);
            at = next;
            if walk.len() >= 2 && rng.gen_bool(0.35) {
                break;
            }
        }
        src_acc[walk[0]].add(w);
        snk_acc[*walk.last().unwrap()].add(w);
        for pair in walk.windows(2) {
            edge_acc
                .entry((pair[0], pair[1]))
                .or_default()
                .add(w);
        }
    }

    for _ in 0..config.cycles {
        let len = rng.gen_range(3..=4.min(n));
        let mut picks: Vec<usize> = (0..n).collect();
        picks.shuffle(rng);
        let mut cycle: Vec<usize> = picks.into_iter().take(len).collect();
        cycle.sort_unstable();
        let w = rng.gen_range(1..=64) as f64 / MASS_GRID as f64;
        for i in 0..cycle.len() {
            let a = cycle[i];
            let b = cycle[(i + 1) % cycle.len()];
            edge_acc
                .entry((a, b))
                .or_default()
                .add(w);
        }
    }

    let edges: Vec<Edge> = edge_acc
        .into_iter()
        .map(|((tail, head), acc)| Edge {
            tail,
            head,
            weight: acc.value(),
        })
        .collect();
    let source = DiscreteMeasure::new(
        config.dim,
        positions
            .iter()
            .zip(&src_acc)
            .map(|(p, a)| (p.clone(), a.value()))
            .collect(),
    )
    .expect("source masses are nonnegative");
    let sink = DiscreteMeasure::new(
        config.dim,
        positions
            .iter()
            .zip(&snk_acc)
            .map(|(p, a)| (p.clone(), a.value()))
            .collect(),
    )
    .expect("sink masses are nonnegative");
    TransportGraph::new(config.dim, positions, edges, source, sink)
        .expect("generated flow graph is valid")
}

/// A random planar transport tree (optionally with recombining sinks) whose
/// edge relative interiors are pairwise disjoint: vertices sit on concentric
/// rings inside nested angular sectors, so edges never cross.
pub fn disjoint_interior_dag(rng: &mut ChaCha8Rng, recombine: bool) -> TransportGraph {
    struct Node {
        vertex: usize,
        sector: (f64, f64),
        depth: usize,
    }

    let mut vertices = vec![Point(vec![0.0, 0.0])];
    let mut edges_topo: Vec<(usize, usize)> = Vec::new();
    let mut leaves: Vec<(usize, usize)> = Vec::new(); // (vertex, parent)
    let max_depth = rng.gen_range(2..=3);
    let ring = |depth: usize| 0.55 * depth as f64;

    let mut queue = vec![Node {
        vertex: 0,
        sector: (0.0, std::f64::consts::TAU),
        depth: 0,
    }];
    while let Some(node) = queue.pop() {
        let children = if node.depth == 0 {
            rng.gen_range(2..=3)
        } else {
            rng.gen_range(1..=3)
        };
        let width = (node.sector.1 - node.sector.0) / children as f64;
        for c in 0..children {
            let lo = node.sector.0 + c as f64 * width;
            let hi = lo + width;
            let angle = 0.5 * (lo + hi);
            let r = ring(node.depth + 1);
            let v = vertices.len();
            vertices.push(Point(vec![r * angle.cos(), r * angle.sin()]));
            edges_topo.push((node.vertex, v));
            if node.depth + 1 < max_depth {
                queue.push(Node {
                    vertex: v,
                    sector: (lo, hi),
                    depth: node.depth + 1,
                });
            } else {
                leaves.push((v, node.vertex));
            }
        }
    }

    // Dyadic leaf masses; internal tree edges carry their subtree totals.
    // Children were pushed after parents, so reverse order is bottom-up.
    let masses = dyadic_partition(rng, leaves.len());
    let mut sink_mass = vec![0.0; vertices.len()];
    for (&(v, _), m) in leaves.iter().zip(masses.iter()) {
        sink_mass[v] = *m;
    }
    let mut weight = sink_mass.clone();
    for &(parent, child) in edges_topo.iter().rev() {
        weight[parent] += weight[child];
    }
    let mut edges: Vec<Edge> = edges_topo
        .iter()
        .map(|&(parent, child)| Edge {
            tail: parent,
            head: child,
            weight: weight[child],
        })
        .filter(|e| e.weight > 0.0)
        .collect();

    // Optionally recombine sibling leaves into a shared sink further out;
    // the two grafted edges stay inside the sibling wedges.
    if recombine {
        for pair in leaves.windows(2) {
            let ((u, pu), (v, pv)) = (pair[0], pair[1]);
            if pu == pv && sink_mass[u] > 0.0 && sink_mass[v] > 0.0 && rng.gen_bool(0.4) {
                let mid = Point(vec![
                    0.8 * (vertices[u].0[0] + vertices[v].0[0]),
                    0.8 * (vertices[u].0[1] + vertices[v].0[1]),
                ]);
                let s = vertices.len();
                vertices.push(mid);
                edges.push(Edge { tail: u, head: s, weight: sink_mass[u] });
                edges.push(Edge { tail: v, head: s, weight: sink_mass[v] });
                sink_mass.push(sink_mass[u] + sink_mass[v]);
                sink_mass[u] = 0.0;
                sink_mass[v] = 0.0;
            }
        }
    }

    let source = DiscreteMeasure::new(2, vec![(Point(vec![0.0, 0.0]), 1.0)]).unwrap();
    let sink = DiscreteMeasure::new(
        2,
        sink_mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(v, m)| (vertices[v].clone(), *m))
            .collect(),
    )
    .unwrap();
    TransportGraph::new(2, vertices, edges, source, sink)
        .expect("sector tree is a valid transport graph")
}

/// The desk-size instance showing that optimal networks under a step cost
/// need not be trees: two supplies of 0.35 and 0.65 facing mirror demands at
/// distance 3, with `τ(w) = 0.3·⌈w/0.3⌉`.
#[derive(Debug, Clone)]
pub struct NontreeInstance {
    pub plus: DiscreteMeasure,
    pub minus: DiscreteMeasure,
    pub cost: crate::costs::TransportCost,
    /// The better of the two tree topologies: two parallel horizontal runs.
    pub tree: TransportGraph,
    /// The non-tree network: short vertical connectors swap 0.1 of mass
    /// at both ends, flattening both runs onto the cheap step plateau.
    pub nontree: TransportGraph,
}

pub fn nontree_instance() -> NontreeInstance {
    let p = |x: f64, y: f64| Point(vec![x, y]);
    let plus =
        DiscreteMeasure::new(2, vec![(p(0.0, 0.0), 0.35), (p(0.0, 1.0), 0.65)]).unwrap();
    let minus =
        DiscreteMeasure::new(2, vec![(p(3.0, 0.0), 0.35), (p(3.0, 1.0), 0.65)]).unwrap();
    let cost = crate::costs::TransportCost::step(0.3).unwrap();
    let vertices = vec![p(0.0, 0.0), p(0.0, 1.0), p(3.0, 0.0), p(3.0, 1.0)];
    let tree = TransportGraph::new(
        2,
        vertices.clone(),
        vec![
            Edge { tail: 0, head: 2, weight: 0.35 },
            Edge { tail: 1, head: 3, weight: 0.65 },
        ],
        plus.clone(),
        minus.clone(),
    )
    .unwrap();
    let nontree = TransportGraph::new(
        2,
        vertices,
        vec![
            Edge { tail: 1, head: 0, weight: 0.1 },
            Edge { tail: 0, head: 2, weight: 0.45 },
            Edge { tail: 1, head: 3, weight: 0.55 },
            Edge { tail: 2, head: 3, weight: 0.1 },
        ],
        plus.clone(),
        minus.clone(),
    )
    .unwrap();
    NontreeInstance {
        plus,
        minus,
        cost,
        tree,
        nontree,
    }
}

/// The plan pair behind the lower-semicontinuity failure of the plan cost
/// for non-concave `τ(w) = ⌈w/0.45⌉`: a forward-back-forward path sharing
/// its track with a straight partner versus the same loop on its own track.
#[derive(Debug, Clone)]
pub struct LscInstance {
    pub cost: crate::costs::TransportCost,
    pub looping: crate::patterns::IrrigationPlan,
    pub separated: crate::patterns::IrrigationPlan,
}

pub fn lsc_instance() -> LscInstance {
    let p = |x: f64, y: f64| Point(vec![x, y]);
    let cost = crate::costs::TransportCost::step_with_height(0.45, 1.0).unwrap();
    let looping = crate::patterns::IrrigationPlan::new(
        2,
        vec![
            (
                vec![p(0.0, 0.0), p(1.0, 0.0), p(0.0, 0.0), p(1.0, 0.0)],
                0.45,
            ),
            (vec![p(0.0, 0.0), p(1.0, 0.0)], 0.55),
        ],
    )
    .unwrap();
    let separated = crate::patterns::IrrigationPlan::new(
        2,
        vec![
            (
                vec![p(0.0, 1.0), p(1.0, 1.0), p(0.0, 1.0), p(1.0, 1.0)],
                0.45,
            ),
            (vec![p(0.0, 0.0), p(1.0, 0.0)], 0.55),
        ],
    )
    .unwrap();
    LscInstance {
        cost,
        looping,
        separated,
    }
}
