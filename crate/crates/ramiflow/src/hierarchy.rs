//! Dyadic hierarchical transport constructions on `(−2,2]^n`.
//!
//! The central object is the n-adic transport path: a `2^n`-ary tree of
//! scaled straight edges that moves a measure's total mass from the origin
//! out to its level-`k` grid projection. Its per-level cost is controlled by
//! the admissibility series terms `S^β(n,k)`, which is how finite-cost
//! networks between arbitrary measures are produced. The same building
//! blocks yield the bridge graphs used to compare projections at different
//! levels, mollified copies, and pairs of discrete measures.

use serde::{Deserialize, Serialize};

use crate::costs::TransportCost;
use crate::graph::{Edge, GraphError, TransportGraph};
use crate::measures::{DiscreteMeasure, MeasureError, Point};
use crate::numeric::{sum_exact, ExactSum};

/// An n-adic transport path: the underlying graph plus per-edge level
/// annotations and the combinatorial cell counts per level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NadicGraph {
    graph: TransportGraph,
    /// Level of each edge, aligned with `graph.edges()`.
    levels: Vec<u32>,
    /// Number of levels built.
    depth: u32,
    /// Combinatorial edge count `2^{n·j}` per level `j = 1..=depth`,
    /// including pruned zero-weight cells.
    level_cells: Vec<u64>,
}

impl NadicGraph {
    pub fn graph(&self) -> &TransportGraph {
        &self.graph
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn level_cells(&self) -> &[u64] {
        &self.level_cells
    }

    /// The level-`j` stage as its own transport path, moving the level
    /// `j−1` projection onto the level-`j` projection.
    pub fn level_subgraph(&self, j: u32) -> Result<TransportGraph, GraphError> {
        assert!(j >= 1 && j <= self.depth);
        let mu = self.graph.sink(); // equals P^k but we need the source measure
        let _ = mu;
        let edges: Vec<Edge> = self
            .graph
            .edges()
            .iter()
            .zip(&self.levels)
            .filter(|(_, lvl)| **lvl == j)
            .map(|(e, _)| *e)
            .collect();
        let source = self.projection(j - 1)?;
        let sink = self.projection(j)?;
        TransportGraph::new(
            self.graph.dim(),
            self.graph.vertices().to_vec(),
            edges,
            source,
            sink,
        )
    }

    /// Projection `P^j` implied by the tree: level-`j` edge weights placed at
    /// their head vertices (`P^0` is the total mass at the centre).
    fn projection(&self, j: u32) -> Result<DiscreteMeasure, MeasureError> {
        let dim = self.graph.dim();
        if j == 0 {
            let total = self.graph.source().total_mass();
            return DiscreteMeasure::new(
                dim,
                vec![(Point(vec![0.0; dim]), total)],
            );
        }
        let atoms = self
            .graph
            .edges()
            .iter()
            .zip(&self.levels)
            .filter(|(_, lvl)| **lvl == j)
            .map(|(e, _)| (self.graph.vertices()[e.head].clone(), e.weight))
            .collect();
        DiscreteMeasure::new(dim, atoms)
    }

    /// Cost of the level-`j` stage under `tau`.
    pub fn level_cost(&self, j: u32, tau: &TransportCost) -> f64 {
        sum_exact(
            self.graph
                .edges()
                .iter()
                .zip(&self.levels)
                .filter(|(_, lvl)| **lvl == j)
                .map(|(e, _)| tau.eval(e.weight) * self.graph.edge_length(e)),
        )
    }
}

/// Builds the `k`-level n-adic transport path of `m`: a dyadic tree rooted
/// at the origin whose level-`j` edges carry the mass of the corresponding
/// halfopen dyadic cell. The result transports `m((−2,2]^n)·δ_0` onto the
/// level-`k` projection of `m` and satisfies conservation by construction.
pub fn nadic_graph(m: &DiscreteMeasure, k: u32) -> Result<NadicGraph, MeasureError> {
    assert!(k >= 1);
    let dim = m.dim();
    for atom in m.atoms() {
        for &c in &atom.pos.0 {
            if !(-2.0 < c && c <= 2.0) {
                return Err(MeasureError::OutOfDomain(format!(
                    "coordinate {c} outside (-2, 2]"
                )));
            }
        }
    }

    let mut vertices: Vec<Point> = vec![Point(vec![0.0; dim])];
    let mut edges: Vec<Edge> = Vec::new();
    let mut levels: Vec<u32> = Vec::new();

    struct Frame {
        vertex: usize,
        centre: Vec<f64>,
        scale: f64,
        level: u32,
        atoms: Vec<usize>,
    }

    let corner_offsets = corners(dim);
    let mut stack = vec![Frame {
        vertex: 0,
        centre: vec![0.0; dim],
        scale: 1.0,
        level: 1,
        atoms: (0..m.atoms().len()).collect(),
    }];

    while let Some(frame) = stack.pop() {
        for offset in &corner_offsets {
            let corner: Vec<f64> = frame
                .centre
                .iter()
                .zip(offset)
                .map(|(c, o)| c + o * frame.scale)
                .collect();
            // Halfopen cell corner + (−scale, scale]^n.
            let member = |idx: &usize| {
                m.atoms()[*idx]
                    .pos
                    .0
                    .iter()
                    .zip(&corner)
                    .all(|(x, c)| c - frame.scale < *x && *x <= c + frame.scale)
            };
            let sub: Vec<usize> = frame.atoms.iter().filter(|i| member(i)).cloned().collect();
            let mass = {
                let mut acc = ExactSum::new();
                for &i in &sub {
                    acc.add(m.atoms()[i].mass);
                }
                acc.value()
            };
            let corner_vertex = if mass > 0.0 {
                let v = vertices.len();
                vertices.push(Point(corner.clone()));
                edges.push(Edge {
                    tail: frame.vertex,
                    head: v,
                    weight: mass,
                });
                levels.push(frame.level);
                Some(v)
            } else {
                None
            };
            if frame.level < k {
                if let Some(v) = corner_vertex {
                    stack.push(Frame {
                        vertex: v,
                        centre: corner,
                        scale: frame.scale / 2.0,
                        level: frame.level + 1,
                        atoms: sub,
                    });
                }
            }
        }
    }

    let total = m.total_mass();
    let source = DiscreteMeasure::new(dim, vec![(Point(vec![0.0; dim]), total)])?;
    let sink = m.project_klevel(k)?;
    let graph = TransportGraph::new(dim, vertices, edges, source, sink)
        .map_err(|e| MeasureError::InvalidMeasure(format!("nadic construction: {e}")))?;
    let level_cells = (1..=k).map(|j| 1u64 << (dim as u32 * j)).collect();
    Ok(NadicGraph {
        graph,
        levels,
        depth: k,
        level_cells,
    })
}

fn corners(dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * 2);
        for base in &out {
            for s in [-1.0, 1.0] {
                let mut v = base.clone();
                v.push(s);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Cost of the level-`k` stage of the n-adic path of a probability measure,
/// together with its bound `2·√n·2^{(n−1)k}·β(2^{−nk})`.
pub fn nadic_cost_bound(
    m: &DiscreteMeasure,
    k: u32,
    tau: &TransportCost,
) -> Result<(f64, f64), MeasureError> {
    let n = m.dim();
    let tree = nadic_graph(m, k)?;
    let actual = tree.level_cost(k, tau);
    let bound = 2.0 * (n as f64).sqrt()
        * ((2.0f64).powi((n as i32 - 1) * k as i32)
            * tau.concave_majorant((2.0f64).powi(-(n as i32) * k as i32)));
    Ok((actual, bound))
}

/// Connects the level-`k` projections of two equal-mass measures by gluing
/// the reversed n-adic tree of `plus` to the n-adic tree of `minus` at the
/// origin. The union transports `P^k(μ+)` onto `P^k(μ−)`.
pub fn connect_nadic(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
    k: u32,
) -> Result<TransportGraph, MeasureError> {
    let up = nadic_graph(plus, k)?;
    let down = nadic_graph(minus, k)?;
    let dim = plus.dim();
    let mut vertices: Vec<Point> = up.graph.vertices().to_vec();
    // Reverse the tree of `plus`.
    let mut edges: Vec<Edge> = up
        .graph
        .edges()
        .iter()
        .map(|e| Edge {
            tail: e.head,
            head: e.tail,
            weight: e.weight,
        })
        .collect();
    let offset = vertices.len();
    vertices.extend(down.graph.vertices().iter().cloned());
    edges.extend(down.graph.edges().iter().map(|e| Edge {
        tail: e.tail + offset,
        head: e.head + offset,
        weight: e.weight,
    }));
    let source = plus.project_klevel(k)?;
    let sink = minus.project_klevel(k)?;
    TransportGraph::new(dim, vertices, edges, source, sink)
        .map_err(|e| MeasureError::InvalidMeasure(format!("nadic union: {e}")))
}

/// A complete transport path from `plus` to `minus` assembled from dyadic
/// pieces: snap `plus` onto its level-`k` grid, connect the two projections
/// through the glued n-adic trees, then unsnap onto `minus`. Valid for any
/// equal-mass measures supported in `(−2,2]^n` and used as an upper-bound
/// witness.
pub fn nadic_witness(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
    k: u32,
) -> Result<TransportGraph, MeasureError> {
    let dim = plus.dim();
    let snap_edges = |m: &DiscreteMeasure, reverse: bool| -> (Vec<Point>, Vec<Edge>) {
        let cell = (2.0f64).powi(2 - k as i32);
        let mut vs = Vec::new();
        let mut es = Vec::new();
        for atom in m.atoms() {
            let centre = Point(
                atom.pos
                    .0
                    .iter()
                    .map(|x| (x / cell).ceil() * cell - cell / 2.0)
                    .collect(),
            );
            if centre.dist(&atom.pos) == 0.0 {
                continue;
            }
            let a = vs.len();
            vs.push(atom.pos.clone());
            let b = vs.len();
            vs.push(centre);
            let (tail, head) = if reverse { (b, a) } else { (a, b) };
            es.push(Edge {
                tail,
                head,
                weight: atom.mass,
            });
        }
        (vs, es)
    };
    let middle = connect_nadic(plus, minus, k)?;
    let (v1, e1) = snap_edges(plus, false);
    let (v3, e3) = snap_edges(minus, true);
    let mut vertices = v1;
    let mut edges = e1;
    let off = vertices.len();
    vertices.extend(middle.vertices().iter().cloned());
    edges.extend(middle.edges().iter().map(|e| Edge {
        tail: e.tail + off,
        head: e.head + off,
        weight: e.weight,
    }));
    let off = vertices.len();
    vertices.extend(v3);
    edges.extend(e3.into_iter().map(|e| Edge {
        tail: e.tail + off,
        head: e.head + off,
        weight: e.weight,
    }));
    TransportGraph::new(dim, vertices, edges, plus.clone(), minus.clone())
        .map_err(|e| MeasureError::InvalidMeasure(format!("nadic witness: {e}")))
}

/// A bridge construction together with its asserted cost bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BridgeGraph {
    pub graph: TransportGraph,
    /// Cost of the construction under the requested `tau`.
    pub cost: f64,
    /// Provable upper bound for this construction.
    pub bound: f64,
    /// The closed-form headline bound (coincides with `bound` for linear
    /// costs and single atoms, but is not valid for every concave cost).
    pub nominal_bound: f64,
}

impl BridgeGraph {
    pub fn bound_holds(&self) -> bool {
        self.cost <= self.bound + 1e-9 * self.bound.max(1.0)
    }
}

/// Which bridge construction to build.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BridgeKind {
    /// Stacked tree levels `k+1..=m` of one measure: transports `P^k(μ)`
    /// onto `P^m(μ)`.
    StackedLevels { from: u32, to: u32 },
    /// Grid-to-grid matching of `P^k(μ)` and `P^k(K_δ*μ)` where the
    /// mollification is a `3^n`-point split of each atom.
    Mollified { level: u32, delta: f64 },
    /// Star projection of a discrete mass onto its level-`k` grid positions.
    GridSnap { level: u32 },
    /// Star through the origin between two discrete masses, moving only the
    /// pointwise surplus `max(0, μ({v}) − ν({v}))` and its mirror.
    OriginStar,
}

/// Builds the requested bridge construction. `nu` is required for
/// [`BridgeKind::OriginStar`] and ignored otherwise.
pub fn bridge_graph(
    kind: &BridgeKind,
    mu: &DiscreteMeasure,
    nu: Option<&DiscreteMeasure>,
    tau: &TransportCost,
) -> Result<BridgeGraph, MeasureError> {
    match kind {
        BridgeKind::StackedLevels { from, to } => stacked_levels(mu, *from, *to, tau),
        BridgeKind::Mollified { level, delta } => mollified_bridge(mu, *level, *delta, tau),
        BridgeKind::GridSnap { level } => grid_snap_star(mu, *level, tau),
        BridgeKind::OriginStar => {
            let nu = nu.ok_or_else(|| {
                MeasureError::InvalidMeasure("origin star needs a second measure".into())
            })?;
            origin_star(mu, nu, tau)
        }
    }
}

/// Levels `from+1 ..= to` of the n-adic tree stacked into one graph.
pub fn stacked_levels(
    mu: &DiscreteMeasure,
    from: u32,
    to: u32,
    tau: &TransportCost,
) -> Result<BridgeGraph, MeasureError> {
    if !(from < to) {
        return Err(MeasureError::InvalidMeasure(format!(
            "stacked levels need from < to, got {from} >= {to}"
        )));
    }
    let n = mu.dim();
    let tree = nadic_graph(mu, to)?;
    let edges: Vec<Edge> = tree
        .graph
        .edges()
        .iter()
        .zip(tree.levels())
        .filter(|(_, lvl)| **lvl > from)
        .map(|(e, _)| *e)
        .collect();
    let source = mu.project_klevel(from)?;
    let sink = mu.project_klevel(to)?;
    let graph = TransportGraph::new(n, tree.graph.vertices().to_vec(), edges, source, sink)
        .map_err(|e| MeasureError::InvalidMeasure(format!("stacked levels: {e}")))?;
    let cost = graph.graph_cost(tau).total;
    let sqrt_n = (n as f64).sqrt();
    let bound = 2.0
        * sqrt_n
        * sum_exact((from + 1..=to).map(|j| {
            (2.0f64).powi((n as i32 - 1) * j as i32)
                * tau.concave_majorant((2.0f64).powi(-(n as i32) * j as i32))
        }));
    Ok(BridgeGraph {
        graph,
        cost,
        bound,
        nominal_bound: bound,
    })
}

/// Mollified-copy bridge: each atom is split uniformly over a `3^n` grid of
/// pitch `min(δ/6, δ/(3√n))` inside the radius-`δ/3` ball, and the two
/// level-`k` projections are matched cell centre to cell centre.
pub fn mollified_bridge(
    mu: &DiscreteMeasure,
    k: u32,
    delta: f64,
    tau: &TransportCost,
) -> Result<BridgeGraph, MeasureError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MeasureError::InvalidMeasure(format!(
            "smoothing radius must lie in (0,1), got {delta}"
        )));
    }
    let n = mu.dim();
    let sqrt_n = (n as f64).sqrt();
    let pitch = (delta / 6.0).min(delta / (3.0 * sqrt_n));
    let split = 3usize.pow(n as u32) as f64;
    let mut pieces: Vec<(Point, f64)> = Vec::new();
    for atom in mu.atoms() {
        for offset in moll_offsets(n) {
            let pos = Point(
                atom.pos
                    .0
                    .iter()
                    .zip(&offset)
                    .map(|(c, o)| c + o * pitch)
                    .collect(),
            );
            pieces.push((pos, atom.mass / split));
        }
    }
    let smoothed = DiscreteMeasure::new(n, pieces.clone())?;
    let source = mu.project_klevel(k)?;
    let sink = smoothed.project_klevel(k)?;

    // One edge per (source cell, target cell) pair of atom pieces.
    let cell_width = (2.0f64).powi(2 - k as i32);
    let centre_of = |p: &Point| -> Point {
        Point(
            p.0.iter()
                .map(|x| (x / cell_width).ceil() * cell_width - cell_width / 2.0)
                .collect(),
        )
    };
    let mut vertices: Vec<Point> = Vec::new();
    let mut index: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    let mut intern = |p: Point, vertices: &mut Vec<Point>| -> usize {
        let key: Vec<u64> = p.0.iter().map(|c| c.to_bits()).collect();
        *index.entry(key).or_insert_with(|| {
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut weights: std::collections::HashMap<(usize, usize), ExactSum> =
        std::collections::HashMap::new();
    for atom in mu.atoms() {
        let from = intern(centre_of(&atom.pos), &mut vertices);
        for offset in moll_offsets(n) {
            let moved = Point(
                atom.pos
                    .0
                    .iter()
                    .zip(&offset)
                    .map(|(c, o)| c + o * pitch)
                    .collect(),
            );
            let to = intern(centre_of(&moved), &mut vertices);
            if from != to {
                weights
                    .entry((from, to))
                    .or_default()
                    .add(atom.mass / split);
            }
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = weights
        .into_iter()
        .map(|((t, h), acc)| (t, h, acc.value()))
        .collect();
    edges.sort_unstable_by_key(|a| (a.0, a.1));
    let edges: Vec<Edge> = edges
        .into_iter()
        .map(|(tail, head, weight)| Edge { tail, head, weight })
        .collect();
    let sum_tau = sum_exact(edges.iter().map(|e| tau.eval(e.weight)));
    let graph = TransportGraph::new(n, vertices, edges, source, sink)
        .map_err(|e| MeasureError::InvalidMeasure(format!("mollified bridge: {e}")))?;
    let cost = graph.graph_cost(tau).total;
    let reach = delta + (2.0f64).powi(2 - k as i32) * sqrt_n;
    Ok(BridgeGraph {
        graph,
        cost,
        bound: reach * sum_tau,
        nominal_bound: reach * tau.eval(1.0),
    })
}

/// Star projection of a discrete mass onto its level-`k` grid: one edge per
/// atom, from the atom to the centre of its cell.
pub fn grid_snap_star(
    mu: &DiscreteMeasure,
    k: u32,
    tau: &TransportCost,
) -> Result<BridgeGraph, MeasureError> {
    let n = mu.dim();
    let sink = mu.project_klevel(k)?;
    let cell_width = (2.0f64).powi(2 - k as i32);
    let mut vertices: Vec<Point> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    for atom in mu.atoms() {
        let centre = Point(
            atom.pos
                .0
                .iter()
                .map(|x| (x / cell_width).ceil() * cell_width - cell_width / 2.0)
                .collect(),
        );
        if centre.dist(&atom.pos) == 0.0 {
            continue;
        }
        let t = vertices.len();
        vertices.push(atom.pos.clone());
        let h = vertices.len();
        vertices.push(centre);
        edges.push(Edge {
            tail: t,
            head: h,
            weight: atom.mass,
        });
    }
    let graph = TransportGraph::new(n, vertices, edges, mu.clone(), sink)
        .map_err(|e| MeasureError::InvalidMeasure(format!("grid snap: {e}")))?;
    let cost = graph.graph_cost(tau).total;
    let reach = (n as f64).sqrt() * (2.0f64).powi(1 - k as i32);
    let sum_tau = sum_exact(mu.atoms().iter().map(|a| tau.eval(a.mass)));
    Ok(BridgeGraph {
        graph,
        cost,
        bound: reach * sum_tau,
        nominal_bound: reach * tau.eval(1.0),
    })
}

/// Star through the origin between two discrete masses: only the pointwise
/// surplus masses travel.
pub fn origin_star(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tau: &TransportCost,
) -> Result<BridgeGraph, MeasureError> {
    let n = mu.dim();
    if nu.dim() != n {
        return Err(MeasureError::InvalidMeasure(
            "dimension mismatch between the two measures".into(),
        ));
    }
    let origin = Point(vec![0.0; n]);
    let mut vertices = vec![origin];
    let mut edges = Vec::new();
    let mut tau_sum = ExactSum::new();
    let mut positions: Vec<Point> = mu.atoms().iter().map(|a| a.pos.clone()).collect();
    for b in nu.atoms() {
        if mu.mass_at(&b.pos) == 0.0 {
            positions.push(b.pos.clone());
        }
    }
    for pos in positions {
        let surplus = mu.mass_at(&pos) - nu.mass_at(&pos);
        if surplus == 0.0 || pos.norm() == 0.0 {
            continue;
        }
        let v = vertices.len();
        vertices.push(pos);
        if surplus > 0.0 {
            edges.push(Edge {
                tail: v,
                head: 0,
                weight: surplus,
            });
        } else {
            edges.push(Edge {
                tail: 0,
                head: v,
                weight: -surplus,
            });
        }
        tau_sum.add(tau.eval(surplus.abs()));
    }
    let graph = TransportGraph::new(n, vertices, edges, mu.clone(), nu.clone())
        .map_err(|e| MeasureError::InvalidMeasure(format!("origin star: {e}")))?;
    let cost = graph.graph_cost(tau).total;
    let sqrt_n = (n as f64).sqrt();
    let var: f64 = {
        let mut acc = ExactSum::new();
        for a in mu.atoms() {
            acc.add((a.mass - nu.mass_at(&a.pos)).abs());
        }
        for b in nu.atoms() {
            if mu.mass_at(&b.pos) == 0.0 {
                acc.add(b.mass);
            }
        }
        acc.value()
    };
    Ok(BridgeGraph {
        graph,
        cost,
        bound: 2.0 * sqrt_n * tau_sum.value(),
        nominal_bound: 2.0 * sqrt_n * tau.eval(var),
    })
}

fn moll_offsets(dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * 3);
        for base in &out {
            for s in [-1.0, 0.0, 1.0] {
                let mut v = base.clone();
                v.push(s);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::p2;

    fn uniform_grid(per_axis: usize) -> DiscreteMeasure {
        let mut atoms = Vec::new();
        let q = 1.0 / per_axis as f64;
        let mass = 1.0 / (per_axis * per_axis) as f64;
        for i in 0..per_axis {
            for j in 0..per_axis {
                let x = -1.0 + q + 2.0 * q * i as f64 - q;
                let y = -1.0 + q + 2.0 * q * j as f64 - q;
                atoms.push((p2(x + q, y + q), mass));
            }
        }
        DiscreteMeasure::new(2, atoms).unwrap()
    }

    #[test]
    fn uniform_level_one() {
        // Cell-centre grid, 8 per axis: level 1 sends a quarter each way.
        let m = uniform_grid(8);
        let tree = nadic_graph(&m, 1).unwrap();
        assert_eq!(tree.graph().edges().len(), 4);
        for e in tree.graph().edges() {
            assert_eq!(e.weight, 0.25);
            assert!((tree.graph().edge_length(e) - 2.0f64.sqrt()).abs() < 1e-15);
        }
        assert!(tree.graph().check_conservation().is_empty());
    }

    #[test]
    fn point_mass_single_chain() {
        let m = DiscreteMeasure::dirac(p2(1.0, 1.0), 1.0).unwrap();
        let tree = nadic_graph(&m, 1).unwrap();
        assert_eq!(tree.graph().edges().len(), 1);
        assert_eq!(tree.graph().edges()[0].weight, 1.0);
        let deep = nadic_graph(&m, 3).unwrap();
        assert_eq!(deep.graph().edges().len(), 3);
        assert!(deep.graph().check_conservation().is_empty());
    }

    #[test]
    fn divergence_matches_projections() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let atoms: Vec<(Point, f64)> = (0..12)
                .map(|_| {
                    (
                        p2(
                            rng.gen_range(-512..=512) as f64 / 256.0,
                            rng.gen_range(-511..=512) as f64 / 256.0,
                        ),
                        rng.gen_range(1..=64) as f64 / 64.0,
                    )
                })
                .collect();
            let m = DiscreteMeasure::new(2, atoms).unwrap();
            let k = 3;
            let tree = nadic_graph(&m, k).unwrap();
            assert!(tree.graph().check_conservation().is_empty());
            let p0 = DiscreteMeasure::new(2, vec![(p2(0.0, 0.0), m.total_mass())]).unwrap();
            let expected =
                crate::measures::SignedDiscreteMeasure::difference(&p0, &m.project_klevel(k).unwrap());
            let got = tree.graph().divergence();
            assert!(got.max_discrepancy(&expected) <= 1e-12);
        }
    }

    #[test]
    fn level_one_cost_and_bound_coincide_for_uniform() {
        let m = uniform_grid(8);
        let tau = TransportCost::branched(0.75).unwrap();
        let (actual, bound) = nadic_cost_bound(&m, 1, &tau).unwrap();
        assert!((actual - 2.0).abs() < 1e-12, "actual = {actual}");
        assert!((bound - 2.0).abs() < 1e-12, "bound = {bound}");
        let (a2, b2) = nadic_cost_bound(&m, 2, &tau).unwrap();
        assert!((b2 - 2.0f64.sqrt()).abs() < 1e-12);
        assert!(a2 <= b2 + 1e-12);
    }

    #[test]
    fn point_mass_levels_within_bound() {
        let m = DiscreteMeasure::dirac(p2(1.0, 1.0), 1.0).unwrap();
        let tau = TransportCost::branched(0.75).unwrap();
        for k in 1..=4 {
            let (actual, bound) = nadic_cost_bound(&m, k, &tau).unwrap();
            let expect = 2.0f64.sqrt() * (2.0f64).powi(1 - k as i32) * tau.eval(1.0);
            assert!((actual - expect).abs() < 1e-12);
            assert!(actual <= bound + 1e-12);
        }
    }

    #[test]
    fn connect_diagonal_diracs() {
        let a = DiscreteMeasure::dirac(p2(-1.0, -1.0), 1.0).unwrap();
        let b = DiscreteMeasure::dirac(p2(1.0, 1.0), 1.0).unwrap();
        let tau = TransportCost::branched(0.75).unwrap();
        let g = connect_nadic(&a, &b, 1).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert!(g.check_conservation().is_empty());
        let cost = g.graph_cost(&tau).total;
        assert!((cost - 2.0 * 2.0f64.sqrt() * tau.eval(1.0)).abs() < 1e-12);
    }

    #[test]
    fn connect_identical_measures_cancels() {
        let m = uniform_grid(4);
        let g = connect_nadic(&m, &m, 2).unwrap();
        assert!(g.check_conservation().is_empty());
        let f = g.consolidate_flux();
        assert!(f.segments.is_empty(), "trees must cancel edge by edge");
    }

    #[test]
    fn stacked_levels_bridge() {
        let m = uniform_grid(8);
        let tau = TransportCost::branched(0.75).unwrap();
        let b = stacked_levels(&m, 1, 3, &tau).unwrap();
        assert!(b.graph.check_conservation().is_empty());
        assert!(b.bound_holds(), "cost {} vs bound {}", b.cost, b.bound);
        assert!(b
            .graph
            .source()
            .canonical_eq(&m.project_klevel(1).unwrap()));
        assert!(b.graph.sink().canonical_eq(&m.project_klevel(3).unwrap()));
    }

    #[test]
    fn grid_snap_bridge() {
        let m = DiscreteMeasure::dirac(p2(1.0, 1.0), 1.0).unwrap();
        let tau = TransportCost::branched(0.75).unwrap();
        let b = grid_snap_star(&m, 3, &tau).unwrap();
        assert!(b.graph.check_conservation().is_empty());
        assert!(b.cost <= 2.0f64.sqrt() * 0.25 * tau.eval(1.0) + 1e-12);
        assert!(b.bound_holds());
    }

    #[test]
    fn origin_star_bridge() {
        let a = DiscreteMeasure::new(2, vec![(p2(1.0, 0.0), 0.75), (p2(0.0, 1.0), 0.25)]).unwrap();
        let b = DiscreteMeasure::new(2, vec![(p2(1.0, 0.0), 0.25), (p2(0.0, -1.0), 0.75)]).unwrap();
        let tau = TransportCost::branched(0.75).unwrap();
        let g = origin_star(&a, &b, &tau).unwrap();
        assert!(g.graph.check_conservation().is_empty());
        assert!(g.bound_holds());
        // Identical measures: nothing moves.
        let same = origin_star(&a, &a, &tau).unwrap();
        assert!(same.graph.edges().is_empty());
        assert_eq!(same.cost, 0.0);
    }

    #[test]
    fn mollified_bridge_endpoints() {
        let m = DiscreteMeasure::new(
            2,
            vec![(p2(0.5, 0.5), 0.5), (p2(-0.75, 0.25), 0.5)],
        )
        .unwrap();
        let tau = TransportCost::wasserstein(1.0).unwrap();
        let b = mollified_bridge(&m, 2, 0.5, &tau).unwrap();
        assert!(b.graph.check_conservation().is_empty());
        // The headline bound is provable for linear costs.
        assert!(b.cost <= b.nominal_bound + 1e-12);
        assert!(b.bound_holds());
    }

    #[test]
    fn full_domain_uniform_fills_every_cell() {
        // 16x16 cell-centre grid over the whole (-2,2]^2 domain: every cell
        // at levels 1..3 is occupied, so the tree has 4 + 16 + 64 edges.
        let mut atoms = Vec::new();
        for i in 0..16 {
            for j in 0..16 {
                let x = -2.0 + 0.125 + 0.25 * i as f64;
                let y = -2.0 + 0.125 + 0.25 * j as f64;
                atoms.push((p2(x, y), 1.0 / 256.0));
            }
        }
        let m = DiscreteMeasure::new(2, atoms).unwrap();
        let tree = nadic_graph(&m, 3).unwrap();
        assert_eq!(tree.graph().edges().len(), 84);
        for (k, expect) in [(1u32, 4usize), (2, 16), (3, 64)] {
            let count = tree.levels().iter().filter(|&&l| l == k).count();
            assert_eq!(count, expect);
        }
        assert_eq!(tree.level_cells(), &[4, 16, 64]);
    }

    #[test]
    fn out_of_domain_rejected() {
        let m = DiscreteMeasure::dirac(p2(3.0, 0.0), 1.0).unwrap();
        assert!(matches!(
            nadic_graph(&m, 1),
            Err(MeasureError::OutOfDomain(_))
        ));
    }
}
