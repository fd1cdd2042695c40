//! Discrete transport paths: weighted directed geometric graphs that move a
//! source measure onto a sink measure under Kirchhoff mass conservation.

mod arrange;
mod consolidate;
mod reduce;
mod split;

pub use consolidate::{gilbert_energy, ConsolidatedFlux, FluxSegment};
pub use split::SplitResult;

pub(crate) use arrange::{arrange_segments, segment_relation, ArrangeInput, SegRelation};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::costs::TransportCost;
use crate::measures::{DiscreteMeasure, MeasureError, Point, SignedDiscreteMeasure};
use crate::numeric::{sum_exact, ExactSum, RESIDUAL_TOL, SNAP_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph contains a directed cycle")]
    CyclicGraph,
    #[error("mass conservation violated (largest residual {0})")]
    ConservationViolation(f64),
    #[error("cost is not concave; tree reduction requires a concave cost")]
    NonConcaveCost,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A weighted directed edge, by vertex indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// A discrete transport path: straight weighted edges between geometric
/// vertices, together with the source and sink measures they transport.
///
/// Canonicalization merges vertices within the snap tolerance, prunes
/// zero-weight edges, rejects negative weights and degenerate (zero-length)
/// edges, and guarantees that every atom of the source and sink measures has
/// a vertex. Parallel and antiparallel edges are kept as distinct edges; the
/// flux they carry is only combined by [`TransportGraph::consolidate_flux`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportGraph {
    dim: usize,
    vertices: Vec<Point>,
    edges: Vec<Edge>,
    source: DiscreteMeasure,
    sink: DiscreteMeasure,
    /// Source/sink mass at each vertex, aligned with `vertices`.
    vertex_source: Vec<f64>,
    vertex_sink: Vec<f64>,
}

/// Per-edge cost contributions `τ(w(e))·l(e)` and their total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub per_edge: Vec<f64>,
    pub total: f64,
}

/// One conservation violation: vertex position and its mass residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConservationViolation {
    pub position: Point,
    pub residual: f64,
}

impl TransportGraph {
    pub fn new(
        dim: usize,
        vertices: Vec<Point>,
        edges: Vec<Edge>,
        source: DiscreteMeasure,
        sink: DiscreteMeasure,
    ) -> Result<Self, GraphError> {
        if source.dim() != dim || sink.dim() != dim {
            return Err(GraphError::InvalidGraph(
                "source/sink dimension does not match the graph".into(),
            ));
        }
        for v in &vertices {
            if v.dim() != dim {
                return Err(GraphError::InvalidGraph(
                    "vertex dimension mismatch".into(),
                ));
            }
            if !v.0.iter().all(|c| c.is_finite()) {
                return Err(GraphError::InvalidGraph(
                    "non-finite vertex coordinate".into(),
                ));
            }
        }
        for e in &edges {
            if e.tail >= vertices.len() || e.head >= vertices.len() {
                return Err(GraphError::InvalidGraph(format!(
                    "edge ({}, {}) references a missing vertex",
                    e.tail, e.head
                )));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(GraphError::InvalidGraph(format!(
                    "edge weight {} must be finite and nonnegative",
                    e.weight
                )));
            }
        }

        // Merge vertices within the snap tolerance, keeping first-seen
        // coordinates.
        let mut canon: Vec<Point> = Vec::new();
        let mut lookup = VertexLookup::new(dim);
        let mut remap = Vec::with_capacity(vertices.len());
        for v in vertices {
            remap.push(lookup.intern(&mut canon, v));
        }
        // Atom positions become vertices too.
        let mut vertex_source = vec![0.0; canon.len()];
        let mut vertex_sink = vec![0.0; canon.len()];
        for (measure, masses) in [(&source, &mut vertex_source), (&sink, &mut vertex_sink)] {
            for atom in measure.atoms() {
                let idx = lookup.intern(&mut canon, atom.pos.clone());
                if idx >= masses.len() {
                    masses.resize(canon.len(), 0.0);
                }
                masses[idx] += atom.mass;
            }
        }
        vertex_source.resize(canon.len(), 0.0);
        vertex_sink.resize(canon.len(), 0.0);

        let mut kept = Vec::with_capacity(edges.len());
        for e in edges {
            if e.weight == 0.0 {
                continue;
            }
            let tail = remap[e.tail];
            let head = remap[e.head];
            if tail == head {
                return Err(GraphError::InvalidGraph(
                    "degenerate zero-length edge with positive weight".into(),
                ));
            }
            kept.push(Edge {
                tail,
                head,
                weight: e.weight,
            });
        }

        Ok(TransportGraph {
            dim,
            vertices: canon,
            edges: kept,
            source,
            sink,
            vertex_source,
            vertex_sink,
        })
    }

    /// Rebuilds a graph reusing this graph's source/sink but new geometry.
    pub(crate) fn with_edges(&self, edges: Vec<Edge>) -> TransportGraph {
        TransportGraph {
            dim: self.dim,
            vertices: self.vertices.clone(),
            edges,
            source: self.source.clone(),
            sink: self.sink.clone(),
            vertex_source: self.vertex_source.clone(),
            vertex_sink: self.vertex_sink.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn sink(&self) -> &DiscreteMeasure {
        &self.sink
    }

    pub(crate) fn vertex_source_mass(&self) -> &[f64] {
        &self.vertex_source
    }

    pub(crate) fn vertex_sink_mass(&self) -> &[f64] {
        &self.vertex_sink
    }

    pub fn edge_length(&self, e: &Edge) -> f64 {
        self.vertices[e.tail].dist(&self.vertices[e.head])
    }

    /// Mass residual at every vertex and atom position: `μ+({v}) + inflow −
    /// μ−({v}) − outflow`. Returns the violations beyond the relative
    /// tolerance; an empty list means the graph is a valid transport path.
    pub fn check_conservation(&self) -> Vec<ConservationViolation> {
        let residuals = self.residuals();
        let scale = self
            .source
            .total_mass()
            .max(self.sink.total_mass())
            .max(1e-300);
        residuals
            .into_iter()
            .enumerate()
            .filter(|(_, r)| r.abs() > RESIDUAL_TOL * scale)
            .map(|(v, residual)| ConservationViolation {
                position: self.vertices[v].clone(),
                residual,
            })
            .collect()
    }

    fn residuals(&self) -> Vec<f64> {
        let mut acc: Vec<ExactSum> = (0..self.vertices.len())
            .map(|_| ExactSum::new())
            .collect();
        for (v, sum) in acc.iter_mut().enumerate() {
            sum.add(self.vertex_source[v]);
            sum.add(-self.vertex_sink[v]);
        }
        for e in &self.edges {
            acc[e.head].add(e.weight);
            acc[e.tail].add(-e.weight);
        }
        acc.iter().map(|s| s.value()).collect()
    }

    /// Net outflow minus inflow per vertex, as a signed measure. Equals
    /// `μ+ − μ−` exactly when conservation holds.
    pub fn divergence(&self) -> SignedDiscreteMeasure {
        let mut acc: Vec<ExactSum> = (0..self.vertices.len())
            .map(|_| ExactSum::new())
            .collect();
        for e in &self.edges {
            acc[e.tail].add(e.weight);
            acc[e.head].add(-e.weight);
        }
        SignedDiscreteMeasure::new(
            self.dim,
            self.vertices
                .iter()
                .zip(acc.iter())
                .map(|(p, s)| (p.clone(), s.value()))
                .collect(),
        )
    }

    /// `Σ_e τ(w(e))·l(e)` with the per-edge breakdown.
    pub fn graph_cost(&self, tau: &TransportCost) -> CostBreakdown {
        let per_edge: Vec<f64> = self
            .edges
            .iter()
            .map(|e| tau.eval(e.weight) * self.edge_length(e))
            .collect();
        let total = sum_exact(per_edge.iter().copied());
        CostBreakdown { per_edge, total }
    }

    /// Total transported length-mass `Σ_e w(e)·l(e)` (the flux mass).
    pub fn flux_mass(&self) -> f64 {
        sum_exact(self.edges.iter().map(|e| e.weight * self.edge_length(e)))
    }

    /// Whether the directed graph has no directed cycle.
    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Deterministic topological order of vertex indices, or `None` if the
    /// graph has a directed cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.vertices.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            indegree[e.head] += 1;
            out[e.tail].push(e.head);
        }
        // Smallest-index-first for reproducibility.
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
            .filter(|&v| indegree[v] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &w in &out[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(std::cmp::Reverse(w));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Largest edge weight together with whether it obeys the maximal-flux
    /// bound `w(e) ≤ μ+(R^n)`. Only guaranteed for acyclic graphs, so cyclic
    /// input is an error.
    pub fn max_flux_bound(&self) -> Result<(f64, bool), GraphError> {
        if !self.is_acyclic() {
            return Err(GraphError::CyclicGraph);
        }
        let max_w = self
            .edges
            .iter()
            .map(|e| e.weight)
            .fold(0.0_f64, f64::max);
        let holds = max_w <= self.source.total_mass() + 1e-9;
        Ok((max_w, holds))
    }
}

/// Interning of points by snapped coordinates.
struct VertexLookup {
    dim: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl VertexLookup {
    fn new(dim: usize) -> Self {
        VertexLookup {
            dim,
            buckets: HashMap::new(),
        }
    }

    fn intern(&mut self, canon: &mut Vec<Point>, p: Point) -> usize {
        let key: Vec<i64> = p.0.iter().map(|c| (c / SNAP_TOL).round() as i64).collect();
        for delta in graph_neighbour_offsets(self.dim) {
            let nk: Vec<i64> = key.iter().zip(&delta).map(|(a, b)| a + b).collect();
            if let Some(list) = self.buckets.get(&nk) {
                for &idx in list {
                    if canon[idx].dist(&p) <= SNAP_TOL {
                        return idx;
                    }
                }
            }
        }
        let idx = canon.len();
        canon.push(p);
        self.buckets.entry(key).or_default().push(idx);
        idx
    }
}

pub(crate) fn graph_neighbour_offsets(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * 3);
        for base in &out {
            for d in [0i64, -1, 1] {
                let mut v = base.clone();
                v.push(d);
                next.push(v);
            }
        }
        out = next;
    }
    out
}
