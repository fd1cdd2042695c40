//! The particle view of transport: finitely many weighted polygonal paths.
//!
//! An [`IrrigationPlan`] assigns a trajectory to each parcel of mass. Its
//! cost is driven by the *multiplicity* `m` of a point — the total mass of
//! all paths passing through it — with every traversal paying the marginal
//! rate `r^τ(m)` per unit length. For loop-free plans this collapses to the
//! Gilbert form `Σ τ(m)·length` over the support; plans with loops pay for
//! each traversal while the multiplicity counts each path's mass once,
//! which is what makes looping plans strictly more expensive than their
//! consolidated flux.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::costs::TransportCost;
use crate::extreal::ExtReal;
use crate::graph::{
    arrange_segments, segment_relation, ArrangeInput, ConsolidatedFlux, FluxSegment, GraphError,
    SegRelation, TransportGraph,
};
use crate::measures::{DiscreteMeasure, MeasureError, Point};
use crate::numeric::{sum_exact, SNAP_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// One weighted particle path: a polyline (or a single stationary point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPath {
    pub points: Vec<Point>,
    pub weight: f64,
}

impl PlanPath {
    pub fn length(&self) -> f64 {
        sum_exact(self.points.windows(2).map(|w| w[0].dist(&w[1])))
    }
}

/// A finite irrigation plan: weighted polygonal particle paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrigationPlan {
    dim: usize,
    paths: Vec<PlanPath>,
}

/// A consolidated view of a plan carrying both the scalar multiplicity `m`
/// (mass of distinct paths through the segment) and the net vector weight
/// `θ` of the induced flux. Cancellation only reduces the net flux, so
/// `|θ| ≤ m` holds segment by segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxDensityField {
    pub dim: usize,
    pub segments: Vec<DensitySegment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensitySegment {
    pub a: Point,
    pub b: Point,
    pub direction: Vec<f64>,
    /// Total mass of paths whose trajectory covers the segment, each path
    /// counted once regardless of how often it traverses.
    pub multiplicity: f64,
    /// Net signed weight along `direction`, all traversals counted.
    pub scalar: f64,
    /// Sum over traversals of the traversing path's weight.
    pub paid: f64,
}

impl DensitySegment {
    pub fn length(&self) -> f64 {
        self.a.dist(&self.b)
    }

    pub fn theta_norm(&self) -> f64 {
        self.scalar.abs()
    }
}

impl IrrigationPlan {
    pub fn new(dim: usize, paths: Vec<(Vec<Point>, f64)>) -> Result<Self, PatternError> {
        if dim == 0 {
            return Err(PatternError::InvalidPlan("dimension must be ≥ 1".into()));
        }
        let mut out = Vec::with_capacity(paths.len());
        for (points, weight) in paths {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(PatternError::InvalidPlan(format!(
                    "path weight {weight} must be positive and finite"
                )));
            }
            if points.is_empty() {
                return Err(PatternError::InvalidPlan(
                    "a path needs at least one point".into(),
                ));
            }
            for p in &points {
                if p.dim() != dim {
                    return Err(PatternError::InvalidPlan(
                        "path point dimension mismatch".into(),
                    ));
                }
                if !p.0.iter().all(|c| c.is_finite()) {
                    return Err(PatternError::InvalidPlan(
                        "non-finite path coordinate".into(),
                    ));
                }
            }
            // Collapse consecutive coincident points.
            let mut cleaned: Vec<Point> = Vec::with_capacity(points.len());
            for p in points {
                if cleaned.last().is_none_or(|q: &Point| q.dist(&p) > SNAP_TOL) {
                    cleaned.push(p);
                }
            }
            out.push(PlanPath {
                points: cleaned,
                weight,
            });
        }
        Ok(IrrigationPlan { dim, paths: out })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> &[PlanPath] {
        &self.paths
    }

    pub fn total_weight(&self) -> f64 {
        sum_exact(self.paths.iter().map(|p| p.weight))
    }

    /// Measure of path starting points.
    pub fn irrigating_measure(&self) -> Result<DiscreteMeasure, MeasureError> {
        DiscreteMeasure::new(
            self.dim,
            self.paths
                .iter()
                .map(|p| (p.points.first().unwrap().clone(), p.weight))
                .collect(),
        )
    }

    /// Measure of path end points.
    pub fn irrigated_measure(&self) -> Result<DiscreteMeasure, MeasureError> {
        DiscreteMeasure::new(
            self.dim,
            self.paths
                .iter()
                .map(|p| (p.points.last().unwrap().clone(), p.weight))
                .collect(),
        )
    }

    /// Arrangement of all polyline segments with multiplicity, traversal and
    /// net-flux bookkeeping per interior-disjoint piece.
    pub fn density_field(&self) -> FluxDensityField {
        let mut inputs = Vec::new();
        let mut owner: Vec<usize> = Vec::new();
        for (pi, path) in self.paths.iter().enumerate() {
            for seg in path.points.windows(2) {
                inputs.push(ArrangeInput {
                    a: seg[0].clone(),
                    b: seg[1].clone(),
                });
                owner.push(pi);
            }
        }
        let pieces = arrange_segments(self.dim, &inputs);
        let segments = pieces
            .into_iter()
            .map(|piece| {
                let mut dedup: Vec<usize> = piece.covers.iter().map(|&(i, _)| owner[i]).collect();
                dedup.sort_unstable();
                dedup.dedup();
                let multiplicity = sum_exact(dedup.iter().map(|&pi| self.paths[pi].weight));
                let scalar = sum_exact(
                    piece
                        .covers
                        .iter()
                        .map(|&(i, sign)| sign as f64 * self.paths[owner[i]].weight),
                );
                let paid = sum_exact(piece.covers.iter().map(|&(i, _)| self.paths[owner[i]].weight));
                DensitySegment {
                    a: piece.a,
                    b: piece.b,
                    direction: piece.unit,
                    multiplicity,
                    scalar,
                    paid,
                }
            })
            .collect();
        FluxDensityField {
            dim: self.dim,
            segments,
        }
    }

    /// Plan cost in the integral form: every traversal of an arrangement
    /// piece pays the marginal rate `r^τ(m)` of the piece's multiplicity,
    /// times its length. Equals the Gilbert form `Σ τ(m)·length` for
    /// loop-free plans.
    pub fn pattern_cost(&self, tau: &TransportCost) -> ExtReal {
        let field = self.density_field();
        // Every covered piece has multiplicity at least the weight of one
        // path, so the marginal rate is finite.
        ExtReal::finite(sum_exact(field.segments.iter().map(|s| {
            tau.marginal_cost(s.multiplicity).unwrap_finite() * s.paid * s.length()
        })))
    }

    /// The consolidated flux induced by the plan: each traversal contributes
    /// its weight along its direction; exact cancellations drop out.
    pub fn flux(&self) -> ConsolidatedFlux {
        let field = self.density_field();
        ConsolidatedFlux {
            dim: self.dim,
            segments: field
                .segments
                .into_iter()
                .filter(|s| s.scalar != 0.0)
                .map(|s| FluxSegment {
                    a: s.a,
                    b: s.b,
                    direction: s.direction,
                    scalar: s.scalar,
                })
                .collect(),
            diffuse_mass: 0.0,
        }
    }

    /// Whether every path is injective: no revisited point (up to the snap
    /// tolerance), no self-crossing, no backtracking.
    pub fn is_loop_free(&self) -> bool {
        self.paths.iter().all(|p| path_is_injective(self.dim, p))
    }
}

fn path_is_injective(dim: usize, path: &PlanPath) -> bool {
    let pts = &path.points;
    if pts.len() <= 2 {
        return true;
    }
    let segs: Vec<(&Point, &Point)> = pts.windows(2).map(|w| (&w[0], &w[1])).collect();
    for i in 0..segs.len() {
        for j in (i + 1)..segs.len() {
            match segment_relation(dim, segs[i].0, segs[i].1, segs[j].0, segs[j].1) {
                SegRelation::Disjoint => {}
                SegRelation::Overlap => return false,
                SegRelation::Touch { t, s } => {
                    let adjacent = j == i + 1;
                    let at_shared_vertex =
                        t == BigRational::from(BigInt::from(1)) && s == BigRational::zero();
                    if !(adjacent && at_shared_vertex) {
                        return false;
                    }
                }
            }
        }
    }
    // Repeated vertices that no segment pair sees (e.g. closing exactly onto
    // a former vertex) are still revisits.
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if !(j == i + 1) && pts[i].dist(&pts[j]) <= SNAP_TOL {
                return false;
            }
        }
    }
    true
}

/// Decomposes an acyclic conservation-valid graph into weighted maximal
/// source-to-sink paths whose weights add up to the edge weights.
///
/// Extraction is deterministic: paths start at source atoms in canonical
/// order and follow the outgoing edge of largest remaining weight (index
/// order on ties); the path bottleneck is subtracted and the walk repeats.
/// At most `|E| + |atoms|` paths are produced, and the plan's endpoint
/// measures reproduce the graph's source and sink.
pub fn decompose_paths(graph: &TransportGraph) -> Result<IrrigationPlan, PatternError> {
    if !graph.is_acyclic() {
        return Err(PatternError::Graph(GraphError::CyclicGraph));
    }
    let violations = graph.check_conservation();
    if !violations.is_empty() {
        let worst = violations
            .iter()
            .map(|v| v.residual.abs())
            .fold(0.0, f64::max);
        return Err(PatternError::Graph(GraphError::ConservationViolation(
            worst,
        )));
    }

    let total = graph.source().total_mass();
    let tiny = 1e-12 * total.max(1.0);
    let mut edge_rem: Vec<f64> = graph.edges().iter().map(|e| e.weight).collect();
    let mut src_rem: Vec<f64> = graph.vertex_source_mass().to_vec();
    let mut snk_rem: Vec<f64> = graph.vertex_sink_mass().to_vec();
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); graph.vertices().len()];
    for (idx, e) in graph.edges().iter().enumerate() {
        out_edges[e.tail].push(idx);
    }

    let mut paths: Vec<(Vec<Point>, f64)> = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for start in 0..graph.vertices().len() {
        while src_rem[start] > tiny {
            let mut walk_vertices = vec![start];
            let mut walk_edges: Vec<usize> = Vec::new();
            let mut at = start;
            loop {
                let next = out_edges[at]
                    .iter()
                    .filter(|&&ei| edge_rem[ei] > tiny)
                    .max_by(|&&a, &&b| {
                        edge_rem[a]
                            .partial_cmp(&edge_rem[b])
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .copied();
                match next {
                    Some(ei) => {
                        walk_edges.push(ei);
                        at = graph.edges()[ei].head;
                        walk_vertices.push(at);
                    }
                    None => break,
                }
            }
            let mut bottleneck = src_rem[start].min(snk_rem[at]);
            for &ei in &walk_edges {
                bottleneck = bottleneck.min(edge_rem[ei]);
            }
            if bottleneck <= tiny {
                // Conservation held at the start, so residual dust only.
                src_rem[start] = 0.0;
                break;
            }
            src_rem[start] -= bottleneck;
            snk_rem[at] -= bottleneck;
            for &ei in &walk_edges {
                edge_rem[ei] -= bottleneck;
            }
            paths.push((
                walk_vertices
                    .iter()
                    .map(|&v| graph.vertices()[v].clone())
                    .collect(),
                bottleneck,
            ));
        }
    }
    debug_assert!(
        edge_rem.iter().all(|&r| r.abs() <= tiny * 16.0),
        "flow decomposition left residual flow"
    );
    IrrigationPlan::new(graph.dim(), paths)
}

/// `Σ τ(|θ|)·length + τ'(0)·(diffuse)` of a density field, identical to the
/// Gilbert energy of the induced flux.
pub fn field_energy(field: &FluxDensityField, tau: &TransportCost) -> ExtReal {
    ExtReal::finite(sum_exact(
        field
            .segments
            .iter()
            .filter(|s| s.scalar != 0.0)
            .map(|s| tau.eval(s.theta_norm()) * s.length()),
    ))
}
