//! Flux consolidation and the Gilbert energy of a consolidated flux.

use serde::{Deserialize, Serialize};

use super::{arrange_segments, ArrangeInput, TransportGraph};
use crate::costs::TransportCost;
use crate::extreal::ExtReal;
use crate::measures::Point;
use crate::numeric::sum_exact;

/// A straight segment of a consolidated flux with its net vector weight.
///
/// The weight is stored as a signed scalar along the unit `direction` of the
/// supporting line, so `|θ|` is exact whenever the contributing edge weights
/// cancel or add exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxSegment {
    pub a: Point,
    pub b: Point,
    pub direction: Vec<f64>,
    pub scalar: f64,
}

impl FluxSegment {
    pub fn length(&self) -> f64 {
        self.a.dist(&self.b)
    }

    /// Net vector weight `θ`.
    pub fn theta(&self) -> Vec<f64> {
        self.direction.iter().map(|d| d * self.scalar).collect()
    }

    /// `|θ|`.
    pub fn theta_norm(&self) -> f64 {
        self.scalar.abs()
    }
}

/// A polyhedral flux written as `θ·H¹⌊S`: interior-disjoint segments with
/// vector weights, plus a diffuse mass that is identically zero for fluxes
/// coming from graphs or finite plans (the field exists because the Gilbert
/// energy formula carries a `τ'(0)·|F⊥|` term).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsolidatedFlux {
    pub dim: usize,
    pub segments: Vec<FluxSegment>,
    pub diffuse_mass: f64,
}

impl ConsolidatedFlux {
    /// Total length of the support.
    pub fn support_length(&self) -> f64 {
        sum_exact(self.segments.iter().map(|s| s.length()))
    }
}

impl TransportGraph {
    /// Writes the graph flux as a sum of interior-disjoint segments with net
    /// vector weights: edges are split at pairwise intersections and overlap
    /// endpoints, collinear overlapping contributions are summed as vectors,
    /// and segments with exactly cancelling flux are dropped.
    pub fn consolidate_flux(&self) -> ConsolidatedFlux {
        let inputs: Vec<ArrangeInput> = self
            .edges
            .iter()
            .map(|e| ArrangeInput {
                a: self.vertices[e.tail].clone(),
                b: self.vertices[e.head].clone(),
            })
            .collect();
        let pieces = arrange_segments(self.dim, &inputs);
        let mut segments = Vec::new();
        for piece in pieces {
            let net = sum_exact(
                piece
                    .covers
                    .iter()
                    .map(|&(idx, sign)| sign as f64 * self.edges[idx].weight),
            );
            if net == 0.0 {
                continue;
            }
            segments.push(FluxSegment {
                a: piece.a,
                b: piece.b,
                direction: piece.unit,
                scalar: net,
            });
        }
        ConsolidatedFlux {
            dim: self.dim,
            segments,
            diffuse_mass: 0.0,
        }
    }
}

/// `Σ τ(|θ|)·length + τ'(0)·(diffuse mass)` of a consolidated flux.
///
/// By subadditivity this never exceeds the graph cost of any graph that
/// consolidates to the given flux; it equals the graph cost when the edge
/// relative interiors were already pairwise disjoint.
pub fn gilbert_energy(flux: &ConsolidatedFlux, tau: &TransportCost) -> ExtReal {
    let line_part = sum_exact(
        flux.segments
            .iter()
            .map(|s| tau.eval(s.theta_norm()) * s.length()),
    );
    if flux.diffuse_mass == 0.0 {
        ExtReal::finite(line_part)
    } else {
        ExtReal::finite(line_part) + tau.marginal_cost(0.0) * flux.diffuse_mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::measures::{p2, DiscreteMeasure};

    fn measure2(atoms: &[((f64, f64), f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(
            2,
            atoms
                .iter()
                .map(|((x, y), m)| (p2(*x, *y), *m))
                .collect(),
        )
        .unwrap()
    }

    fn coincident_pair(w1: f64, flip_second: bool) -> TransportGraph {
        let edges = if flip_second {
            vec![
                Edge { tail: 0, head: 1, weight: w1 },
                Edge { tail: 1, head: 0, weight: w1 },
            ]
        } else {
            vec![
                Edge { tail: 0, head: 1, weight: w1 },
                Edge { tail: 0, head: 1, weight: w1 },
            ]
        };
        let (src, snk) = if flip_second {
            (measure2(&[]), measure2(&[]))
        } else {
            (
                measure2(&[((0.0, 0.0), 2.0 * w1)]),
                measure2(&[((1.0, 0.0), 2.0 * w1)]),
            )
        };
        TransportGraph::new(2, vec![p2(0.0, 0.0), p2(1.0, 0.0)], edges, src, snk).unwrap()
    }

    #[test]
    fn same_direction_pair_adds() {
        let g = coincident_pair(0.5, false);
        let f = g.consolidate_flux();
        assert_eq!(f.segments.len(), 1);
        assert_eq!(f.segments[0].theta_norm(), 1.0);
    }

    #[test]
    fn opposite_pair_cancels() {
        let g = coincident_pair(0.5, true);
        let f = g.consolidate_flux();
        assert!(f.segments.is_empty());
    }

    #[test]
    fn subadditivity_of_consolidation() {
        let g = coincident_pair(0.5, false);
        let tau = TransportCost::branched(0.5).unwrap();
        let energy = gilbert_energy(&g.consolidate_flux(), &tau).unwrap_finite();
        let cost = g.graph_cost(&tau).total;
        assert!((energy - tau.eval(1.0)).abs() < 1e-12);
        assert!(energy <= cost);
    }

    #[test]
    fn single_edge_energy_matches_cost() {
        let g = crate::graph::tests::single_edge(1.0);
        let tau = TransportCost::branched(0.75).unwrap();
        let energy = gilbert_energy(&g.consolidate_flux(), &tau).unwrap_finite();
        assert_eq!(energy, g.graph_cost(&tau).total);
    }

    #[test]
    fn cancelling_pair_has_zero_energy() {
        let g = coincident_pair(0.5, true);
        let tau = TransportCost::branched(0.75).unwrap();
        assert_eq!(
            gilbert_energy(&g.consolidate_flux(), &tau),
            ExtReal::finite(0.0)
        );
    }
}
