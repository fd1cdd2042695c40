//! Certified two-sided estimates of the transport distance `d_τ`.
//!
//! The true distance is an infimum over relaxed approximating sequences and
//! is not finitely computable, so everything here is an interval: a lower
//! bound `λ^τ(m)·W₁(μ+, μ−)` from the maximal-flux and average-cost
//! estimates, and an upper bound realized by an explicit witness graph whose
//! cost can be re-verified. The bounds never claim to coincide with `d_τ`,
//! even when the witness looks optimal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::TransportCost;
use crate::graph::{Edge, GraphError, TransportGraph};
use crate::hierarchy;
use crate::measures::{wasserstein1, DiscreteMeasure, MeasureError, Point};
use crate::numeric::{sum_exact, SNAP_TOL};
use crate::optimizer::{optimize, OptimError, OptimizerConfig};

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Evidence behind the lower bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerCertificate {
    /// `λ^τ` evaluated at the total mass.
    pub lambda: f64,
    /// Exact Wasserstein-1 distance of the marginals.
    pub w1: f64,
}

/// A certified interval for `d_τ(μ+, μ−)` with the witness achieving the
/// upper end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceBounds {
    pub lower: f64,
    pub lower_certificate: LowerCertificate,
    pub upper: f64,
    pub witness: TransportGraph,
    pub gap: f64,
}

/// Which witnesses the upper bound may spend time on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceBudget {
    /// Dyadic witnesses are tried for levels `1..=nadic_levels`.
    pub nadic_levels: u32,
    pub use_optimizer: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for DistanceBudget {
    fn default() -> Self {
        DistanceBudget {
            nadic_levels: 3,
            use_optimizer: false,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Star transport through an explicit hub vertex.
fn star_witness(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
    hub: Point,
) -> Result<TransportGraph, GraphError> {
    let dim = plus.dim();
    let mut vertices = vec![hub];
    let mut edges = Vec::new();
    for (measure, into_hub) in [(plus, true), (minus, false)] {
        for atom in measure.atoms() {
            if atom.pos.dist(&vertices[0]) <= SNAP_TOL {
                continue;
            }
            let v = vertices.len();
            vertices.push(atom.pos.clone());
            let (tail, head) = if into_hub { (v, 0) } else { (0, v) };
            edges.push(Edge {
                tail,
                head,
                weight: atom.mass,
            });
        }
    }
    TransportGraph::new(dim, vertices, edges, plus.clone(), minus.clone())
}

fn barycentre(m: &DiscreteMeasure) -> Point {
    let total = m.total_mass();
    Point(
        (0..m.dim())
            .map(|k| sum_exact(m.atoms().iter().map(|a| a.mass * a.pos.0[k])) / total)
            .collect(),
    )
}

/// Two-sided bounds on `d_τ(μ+, μ−)` for equal-mass atomic measures.
///
/// The lower bound is `λ^τ(total)·W₁`; the upper bound is the cheapest of
/// the star witnesses, the dyadic witnesses within the level budget, and
/// (when enabled) the optimizer output.
pub fn dtau_bounds(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
    tau: &TransportCost,
    budget: &DistanceBudget,
) -> Result<DistanceBounds, DistanceError> {
    let mp = plus.total_mass();
    let mm = minus.total_mass();
    if (mp - mm).abs() > 1e-9 * mp.max(mm).max(1e-300) {
        return Err(DistanceError::Measure(MeasureError::MassImbalance {
            plus: mp,
            minus: mm,
        }));
    }
    let w1 = wasserstein1(plus, minus)?;
    let (lambda, lower) = if mp > 0.0 {
        let lambda = tau.lambda_tau(mp);
        (lambda, lambda * w1)
    } else {
        (0.0, 0.0)
    };

    let mut witnesses: Vec<TransportGraph> = Vec::new();
    if plus.canonical_eq(minus) {
        witnesses.push(TransportGraph::new(
            plus.dim(),
            vec![],
            vec![],
            plus.clone(),
            minus.clone(),
        )?);
    }
    if mp > 0.0 {
        witnesses.push(star_witness(plus, minus, barycentre(plus))?);
        witnesses.push(star_witness(plus, minus, barycentre(minus))?);
        if let Ok(b) = hierarchy::origin_star(plus, minus, tau) {
            witnesses.push(b.graph);
        }
        if plus.support_radius() <= 2.0 && minus.support_radius() <= 2.0 {
            for k in 1..=budget.nadic_levels {
                if let Ok(g) = hierarchy::nadic_witness(plus, minus, k) {
                    witnesses.push(g);
                }
            }
        }
        if budget.use_optimizer {
            witnesses.push(optimize(plus, minus, tau, &budget.optimizer)?);
        }
    }

    let (witness, upper) = witnesses
        .into_iter()
        .map(|g| {
            let c = g.graph_cost(tau).total;
            (g, c)
        })
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .expect("at least one witness is always available");
    debug_assert!(witness.check_conservation().is_empty());

    Ok(DistanceBounds {
        lower,
        lower_certificate: LowerCertificate { lambda, w1 },
        upper,
        gap: upper - lower,
        witness,
    })
}

/// One refinement step of the metrization probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementStep {
    pub level: u32,
    pub upper: f64,
    pub series_bound: f64,
}

/// Empirical checks of the metric behaviour of the bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricProbeReport {
    pub samples: usize,
    /// Largest relative asymmetry of the bounds under argument swap.
    pub max_symmetry_gap: f64,
    /// Triples where the lower bound beat the chained upper bounds; bound
    /// validity makes this impossible, so anything nonzero is a failure.
    pub triangle_lower_violations: usize,
    /// Triples where the upper bounds miss the triangle inequality by more
    /// than the slack (upper bounds are not tight, so a few are tolerated).
    pub triangle_slack_violations: usize,
    pub refinement: Vec<RefinementStep>,
    pub refinement_decreasing: bool,
    pub pass: bool,
}

/// Relative slack allowed in the upper-bound triangle probe.
const TRIANGLE_SLACK: f64 = 0.05;

/// Runs symmetry, triangle and refinement probes over sample triples of
/// equal-mass measures. The optimizer is disabled inside the probe so the
/// witness family is symmetric under argument swap.
pub fn metric_probe(
    samples: &[(DiscreteMeasure, DiscreteMeasure, DiscreteMeasure)],
    tau: &TransportCost,
    budget: &DistanceBudget,
) -> Result<MetricProbeReport, DistanceError> {
    let budget = DistanceBudget {
        use_optimizer: false,
        ..budget.clone()
    };
    let mut max_symmetry_gap = 0.0_f64;
    let mut triangle_lower_violations = 0;
    let mut triangle_slack_violations = 0;
    for (a, b, c) in samples {
        let ab = dtau_bounds(a, b, tau, &budget)?;
        let ba = dtau_bounds(b, a, tau, &budget)?;
        let scale = ab.upper.max(1e-12);
        max_symmetry_gap = max_symmetry_gap
            .max((ab.upper - ba.upper).abs() / scale)
            .max((ab.lower - ba.lower).abs() / scale);
        let ac = dtau_bounds(a, c, tau, &budget)?;
        let cb = dtau_bounds(c, b, tau, &budget)?;
        let chained = ac.upper + cb.upper;
        if ab.lower > chained + 1e-9 * chained.max(1.0) {
            triangle_lower_violations += 1;
        }
        if ab.upper > chained * (1.0 + TRIANGLE_SLACK) + 1e-12 {
            triangle_slack_violations += 1;
        }
    }

    // Refinement: the cost of bridging P^k to a fixed deeper level must
    // decay with k like the admissibility series tail.
    let mut refinement = Vec::new();
    let mut refinement_decreasing = true;
    if let Some((mu, _, _)) = samples.first() {
        let deepest = budget.nadic_levels.max(3) + 2;
        let mut prev = f64::INFINITY;
        for k in 1..deepest {
            let bridge = hierarchy::stacked_levels(mu, k, deepest, tau)?;
            if !bridge.bound_holds() {
                refinement_decreasing = false;
            }
            if bridge.cost > prev + 1e-9 * prev.max(1.0) {
                refinement_decreasing = false;
            }
            prev = bridge.cost;
            refinement.push(RefinementStep {
                level: k,
                upper: bridge.cost,
                series_bound: bridge.bound,
            });
        }
    }

    let pass = triangle_lower_violations == 0
        && max_symmetry_gap <= 1e-9
        && refinement_decreasing;
    Ok(MetricProbeReport {
        samples: samples.len(),
        max_symmetry_gap,
        triangle_lower_violations,
        triangle_slack_violations,
        refinement,
        refinement_decreasing,
        pass,
    })
}
