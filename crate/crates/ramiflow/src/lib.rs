//! Branched-transport networks between atomic measures.
//!
//! `ramiflow` builds, validates, transforms and optimizes discrete transport
//! networks that move a finite atomic measure `μ+` onto another one `μ−`,
//! where shipping an amount of mass `w` along a unit length costs `τ(w)` for
//! a nondecreasing subadditive cost `τ`. Subadditivity makes bulk transport
//! cheaper than parallel transport, so good networks branch.
//!
//! The crate covers both classical sides of the theory at the discrete level:
//!
//! * the *flux* view — weighted directed geometric graphs with Kirchhoff mass
//!   conservation ([`graph::TransportGraph`]), their costs, cycle and loop
//!   reductions, time splitting and flux consolidation;
//! * the *particle* view — finitely many weighted polygonal particle paths
//!   ([`patterns::IrrigationPlan`]), their multiplicity-based cost and the
//!   map back to a consolidated flux.
//!
//! On top of those sit dyadic hierarchical constructions ([`hierarchy`]),
//! certified two-sided estimates of the induced transport distance
//! ([`distance`]), and a topology/geometry optimizer with a brute-force
//! oracle for small instances ([`optimizer`]).
//!
//! A narrative guide with runnable examples lives in `book/`; its code
//! snippets are compiled and run as doctests (see [`book`]).

pub mod costs;
pub mod distance;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod measures;
pub mod optimizer;
pub mod patterns;
pub mod render;
pub mod samples;

pub mod book;

mod extreal;
mod numeric;

pub use costs::{AdmissibilityReport, CostError, TransportCost};
pub use distance::{dtau_bounds, metric_probe, DistanceBounds, DistanceBudget};
pub use extreal::ExtReal;
pub use graph::{ConsolidatedFlux, CostBreakdown, GraphError, TransportGraph};
pub use measures::{DiscreteMeasure, MeasureError, Point, SignedDiscreteMeasure};
pub use optimizer::{brute_force_oracle, optimize, OptimizerConfig, OracleResult};
pub use patterns::IrrigationPlan;
