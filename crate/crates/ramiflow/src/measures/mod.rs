//! Atomic measures: validation, normalization, dyadic grid projection and
//! the exact Wasserstein-1 distance.

mod wasserstein;

pub use wasserstein::wasserstein1;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::costs::{CostError, TransportCost};
use crate::numeric::{sum_exact, ExactSum, SNAP_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("mass imbalance: {plus} vs {minus}")]
    MassImbalance { plus: f64, minus: f64 },
    #[error("support outside the domain: {0}")]
    OutOfDomain(String),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// A point in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.0.partial_cmp(&other.0).expect("finite coordinates")
    }
}

/// Shorthand for a 2D point; handy in tests and examples.
pub fn p2(x: f64, y: f64) -> Point {
    Point(vec![x, y])
}

/// A weighted atom of a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pos: Point,
    pub mass: f64,
}

/// A finite nonnegative atomic measure `Σ m_i δ_{x_i}`.
///
/// Construction canonicalizes: coincident atoms (within the snap tolerance)
/// are merged, zero-mass atoms dropped, and atoms sorted lexicographically
/// by position. Values are immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    total: f64,
}

impl DiscreteMeasure {
    /// Validates and canonicalizes a raw atom list.
    pub fn new(dim: usize, atoms: Vec<(Point, f64)>) -> Result<Self, MeasureError> {
        if dim == 0 {
            return Err(MeasureError::InvalidMeasure(
                "dimension must be at least 1".into(),
            ));
        }
        for (pos, mass) in &atoms {
            if pos.dim() != dim {
                return Err(MeasureError::InvalidMeasure(format!(
                    "atom dimension {} does not match measure dimension {dim}",
                    pos.dim()
                )));
            }
            if !pos.is_finite() {
                return Err(MeasureError::InvalidMeasure(format!(
                    "non-finite coordinate in atom at {:?}",
                    pos.0
                )));
            }
            if !mass.is_finite() {
                return Err(MeasureError::InvalidMeasure(format!(
                    "non-finite mass {mass}"
                )));
            }
            if *mass < 0.0 {
                return Err(MeasureError::InvalidMeasure(format!(
                    "negative mass {mass}"
                )));
            }
        }
        let merged = merge_coincident(dim, atoms);
        let mut atoms: Vec<Atom> = merged
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(pos, mass)| Atom { pos, mass })
            .collect();
        atoms.sort_by(|a, b| a.pos.lex_cmp(&b.pos));
        let total = sum_exact(atoms.iter().map(|a| a.mass));
        Ok(DiscreteMeasure { dim, atoms, total })
    }

    /// The Dirac measure `m·δ_x`.
    pub fn dirac(pos: Point, mass: f64) -> Result<Self, MeasureError> {
        let dim = pos.dim();
        Self::new(dim, vec![(pos, mass)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Largest coordinate magnitude over the support (zero for the empty
    /// measure).
    pub fn support_radius(&self) -> f64 {
        self.atoms
            .iter()
            .flat_map(|a| a.pos.0.iter())
            .fold(0.0, |acc: f64, c| acc.max(c.abs()))
    }

    /// Mass sitting exactly at `pos` (after canonical snapping).
    pub fn mass_at(&self, pos: &Point) -> f64 {
        self.atoms
            .iter()
            .find(|a| a.pos.dist(pos) <= SNAP_TOL)
            .map(|a| a.mass)
            .unwrap_or(0.0)
    }

    /// Exact equality of canonical forms.
    pub fn canonical_eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.atoms == other.atoms
    }

    /// Projection onto the level-`k` dyadic leaf grid of `(−2,2]^n`:
    /// each atom's mass moves to the centre of its halfopen grid cell
    /// `v + (−2^{1−k}, 2^{1−k}]^n`.
    pub fn project_klevel(&self, k: u32) -> Result<Self, MeasureError> {
        assert!(k >= 1, "projection level must be at least 1");
        let cell = (2.0f64).powi(2 - k as i32); // full cell width 2^{2−k}
        let half = cell / 2.0;
        let mut cells: HashMap<Vec<u64>, (Point, ExactSum)> = HashMap::new();
        for atom in &self.atoms {
            let mut centre = Vec::with_capacity(self.dim);
            for &x in &atom.pos.0 {
                if !(-2.0 < x && x <= 2.0) {
                    return Err(MeasureError::OutOfDomain(format!(
                        "coordinate {x} outside (-2, 2]"
                    )));
                }
                // Halfopen convention: the upper boundary belongs to the cell.
                let j = (x / cell).ceil();
                centre.push(j * cell - half);
            }
            let key: Vec<u64> = centre.iter().map(|c| c.to_bits()).collect();
            cells
                .entry(key)
                .or_insert_with(|| (Point(centre.clone()), ExactSum::new()))
                .1
                .add(atom.mass);
        }
        let atoms = cells
            .into_values()
            .map(|(pos, acc)| (pos, acc.value()))
            .collect();
        Self::new(self.dim, atoms)
    }
}

fn merge_coincident(dim: usize, atoms: Vec<(Point, f64)>) -> Vec<(Point, f64)> {
    let mut kept: Vec<(Point, ExactSum)> = Vec::new();
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let quant = |p: &Point| -> Vec<i64> {
        p.0.iter().map(|c| (c / SNAP_TOL).round() as i64).collect()
    };
    for (pos, mass) in atoms {
        let key = quant(&pos);
        let mut found = None;
        // Neighbouring buckets cover matches that straddle a quantization
        // boundary.
        'search: for delta in neighbour_offsets(dim) {
            let nk: Vec<i64> = key.iter().zip(&delta).map(|(a, b)| a + b).collect();
            if let Some(list) = buckets.get(&nk) {
                for &idx in list {
                    if kept[idx].0.dist(&pos) <= SNAP_TOL {
                        found = Some(idx);
                        break 'search;
                    }
                }
            }
        }
        match found {
            Some(idx) => kept[idx].1.add(mass),
            None => {
                let idx = kept.len();
                let mut acc = ExactSum::new();
                acc.add(mass);
                kept.push((pos, acc));
                buckets.entry(key).or_default().push(idx);
            }
        }
    }
    kept.into_iter().map(|(p, acc)| (p, acc.value())).collect()
}

fn neighbour_offsets(dim: usize) -> Vec<Vec<i64>> {
    // 3^n offsets; dimensions stay small in practice.
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

/// A finite signed atomic measure, used for divergences `μ+ − μ−`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedDiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

impl SignedDiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<(Point, f64)>) -> Self {
        let merged = merge_coincident(dim, atoms);
        let mut atoms: Vec<Atom> = merged
            .into_iter()
            .filter(|(_, m)| *m != 0.0)
            .map(|(pos, mass)| Atom { pos, mass })
            .collect();
        atoms.sort_by(|a, b| a.pos.lex_cmp(&b.pos));
        SignedDiscreteMeasure { dim, atoms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `μ+ − μ−` as a signed measure.
    pub fn difference(plus: &DiscreteMeasure, minus: &DiscreteMeasure) -> Self {
        let mut atoms: Vec<(Point, f64)> = plus
            .atoms()
            .iter()
            .map(|a| (a.pos.clone(), a.mass))
            .collect();
        atoms.extend(minus.atoms().iter().map(|a| (a.pos.clone(), -a.mass)));
        Self::new(plus.dim(), atoms)
    }

    pub fn canonical_eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.atoms == other.atoms
    }

    /// Largest absolute mass discrepancy against another signed measure.
    pub fn max_discrepancy(&self, other: &Self) -> f64 {
        let mut atoms: Vec<(Point, f64)> = self
            .atoms
            .iter()
            .map(|a| (a.pos.clone(), a.mass))
            .collect();
        atoms.extend(other.atoms.iter().map(|a| (a.pos.clone(), -a.mass)));
        Self::new(self.dim, atoms)
            .atoms
            .iter()
            .map(|a| a.mass.abs())
            .fold(0.0, f64::max)
    }
}

/// Result of normalizing a transport problem to unit mass and the unit box.
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub plus: DiscreteMeasure,
    pub minus: DiscreteMeasure,
    /// Transport cost in normalized variables.
    pub cost: TransportCost,
    /// Total mass of the original problem.
    pub mass: f64,
    /// Spatial scale of the original problem.
    pub spatial: f64,
}

impl Rescaled {
    /// Maps a cost value computed in normalized coordinates back to the
    /// original problem.
    pub fn restore_cost(&self, normalized_cost: f64) -> f64 {
        self.mass * self.spatial * normalized_cost
    }
}

/// Normalizes `(μ+, μ−, τ)` so the measures become probability measures
/// supported in `[−1,1]^n`. Any graph cost in the normalized problem,
/// multiplied by `mass · spatial`, equals the original cost.
pub fn rescale(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
    tau: &TransportCost,
) -> Result<Rescaled, MeasureError> {
    let mp = plus.total_mass();
    let mm = minus.total_mass();
    if mp <= 0.0 {
        return Err(MeasureError::InvalidMeasure(
            "cannot rescale a zero measure".into(),
        ));
    }
    if (mp - mm).abs() > 1e-9 * mp.max(mm) {
        return Err(MeasureError::MassImbalance { plus: mp, minus: mm });
    }
    let spatial = plus.support_radius().max(minus.support_radius()).max(1.0);
    let shrink = |m: &DiscreteMeasure| {
        DiscreteMeasure::new(
            m.dim(),
            m.atoms()
                .iter()
                .map(|a| {
                    (
                        Point(a.pos.0.iter().map(|c| c / spatial).collect()),
                        a.mass / mp,
                    )
                })
                .collect(),
        )
    };
    Ok(Rescaled {
        plus: shrink(plus)?,
        minus: shrink(minus)?,
        cost: tau.mass_rescaled(mp)?,
        mass: mp,
        spatial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(atoms: &[((f64, f64), f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(
            2,
            atoms
                .iter()
                .map(|((x, y), m)| (p2(*x, *y), *m))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn merges_coincident_atoms() {
        let m = m2(&[((0.0, 0.0), 0.5), ((0.0, 0.0), 0.5)]);
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn keeps_identity() {
        let m = m2(&[((1.0, 0.0), 1.0)]);
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(m.atoms()[0].mass, 1.0);
    }

    #[test]
    fn rejects_negative_mass() {
        let r = DiscreteMeasure::new(2, vec![(p2(0.0, 0.0), -0.1)]);
        assert!(matches!(r, Err(MeasureError::InvalidMeasure(_))));
    }

    #[test]
    fn rejects_nonfinite_coordinates() {
        let r = DiscreteMeasure::new(2, vec![(p2(f64::NAN, 0.0), 0.5)]);
        assert!(matches!(r, Err(MeasureError::InvalidMeasure(_))));
    }

    #[test]
    fn validation_is_idempotent() {
        let m = m2(&[((0.25, -0.5), 0.125), ((0.25, -0.5 + 1e-12), 0.25), ((1.0, 1.0), 0.5)]);
        let again = DiscreteMeasure::new(
            m.dim(),
            m.atoms().iter().map(|a| (a.pos.clone(), a.mass)).collect(),
        )
        .unwrap();
        assert!(m.canonical_eq(&again));
    }

    #[test]
    fn projection_quadrants() {
        // A uniform dyadic discretization of the unit square: level 1 puts a
        // quarter of the mass at each of (±1, ±1).
        let mut atoms = Vec::new();
        let q = 1.0 / 8.0;
        for i in 0..8 {
            for j in 0..8 {
                let x = -1.0 + q + 2.0 * q * i as f64;
                let y = -1.0 + q + 2.0 * q * j as f64;
                atoms.push((p2(x, y), 1.0 / 64.0));
            }
        }
        let m = DiscreteMeasure::new(2, atoms).unwrap();
        let p = m.project_klevel(1).unwrap();
        assert_eq!(p.atoms().len(), 4);
        for a in p.atoms() {
            assert_eq!(a.mass, 0.25);
            assert!(a.pos.0.iter().all(|c| c.abs() == 1.0));
        }
        assert_eq!(p.total_mass(), 1.0);
    }

    #[test]
    fn projection_cell_membership() {
        let m = m2(&[((0.5, 0.5), 1.0)]);
        let p = m.project_klevel(1).unwrap();
        assert_eq!(p.atoms().len(), 1);
        assert_eq!(p.atoms()[0].pos, p2(1.0, 1.0));
        // Halfopen cells: zero sits in the upper-closed lower cell, while
        // the domain boundary 2.0 belongs to the top cell.
        let b = m2(&[((0.0, 2.0), 1.0)]);
        let pb = b.project_klevel(1).unwrap();
        assert_eq!(pb.atoms()[0].pos, p2(-1.0, 1.0));
    }

    #[test]
    fn projection_mass_is_exact() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let atoms: Vec<(Point, f64)> = (0..40)
                .map(|_| {
                    let x = rng.gen_range(-512..=512) as f64 / 256.0;
                    let y = rng.gen_range(-511..=512) as f64 / 256.0;
                    let mass = rng.gen_range(1..=1024) as f64 / 1024.0;
                    (p2(x, y), mass)
                })
                .collect();
            let m = DiscreteMeasure::new(2, atoms).unwrap();
            for k in 1..=5 {
                let p = m.project_klevel(k).unwrap();
                assert_eq!(p.total_mass(), m.total_mass());
            }
        }
    }

    #[test]
    fn projection_out_of_domain() {
        let m = m2(&[((3.0, 0.0), 1.0)]);
        assert!(matches!(
            m.project_klevel(1),
            Err(MeasureError::OutOfDomain(_))
        ));
    }

    #[test]
    fn rescale_dirac() {
        let m = m2(&[((0.0, 0.0), 2.0)]);
        let tau = TransportCost::branched(0.5).unwrap();
        let r = rescale(&m, &m, &tau).unwrap();
        assert_eq!(r.mass, 2.0);
        assert_eq!(r.spatial, 1.0);
        assert_eq!(r.plus.total_mass(), 1.0);
        // Normalized cost evaluates tau(2w)/2.
        assert!((r.cost.eval(0.5) - tau.eval(1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rescale_identity_inside_unit_box() {
        let m = m2(&[((0.5, -0.25), 0.5), ((-1.0, 1.0), 0.5)]);
        let tau = TransportCost::wasserstein(1.0).unwrap();
        let r = rescale(&m, &m, &tau).unwrap();
        assert_eq!(r.mass, 1.0);
        assert_eq!(r.spatial, 1.0);
        assert!(r.plus.canonical_eq(&m));
        for w in [0.1, 0.7] {
            assert_eq!(r.cost.eval(w), tau.eval(w));
        }
    }

    #[test]
    fn rescale_mass_mismatch() {
        let a = m2(&[((0.0, 0.0), 1.0)]);
        let b = m2(&[((0.0, 0.0), 1.1)]);
        let tau = TransportCost::wasserstein(1.0).unwrap();
        assert!(matches!(
            rescale(&a, &b, &tau),
            Err(MeasureError::MassImbalance { .. })
        ));
    }

    #[test]
    fn rescale_restores_graph_costs() {
        // A two-atom problem scaled by mass 3 and spatial factor 4:
        // a single straight edge has cost tau(3)·8 originally and the
        // normalized problem must reproduce it through restore_cost.
        let plus = m2(&[((-4.0, 0.0), 3.0)]);
        let minus = m2(&[((4.0, 0.0), 3.0)]);
        let tau = TransportCost::branched(0.75).unwrap();
        let r = rescale(&plus, &minus, &tau).unwrap();
        assert_eq!(r.spatial, 4.0);
        let original = tau.eval(3.0) * 8.0;
        let normalized = r.cost.eval(1.0) * 2.0;
        assert!((r.restore_cost(normalized) - original).abs() < 1e-12 * original);
    }

    #[test]
    fn signed_difference() {
        let a = m2(&[((0.0, 0.0), 1.0), ((1.0, 0.0), 0.5)]);
        let b = m2(&[((1.0, 0.0), 0.5), ((2.0, 0.0), 1.0)]);
        let d = SignedDiscreteMeasure::difference(&a, &b);
        assert_eq!(d.atoms().len(), 2);
        assert_eq!(d.atoms()[0].mass, 1.0);
        assert_eq!(d.atoms()[1].mass, -1.0);
    }
}
