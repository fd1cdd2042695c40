//! Property-based checks with proptest.

use proptest::prelude::*;

use ramiflow::costs::TransportCost;
use ramiflow::measures::{wasserstein1, DiscreteMeasure, Point};

fn arb_cost() -> impl Strategy<Value = TransportCost> {
    prop_oneof![
        (0.1f64..10.0).prop_map(|a| TransportCost::wasserstein(a).unwrap()),
        (0.05f64..0.95).prop_map(|alpha| TransportCost::branched(alpha).unwrap()),
        ((1.01f64..5.0), (0.01f64..1.0))
            .prop_map(|(a, eps)| TransportCost::urban(a, eps).unwrap()),
        Just(TransportCost::discrete()),
        (0.05f64..0.9).prop_map(|delta| TransportCost::step(delta).unwrap()),
    ]
}

/// Atoms on a dyadic grid: coordinates in [−1,1] with quantum 2^-8, masses
/// in (0,1] with quantum 2^-10.
fn arb_measure(max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec(
        ((-256i32..=256), (-256i32..=256), (1u32..=1024)),
        1..=max_atoms,
    )
    .prop_map(|raw| {
        let atoms = raw
            .into_iter()
            .map(|(x, y, m)| {
                (
                    Point(vec![x as f64 / 256.0, y as f64 / 256.0]),
                    m as f64 / 1024.0,
                )
            })
            .collect();
        DiscreteMeasure::new(2, atoms).unwrap()
    })
}

proptest! {
    #[test]
    fn tau_is_subadditive_and_monotone(cost in arb_cost(), u in 0.0f64..2.0, v in 0.0f64..2.0) {
        let lhs = cost.eval(u + v);
        let rhs = cost.eval(u) + cost.eval(v);
        prop_assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        prop_assert!(cost.eval(lo) <= cost.eval(hi) + 1e-12);
    }

    #[test]
    fn lambda_bound_holds(cost in arb_cost(), m in 0.01f64..2.0, frac in 0.0f64..1.0) {
        let lam = cost.lambda_tau(m);
        let w = m * frac;
        prop_assert!(cost.eval(w) + 1e-12 >= lam * w);
    }

    #[test]
    fn measure_canonicalization_is_idempotent(m in arb_measure(8)) {
        let again = DiscreteMeasure::new(
            m.dim(),
            m.atoms().iter().map(|a| (a.pos.clone(), a.mass)).collect(),
        ).unwrap();
        prop_assert!(m.canonical_eq(&again));
    }

    #[test]
    fn projection_preserves_mass_and_contracts(m in arb_measure(10), k in 1u32..5) {
        let p = m.project_klevel(k).unwrap();
        prop_assert_eq!(p.total_mass(), m.total_mass());
        let w = wasserstein1(&m, &p).unwrap();
        let bound = m.total_mass() * (2.0f64).powi(1 - k as i32) * 2.0f64.sqrt();
        prop_assert!(w <= bound + 1e-12);
    }

    #[test]
    fn w1_is_symmetric_and_nonnegative(a in arb_measure(5), b in arb_measure(5)) {
        // Equalize totals by scaling the second measure.
        let ratio = a.total_mass() / b.total_mass();
        let b = DiscreteMeasure::new(
            2,
            b.atoms().iter().map(|x| (x.pos.clone(), x.mass * ratio)).collect(),
        ).unwrap();
        let ab = wasserstein1(&a, &b).unwrap();
        let ba = wasserstein1(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
    }
}
