//! Cross-module invariants on seeded random instances.

use ramiflow::costs::TransportCost;
use ramiflow::graph::gilbert_energy;
use ramiflow::hierarchy;
use ramiflow::measures::{wasserstein1, DiscreteMeasure, Point};
use ramiflow::optimizer::{optimize, OptimizerConfig};
use ramiflow::patterns::decompose_paths;
use ramiflow::samples;

fn builtin_costs() -> Vec<TransportCost> {
    vec![
        TransportCost::wasserstein(2.0).unwrap(),
        TransportCost::branched(0.75).unwrap(),
        TransportCost::branched(0.5).unwrap(),
        TransportCost::urban(2.0, 0.1).unwrap(),
        TransportCost::discrete(),
        TransportCost::step(0.3).unwrap(),
    ]
}

#[test]
fn consolidation_never_beats_graph_cost() {
    for seed in 0..40u64 {
        let mut rng = samples::rng(seed);
        let g = samples::flow_graph(
            &mut rng,
            &samples::FlowGraphConfig {
                vertices: 9,
                paths: 5,
                cycles: (seed % 2) as usize,
                ..Default::default()
            },
        );
        let flux = g.consolidate_flux();
        for tau in &builtin_costs() {
            let cost = g.graph_cost(tau).total;
            let energy = gilbert_energy(&flux, tau).unwrap_finite();
            assert!(
                energy <= cost + 1e-9 * cost.max(1.0),
                "seed {seed} {tau:?}: energy {energy} above cost {cost}"
            );
        }
    }
}

#[test]
fn consolidation_is_exact_on_disjoint_interiors() {
    for seed in 0..20u64 {
        let mut rng = samples::rng(300 + seed);
        let g = samples::disjoint_interior_dag(&mut rng, false);
        let flux = g.consolidate_flux();
        let tau = TransportCost::branched(0.7).unwrap();
        let energy = gilbert_energy(&flux, &tau).unwrap_finite();
        let cost = g.graph_cost(&tau).total;
        assert!((energy - cost).abs() <= 1e-12 * cost.max(1.0));
    }
}

#[test]
fn opposed_dyadic_trees_consolidate_away() {
    // The same measure fed up and down the dyadic tree cancels exactly.
    for seed in 0..10u64 {
        let mut rng = samples::rng(40 + seed);
        let m = samples::probability_measure(&mut rng, 2, 6);
        let union = hierarchy::connect_nadic(&m, &m, 3).unwrap();
        assert!(union.consolidate_flux().segments.is_empty());
    }
}

#[test]
fn plan_theta_bounded_by_multiplicity() {
    for seed in 0..30u64 {
        let mut rng = samples::rng(600 + seed);
        let g = samples::flow_graph(&mut rng, &samples::FlowGraphConfig::default());
        let g = g.remove_cycles();
        let plan = decompose_paths(&g).unwrap();
        for segment in plan.density_field().segments {
            assert!(
                segment.theta_norm() <= segment.multiplicity + 1e-12,
                "seed {seed}: |theta| {} above multiplicity {}",
                segment.theta_norm(),
                segment.multiplicity
            );
        }
        // The plan pays at least the linearized transport cost.
        let tau = TransportCost::branched(0.75).unwrap();
        let lam = tau.lambda_tau(plan.total_weight());
        let weighted: f64 = plan
            .paths()
            .iter()
            .map(|p| p.weight * p.length())
            .sum();
        let cost = plan.pattern_cost(&tau).unwrap_finite();
        assert!(cost >= lam * weighted - 1e-9);
    }
}

#[test]
fn level_bounds_across_dimensions() {
    // Admissible costs stay below their series term on every level, for 50
    // random measures in each dimension.
    for dim in 1..=3usize {
        let costs = vec![
            TransportCost::wasserstein(1.5).unwrap(),
            TransportCost::branched(0.8).unwrap(),
            TransportCost::urban(2.0, 0.1).unwrap(),
        ];
        let sqrt_n = (dim as f64).sqrt();
        for seed in 0..50u64 {
            let mut rng = samples::rng(7000 + seed);
            let m = samples::probability_measure(&mut rng, dim, 6);
            let tree = hierarchy::nadic_graph(&m, 3).unwrap();
            assert!(tree.graph().check_conservation().is_empty());
            for tau in &costs {
                for k in 1..=3u32 {
                    let actual = tree.level_cost(k, tau);
                    let bound = 2.0
                        * sqrt_n
                        * (2.0f64).powi((dim as i32 - 1) * k as i32)
                        * tau.concave_majorant((2.0f64).powi(-(dim as i32) * k as i32));
                    assert!(
                        actual <= bound + 1e-9,
                        "dim {dim} seed {seed} level {k}: {actual} above {bound}"
                    );
                }
            }
        }
    }
}

#[test]
fn bridge_constructions_conserve() {
    let tau = TransportCost::wasserstein(1.0).unwrap();
    for seed in 0..15u64 {
        let mut rng = samples::rng(6000 + seed);
        let a = samples::probability_measure(&mut rng, 2, 5);
        let b = samples::probability_measure(&mut rng, 2, 5);
        for bridge in [
            hierarchy::stacked_levels(&a, 1, 3, &tau).unwrap(),
            hierarchy::grid_snap_star(&a, 3, &tau).unwrap(),
            hierarchy::origin_star(&a, &b, &tau).unwrap(),
            hierarchy::mollified_bridge(&a, 2, 0.5, &tau).unwrap(),
        ] {
            assert!(bridge.graph.check_conservation().is_empty());
            assert!(bridge.bound_holds(), "cost {} > {}", bridge.cost, bridge.bound);
        }
        let witness = hierarchy::nadic_witness(&a, &b, 2).unwrap();
        assert!(witness.check_conservation().is_empty());
        assert!(witness.source().canonical_eq(&a));
        assert!(witness.sink().canonical_eq(&b));
    }
}

#[test]
fn optimizer_output_is_a_fixpoint() {
    let tau = TransportCost::branched(0.75).unwrap();
    for seed in 0..5u64 {
        let mut rng = samples::rng(800 + seed);
        let plus = samples::probability_measure(&mut rng, 2, 3);
        let minus = samples::probability_measure(&mut rng, 2, 3);
        let config = OptimizerConfig {
            seed,
            ..Default::default()
        };
        let g = optimize(&plus, &minus, &tau, &config).unwrap();
        assert!(g.check_conservation().is_empty());
        assert_eq!(g.remove_cycles().edges(), g.edges());
        assert_eq!(g.tree_reduce(&tau).unwrap().edges(), g.edges());
        let cost = g.graph_cost(&tau).total;
        // Baselines the searcher must never lose to.
        let star = hierarchy::origin_star(&plus, &minus, &tau).unwrap();
        assert!(cost <= star.cost + 1e-9);
        let witness = hierarchy::nadic_witness(&plus, &minus, 2).unwrap();
        assert!(cost <= witness.graph_cost(&tau).total + 1e-9);
        let lower = tau.lambda_tau(1.0) * wasserstein1(&plus, &minus).unwrap();
        assert!(cost >= lower - 1e-9);
    }
}

#[test]
fn splitting_respects_positive_middle_measures() {
    for seed in 0..20u64 {
        let mut rng = samples::rng(7100 + seed);
        let g = samples::flow_graph(
            &mut rng,
            &samples::FlowGraphConfig {
                vertices: 8,
                paths: 4,
                cycles: 0,
                ..Default::default()
            },
        );
        for t in [0.2, 0.5, 0.8] {
            let split = g.split_at_time(t).unwrap();
            assert!(split.mid.atoms().iter().all(|a| a.mass > 0.0));
            assert_eq!(split.mid.total_mass(), 1.0);
        }
    }
}

#[test]
fn rescaled_problems_restore_costs() {
    // Scale a problem up in mass and space; the normalized cost maps back.
    let mut rng = samples::rng(10);
    for _ in 0..10 {
        let base = samples::probability_measure(&mut rng, 2, 4);
        let scale_mass = 4.0;
        let scale_space = 8.0;
        let blow = |m: &DiscreteMeasure| {
            DiscreteMeasure::new(
                2,
                m.atoms()
                    .iter()
                    .map(|a| {
                        (
                            Point(a.pos.0.iter().map(|c| c * scale_space).collect()),
                            a.mass * scale_mass,
                        )
                    })
                    .collect(),
            )
            .unwrap()
        };
        let target = samples::probability_measure(&mut rng, 2, 4);
        let plus = blow(&base);
        let minus = blow(&target);
        let tau = TransportCost::branched(0.6).unwrap();
        let scaled = ramiflow::measures::rescale(&plus, &minus, &tau).unwrap();
        assert_eq!(scaled.plus.total_mass(), 1.0);
        assert!(scaled.plus.support_radius() <= 1.0 + 1e-12);
        // A one-edge witness in both settings.
        let a = plus.atoms()[0].pos.clone();
        let b = minus.atoms()[0].pos.clone();
        let original = tau.eval(scale_mass) * a.dist(&b);
        let na = scaled.plus.atoms()[0].pos.clone();
        let nb = scaled.minus.atoms()[0].pos.clone();
        let normalized = scaled.cost.eval(1.0) * na.dist(&nb);
        assert!(
            (scaled.restore_cost(normalized) - original).abs() <= 1e-9 * original.max(1.0),
            "restore mismatch: {} vs {original}",
            scaled.restore_cost(normalized)
        );
    }
}
