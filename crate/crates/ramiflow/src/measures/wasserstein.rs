//! Exact Wasserstein-1 distance between atomic measures of equal mass,
//! solved as a balanced transportation problem on the complete bipartite
//! atom graph with a network-simplex pivot scheme.

use super::{DiscreteMeasure, MeasureError};
use crate::numeric::sum_exact;

/// Exact optimal-transport cost between equal-mass atomic measures with unit
/// cost per mass per Euclidean distance.
///
/// Symmetric by construction: the argument pair is put into a canonical
/// order before solving, so `wasserstein1(a, b)` and `wasserstein1(b, a)`
/// return bit-identical values.
pub fn wasserstein1(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
) -> Result<f64, MeasureError> {
    let mp = plus.total_mass();
    let mm = minus.total_mass();
    if (mp - mm).abs() > 1e-9 * mp.max(mm).max(1e-300) {
        return Err(MeasureError::MassImbalance { plus: mp, minus: mm });
    }
    if plus.is_empty() || minus.is_empty() {
        return Ok(0.0);
    }
    let (a, b) = if measure_key(plus) <= measure_key(minus) {
        (plus, minus)
    } else {
        (minus, plus)
    };
    let supply: Vec<f64> = a.atoms().iter().map(|x| x.mass).collect();
    let mut demand: Vec<f64> = b.atoms().iter().map(|x| x.mass).collect();
    // Force exact balance; the discrepancy is below the imbalance tolerance.
    let defect = sum_exact(supply.iter().copied()) - sum_exact(demand.iter().copied());
    if defect != 0.0 {
        let last = demand.len() - 1;
        demand[last] += defect;
    }
    let m = supply.len();
    let n = demand.len();
    let mut cost = vec![0.0; m * n];
    for (i, ai) in a.atoms().iter().enumerate() {
        for (j, bj) in b.atoms().iter().enumerate() {
            cost[i * n + j] = ai.pos.dist(&bj.pos);
        }
    }
    let flows = solve_transportation(&supply, &demand, &cost);
    Ok(sum_exact(
        flows.iter().map(|&(i, j, f)| f * cost[i * n + j]),
    ))
}

fn measure_key(m: &DiscreteMeasure) -> Vec<u64> {
    let mut key = Vec::new();
    for a in m.atoms() {
        for &c in &a.pos.0 {
            key.push(c.to_bits() ^ (1u64 << 63));
        }
        key.push(a.mass.to_bits());
    }
    key
}

#[derive(Debug, Clone, Copy)]
struct BasisCell {
    i: usize,
    j: usize,
    flow: f64,
}

/// Transportation simplex with a northwest-corner start. Entering variable:
/// most negative reduced cost (Dantzig), falling back to Bland's rule after
/// a run of degenerate pivots to rule out cycling.
fn solve_transportation(supply: &[f64], demand: &[f64], cost: &[f64]) -> Vec<(usize, usize, f64)> {
    let m = supply.len();
    let n = demand.len();
    debug_assert!(m > 0 && n > 0);

    // Northwest-corner initial basis: exactly m + n − 1 cells forming a
    // spanning tree of the bipartite node set.
    let mut basis: Vec<BasisCell> = Vec::with_capacity(m + n - 1);
    {
        let mut ra: Vec<f64> = supply.to_vec();
        let mut rb: Vec<f64> = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let f = ra[i].min(rb[j]);
            basis.push(BasisCell { i, j, flow: f });
            ra[i] -= f;
            rb[j] -= f;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if ra[i] <= rb[j] && i < m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let scale = cost.iter().cloned().fold(1.0_f64, f64::max);
    let tol = 1e-13 * scale;
    let mut degenerate_run = 0usize;
    let max_iter = 1000 + 40 * (m + n) * (m + n);

    for _ in 0..max_iter {
        // Potentials from the basis tree: u_i + v_j = c_ij on basis cells.
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        let mut row_cells: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut col_cells: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (idx, c) in basis.iter().enumerate() {
            row_cells[c.i].push(idx);
            col_cells[c.j].push(idx);
        }
        u[0] = 0.0;
        let mut stack = vec![(true, 0usize)];
        while let Some((is_row, node)) = stack.pop() {
            if is_row {
                for &idx in &row_cells[node] {
                    let c = basis[idx];
                    if v[c.j].is_nan() {
                        v[c.j] = cost[c.i * n + c.j] - u[c.i];
                        stack.push((false, c.j));
                    }
                }
            } else {
                for &idx in &col_cells[node] {
                    let c = basis[idx];
                    if u[c.i].is_nan() {
                        u[c.i] = cost[c.i * n + c.j] - v[c.j];
                        stack.push((true, c.i));
                    }
                }
            }
        }

        // Entering cell.
        let use_bland = degenerate_run > 64;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -tol;
        'scan: for i in 0..m {
            for j in 0..n {
                let rc = cost[i * n + j] - u[i] - v[j];
                if rc < best {
                    best = rc;
                    entering = Some((i, j));
                    if use_bland {
                        break 'scan;
                    }
                }
            }
        }
        let Some((ei, ej)) = entering else {
            break;
        };

        // The unique basis-tree path from row ei to column ej.
        let path = tree_path(&basis, &row_cells, &col_cells, m, ei, ej);

        // Alternate signs along the cycle: entering cell +, first path cell −.
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &idx) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let f = basis[idx].flow;
                if f < theta
                    || (f == theta
                        && leaving != usize::MAX
                        && (basis[idx].i, basis[idx].j) < (basis[leaving].i, basis[leaving].j))
                {
                    theta = f;
                    leaving = idx;
                }
            }
        }
        debug_assert!(leaving != usize::MAX);
        if theta <= 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        for (pos, &idx) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis[idx].flow -= theta;
            } else {
                basis[idx].flow += theta;
            }
        }
        basis[leaving] = BasisCell {
            i: ei,
            j: ej,
            flow: theta,
        };
    }

    basis
        .into_iter()
        .filter(|c| c.flow > 0.0)
        .map(|c| (c.i, c.j, c.flow))
        .collect()
}

/// Cells of the basis-tree path from row node `start_row` to column node
/// `target_col`, ordered from the row end.
fn tree_path(
    basis: &[BasisCell],
    row_cells: &[Vec<usize>],
    col_cells: &[Vec<usize>],
    m: usize,
    start_row: usize,
    target_col: usize,
) -> Vec<usize> {
    // Nodes: 0..m rows, m..m+n columns.
    let n = col_cells.len();
    let total = m + n;
    let mut parent_edge = vec![usize::MAX; total];
    let mut parent_node = vec![usize::MAX; total];
    let mut visited = vec![false; total];
    let start = start_row;
    let target = m + target_col;
    visited[start] = true;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        let cells = if node < m {
            &row_cells[node]
        } else {
            &col_cells[node - m]
        };
        for &idx in cells {
            let c = basis[idx];
            let next = if node < m { m + c.j } else { c.i };
            if !visited[next] {
                visited[next] = true;
                parent_edge[next] = idx;
                parent_node[next] = node;
                queue.push_back(next);
            }
        }
    }
    debug_assert!(visited[target], "basis does not span the bipartite nodes");
    let mut path = Vec::new();
    let mut node = target;
    while node != start {
        path.push(parent_edge[node]);
        node = parent_node[node];
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{p2, Point};
    use rand::prelude::*;

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

    /// Brute-force LP-vertex enumeration: every vertex of the transportation
    /// polytope is a spanning-tree basis of the bipartite graph, so the
    /// optimum is the cheapest feasible tree. Independent of the simplex
    /// implementation above.
    fn enumerate_oracle(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
        let m = a.atoms().len();
        let n = b.atoms().len();
        assert!(m * n <= 20, "oracle restricted to tiny instances");
        let cells: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .collect();
        let need = m + n - 1;
        let mut best = f64::INFINITY;
        let mut chosen = Vec::new();
        fn recurse(
            cells: &[(usize, usize)],
            from: usize,
            need: usize,
            chosen: &mut Vec<(usize, usize)>,
            a: &DiscreteMeasure,
            b: &DiscreteMeasure,
            best: &mut f64,
        ) {
            if chosen.len() == need {
                if let Some(cost) = tree_cost(chosen, a, b) {
                    if cost < *best {
                        *best = cost;
                    }
                }
                return;
            }
            if from >= cells.len() || cells.len() - from < need - chosen.len() {
                return;
            }
            chosen.push(cells[from]);
            recurse(cells, from + 1, need, chosen, a, b, best);
            chosen.pop();
            recurse(cells, from + 1, need, chosen, a, b, best);
        }
        recurse(&cells, 0, need, &mut chosen, a, b, &mut best);
        best
    }

    /// Solves flows on a candidate basis by leaf elimination; `None` when the
    /// cells do not span a tree or a flow turns negative.
    fn tree_cost(
        cells: &[(usize, usize)],
        a: &DiscreteMeasure,
        b: &DiscreteMeasure,
    ) -> Option<f64> {
        let m = a.atoms().len();
        let n = b.atoms().len();
        let mut deg = vec![0usize; m + n];
        for &(i, j) in cells {
            deg[i] += 1;
            deg[m + j] += 1;
        }
        let mut remaining: Vec<(usize, usize)> = cells.to_vec();
        let mut supply: Vec<f64> = a.atoms().iter().map(|x| x.mass).collect();
        let mut demand: Vec<f64> = b.atoms().iter().map(|x| x.mass).collect();
        let mut total = 0.0;
        while !remaining.is_empty() {
            let pos = remaining.iter().position(|&(i, j)| {
                deg[i] == 1 || deg[m + j] == 1
            })?;
            let (i, j) = remaining.swap_remove(pos);
            let flow = if deg[i] == 1 { supply[i] } else { demand[j] };
            if flow < -1e-9 {
                return None;
            }
            supply[i] -= flow;
            demand[j] -= flow;
            deg[i] -= 1;
            deg[m + j] -= 1;
            total += flow * a.atoms()[i].pos.dist(&b.atoms()[j].pos);
        }
        if supply.iter().chain(demand.iter()).any(|r| r.abs() > 1e-9) {
            return None;
        }
        Some(total)
    }

    #[test]
    fn single_pairing() {
        let a = m2(&[((0.0, 0.0), 1.0)]);
        let b = m2(&[((3.0, 4.0), 1.0)]);
        assert_eq!(wasserstein1(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn split_to_middle() {
        let a = m2(&[((0.0, 0.0), 0.5), ((2.0, 0.0), 0.5)]);
        let b = m2(&[((1.0, 0.0), 1.0)]);
        let w = wasserstein1(&a, &b).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        assert_eq!(w, enumerate_oracle(&a, &b));
    }

    #[test]
    fn mass_mismatch_rejected() {
        let a = m2(&[((0.0, 0.0), 1.0)]);
        let b = m2(&[((1.0, 0.0), 1.5)]);
        assert!(matches!(
            wasserstein1(&a, &b),
            Err(MeasureError::MassImbalance { .. })
        ));
    }

    fn random_measure(rng: &mut impl Rng, atoms: usize) -> DiscreteMeasure {
        // Dyadic masses summing exactly to one keep the balance exact.
        let mut cuts: Vec<u32> = (0..atoms - 1).map(|_| rng.gen_range(1..1024)).collect();
        cuts.push(0);
        cuts.push(1024);
        cuts.sort_unstable();
        let list: Vec<(Point, f64)> = cuts
            .windows(2)
            .map(|w| {
                let mass = (w[1] - w[0]) as f64 / 1024.0;
                let x = rng.gen_range(-256..=256) as f64 / 256.0;
                let y = rng.gen_range(-256..=256) as f64 / 256.0;
                (p2(x, y), mass)
            })
            .collect();
        DiscreteMeasure::new(2, list).unwrap()
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let a = random_measure(&mut rng, 4);
            let b = random_measure(&mut rng, 4);
            let fast = wasserstein1(&a, &b).unwrap();
            let slow = enumerate_oracle(&a, &b);
            assert!(
                (fast - slow).abs() <= 1e-9 * slow.max(1.0),
                "simplex {fast} vs oracle {slow}"
            );
        }
    }

    #[test]
    fn metric_properties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let a = random_measure(&mut rng, 5);
            let b = random_measure(&mut rng, 5);
            let c = random_measure(&mut rng, 5);
            let ab = wasserstein1(&a, &b).unwrap();
            let ba = wasserstein1(&b, &a).unwrap();
            assert_eq!(ab, ba, "symmetry must be exact");
            let ac = wasserstein1(&a, &c).unwrap();
            let cb = wasserstein1(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-9);
            assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
            if !a.canonical_eq(&b) {
                assert!(ab > 0.0);
            }
        }
    }

    #[test]
    fn projection_distance_bound() {
        // Projecting to the level-k grid moves each particle at most
        // 2^{1−k}·sqrt(n).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let m = random_measure(&mut rng, 6);
            for k in 1..=4u32 {
                let p = m.project_klevel(k).unwrap();
                let w = wasserstein1(&m, &p).unwrap();
                let bound = m.total_mass() * (2.0f64).powi(1 - k as i32) * (2.0f64).sqrt();
                assert!(w <= bound + 1e-12, "w = {w}, bound = {bound}");
            }
        }
    }

    #[test]
    fn degenerate_supplies() {
        // Many coincident-mass ties exercise degenerate pivots.
        let a = m2(&[
            ((0.0, 0.0), 0.25),
            ((1.0, 0.0), 0.25),
            ((0.0, 1.0), 0.25),
            ((1.0, 1.0), 0.25),
        ]);
        let b = m2(&[
            ((0.5, 0.0), 0.25),
            ((0.5, 1.0), 0.25),
            ((0.0, 0.5), 0.25),
            ((1.0, 0.5), 0.25),
        ]);
        let w = wasserstein1(&a, &b).unwrap();
        assert!((w - 4.0 * 0.25 * 0.5).abs() < 1e-12);
    }
}
