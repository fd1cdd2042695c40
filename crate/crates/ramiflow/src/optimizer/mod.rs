//! Search for low-cost transport graphs between atomic measures.
//!
//! The searcher works on undirected topologies over the terminal atoms plus
//! free branch vertices. On forests the edge flows are forced by mass
//! conservation; one loop per component is allowed and its circulation is
//! line-searched, which is what lets non-concave costs keep beneficial
//! loops. Moves are local (branch insertion, rerouting, merging, loop
//! creation, position descent) and acceptance is strict cost decrease, so
//! seeded runs are reproducible.

mod oracle;

pub use oracle::{brute_force_oracle, OracleResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::TransportCost;
use crate::graph::{Edge, GraphError, TransportGraph};
use crate::measures::{DiscreteMeasure, MeasureError, Point};
use crate::numeric::{sum_exact, SNAP_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("instance too large for the oracle: {0}")]
    TooLarge(String),
    #[error("mass imbalance: {plus} vs {minus}")]
    MassImbalance { plus: f64, minus: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Knobs for [`optimize`]. Defaults give a deterministic, moderately
/// thorough search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Rounds of the move sweep per restart.
    pub max_rounds: usize,
    pub enable_descent: bool,
    pub enable_insert: bool,
    pub enable_reroute: bool,
    pub enable_merge: bool,
    pub enable_loops: bool,
    /// Merge radius as a fraction of the instance diameter.
    pub merge_radius_rel: f64,
    /// Central-difference step for position gradients.
    pub gradient_step: f64,
    pub descent_iters: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 4,
            max_rounds: 40,
            enable_descent: true,
            enable_insert: true,
            enable_reroute: true,
            enable_merge: true,
            enable_loops: true,
            merge_radius_rel: 0.25,
            gradient_step: 1e-6,
            descent_iters: 120,
            seed: 0,
        }
    }
}

/// Hysteresis for accepting a move.
const ACCEPT_EPS: f64 = 1e-12;

/// Terminal list with net divergences (`> 0` supplies, `< 0` demands).
pub(crate) fn net_divergence(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
) -> (Vec<Point>, Vec<f64>) {
    let diff = crate::measures::SignedDiscreteMeasure::difference(plus, minus);
    (
        diff.atoms().iter().map(|a| a.pos.clone()).collect(),
        diff.atoms().iter().map(|a| a.mass).collect(),
    )
}

/// Signed flows on an undirected topology, or `None` when the topology
/// cannot carry the divergence (unbalanced component, more than one loop in
/// a component). Returns `(flows, cost)`; `flows[e]` is oriented along
/// `edges[e] = (a, b)`.
pub(crate) fn solve_topology(
    positions: &[Point],
    div: &[f64],
    edges: &[(usize, usize)],
    tau: &TransportCost,
) -> Option<(Vec<f64>, f64)> {
    let n = positions.len();
    let scale: f64 = div.iter().map(|d| d.abs()).sum::<f64>().max(1e-12);
    let mut comp = vec![usize::MAX; n];
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (ei, &(a, b)) in edges.iter().enumerate() {
        if a == b {
            return None;
        }
        adj[a].push((ei, b));
        adj[b].push((ei, a));
    }
    // Component labelling.
    let mut n_comp = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = n_comp;
        while let Some(v) = stack.pop() {
            for &(_, w) in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = n_comp;
                    stack.push(w);
                }
            }
        }
        n_comp += 1;
    }
    // Per-component balance and cyclomatic number.
    let mut comp_div = vec![0.0; n_comp];
    let mut comp_vertices = vec![0usize; n_comp];
    let mut comp_edges = vec![0usize; n_comp];
    for v in 0..n {
        comp_div[comp[v]] += div[v];
        comp_vertices[comp[v]] += 1;
    }
    for &(a, _) in edges {
        comp_edges[comp[a]] += 1;
    }
    for c in 0..n_comp {
        if comp_div[c].abs() > 1e-9 * scale {
            return None;
        }
        // Cyclomatic number E − V + 1 per connected component; at most one.
        if comp_edges[c] > comp_vertices[c] {
            return None;
        }
    }

    let mut flows = vec![0.0; edges.len()];
    let mut residual: Vec<f64> = div.to_vec();
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut removed = vec![false; edges.len()];

    // Loop edges: one per unicyclic component, found by repeatedly stripping
    // leaves; whatever remains is the cycle.
    let mut on_stripped = vec![false; n];
    let mut strip_queue: Vec<usize> = (0..n).filter(|&v| degree[v] <= 1).collect();
    let mut strip_degree = degree.clone();
    while let Some(v) = strip_queue.pop() {
        if on_stripped[v] {
            continue;
        }
        on_stripped[v] = true;
        for &(ei, w) in &adj[v] {
            if !on_stripped[w] && !removed[ei] {
                if strip_degree[w] > 0 {
                    strip_degree[w] -= 1;
                }
                if strip_degree[w] <= 1 {
                    strip_queue.push(w);
                }
            }
        }
    }
    // Cycle edges connect two unstripped vertices.
    let mut cycle_breaker: Vec<usize> = Vec::new();
    {
        let mut seen_comp: Vec<bool> = vec![false; n_comp];
        for (ei, &(a, b)) in edges.iter().enumerate() {
            if !on_stripped[a] && !on_stripped[b] && !seen_comp[comp[a]] {
                cycle_breaker.push(ei);
                seen_comp[comp[a]] = true;
            }
        }
    }
    for &ei in &cycle_breaker {
        removed[ei] = true;
        let (a, b) = edges[ei];
        degree[a] -= 1;
        degree[b] -= 1;
    }

    // Leaf elimination on the remaining forest.
    let mut queue: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut done_edge = removed.clone();
    let mut done_vertex = vec![false; n];
    while let Some(v) = queue.pop() {
        if done_vertex[v] || degree[v] != 1 {
            continue;
        }
        let Some(&(ei, w)) = adj[v].iter().find(|&&(ei, _)| !done_edge[ei]) else {
            continue;
        };
        done_edge[ei] = true;
        done_vertex[v] = true;
        let f = residual[v];
        let (a, _) = edges[ei];
        flows[ei] = if v == a { f } else { -f };
        residual[w] += f;
        residual[v] = 0.0;
        degree[v] -= 1;
        degree[w] -= 1;
        if degree[w] == 1 {
            queue.push(w);
        }
    }

    // Balanced components drain completely under leaf elimination (the
    // cycle, once its breaker edge is removed, is a path and strips too).
    if residual.iter().any(|r| r.abs() > 1e-9 * scale) {
        return None;
    }

    // Optimize the circulation of each cycle.
    for &e0 in &cycle_breaker {
        let (a, b) = edges[e0];
        // Tree path from b to a avoiding e0.
        let path = undirected_path(&adj, &removed, edges, b, a)?;
        // Residual on the cycle must be consistent: tree solve above left
        // cycle vertices with equal residual circulating; fold the leftover
        // of vertex `a` into the starting circulation.
        let mut cycle: Vec<(usize, f64)> = vec![(e0, 1.0)];
        cycle.extend(path);
        let lengths: Vec<f64> = edges
            .iter()
            .map(|&(x, y)| positions[x].dist(&positions[y]))
            .collect();
        let base: Vec<f64> = flows.clone();
        let eval = |lambda: f64| -> f64 {
            cycle
                .iter()
                .map(|&(ei, sigma)| tau.eval((base[ei] + sigma * lambda).abs()) * lengths[ei])
                .sum()
        };
        // Candidate circulations: flow-zeroing breakpoints plus a golden
        // section refinement inside each interval.
        let mut candidates: Vec<f64> = vec![0.0];
        for &(ei, sigma) in &cycle {
            candidates.push(-base[ei] / sigma);
        }
        candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());
        candidates.dedup();
        let mut refined = candidates.clone();
        for w in candidates.windows(2) {
            refined.push(golden_min(&eval, w[0], w[1]));
        }
        let best = refined
            .into_iter()
            .min_by(|x, y| {
                eval(*x)
                    .partial_cmp(&eval(*y))
                    .unwrap()
                    .then(x.partial_cmp(y).unwrap())
            })
            .unwrap_or(0.0);
        for &(ei, sigma) in &cycle {
            flows[ei] = base[ei] + sigma * best;
        }
    }

    let lengths: Vec<f64> = edges
        .iter()
        .map(|&(x, y)| positions[x].dist(&positions[y]))
        .collect();
    let cost = sum_exact(
        flows
            .iter()
            .zip(&lengths)
            .filter(|(f, _)| f.abs() > 0.0)
            .map(|(f, l)| tau.eval(f.abs()) * l),
    );
    Some((flows, cost))
}

/// Edges of the tree path from `from` to `to` (skipping removed edges), as
/// `(edge, σ)` with `σ = +1` when the edge is traversed tail-to-head.
fn undirected_path(
    adj: &[Vec<(usize, usize)>],
    removed: &[bool],
    edges: &[(usize, usize)],
    from: usize,
    to: usize,
) -> Option<Vec<(usize, f64)>> {
    let n = adj.len();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut visited = vec![false; n];
    visited[from] = true;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &(ei, w) in &adj[v] {
            if !removed[ei] && !visited[w] {
                visited[w] = true;
                parent[w] = Some((ei, v));
                queue.push_back(w);
            }
        }
    }
    if !visited[to] {
        return None;
    }
    let mut out = Vec::new();
    let mut at = to;
    while at != from {
        let (ei, prev) = parent[at]?;
        let (a, _) = edges[ei];
        // Traversed prev → at.
        out.push((ei, if prev == a { 1.0 } else { -1.0 }));
        at = prev;
    }
    out.reverse();
    Some(out)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - PHI * (hi - lo);
    let mut x2 = lo + PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..40 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
struct SearchState {
    positions: Vec<Point>,
    /// First `n_fixed` positions are terminals and never move or merge away.
    n_fixed: usize,
    div: Vec<f64>,
    edges: Vec<(usize, usize)>,
    flows: Vec<f64>,
    cost: f64,
}

impl SearchState {
    fn solve(
        positions: Vec<Point>,
        n_fixed: usize,
        div: Vec<f64>,
        edges: Vec<(usize, usize)>,
        tau: &TransportCost,
    ) -> Option<SearchState> {
        let (flows, cost) = solve_topology(&positions, &div, &edges, tau)?;
        let mut state = SearchState {
            positions,
            n_fixed,
            div,
            edges,
            flows,
            cost,
        };
        state.prune();
        Some(state)
    }

    /// Drops zero-flow edges and unused free vertices.
    fn prune(&mut self) {
        let keep: Vec<bool> = self.flows.iter().map(|f| f.abs() > 0.0).collect();
        let mut edges = Vec::new();
        let mut flows = Vec::new();
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            if keep[i] {
                edges.push((a, b));
                flows.push(self.flows[i]);
            }
        }
        // Remove isolated free vertices.
        let mut used = vec![false; self.positions.len()];
        used[..self.n_fixed].fill(true);
        for &(a, b) in &edges {
            used[a] = true;
            used[b] = true;
        }
        let mut remap = vec![usize::MAX; self.positions.len()];
        let mut positions = Vec::new();
        let mut div = Vec::new();
        for v in 0..self.positions.len() {
            if used[v] {
                remap[v] = positions.len();
                positions.push(self.positions[v].clone());
                div.push(self.div[v]);
            }
        }
        self.edges = edges
            .into_iter()
            .map(|(a, b)| (remap[a], remap[b]))
            .collect();
        self.flows = flows;
        self.positions = positions;
        self.div = div;
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n_fixed {
            for j in (i + 1)..self.n_fixed {
                d = d.max(self.positions[i].dist(&self.positions[j]));
            }
        }
        d.max(1e-6)
    }
}

/// Local search for a low-cost transport graph between equal-mass atomic
/// measures. The output is conservation-valid, acyclic, tree-reduced when
/// the cost is concave, never worse than the star and dyadic-tree baselines,
/// and deterministic for a fixed seed.
pub fn optimize(
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
    tau: &TransportCost,
    config: &OptimizerConfig,
) -> Result<TransportGraph, OptimError> {
    let mp = plus.total_mass();
    let mm = minus.total_mass();
    if (mp - mm).abs() > 1e-9 * mp.max(mm).max(1e-300) {
        return Err(OptimError::MassImbalance { plus: mp, minus: mm });
    }
    let dim = plus.dim();
    let (terminals, div) = net_divergence(plus, minus);
    if terminals.is_empty() {
        return Ok(TransportGraph::new(
            dim,
            vec![],
            vec![],
            plus.clone(),
            minus.clone(),
        )?);
    }

    // Seed states: stars through the supply barycenter, demand barycenter
    // and origin, plus jittered variants for extra restarts.
    let mut inits: Vec<SearchState> = Vec::new();
    let barycenter = |measure: &DiscreteMeasure| -> Point {
        let total = measure.total_mass();
        Point(
            (0..dim)
                .map(|k| {
                    sum_exact(measure.atoms().iter().map(|a| a.mass * a.pos.0[k])) / total
                })
                .collect(),
        )
    };
    let mut hubs = vec![
        barycenter(plus),
        barycenter(minus),
        Point(vec![0.0; dim]),
    ];
    {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 3..config.restarts.max(3) {
            let base = barycenter(plus);
            hubs.push(Point(
                base.0
                    .iter()
                    .map(|c| c + rng.gen_range(-0.25..0.25))
                    .collect(),
            ));
        }
    }
    hubs.truncate(config.restarts.max(1));
    for hub in hubs {
        let mut positions = terminals.clone();
        let mut divs = div.clone();
        let hub_idx = match positions.iter().position(|p| p.dist(&hub) <= SNAP_TOL) {
            Some(i) => i,
            None => {
                positions.push(hub.clone());
                divs.push(0.0);
                positions.len() - 1
            }
        };
        let edges: Vec<(usize, usize)> = (0..positions.len())
            .filter(|&v| v != hub_idx)
            .map(|v| (v, hub_idx))
            .collect();
        if let Some(state) =
            SearchState::solve(positions, terminals.len(), divs, edges, tau)
        {
            inits.push(state);
        }
    }
    // Dyadic-tree candidate, reduced to a forest so the searcher can use it.
    if plus.support_radius() <= 2.0 && minus.support_radius() <= 2.0 {
        if let Ok(witness) = crate::hierarchy::nadic_witness(plus, minus, 2) {
            let cleaned = witness.remove_cycles();
            let cleaned = if tau.is_concave() {
                cleaned.tree_reduce(tau).unwrap_or(cleaned)
            } else {
                cleaned
            };
            if let Some(state) = state_from_graph(&cleaned, &terminals, &div, tau) {
                inits.push(state);
            }
        }
    }

    let threads = thread_budget(config.restarts.max(1));
    let results: Vec<(usize, SearchState)> = if threads <= 1 || inits.len() <= 1 {
        inits
            .into_iter()
            .enumerate()
            .map(|(i, s)| (i, run_search(s, tau, config)))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = inits
                .into_iter()
                .enumerate()
                .map(|(i, s)| scope.spawn(move || (i, run_search(s, tau, config))))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    };
    let best = results
        .into_iter()
        .min_by(|(i, a), (j, b)| {
            a.cost
                .partial_cmp(&b.cost)
                .unwrap()
                .then(i.cmp(j))
        })
        .expect("at least one seed state")
        .1;

    let mut graph = state_to_graph(&best, dim, plus, minus)?;
    // Baselines that must never beat the final answer.
    if let Ok(star) = crate::hierarchy::origin_star(plus, minus, tau) {
        if star.cost < graph.graph_cost(tau).total {
            graph = star.graph;
        }
    }
    if plus.support_radius() <= 2.0 && minus.support_radius() <= 2.0 {
        if let Ok(nadic) = crate::hierarchy::nadic_witness(plus, minus, 2) {
            if nadic.graph_cost(tau).total < graph.graph_cost(tau).total {
                graph = nadic;
            }
        }
    }
    let graph = graph.remove_cycles();
    let graph = if tau.is_concave() {
        graph.tree_reduce(tau)?
    } else {
        graph
    };
    Ok(graph)
}

fn thread_budget(restarts: usize) -> usize {
    std::env::var("RAMIFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1)
        .clamp(1, restarts)
}

fn state_from_graph(
    graph: &TransportGraph,
    terminals: &[Point],
    div: &[f64],
    tau: &TransportCost,
) -> Option<SearchState> {
    let mut positions: Vec<Point> = terminals.to_vec();
    let mut divs: Vec<f64> = div.to_vec();
    let mut remap = Vec::with_capacity(graph.vertices().len());
    for v in graph.vertices() {
        match positions.iter().position(|p| p.dist(v) <= SNAP_TOL) {
            Some(i) => remap.push(i),
            None => {
                positions.push(v.clone());
                divs.push(0.0);
                remap.push(positions.len() - 1);
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for e in graph.edges() {
        let (a, b) = (remap[e.tail], remap[e.head]);
        let key = (a.min(b), a.max(b));
        if a != b && !edges.contains(&key) {
            edges.push(key);
        }
    }
    SearchState::solve(positions, terminals.len(), divs, edges, tau)
}

fn state_to_graph(
    state: &SearchState,
    dim: usize,
    plus: &DiscreteMeasure,
    minus: &DiscreteMeasure,
) -> Result<TransportGraph, GraphError> {
    let edges: Vec<Edge> = state
        .edges
        .iter()
        .zip(&state.flows)
        .filter(|(_, f)| f.abs() > 0.0)
        .map(|(&(a, b), &f)| {
            if f > 0.0 {
                Edge { tail: a, head: b, weight: f }
            } else {
                Edge { tail: b, head: a, weight: -f }
            }
        })
        .collect();
    TransportGraph::new(
        dim,
        state.positions.clone(),
        edges,
        plus.clone(),
        minus.clone(),
    )
}

fn run_search(mut state: SearchState, tau: &TransportCost, config: &OptimizerConfig) -> SearchState {
    for _ in 0..config.max_rounds {
        let mut improved = false;
        if config.enable_descent {
            improved |= try_descent(&mut state, tau, config);
        }
        if config.enable_reroute {
            improved |= try_reroute(&mut state, tau);
        }
        if config.enable_merge {
            improved |= try_merge(&mut state, tau, config);
        }
        if config.enable_insert {
            improved |= try_insert(&mut state, tau, config);
        }
        if config.enable_loops {
            improved |= try_loops(&mut state, tau);
        }
        if !improved {
            break;
        }
    }
    state
}

/// Central-difference gradient descent with Armijo backtracking on all free
/// vertex positions.
fn try_descent(state: &mut SearchState, tau: &TransportCost, config: &OptimizerConfig) -> bool {
    if state.positions.len() == state.n_fixed {
        return false;
    }
    let refined = descend_free_positions(state, tau, config, config.descent_iters);
    if refined.cost < state.cost - ACCEPT_EPS {
        *state = refined;
        true
    } else {
        false
    }
}

fn descend_free_positions(
    state: &SearchState,
    tau: &TransportCost,
    config: &OptimizerConfig,
    iters: usize,
) -> SearchState {
    let n_fixed = state.n_fixed;
    let dim = state.positions.first().map_or(0, |p| p.dim());
    let mut best = state.clone();
    let eval = |positions: &[Point]| -> f64 {
        solve_topology(positions, &state.div, &state.edges, tau)
            .map(|(_, c)| c)
            .unwrap_or(f64::INFINITY)
    };
    let h = config.gradient_step;
    let mut step = 0.25 * best.diameter();
    for _ in 0..iters {
        // Gradient over all free coordinates.
        let mut grad = vec![0.0; (best.positions.len() - n_fixed) * dim];
        let mut norm2 = 0.0;
        for v in n_fixed..best.positions.len() {
            for k in 0..dim {
                let mut fwd = best.positions.clone();
                fwd[v].0[k] += h;
                let mut bwd = best.positions.clone();
                bwd[v].0[k] -= h;
                let g = (eval(&fwd) - eval(&bwd)) / (2.0 * h);
                grad[(v - n_fixed) * dim + k] = g;
                norm2 += g * g;
            }
        }
        if norm2.sqrt() < 1e-10 {
            break;
        }
        // Armijo backtracking.
        let base = eval(&best.positions);
        let mut t = step / norm2.sqrt().max(1e-12);
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = best.positions.clone();
            for v in n_fixed..trial.len() {
                for k in 0..dim {
                    trial[v].0[k] -= t * grad[(v - n_fixed) * dim + k];
                }
            }
            let value = eval(&trial);
            if value <= base - 1e-4 * t * norm2 {
                best.positions = trial;
                step = (t * norm2.sqrt() * 2.0).min(0.5 * best.diameter());
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if let Some((flows, cost)) = solve_topology(&best.positions, &best.div, &best.edges, tau) {
        best.flows = flows;
        best.cost = cost;
        best.prune();
    }
    best
}

/// Reattaches one endpoint of an edge to a different vertex.
fn try_reroute(state: &mut SearchState, tau: &TransportCost) -> bool {
    let mut best: Option<SearchState> = None;
    for ei in 0..state.edges.len() {
        let (a, b) = state.edges[ei];
        for side in 0..2 {
            let (keep, drop) = if side == 0 { (a, b) } else { (b, a) };
            for target in 0..state.positions.len() {
                if target == keep || target == drop {
                    continue;
                }
                let mut edges = state.edges.clone();
                let key = (keep.min(target), keep.max(target));
                if edges.contains(&key) {
                    continue;
                }
                edges[ei] = key;
                if let Some(candidate) = SearchState::solve(
                    state.positions.clone(),
                    state.n_fixed,
                    state.div.clone(),
                    edges,
                    tau,
                ) {
                    if candidate.cost < best.as_ref().map_or(state.cost, |s| s.cost) - ACCEPT_EPS {
                        best = Some(candidate);
                    }
                }
            }
        }
    }
    match best {
        Some(s) => {
            *state = s;
            true
        }
        None => false,
    }
}

/// Merges a free vertex into a nearby vertex.
fn try_merge(state: &mut SearchState, tau: &TransportCost, config: &OptimizerConfig) -> bool {
    let radius = config.merge_radius_rel * state.diameter();
    let mut best: Option<SearchState> = None;
    for v in state.n_fixed..state.positions.len() {
        for target in 0..state.positions.len() {
            if target == v || state.positions[v].dist(&state.positions[target]) > radius {
                continue;
            }
            let mut edges: Vec<(usize, usize)> = Vec::new();
            for &(a, b) in &state.edges {
                let a2 = if a == v { target } else { a };
                let b2 = if b == v { target } else { b };
                if a2 == b2 {
                    continue;
                }
                let key = (a2.min(b2), a2.max(b2));
                if !edges.contains(&key) {
                    edges.push(key);
                }
            }
            if let Some(candidate) = SearchState::solve(
                state.positions.clone(),
                state.n_fixed,
                state.div.clone(),
                edges,
                tau,
            ) {
                if candidate.cost < best.as_ref().map_or(state.cost, |s| s.cost) - ACCEPT_EPS {
                    best = Some(candidate);
                }
            }
        }
    }
    match best {
        Some(s) => {
            *state = s;
            true
        }
        None => false,
    }
}

/// Inserts a branch vertex on an edge and pulls a third vertex onto it,
/// followed by a short position descent.
fn try_insert(state: &mut SearchState, tau: &TransportCost, config: &OptimizerConfig) -> bool {
    let mut best: Option<SearchState> = None;
    let edges_snapshot = state.edges.clone();
    for (ei, &(a, b)) in edges_snapshot.iter().enumerate() {
        let midpoint = Point(
            state.positions[a]
                .0
                .iter()
                .zip(&state.positions[b].0)
                .map(|(x, y)| 0.5 * (x + y))
                .collect(),
        );
        for w in 0..state.positions.len() {
            if w == a || w == b {
                continue;
            }
            // Replace (a,b) and w's closest edge with a 3-star at the new
            // branch vertex.
            let mut positions = state.positions.clone();
            positions.push(midpoint.clone());
            let s = positions.len() - 1;
            let mut div = state.div.clone();
            div.push(0.0);
            let mut edges = state.edges.clone();
            edges[ei] = (a, s);
            edges.push((b.min(s), b.max(s)));
            // Reattach w: move one of w's incident edges onto s, or add a
            // fresh edge when w is isolated.
            let incident: Vec<usize> = edges_snapshot
                .iter()
                .enumerate()
                .filter(|(i, &(x, y))| *i != ei && (x == w || y == w))
                .map(|(i, _)| i)
                .collect();
            if let Some(&wi) = incident.first() {
                edges[wi] = (w.min(s), w.max(s));
            } else {
                edges.push((w.min(s), w.max(s)));
            }
            if let Some(candidate) =
                SearchState::solve(positions, state.n_fixed, div, edges, tau)
            {
                let refined = descend_free_positions(&candidate, tau, config, 40);
                if refined.cost < best.as_ref().map_or(state.cost, |s| s.cost) - ACCEPT_EPS {
                    best = Some(refined);
                }
            }
        }
    }
    match best {
        Some(s) => {
            *state = s;
            true
        }
        None => false,
    }
}

/// Adds one edge (or a bridging pair) that closes an undirected loop and
/// line-searches the loop circulation; kept only on strict improvement.
/// This is the reverse of the loop-removal step and is what finds non-tree
/// optima under non-concave costs.
fn try_loops(state: &mut SearchState, tau: &TransportCost) -> bool {
    let n = state.positions.len();
    // Candidate vertex pairs: nearest non-adjacent pairs.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if state.edges.contains(&(i, j)) {
                continue;
            }
            pairs.push((state.positions[i].dist(&state.positions[j]), i, j));
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pairs.truncate(12);

    let mut best: Option<SearchState> = None;
    let consider = |edges: Vec<(usize, usize)>, best: &mut Option<SearchState>| {
        if let Some(candidate) = SearchState::solve(
            state.positions.clone(),
            state.n_fixed,
            state.div.clone(),
            edges,
            tau,
        ) {
            if candidate.cost < best.as_ref().map_or(state.cost, |s| s.cost) - ACCEPT_EPS {
                *best = Some(candidate);
            }
        }
    };
    for &(_, i, j) in &pairs {
        let mut edges = state.edges.clone();
        edges.push((i, j));
        consider(edges, &mut best);
    }
    for (pi, &(_, i, j)) in pairs.iter().enumerate() {
        for &(_, k, l) in pairs.iter().skip(pi + 1) {
            let mut edges = state.edges.clone();
            edges.push((i, j));
            edges.push((k, l));
            consider(edges, &mut best);
        }
    }
    match best {
        Some(s) => {
            *state = s;
            true
        }
        None => false,
    }
}
