//! Reference constrained routing and evaluation.
//!
//! Dijkstra next-hop tables behind a pluggable router interface, the
//! fragment search algorithms (delay-bounded, hop-bounded, hop-layered,
//! edge-disjoint), per-packet violation checking, and the scenario
//! evaluation protocol (seeded OD sampling, forwarding simulation, raw and
//! reachability-conditioned delivery ratios).
//!
//! All searches honor transit exclusion: an excluded node is never expanded
//! as a path interior but remains a legal endpoint.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constellation::{RegionCatalog, TopologySnapshot, WalkerConfig};
use crate::grounding::{ground, ConstrainedGraph, GroundingResult};
use crate::ir::{selector_matches, ConstraintProgram};

#[derive(Debug, thiserror::Error)]
pub enum RouteError {
    #[error("endpoint {0} is disabled in the constrained graph")]
    MaskedEndpoint(usize),
    #[error("endpoint {0} is out of range")]
    UnknownEndpoint(usize),
}

/// A concrete path with its cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub nodes: Vec<usize>,
    pub delay_ms: f64,
    pub hops: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Lowest distance first; lowest node id breaks ties so witnesses are
        // deterministic.
        self.dist
            .partial_cmp(&other.dist)
            .expect("finite distances")
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra tree with transit exclusion.
#[derive(Debug, Clone)]
pub struct DijkstraTree {
    pub source: usize,
    pub dist: Vec<f64>,
    /// Predecessor toward the source: (previous node, edge index).
    pub pred: Vec<Option<(usize, usize)>>,
}

impl DijkstraTree {
    pub fn reachable(&self, node: usize) -> bool {
        self.dist[node].is_finite()
    }

    /// Path source -> node, or `None` when unreachable.
    pub fn path_to(&self, node: usize) -> Option<PathResult> {
        if !self.reachable(node) {
            return None;
        }
        let mut nodes = vec![node];
        let mut cur = node;
        while cur != self.source {
            let (prev, _) = self.pred[cur]?;
            nodes.push(prev);
            cur = prev;
        }
        nodes.reverse();
        Some(PathResult {
            hops: nodes.len() - 1,
            delay_ms: self.dist[node],
            nodes,
        })
    }
}

/// Dijkstra from `source` on the constrained graph. Transit-excluded nodes
/// other than the source are never expanded, so they can terminate a path
/// but never sit inside one.
pub fn dijkstra_from(graph: &ConstrainedGraph<'_>, source: usize) -> DijkstraTree {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    if graph.is_routable(source) {
        dist[source] = 0.0;
        heap.push(Reverse(HeapEntry { dist: 0.0, node: source }));
    }
    while let Some(Reverse(entry)) = heap.pop() {
        let u = entry.node;
        if done[u] {
            continue;
        }
        done[u] = true;
        if u != source && graph.is_transit_excluded(u) {
            continue;
        }
        for &(v, edge_idx) in graph.neighbors(u) {
            let nd = dist[u] + graph.edge_delay_ms(edge_idx);
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some((u, edge_idx));
                heap.push(Reverse(HeapEntry { dist: nd, node: v }));
            }
        }
    }
    DijkstraTree { source, dist, pred }
}

/// BFS hop counts from `source` with the same transit-exclusion rule.
pub fn bfs_hops_from(graph: &ConstrainedGraph<'_>, source: usize) -> (Vec<usize>, Vec<Option<(usize, usize)>>) {
    let n = graph.node_count();
    let mut hops = vec![usize::MAX; n];
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
    if !graph.is_routable(source) {
        return (hops, pred);
    }
    hops[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        if u != source && graph.is_transit_excluded(u) {
            continue;
        }
        for &(v, edge_idx) in graph.neighbors(u) {
            if hops[v] == usize::MAX {
                hops[v] = hops[u] + 1;
                pred[v] = Some((u, edge_idx));
                queue.push_back(v);
            }
        }
    }
    (hops, pred)
}

fn path_from_pred(source: usize, dst: usize, pred: &[Option<(usize, usize)>], graph: &ConstrainedGraph<'_>) -> Option<PathResult> {
    let mut nodes = vec![dst];
    let mut delay = 0.0;
    let mut cur = dst;
    while cur != source {
        let (prev, edge_idx) = pred[cur]?;
        delay += graph.edge_delay_ms(edge_idx);
        nodes.push(prev);
        cur = prev;
    }
    nodes.reverse();
    Some(PathResult {
        hops: nodes.len() - 1,
        delay_ms: delay,
        nodes,
    })
}

/// Minimum-delay path. Deterministic under the lowest-id tie-break.
pub fn shortest_path(graph: &ConstrainedGraph<'_>, src: usize, dst: usize) -> Result<Option<PathResult>, RouteError> {
    let n = graph.node_count();
    for endpoint in [src, dst] {
        if endpoint >= n {
            return Err(RouteError::UnknownEndpoint(endpoint));
        }
        if !graph.is_routable(endpoint) {
            return Err(RouteError::MaskedEndpoint(endpoint));
        }
    }
    if src == dst {
        return Ok(Some(PathResult {
            nodes: vec![src],
            delay_ms: 0.0,
            hops: 0,
        }));
    }
    Ok(dijkstra_from(graph, src).path_to(dst))
}

/// Minimum hop-count path (BFS).
pub fn min_hop_path(graph: &ConstrainedGraph<'_>, src: usize, dst: usize) -> Option<PathResult> {
    if src == dst {
        return Some(PathResult {
            nodes: vec![src],
            delay_ms: 0.0,
            hops: 0,
        });
    }
    let (hops, pred) = bfs_hops_from(graph, src);
    if hops[dst] == usize::MAX {
        return None;
    }
    path_from_pred(src, dst, &pred, graph)
}

/// Minimum delay among paths with at most `max_hops` edges, by dynamic
/// programming over (node, hop-count) layers. Positive edge delays make the
/// layered relaxation exact for simple paths.
pub fn hop_layered_shortest_path(
    graph: &ConstrainedGraph<'_>,
    src: usize,
    dst: usize,
    max_hops: usize,
) -> Option<PathResult> {
    let n = graph.node_count();
    if src >= n || dst >= n || !graph.is_routable(src) || !graph.is_routable(dst) {
        return None;
    }
    if src == dst {
        return Some(PathResult {
            nodes: vec![src],
            delay_ms: 0.0,
            hops: 0,
        });
    }
    let cap = max_hops.min(n.saturating_sub(1)).max(1);
    // dist[h][v]: best delay reaching v with exactly <= h edges.
    let mut dist = vec![vec![f64::INFINITY; n]; cap + 1];
    let mut pred: Vec<Vec<Option<(usize, usize)>>> = vec![vec![None; n]; cap + 1];
    dist[0][src] = 0.0;
    for h in 1..=cap {
        for v in 0..n {
            dist[h][v] = dist[h - 1][v];
            pred[h][v] = pred[h - 1][v];
        }
        for u in 0..n {
            if !dist[h - 1][u].is_finite() {
                continue;
            }
            if u != src && graph.is_transit_excluded(u) {
                continue;
            }
            for &(v, edge_idx) in graph.neighbors(u) {
                let nd = dist[h - 1][u] + graph.edge_delay_ms(edge_idx);
                if nd < dist[h][v] {
                    dist[h][v] = nd;
                    pred[h][v] = Some((u, edge_idx));
                }
            }
        }
    }
    if !dist[cap][dst].is_finite() {
        return None;
    }
    // Walk back through the layers.
    let mut nodes = vec![dst];
    let mut h = cap;
    let mut cur = dst;
    let mut delay = 0.0;
    while cur != src {
        // Find the layer where cur was actually improved.
        while h > 0 && dist[h - 1][cur] <= dist[h][cur] {
            h -= 1;
        }
        let (prev, edge_idx) = pred[h][cur]?;
        delay += graph.edge_delay_ms(edge_idx);
        nodes.push(prev);
        cur = prev;
        h = h.saturating_sub(1);
    }
    nodes.reverse();
    let hops = nodes.len() - 1;
    if hops > max_hops {
        return None;
    }
    Some(PathResult {
        nodes,
        delay_ms: delay,
        hops,
    })
}

/// `k` pairwise edge-disjoint paths via Edmonds-Karp unit-capacity max-flow
/// on the paired-arc transformation, or `None` when maxflow < k.
pub fn edge_disjoint_paths(
    graph: &ConstrainedGraph<'_>,
    src: usize,
    dst: usize,
    k: usize,
) -> Option<Vec<PathResult>> {
    if k == 0 {
        return Some(Vec::new());
    }
    let n = graph.node_count();
    if src >= n || dst >= n || src == dst || !graph.is_routable(src) || !graph.is_routable(dst) {
        return None;
    }
    let usable = |node: usize| node == src || node == dst || !graph.is_transit_excluded(node);

    // Directed arcs: two per live undirected edge with usable endpoints.
    // arcs[i] = (from, to, undirected edge index); arc i^1 is its reverse.
    let mut arcs: Vec<(usize, usize, usize)> = Vec::new();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (edge_idx, edge) in graph.snapshot.edges.iter().enumerate() {
        if !graph.grounding.edge_mask[edge_idx]
            || !graph.grounding.node_mask[edge.u]
            || !graph.grounding.node_mask[edge.v]
            || !usable(edge.u)
            || !usable(edge.v)
        {
            continue;
        }
        out[edge.u].push(arcs.len());
        arcs.push((edge.u, edge.v, edge_idx));
        out[edge.v].push(arcs.len());
        arcs.push((edge.v, edge.u, edge_idx));
    }

    let mut flow = vec![0i8; arcs.len()];
    let mut augmentations = 0usize;
    loop {
        // BFS over arcs with residual capacity.
        let mut parent_arc: Vec<Option<usize>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[src] = true;
        let mut queue = VecDeque::from([src]);
        'bfs: while let Some(u) = queue.pop_front() {
            for &arc_idx in &out[u] {
                let (_, to, _) = arcs[arc_idx];
                // Residual = 1 - flow(arc) + flow(reverse arc).
                let residual = 1 - flow[arc_idx] + flow[arc_idx ^ 1];
                if residual <= 0 || seen[to] {
                    continue;
                }
                // Interior transit exclusion inside the flow network.
                if to != dst && to != src && !usable(to) {
                    continue;
                }
                seen[to] = true;
                parent_arc[to] = Some(arc_idx);
                if to == dst {
                    break 'bfs;
                }
                queue.push_back(to);
            }
        }
        if !seen[dst] {
            break;
        }
        let mut cur = dst;
        while cur != src {
            let arc_idx = parent_arc[cur].expect("path exists");
            if flow[arc_idx ^ 1] > 0 {
                flow[arc_idx ^ 1] -= 1;
            } else {
                flow[arc_idx] += 1;
            }
            cur = arcs[arc_idx].0;
        }
        augmentations += 1;
        if augmentations >= k {
            break;
        }
    }
    if augmentations < k {
        return None;
    }

    // Cancel antiparallel flow pairs, then decompose into k paths.
    for i in (0..arcs.len()).step_by(2) {
        let m = flow[i].min(flow[i + 1]);
        flow[i] -= m;
        flow[i + 1] -= m;
    }
    let mut paths = Vec::with_capacity(k);
    for _ in 0..k {
        let mut nodes = vec![src];
        let mut delay = 0.0;
        let mut cur = src;
        while cur != dst {
            let arc_idx = *out[cur]
                .iter()
                .find(|&&a| flow[a] > 0)
                .expect("flow conservation yields an outgoing unit");
            flow[arc_idx] -= 1;
            let (_, to, edge_idx) = arcs[arc_idx];
            delay += graph.edge_delay_ms(edge_idx);
            // Trim any cycle the decomposition wandered into.
            if let Some(pos) = nodes.iter().position(|&x| x == to) {
                let mut removed = 0.0;
                for w in nodes[pos..].windows(2) {
                    let e = graph.snapshot.edge_between(w[0], w[1]).expect("edge on path");
                    removed += graph.edge_delay_ms(e);
                }
                removed += graph.edge_delay_ms(edge_idx);
                delay -= removed;
                nodes.truncate(pos + 1);
            } else {
                nodes.push(to);
            }
            cur = to;
        }
        paths.push(PathResult {
            hops: nodes.len() - 1,
            delay_ms: delay,
            nodes,
        });
    }
    Some(paths)
}

/// Next-hop tables, one column per destination. `None` marks unreachable.
#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    next_hops: BTreeMap<usize, Vec<Option<usize>>>,
}

impl RoutingTable {
    pub fn next_hop(&self, current: usize, dst: usize) -> Option<usize> {
        self.next_hops.get(&dst).and_then(|col| col.get(current).copied().flatten())
    }

    pub fn destinations(&self) -> impl Iterator<Item = usize> + '_ {
        self.next_hops.keys().copied()
    }

    fn insert_destination(&mut self, graph: &ConstrainedGraph<'_>, dst: usize) {
        let tree = dijkstra_from(graph, dst);
        let mut col = vec![None; graph.node_count()];
        for (node, slot) in col.iter_mut().enumerate() {
            if node != dst && tree.reachable(node) {
                *slot = tree.pred[node].map(|(toward, _)| toward);
            }
        }
        self.next_hops.insert(dst, col);
    }
}

/// Pluggable next-hop provider. Only the verified Dijkstra reference ships;
/// a learned router can slot in behind the same interface.
pub trait Router {
    fn name(&self) -> &str;
    fn tables_for(&self, graph: &ConstrainedGraph<'_>, dsts: &BTreeSet<usize>) -> RoutingTable;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct DijkstraRouter;

impl Router for DijkstraRouter {
    fn name(&self) -> &str {
        "dijkstra"
    }

    fn tables_for(&self, graph: &ConstrainedGraph<'_>, dsts: &BTreeSet<usize>) -> RoutingTable {
        let mut table = RoutingTable::default();
        for &dst in dsts {
            if graph.is_routable(dst) {
                table.insert_destination(graph, dst);
            }
        }
        table
    }
}

/// All-pairs next hops via per-destination Dijkstra.
pub fn build_routing_tables(graph: &ConstrainedGraph<'_>) -> RoutingTable {
    let dsts: BTreeSet<usize> = graph.routable_nodes().collect();
    DijkstraRouter.tables_for(graph, &dsts)
}

/// Follow next hops from `src` toward `dst`. Returns the traversed node
/// sequence on delivery; `None` on unreachable markers or a forwarding loop.
pub fn forward_packet(table: &RoutingTable, graph: &ConstrainedGraph<'_>, src: usize, dst: usize) -> Option<Vec<usize>> {
    let n = graph.node_count();
    let mut path = vec![src];
    let mut visited = vec![false; n];
    visited[src] = true;
    let mut cur = src;
    while cur != dst {
        let hop = table.next_hop(cur, dst)?;
        if hop >= n || visited[hop] || path.len() > n {
            return None; // loop or bogus hop
        }
        visited[hop] = true;
        path.push(hop);
        cur = hop;
    }
    Some(path)
}

/// Violations of the per-path predicate set shared by witness verification
/// and packet checking: continuity over live edges, mask compliance, transit
/// exclusion, and optional delay/hop bounds.
pub fn path_violations(
    nodes: &[usize],
    snapshot: &TopologySnapshot,
    grounding: &GroundingResult,
    deadline_ms: Option<f64>,
    hop_limit: Option<u32>,
) -> Vec<String> {
    let mut violations = Vec::new();
    if nodes.is_empty() {
        violations.push("empty path".to_string());
        return violations;
    }
    let n = snapshot.node_count();
    for &node in nodes {
        if node >= n {
            violations.push(format!("node {node} out of range"));
            return violations;
        }
    }
    for &node in nodes {
        if !grounding.node_mask[node] {
            violations.push(format!("disabled node {node} on path"));
        }
    }
    for &node in &nodes[1..nodes.len().saturating_sub(1)] {
        if grounding.transit_excluded.contains(&node) {
            violations.push(format!("transit-excluded node {node} used as intermediate hop"));
        }
    }
    let mut total_delay = 0.0;
    for w in nodes.windows(2) {
        match snapshot.edge_between(w[0], w[1]) {
            Some(edge_idx) => {
                if !grounding.edge_mask[edge_idx] {
                    violations.push(format!("disabled edge ({},{}) on path", w[0], w[1]));
                }
                total_delay += snapshot.edges[edge_idx].delay_ms;
            }
            None => violations.push(format!("no edge between {} and {}", w[0], w[1])),
        }
    }
    if let Some(d) = deadline_ms {
        if total_delay > d {
            violations.push(format!("path delay {total_delay:.3} ms exceeds deadline {d} ms"));
        }
    }
    if let Some(h) = hop_limit {
        if nodes.len() - 1 > h as usize {
            violations.push(format!("path hop count {} exceeds limit {h}", nodes.len() - 1));
        }
    }
    violations
}

/// Check a delivered packet path against every demand of the program whose
/// selector matches the packet. Same predicates as witness verification.
pub fn check_violations(
    path: &[usize],
    program: &ConstraintProgram,
    grounding: &GroundingResult,
    snapshot: &TopologySnapshot,
    catalog: &RegionCatalog,
    traffic_class: Option<&str>,
) -> Vec<String> {
    if path.is_empty() {
        return vec!["empty path".to_string()];
    }
    let (src, dst) = (path[0], *path.last().expect("nonempty"));
    let mut deadline: Option<f64> = None;
    let mut hop_limit: Option<u32> = None;
    for (idx, selector) in program.flow_selectors.iter().enumerate() {
        if !selector_matches(selector, src, dst, traffic_class, snapshot, catalog) {
            continue;
        }
        if let Some(d) = grounding.deadlines.get(&idx) {
            deadline = Some(deadline.map_or(*d, |cur: f64| cur.min(*d)));
        }
        if let Some(h) = grounding.hop_limits.get(&idx) {
            hop_limit = Some(hop_limit.map_or(*h, |cur: u32| cur.min(*h)));
        }
    }
    path_violations(path, snapshot, grounding, deadline, hop_limit)
}

/// A named constrained-routing scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub program: ConstraintProgram,
    pub active_events: BTreeSet<String>,
    /// Traffic class stamped on simulated packets.
    pub traffic_class: Option<String>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct DelayStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl DelayStats {
    fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let pick = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
        Self {
            mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
            p50_ms: pick(0.50),
            p95_ms: pick(0.95),
            max_ms: *samples.last().expect("nonempty"),
        }
    }
}

/// Aggregate outcome of one scenario evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub scenario: String,
    pub router: String,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub pairs_per_step: usize,
    pub total_pairs: usize,
    pub delivered: usize,
    pub reachable_pairs: usize,
    pub delivered_reachable: usize,
    pub raw_pdr: f64,
    pub reachability: f64,
    pub reachable_pdr: f64,
    pub violations: u64,
    pub forwarding_loops: u64,
    pub delays: DelayStats,
}

/// Run one scenario: per time step, build the snapshot, ground the program,
/// build next-hop tables, and forward seeded random OD pairs.
pub fn evaluate_scenario(
    spec: &ScenarioSpec,
    config: &WalkerConfig,
    catalog: &RegionCatalog,
    router: &dyn Router,
    seeds: &[u64],
    steps: usize,
    pairs_per_step: usize,
) -> EvalResult {
    let period = config.orbital_period_s();
    let n = config.node_count();
    let mut total_pairs = 0usize;
    let mut delivered = 0usize;
    let mut reachable_pairs = 0usize;
    let mut delivered_reachable = 0usize;
    let mut violations = 0u64;
    let mut forwarding_loops = 0u64;
    let mut delays = Vec::new();

    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for step in 0..steps {
            let time_s = period * step as f64 / steps.max(1) as f64;
            let snapshot = crate::constellation::build_snapshot(config, time_s).expect("valid config");
            let grounding = ground(&spec.program, &snapshot, catalog, &spec.active_events).expect("validated program");
            let graph = ConstrainedGraph::new(&snapshot, &grounding);

            let mut pairs = Vec::with_capacity(pairs_per_step);
            while pairs.len() < pairs_per_step {
                let src = rng.gen_range(0..n);
                let dst = rng.gen_range(0..n);
                if src != dst {
                    pairs.push((src, dst));
                }
            }
            let dsts: BTreeSet<usize> = pairs.iter().map(|&(_, d)| d).collect();
            let table = router.tables_for(&graph, &dsts);

            // Reachability ceiling via BFS, independent of the router.
            let mut reach_cache: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &(src, dst) in &pairs {
                total_pairs += 1;
                let reachable = graph.is_routable(src) && graph.is_routable(dst) && {
                    let hops = reach_cache
                        .entry(src)
                        .or_insert_with(|| bfs_hops_from(&graph, src).0);
                    hops[dst] != usize::MAX
                };
                if reachable {
                    reachable_pairs += 1;
                }
                if !graph.is_routable(src) || !graph.is_routable(dst) {
                    continue;
                }
                match forward_packet(&table, &graph, src, dst) {
                    Some(path) => {
                        delivered += 1;
                        if reachable {
                            delivered_reachable += 1;
                        }
                        let v = check_violations(
                            &path,
                            &spec.program,
                            &grounding,
                            &snapshot,
                            catalog,
                            spec.traffic_class.as_deref(),
                        );
                        violations += v.len() as u64;
                        let delay: f64 = path
                            .windows(2)
                            .map(|w| snapshot.edges[snapshot.edge_between(w[0], w[1]).expect("edge")].delay_ms)
                            .sum();
                        delays.push(delay);
                    }
                    None => {
                        if table.next_hop(src, dst).is_some() {
                            forwarding_loops += 1;
                        }
                    }
                }
            }
        }
    }

    EvalResult {
        scenario: spec.name.clone(),
        router: router.name().to_string(),
        seeds: seeds.to_vec(),
        steps,
        pairs_per_step,
        total_pairs,
        delivered,
        reachable_pairs,
        delivered_reachable,
        raw_pdr: if total_pairs > 0 {
            delivered as f64 / total_pairs as f64
        } else {
            0.0
        },
        reachability: if total_pairs > 0 {
            reachable_pairs as f64 / total_pairs as f64
        } else {
            0.0
        },
        reachable_pdr: if reachable_pairs > 0 {
            delivered_reachable as f64 / reachable_pairs as f64
        } else {
            1.0
        },
        violations,
        forwarding_loops,
        delays: DelayStats::from_samples(delays),
    }
}

/// Deterministic random graph snapshots for oracles and property tests.
pub fn random_graph_snapshot(rng: &mut ChaCha8Rng, max_nodes: usize, extra_edge_factor: f64) -> TopologySnapshot {
    let n = rng.gen_range(4..=max_nodes.max(4));
    let mut nodes = Vec::with_capacity(n);
    for id in 0..n {
        nodes.push(crate::constellation::SatelliteState {
            node_id: id,
            plane: 0,
            slot: id,
            latitude_deg: rng.gen_range(-53.0..53.0),
            longitude_deg: rng.gen_range(-180.0..180.0),
            altitude_km: 550.0,
            ecef_position_km: [0.0, 0.0, 0.0],
        });
    }
    // Random spanning tree keeps most instances connected, then extras.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for i in 1..n {
        let a = order[i];
        let b = order[rng.gen_range(0..i)];
        edges.push((a, b, rng.gen_range(1.0..10.0)));
    }
    let extras = ((n as f64) * extra_edge_factor) as usize;
    for _ in 0..extras {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.push((a, b, rng.gen_range(1.0..10.0)));
        }
    }
    // Occasionally drop connectivity so unreachable cases appear.
    if rng.gen_bool(0.15) && edges.len() > 2 {
        let cut = rng.gen_range(0..edges.len());
        edges.remove(cut);
    }
    let config = WalkerConfig {
        planes: 1,
        sats_per_plane: n,
        ..WalkerConfig::default()
    };
    TopologySnapshot::from_parts(config, 0.0, nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_snapshot, default_catalog};
    use crate::grounding::GroundingResult;

    fn line_graph(delays: &[f64]) -> TopologySnapshot {
        let n = delays.len() + 1;
        let nodes = (0..n)
            .map(|id| crate::constellation::SatelliteState {
                node_id: id,
                plane: 0,
                slot: id,
                latitude_deg: 0.0,
                longitude_deg: 0.0,
                altitude_km: 550.0,
                ecef_position_km: [0.0, 0.0, 0.0],
            })
            .collect();
        let edges = delays.iter().enumerate().map(|(i, &d)| (i, i + 1, d)).collect();
        TopologySnapshot::from_parts(
            WalkerConfig {
                planes: 1,
                sats_per_plane: n,
                ..WalkerConfig::default()
            },
            0.0,
            nodes,
            edges,
        )
    }

    fn custom_graph(n: usize, edges: Vec<(usize, usize, f64)>) -> TopologySnapshot {
        let nodes = (0..n)
            .map(|id| crate::constellation::SatelliteState {
                node_id: id,
                plane: 0,
                slot: id,
                latitude_deg: 0.0,
                longitude_deg: 0.0,
                altitude_km: 550.0,
                ecef_position_km: [0.0, 0.0, 0.0],
            })
            .collect();
        TopologySnapshot::from_parts(
            WalkerConfig {
                planes: 1,
                sats_per_plane: n,
                ..WalkerConfig::default()
            },
            0.0,
            nodes,
            edges,
        )
    }

    /// Bellman-Ford oracle, structured nothing like the Dijkstra path.
    fn bellman_ford_dist(snapshot: &TopologySnapshot, grounding: &GroundingResult, src: usize) -> Vec<f64> {
        let n = snapshot.node_count();
        let mut dist = vec![f64::INFINITY; n];
        if !grounding.node_mask[src] {
            return dist;
        }
        dist[src] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for (idx, e) in snapshot.edges.iter().enumerate() {
                if !grounding.edge_mask[idx] || !grounding.node_mask[e.u] || !grounding.node_mask[e.v] {
                    continue;
                }
                for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                    // Transit rule: relax out of `a` only if it may be interior
                    // or is the source.
                    if a != src && grounding.transit_excluded.contains(&a) {
                        continue;
                    }
                    if dist[a] + e.delay_ms < dist[b] - 1e-12 {
                        dist[b] = dist[a] + e.delay_ms;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist
    }

    #[test]
    fn trivial_paths() {
        let snap = line_graph(&[1.0, 2.0, 3.0]);
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let same = shortest_path(&graph, 2, 2).unwrap().unwrap();
        assert_eq!(same.nodes, vec![2]);
        assert_eq!(same.delay_ms, 0.0);
        let p = shortest_path(&graph, 0, 3).unwrap().unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2, 3]);
        assert!((p.delay_ms - 6.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_prefers_two_cheap_hops() {
        let snap = custom_graph(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let p = shortest_path(&graph, 0, 2).unwrap().unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2]);
        assert!((p.delay_ms - 2.0).abs() < 1e-12);
    }

    #[test]
    fn masked_endpoint_is_an_error() {
        let snap = line_graph(&[1.0, 1.0]);
        let mut g = GroundingResult::identity(&snap);
        g.node_mask[0] = false;
        g.edge_mask[0] = false;
        let graph = ConstrainedGraph::new(&snap, &g);
        assert!(matches!(shortest_path(&graph, 0, 2), Err(RouteError::MaskedEndpoint(0))));
        assert!(matches!(shortest_path(&graph, 2, 9), Err(RouteError::UnknownEndpoint(9))));
    }

    #[test]
    fn dijkstra_matches_bellman_ford_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let snap = random_graph_snapshot(&mut rng, 20, 1.5);
            let g = GroundingResult::identity(&snap);
            let graph = ConstrainedGraph::new(&snap, &g);
            let src = rng.gen_range(0..snap.node_count());
            let oracle = bellman_ford_dist(&snap, &g, src);
            let tree = dijkstra_from(&graph, src);
            for v in 0..snap.node_count() {
                let same = (tree.dist[v].is_infinite() && oracle[v].is_infinite())
                    || (tree.dist[v] - oracle[v]).abs() < 1e-9;
                assert!(same, "case {case}: dist({src}->{v}) {} vs oracle {}", tree.dist[v], oracle[v]);
            }
        }
    }

    #[test]
    fn dijkstra_matches_bellman_ford_on_the_default_shell() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let src = rng.gen_range(0..400);
            let dst = rng.gen_range(0..400);
            let oracle = bellman_ford_dist(&snap, &g, src);
            let p = shortest_path(&graph, src, dst).unwrap().unwrap();
            assert!((p.delay_ms - oracle[dst]).abs() < 1e-9);
        }
    }

    #[test]
    fn hop_layered_equals_unconstrained_with_loose_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let snap = random_graph_snapshot(&mut rng, 15, 1.2);
            let g = GroundingResult::identity(&snap);
            let graph = ConstrainedGraph::new(&snap, &g);
            let n = snap.node_count();
            let (src, dst) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let loose = hop_layered_shortest_path(&graph, src, dst, n);
            let free = shortest_path(&graph, src, dst).unwrap();
            match (loose, free) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a.delay_ms - b.delay_ms).abs() < 1e-9),
                (a, b) => panic!("mismatch: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn hop_limit_forces_expensive_direct_edge() {
        // Cheap 2-hop route vs expensive direct edge.
        let snap = custom_graph(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 50.0)]);
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let p = hop_layered_shortest_path(&graph, 0, 2, 1).unwrap();
        assert_eq!(p.nodes, vec![0, 2]);
        assert!((p.delay_ms - 50.0).abs() < 1e-12);
        let p2 = hop_layered_shortest_path(&graph, 0, 2, 2).unwrap();
        assert_eq!(p2.nodes, vec![0, 1, 2]);
    }

    /// Exhaustive minimum over simple paths with at most `max_hops` edges.
    fn brute_force_bounded(snapshot: &TopologySnapshot, src: usize, dst: usize, max_hops: usize) -> Option<f64> {
        fn dfs(
            snapshot: &TopologySnapshot,
            cur: usize,
            dst: usize,
            left: usize,
            delay: f64,
            visited: &mut Vec<bool>,
            best: &mut Option<f64>,
        ) {
            if cur == dst {
                *best = Some(best.map_or(delay, |b: f64| b.min(delay)));
                return;
            }
            if left == 0 {
                return;
            }
            for &(v, e) in &snapshot.adjacency[cur] {
                if !visited[v] {
                    visited[v] = true;
                    dfs(snapshot, v, dst, left - 1, delay + snapshot.edges[e].delay_ms, visited, best);
                    visited[v] = false;
                }
            }
        }
        let mut visited = vec![false; snapshot.node_count()];
        visited[src] = true;
        let mut best = None;
        dfs(snapshot, src, dst, max_hops, 0.0, &mut visited, &mut best);
        best
    }

    #[test]
    fn hop_layered_matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for case in 0..60 {
            let snap = random_graph_snapshot(&mut rng, 12, 1.0);
            let g = GroundingResult::identity(&snap);
            let graph = ConstrainedGraph::new(&snap, &g);
            let n = snap.node_count();
            let (src, dst) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if src == dst {
                continue;
            }
            let h = rng.gen_range(1..=6);
            let got = hop_layered_shortest_path(&graph, src, dst, h);
            let want = brute_force_bounded(&snap, src, dst, h);
            match (got, want) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert!((a.delay_ms - b).abs() < 1e-9, "case {case}: {} vs {}", a.delay_ms, b);
                    assert!(a.hops <= h);
                }
                (a, b) => panic!("case {case}: mismatch {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn four_cycle_supports_two_disjoint_paths_not_three() {
        let snap = custom_graph(4, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]);
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let two = edge_disjoint_paths(&graph, 0, 2, 2).unwrap();
        assert_eq!(two.len(), 2);
        let mut used = BTreeSet::new();
        for p in &two {
            for w in p.nodes.windows(2) {
                let e = snap.edge_between(w[0], w[1]).unwrap();
                assert!(used.insert(e), "shared edge");
            }
        }
        assert!(edge_disjoint_paths(&graph, 0, 2, 3).is_none());
    }

    #[test]
    fn line_graph_has_no_two_disjoint_paths() {
        let snap = line_graph(&[1.0, 1.0, 1.0]);
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        assert!(edge_disjoint_paths(&graph, 0, 3, 1).is_some());
        assert!(edge_disjoint_paths(&graph, 0, 3, 2).is_none());
    }

    #[test]
    fn ring_next_hop_takes_shorter_arc_with_low_id_tie_break() {
        let snap = custom_graph(4, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]);
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let table = build_routing_tables(&graph);
        assert_eq!(table.next_hop(1, 0), Some(0));
        assert_eq!(table.next_hop(3, 0), Some(0));
        // Opposite node: both arcs tie at 2.0; lowest-id neighbor wins.
        assert_eq!(table.next_hop(2, 0), Some(1));
        assert_eq!(table.next_hop(0, 0), None);
    }

    #[test]
    fn disconnected_graph_gets_unreachable_markers() {
        let snap = custom_graph(4, vec![(0, 1, 1.0), (2, 3, 1.0)]);
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let table = build_routing_tables(&graph);
        assert_eq!(table.next_hop(0, 3), None);
        assert_eq!(table.next_hop(0, 1), Some(1));
        assert!(forward_packet(&table, &graph, 0, 3).is_none());
    }

    #[test]
    fn transit_excluded_node_is_bypassed_but_usable_as_endpoint() {
        // 0-1-2 line plus detour 0-3-4-2; node 1 excluded as transit.
        let snap = custom_graph(
            5,
            vec![(0, 1, 1.0), (1, 2, 1.0), (0, 3, 5.0), (3, 4, 5.0), (4, 2, 5.0)],
        );
        let mut g = GroundingResult::identity(&snap);
        g.transit_excluded.insert(1);
        let graph = ConstrainedGraph::new(&snap, &g);
        let p = shortest_path(&graph, 0, 2).unwrap().unwrap();
        assert_eq!(p.nodes, vec![0, 3, 4, 2]);
        // As an endpoint node 1 still routes.
        let q = shortest_path(&graph, 1, 2).unwrap().unwrap();
        assert_eq!(q.nodes, vec![1, 2]);
        let table = build_routing_tables(&graph);
        let fwd = forward_packet(&table, &graph, 0, 2).unwrap();
        assert_eq!(fwd, vec![0, 3, 4, 2]);
        let from_excluded = forward_packet(&table, &graph, 1, 2).unwrap();
        assert_eq!(from_excluded, vec![1, 2]);
    }

    #[test]
    fn forwarding_on_the_shell_delivers_all_random_pairs() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let g = GroundingResult::identity(&snap);
        let graph = ConstrainedGraph::new(&snap, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pairs: Vec<(usize, usize)> = (0..100)
            .map(|_| (rng.gen_range(0..400), rng.gen_range(0..400)))
            .filter(|(a, b)| a != b)
            .collect();
        let dsts: BTreeSet<usize> = pairs.iter().map(|&(_, d)| d).collect();
        let table = DijkstraRouter.tables_for(&graph, &dsts);
        for &(src, dst) in &pairs {
            let path = forward_packet(&table, &graph, src, dst).expect("delivered");
            assert_eq!(path[0], src);
            assert_eq!(*path.last().unwrap(), dst);
            let unique: BTreeSet<usize> = path.iter().copied().collect();
            assert_eq!(unique.len(), path.len(), "loop-free");
        }
    }

    #[test]
    fn baseline_scenario_delivers_everything() {
        let spec = ScenarioSpec {
            name: "baseline".into(),
            program: ConstraintProgram::new("baseline"),
            active_events: BTreeSet::new(),
            traffic_class: None,
        };
        let result = evaluate_scenario(
            &spec,
            &WalkerConfig::default(),
            default_catalog(),
            &DijkstraRouter,
            &[1],
            3,
            40,
        );
        assert_eq!(result.raw_pdr, 1.0);
        assert_eq!(result.reachable_pdr, 1.0);
        assert_eq!(result.violations, 0);
        assert_eq!(result.forwarding_loops, 0);
        assert!(result.delays.max_ms > 0.0);
    }

    #[test]
    fn path_violation_predicates_fire() {
        let snap = line_graph(&[1.0, 1.0, 1.0]);
        let mut g = GroundingResult::identity(&snap);
        assert!(path_violations(&[0, 1, 2, 3], &snap, &g, None, None).is_empty());
        assert_eq!(path_violations(&[0, 2], &snap, &g, None, None).len(), 1);
        assert_eq!(
            path_violations(&[0, 1, 2, 3], &snap, &g, Some(2.5), None).len(),
            1,
            "deadline"
        );
        assert!(path_violations(&[0, 1, 2, 3], &snap, &g, Some(3.0), None).is_empty(), "inclusive bound");
        assert_eq!(path_violations(&[0, 1, 2, 3], &snap, &g, None, Some(2)).len(), 1);
        g.node_mask[1] = false;
        let v = path_violations(&[0, 1, 2], &snap, &g, None, None);
        assert!(v.iter().any(|m| m.contains("disabled node 1")));
        let mut g2 = GroundingResult::identity(&snap);
        g2.transit_excluded.insert(1);
        let v2 = path_violations(&[0, 1, 2], &snap, &g2, None, None);
        assert!(v2.iter().any(|m| m.contains("transit-excluded")));
        let v3 = path_violations(&[1, 2], &snap, &g2, None, None);
        assert!(v3.is_empty(), "endpoints may be excluded nodes: {v3:?}");
    }
}
