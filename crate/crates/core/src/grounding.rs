//! Grounding: mapping a validated program onto a concrete snapshot.
//!
//! Produces node/edge masks, per-edge utilization caps, per-flow deadlines,
//! hop limits, disjointness demands, capacity reservations, and the
//! transit-exclusion set. Grounding is intersective: every rule only clears
//! mask bits or tightens demands, so the result is independent of constraint
//! order and idempotent.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::constellation::{region_nodes, EdgeKind, RegionCatalog, TopologySnapshot};
use crate::ir::{ConstraintProgram, HardConstraint, HardType, SoftType, Target};

/// Masks and demands produced by grounding one program.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingResult {
    /// Node mask; `false` = disabled.
    pub node_mask: Vec<bool>,
    /// Edge mask over `snapshot.edges`; `false` = disabled.
    pub edge_mask: Vec<bool>,
    /// Per-edge utilization caps in (0, 1].
    pub util_caps: Vec<f64>,
    /// Flow selector index -> deadline (ms).
    pub deadlines: BTreeMap<usize, f64>,
    /// Flow selector index -> hop limit.
    pub hop_limits: BTreeMap<usize, u32>,
    /// Flow selector index -> demanded edge-disjoint path count.
    pub disjoint_demands: BTreeMap<usize, u32>,
    /// Flow selector index -> demanded capacity reservation fraction.
    pub cap_reserves: BTreeMap<usize, f64>,
    /// Nodes barred as intermediate hops (still usable as endpoints).
    pub transit_excluded: BTreeSet<usize>,
}

impl GroundingResult {
    pub fn identity(snapshot: &TopologySnapshot) -> Self {
        Self {
            node_mask: vec![true; snapshot.node_count()],
            edge_mask: vec![true; snapshot.edge_count()],
            util_caps: vec![1.0; snapshot.edge_count()],
            deadlines: BTreeMap::new(),
            hop_limits: BTreeMap::new(),
            disjoint_demands: BTreeMap::new(),
            cap_reserves: BTreeMap::new(),
            transit_excluded: BTreeSet::new(),
        }
    }

    pub fn masked_node_count(&self) -> usize {
        self.node_mask.iter().filter(|b| !**b).count()
    }

    pub fn masked_edge_count(&self) -> usize {
        self.edge_mask.iter().filter(|b| !**b).count()
    }

    /// True when the selector at `idx` carries any per-flow demand.
    pub fn has_flow_demands(&self, idx: usize) -> bool {
        self.deadlines.contains_key(&idx)
            || self.hop_limits.contains_key(&idx)
            || self.disjoint_demands.contains_key(&idx)
            || self.cap_reserves.contains_key(&idx)
    }

    fn disable_node(&mut self, snapshot: &TopologySnapshot, node: usize) {
        self.node_mask[node] = false;
        for &(_, edge_idx) in &snapshot.adjacency[node] {
            self.edge_mask[edge_idx] = false;
        }
    }

    /// Summary counts for reports and goldens.
    pub fn summary(&self) -> GroundingSummary {
        GroundingSummary {
            masked_nodes: self.masked_node_count(),
            masked_edges: self.masked_edge_count(),
            deadline_flows: self.deadlines.len(),
            hop_limited_flows: self.hop_limits.len(),
            disjoint_flows: self.disjoint_demands.len(),
            cap_reserve_flows: self.cap_reserves.len(),
            transit_excluded: self.transit_excluded.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingSummary {
    pub masked_nodes: usize,
    pub masked_edges: usize,
    pub deadline_flows: usize,
    pub hop_limited_flows: usize,
    pub disjoint_flows: usize,
    pub cap_reserve_flows: usize,
    pub transit_excluded: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum GroundingError {
    #[error("internal: unresolvable region {0:?} reached grounding (must be pre-validated)")]
    UnresolvedRegion(String),
    #[error("internal: {0} target {1} out of range for this snapshot")]
    OutOfRange(&'static str, String),
}

/// Constraints applicable under the given active-event set: those with no
/// condition plus those whose condition names an active event. Order stable.
pub fn active_constraints<'a>(
    program: &'a ConstraintProgram,
    active_events: &BTreeSet<String>,
) -> Vec<&'a HardConstraint> {
    program
        .hard_constraints
        .iter()
        .filter(|c| match &c.condition {
            None => true,
            Some(event) => active_events.contains(event),
        })
        .collect()
}

/// Ground a program that already passed structural validation (passes 1-4).
pub fn ground(
    program: &ConstraintProgram,
    snapshot: &TopologySnapshot,
    catalog: &RegionCatalog,
    active_events: &BTreeSet<String>,
) -> Result<GroundingResult, GroundingError> {
    let mut out = GroundingResult::identity(snapshot);
    let spp = snapshot.config.sats_per_plane;
    let n = snapshot.node_count();

    for constraint in active_constraints(program, active_events) {
        match (constraint.ctype, &constraint.target) {
            (HardType::DisableNode, Target::Node(node)) => {
                if *node >= n {
                    return Err(GroundingError::OutOfRange("disable_node", constraint.target.to_string()));
                }
                out.disable_node(snapshot, *node);
            }
            (HardType::DisablePlane, Target::Plane(plane)) => {
                let start = plane * spp;
                if start + spp > n {
                    return Err(GroundingError::OutOfRange("disable_plane", constraint.target.to_string()));
                }
                for node in start..start + spp {
                    out.disable_node(snapshot, node);
                }
            }
            (HardType::DisableEdge, Target::Edge(a, b)) => {
                let idx = snapshot
                    .edge_between(*a, *b)
                    .ok_or_else(|| GroundingError::OutOfRange("disable_edge", constraint.target.to_string()))?;
                out.edge_mask[idx] = false;
            }
            (HardType::AvoidLatitude, Target::Edges) => {
                let threshold = constraint.value.unwrap_or(90.0);
                for (idx, edge) in snapshot.edges.iter().enumerate() {
                    if edge.kind != EdgeKind::InterPlane {
                        continue;
                    }
                    let lat_u = snapshot.nodes[edge.u].latitude_deg.abs();
                    let lat_v = snapshot.nodes[edge.v].latitude_deg.abs();
                    if lat_u > threshold || lat_v > threshold {
                        out.edge_mask[idx] = false;
                    }
                }
            }
            (HardType::AvoidRegion, Target::Region(name)) => {
                let members = region_nodes(snapshot, catalog, name)
                    .map_err(|_| GroundingError::UnresolvedRegion(name.clone()))?;
                for (idx, edge) in snapshot.edges.iter().enumerate() {
                    if members.contains(&edge.u) || members.contains(&edge.v) {
                        out.edge_mask[idx] = false;
                    }
                }
            }
            (HardType::RerouteAway, Target::Node(node)) => {
                if *node >= n {
                    return Err(GroundingError::OutOfRange("reroute_away", constraint.target.to_string()));
                }
                out.transit_excluded.insert(*node);
            }
            (HardType::MaxLatencyMs, Target::FlowSelector(i)) => {
                if let Some(v) = constraint.value {
                    // Tightest bound wins so ordering cannot matter.
                    let entry = out.deadlines.entry(*i).or_insert(v);
                    *entry = entry.min(v);
                }
            }
            (HardType::MaxHops, Target::FlowSelector(i)) => {
                if let Some(v) = constraint.value {
                    let hops = v.max(0.0) as u32;
                    let entry = out.hop_limits.entry(*i).or_insert(hops);
                    *entry = (*entry).min(hops);
                }
            }
            (HardType::KEdgeDisjoint, Target::FlowSelector(i)) => {
                if let Some(v) = constraint.value {
                    let k = v.max(0.0) as u32;
                    let entry = out.disjoint_demands.entry(*i).or_insert(k);
                    *entry = (*entry).max(k);
                }
            }
            (HardType::MinCapReserve, Target::FlowSelector(i)) => {
                if let Some(v) = constraint.value {
                    let entry = out.cap_reserves.entry(*i).or_insert(v);
                    *entry = entry.max(v);
                }
            }
            // Mismatched type/target pairs are rejected by Pass 3 before
            // grounding; skip defensively.
            _ => {}
        }
    }

    for soft in &program.soft_constraints {
        if soft.ctype == SoftType::MaxUtilization {
            for cap in &mut out.util_caps {
                *cap = cap.min(soft.value);
            }
        }
    }

    // A masked endpoint disables its incident edges.
    for (idx, edge) in snapshot.edges.iter().enumerate() {
        if !out.node_mask[edge.u] || !out.node_mask[edge.v] {
            out.edge_mask[idx] = false;
        }
    }

    Ok(out)
}

/// View of the snapshot with masks applied. Transit-excluded nodes stay in
/// the vertex set but must not appear as path interiors.
#[derive(Debug, Clone)]
pub struct ConstrainedGraph<'a> {
    pub snapshot: &'a TopologySnapshot,
    pub grounding: &'a GroundingResult,
    /// Per node: (neighbor, edge index) over live edges only.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl<'a> ConstrainedGraph<'a> {
    pub fn new(snapshot: &'a TopologySnapshot, grounding: &'a GroundingResult) -> Self {
        let mut adjacency = vec![Vec::new(); snapshot.node_count()];
        for (idx, edge) in snapshot.edges.iter().enumerate() {
            if grounding.edge_mask[idx] && grounding.node_mask[edge.u] && grounding.node_mask[edge.v] {
                adjacency[edge.u].push((edge.v, idx));
                adjacency[edge.v].push((edge.u, idx));
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            snapshot,
            grounding,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.snapshot.node_count()
    }

    pub fn is_routable(&self, node: usize) -> bool {
        self.grounding.node_mask[node]
    }

    pub fn routable_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&n| self.is_routable(n))
    }

    pub fn is_transit_excluded(&self, node: usize) -> bool {
        self.grounding.transit_excluded.contains(&node)
    }

    /// Live neighbors of `node` as (neighbor, edge index).
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn edge_delay_ms(&self, edge_idx: usize) -> f64 {
        self.snapshot.edges[edge_idx].delay_ms
    }

    pub fn live_edge_count(&self) -> usize {
        self.grounding
            .edge_mask
            .iter()
            .enumerate()
            .filter(|(i, live)| {
                **live
                    && self.grounding.node_mask[self.snapshot.edges[*i].u]
                    && self.grounding.node_mask[self.snapshot.edges[*i].v]
            })
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_snapshot, default_catalog, WalkerConfig};
    use crate::ir::Target;

    fn snap_4x3() -> TopologySnapshot {
        build_snapshot(
            &WalkerConfig {
                planes: 4,
                sats_per_plane: 3,
                ..WalkerConfig::default()
            },
            0.0,
        )
        .unwrap()
    }

    fn ground_default(program: &ConstraintProgram, snapshot: &TopologySnapshot) -> GroundingResult {
        ground(program, snapshot, default_catalog(), &BTreeSet::new()).unwrap()
    }

    #[test]
    fn empty_program_is_identity() {
        let snap = snap_4x3();
        let g = ground_default(&ConstraintProgram::new("i"), &snap);
        assert_eq!(g, GroundingResult::identity(&snap));
        let view = ConstrainedGraph::new(&snap, &g);
        assert_eq!(view.routable_nodes().count(), 12);
        assert_eq!(view.live_edge_count(), snap.edge_count());
    }

    #[test]
    fn disable_plane_masks_its_slots() {
        let snap = snap_4x3();
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(1)));
        let g = ground_default(&p, &snap);
        let masked: Vec<usize> = (0..12).filter(|&n| !g.node_mask[n]).collect();
        assert_eq!(masked, vec![3, 4, 5]);
    }

    #[test]
    fn disable_node_clears_incident_edges() {
        let snap = snap_4x3();
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints.push(HardConstraint::new(HardType::DisableNode, Target::Node(0)));
        let g = ground_default(&p, &snap);
        for (idx, edge) in snap.edges.iter().enumerate() {
            if edge.u == 0 || edge.v == 0 {
                assert!(!g.edge_mask[idx]);
            } else {
                assert!(g.edge_mask[idx]);
            }
        }
        let view = ConstrainedGraph::new(&snap, &g);
        assert_eq!(view.routable_nodes().count(), 11);
        assert!(view.neighbors(0).is_empty());
    }

    #[test]
    fn avoid_latitude_90_clears_nothing() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, 90.0));
        let g = ground_default(&p, &snap);
        assert_eq!(g.masked_edge_count(), 0);
    }

    #[test]
    fn avoid_latitude_clears_only_high_interplane_edges() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let threshold = 45.0;
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, threshold));
        let g = ground_default(&p, &snap);
        for (idx, edge) in snap.edges.iter().enumerate() {
            let high = snap.nodes[edge.u].latitude_deg.abs() > threshold
                || snap.nodes[edge.v].latitude_deg.abs() > threshold;
            let expect_cleared = edge.kind == EdgeKind::InterPlane && high;
            assert_eq!(!g.edge_mask[idx], expect_cleared, "edge {idx}");
        }
        assert!(g.masked_edge_count() > 0);
    }

    #[test]
    fn avoid_region_clears_incident_edges_of_members() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let members = region_nodes(&snap, default_catalog(), "europe").unwrap();
        assert!(!members.is_empty());
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints
            .push(HardConstraint::new(HardType::AvoidRegion, Target::Region("europe".into())));
        let g = ground_default(&p, &snap);
        for (idx, edge) in snap.edges.iter().enumerate() {
            let touches = members.contains(&edge.u) || members.contains(&edge.v);
            assert_eq!(!g.edge_mask[idx], touches);
        }
        // Nodes themselves stay unmasked; avoidance clears edges only.
        assert_eq!(g.masked_node_count(), 0);
    }

    #[test]
    fn reroute_away_is_transit_only() {
        let snap = snap_4x3();
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints.push(HardConstraint::new(HardType::RerouteAway, Target::Node(5)));
        let g = ground_default(&p, &snap);
        assert!(g.node_mask[5]);
        assert!(g.transit_excluded.contains(&5));
        assert_eq!(g.masked_edge_count(), 0);
    }

    #[test]
    fn flow_demands_recorded_per_selector() {
        let snap = snap_4x3();
        let mut p = ConstraintProgram::new("i");
        p.flow_selectors.push(Default::default());
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::MaxLatencyMs, Target::FlowSelector(0), 80.0));
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::MaxHops, Target::FlowSelector(0), 5.0));
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::KEdgeDisjoint, Target::FlowSelector(0), 2.0));
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::MinCapReserve, Target::FlowSelector(0), 0.25));
        let g = ground_default(&p, &snap);
        assert_eq!(g.deadlines.get(&0), Some(&80.0));
        assert_eq!(g.hop_limits.get(&0), Some(&5));
        assert_eq!(g.disjoint_demands.get(&0), Some(&2));
        assert_eq!(g.cap_reserves.get(&0), Some(&0.25));
        assert!(g.has_flow_demands(0));
        assert!(!g.has_flow_demands(1));
    }

    #[test]
    fn soft_max_utilization_caps_all_edges() {
        let snap = snap_4x3();
        let mut p = ConstraintProgram::new("i");
        p.soft_constraints.push(crate::ir::SoftConstraint {
            ctype: SoftType::MaxUtilization,
            target: Target::Edges,
            value: 0.8,
            penalty_weight: 1.0,
        });
        let g = ground_default(&p, &snap);
        assert!(g.util_caps.iter().all(|&c| (c - 0.8).abs() < 1e-12));
    }

    #[test]
    fn inactive_event_condition_skips_constraint() {
        let snap = snap_4x3();
        let mut p = ConstraintProgram::new("i");
        let mut c = HardConstraint::new(HardType::DisableNode, Target::Node(2));
        c.condition = Some("solar_storm".into());
        p.hard_constraints.push(c);
        p.event_conditions.push("solar_storm".into());

        let inactive = ground(&p, &snap, default_catalog(), &BTreeSet::new()).unwrap();
        assert_eq!(inactive.masked_node_count(), 0);

        let events: BTreeSet<String> = ["solar_storm".to_string()].into();
        let active = ground(&p, &snap, default_catalog(), &events).unwrap();
        assert!(!active.node_mask[2]);

        assert_eq!(active_constraints(&p, &BTreeSet::new()).len(), 0);
        assert_eq!(active_constraints(&p, &events).len(), 1);
    }

    #[test]
    fn grounding_is_order_independent_and_idempotent() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let mut p = ConstraintProgram::new("i");
        p.flow_selectors.push(Default::default());
        p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(7)));
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, 45.0));
        p.hard_constraints.push(HardConstraint::new(HardType::DisableNode, Target::Node(0)));
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::MaxLatencyMs, Target::FlowSelector(0), 120.0));
        p.hard_constraints.push(HardConstraint::new(HardType::RerouteAway, Target::Node(9)));

        let base = ground_default(&p, &snap);
        // Any permutation grounds identically.
        let mut rotated = p.clone();
        rotated.hard_constraints.rotate_left(2);
        assert_eq!(ground_default(&rotated, &snap), base);
        let mut reversed = p.clone();
        reversed.hard_constraints.reverse();
        assert_eq!(ground_default(&reversed, &snap), base);
        // Grounding twice is bit-identical.
        assert_eq!(ground_default(&p, &snap), base);
    }

    #[test]
    fn adding_a_constraint_never_sets_a_cleared_bit() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints
            .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, 50.0));
        let before = ground_default(&p, &snap);
        p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(3)));
        let after = ground_default(&p, &snap);
        for i in 0..before.node_mask.len() {
            assert!(before.node_mask[i] || !after.node_mask[i]);
        }
        for i in 0..before.edge_mask.len() {
            assert!(before.edge_mask[i] || !after.edge_mask[i]);
        }
    }

    #[test]
    fn edge_bits_imply_node_bits() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let mut p = ConstraintProgram::new("i");
        p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(2)));
        p.hard_constraints.push(HardConstraint::new(HardType::DisableNode, Target::Node(321)));
        let g = ground_default(&p, &snap);
        for (idx, edge) in snap.edges.iter().enumerate() {
            if g.edge_mask[idx] {
                assert!(g.node_mask[edge.u] && g.node_mask[edge.v]);
            }
        }
    }

    #[test]
    fn nineteen_of_twenty_planes_disabled_leaves_one_ring() {
        let snap = build_snapshot(&WalkerConfig::default(), 0.0).unwrap();
        let mut p = ConstraintProgram::new("i");
        for plane in 0..20 {
            if plane != 7 {
                p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(plane)));
            }
        }
        let g = ground_default(&p, &snap);
        let view = ConstrainedGraph::new(&snap, &g);
        let routable: Vec<usize> = view.routable_nodes().collect();
        assert_eq!(routable.len(), 20);
        assert!(routable.iter().all(|&n| (140..160).contains(&n)));
        // The surviving intra-plane ring stays intact.
        assert_eq!(view.live_edge_count(), 20);
    }
}
