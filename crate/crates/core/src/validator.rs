//! The eight-pass deterministic validation pipeline.
//!
//! Passes 1-4 check structure (schema, entity existence, constraint/target
//! pairing, value ranges), passes 5-7 check semantics (conflicts, physical
//! admissibility, reachability), and pass 8 certifies feasibility by
//! constructing routing witnesses over five fragments:
//!
//! - F1: topology only (BFS reachability)
//! - F2: latency deadline (Dijkstra)
//! - F3: hop limit (bounded BFS)
//! - F4: latency + hops (hop-layered Dijkstra)
//! - F5: k edge-disjoint paths (Edmonds-Karp max-flow)
//!
//! Every accepted program carries a witness that re-verifies under an
//! independent path checker; unsupported demand combinations abstain rather
//! than accept.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::constellation::{region_nodes, EdgeKind, RegionCatalog, TopologySnapshot};
use crate::grounding::{active_constraints, ground, ConstrainedGraph, GroundingResult};
use crate::ir::{
    self, parse_program, ConstraintProgram, FallbackPolicy, HardType, SoftConstraint, SoftType, Target,
};
use crate::router::{
    bfs_hops_from, dijkstra_from, edge_disjoint_paths, hop_layered_shortest_path, path_violations, PathResult,
};

/// Latency deadlines below this physical single-hop floor are rejected.
pub const MIN_DEADLINE_MS: f64 = 2.0;
/// Universal-mode certification scans at most this many endpoint pairs per
/// flow; larger endpoint products abstain.
pub const MAX_CERTIFIED_PAIRS: usize = 400;
/// Pass 7 warning thresholds on the disabled-node fraction.
pub const CAPACITY_WARN_FRACTION: f64 = 0.50;
pub const CAPACITY_STRONG_WARN_FRACTION: f64 = 0.75;
/// Pass 6 warning threshold on the edge fraction cleared by avoid_latitude.
pub const EDGE_CLEAR_WARN_FRACTION: f64 = 0.50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PassStatus {
    Ok,
    Warning,
    Error,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct PassResult {
    pub pass: u8,
    pub name: &'static str,
    pub status: PassStatus,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    pub info: Vec<String>,
}

impl PassResult {
    fn new(pass: u8, name: &'static str) -> Self {
        Self {
            pass,
            name,
            status: PassStatus::Ok,
            errors: Vec::new(),
            warnings: Vec::new(),
            info: Vec::new(),
        }
    }

    fn skipped(pass: u8, name: &'static str) -> Self {
        Self {
            status: PassStatus::Skipped,
            ..Self::new(pass, name)
        }
    }

    fn error(&mut self, message: impl Into<String>) {
        self.errors.push(message.into());
        self.status = PassStatus::Error;
    }

    fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
        if self.status == PassStatus::Ok {
            self.status = PassStatus::Warning;
        }
    }
}

pub const PASS_NAMES: [&str; 8] = [
    "schema",
    "entity_grounding",
    "type_safety",
    "value_range",
    "conflict_detection",
    "physical_admissibility",
    "reachability",
    "feasibility_certification",
];

/// Certified fragment of the constraint space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fragment {
    F1,
    F2,
    F3,
    F4,
    F5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertDecision {
    Accept,
    Reject,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessPath {
    pub src: usize,
    pub dst: usize,
    pub nodes: Vec<usize>,
    pub delay_ms: f64,
    pub hops: usize,
}

impl WitnessPath {
    fn from_path(src: usize, dst: usize, path: PathResult) -> Self {
        Self {
            src,
            dst,
            nodes: path.nodes,
            delay_ms: path.delay_ms,
            hops: path.hops,
        }
    }
}

/// Per-flow certification outcome.
#[derive(Debug, Clone, Serialize)]
pub struct FlowCertificate {
    pub flow_index: usize,
    pub fragment: Option<Fragment>,
    pub decision: CertDecision,
    pub detail: String,
    pub paths: Vec<WitnessPath>,
}

/// Concrete per-flow routing paths proving an Accept.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub flows: Vec<FlowWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowWitness {
    pub flow_index: usize,
    pub fragment: Fragment,
    pub paths: Vec<WitnessPath>,
}

#[derive(Debug, Clone, Serialize)]
pub enum Outcome {
    Accept(Witness),
    Reject,
    Abstain,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Accept(_) => "accept",
            Outcome::Reject => "reject",
            Outcome::Abstain => "abstain",
        }
    }

    pub fn is_accept(&self) -> bool {
        matches!(self, Outcome::Accept(_))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub pass_results: Vec<PassResult>,
    /// All pass 1-7 errors, one violation per line: the repair-loop payload.
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    pub outcome: Outcome,
    pub certificates: Vec<FlowCertificate>,
    pub min_edge_delay_ms: Option<f64>,
    pub unsat_core: Option<Vec<usize>>,
    #[serde(serialize_with = "serialize_duration_ms")]
    pub elapsed: Duration,
}

fn serialize_duration_ms<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1000.0)
}

impl ValidationReport {
    /// Compiled gate: passes 1-7 produced no errors (warnings allowed).
    pub fn structurally_valid(&self) -> bool {
        self.errors.is_empty()
    }

    /// Pass numbers (1-based) whose status is Error.
    pub fn erroring_passes(&self) -> Vec<u8> {
        self.pass_results
            .iter()
            .filter(|p| p.status == PassStatus::Error)
            .map(|p| p.pass)
            .collect()
    }
}

/// Endpoint resolution semantics for region/plane flow endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EndpointMode {
    /// Every pair in the resolved endpoint sets must certify.
    #[default]
    Universal,
    /// Some pair suffices.
    Existential,
}

/// Fallback resolution for hard-infeasible programs.
#[derive(Debug, Clone, Serialize)]
pub enum FallbackResolution {
    /// Outcome was not Reject; nothing to resolve.
    PassThrough,
    /// Explicit refusal, listing the blocking errors.
    Refusal { errors: Vec<String>, note: Option<String> },
    /// Feasible after dropping the listed soft constraints.
    Relaxed {
        program_text: String,
        dropped: Vec<String>,
        outcome: String,
    },
    /// Minimal hard-constraint subset preserving infeasibility.
    UnsatCore { indices: Vec<usize>, constraints: Vec<String> },
}

pub struct Validator<'a> {
    pub snapshot: &'a TopologySnapshot,
    pub catalog: &'a RegionCatalog,
    pub active_events: BTreeSet<String>,
    pub mode: EndpointMode,
}

impl<'a> Validator<'a> {
    pub fn new(snapshot: &'a TopologySnapshot, catalog: &'a RegionCatalog) -> Self {
        Self {
            snapshot,
            catalog,
            active_events: BTreeSet::new(),
            mode: EndpointMode::Universal,
        }
    }

    pub fn with_events(mut self, events: BTreeSet<String>) -> Self {
        self.active_events = events;
        self
    }

    pub fn with_mode(mut self, mode: EndpointMode) -> Self {
        self.mode = mode;
        self
    }

    /// Validate raw serialized bytes. Parse problems become Pass 1 errors and
    /// skip the remaining passes.
    pub fn validate_source(&self, text: &str) -> ValidationReport {
        let start = Instant::now();
        match parse_program(text) {
            Ok(program) => self.validate_inner(&program, start),
            Err(schema_errors) => {
                let mut p1 = PassResult::new(1, PASS_NAMES[0]);
                for e in &schema_errors {
                    p1.error(e.to_string());
                }
                let mut pass_results = vec![p1];
                for pass in 2..=8u8 {
                    pass_results.push(PassResult::skipped(pass, PASS_NAMES[pass as usize - 1]));
                }
                let errors = schema_errors.iter().map(|e| e.to_string()).collect();
                ValidationReport {
                    pass_results,
                    errors,
                    warnings: Vec::new(),
                    outcome: Outcome::Reject,
                    certificates: Vec::new(),
                    min_edge_delay_ms: self.snapshot.min_edge_delay_ms(),
                    unsat_core: None,
                    elapsed: start.elapsed(),
                }
            }
        }
    }

    /// Validate an already-parsed program.
    pub fn validate(&self, program: &ConstraintProgram) -> ValidationReport {
        self.validate_inner(program, Instant::now())
    }

    fn validate_inner(&self, program: &ConstraintProgram, start: Instant) -> ValidationReport {
        let mut pass_results = self.structural_passes(program);
        let structural_ok = pass_results.iter().all(|p| p.status != PassStatus::Error);

        // Grounding needs validated entities; without it passes 7-8 cannot run.
        let grounding = if structural_ok {
            ground(program, self.snapshot, self.catalog, &self.active_events).ok()
        } else {
            None
        };

        let semantic = self.semantic_passes(program, grounding.as_ref());
        pass_results.extend(semantic);
        let semantic_ok = pass_results[4].status != PassStatus::Error && pass_results[5].status != PassStatus::Error;

        let mut certificates = Vec::new();
        let outcome;
        if !structural_ok || !semantic_ok || grounding.is_none() {
            pass_results.push(PassResult::skipped(8, PASS_NAMES[7]));
            outcome = Outcome::Reject;
        } else {
            let grounding = grounding.as_ref().expect("checked");
            certificates = self.certify_feasibility(program, grounding);
            let mut p8 = PassResult::new(8, PASS_NAMES[7]);
            for cert in &certificates {
                p8.info.push(format!(
                    "flow_selector:{} {} ({}){}",
                    cert.flow_index,
                    match cert.decision {
                        CertDecision::Accept => "accept",
                        CertDecision::Reject => "reject",
                        CertDecision::Abstain => "abstain",
                    },
                    cert.fragment.map(|f| format!("{f:?}")).unwrap_or_else(|| "-".into()),
                    if cert.detail.is_empty() {
                        String::new()
                    } else {
                        format!(": {}", cert.detail)
                    }
                ));
            }
            if program.flow_selectors.is_empty() {
                p8.info.push("topology-only program (no flow selectors): abstain".to_string());
                outcome = Outcome::Abstain;
            } else if certificates.iter().any(|c| c.decision == CertDecision::Reject) {
                outcome = Outcome::Reject;
            } else if certificates.iter().any(|c| c.decision == CertDecision::Abstain) {
                outcome = Outcome::Abstain;
            } else {
                let flows = certificates
                    .iter()
                    .map(|c| FlowWitness {
                        flow_index: c.flow_index,
                        fragment: c.fragment.expect("accepted flows carry a fragment"),
                        paths: c.paths.clone(),
                    })
                    .collect();
                outcome = Outcome::Accept(Witness { flows });
            }
            pass_results.push(p8);
        }

        let errors: Vec<String> = pass_results
            .iter()
            .filter(|p| p.pass <= 7)
            .flat_map(|p| p.errors.iter().cloned())
            .collect();
        let warnings: Vec<String> = pass_results.iter().flat_map(|p| p.warnings.iter().cloned()).collect();
        let outcome = if errors.is_empty() { outcome } else { Outcome::Reject };

        ValidationReport {
            pass_results,
            errors,
            warnings,
            outcome,
            certificates,
            min_edge_delay_ms: self.snapshot.min_edge_delay_ms(),
            unsat_core: None,
            elapsed: start.elapsed(),
        }
    }

    /// Passes 1-4 on a parsed program.
    pub fn structural_passes(&self, program: &ConstraintProgram) -> Vec<PassResult> {
        let n = self.snapshot.node_count();
        let planes = self.snapshot.config.planes;

        // Pass 1: structural completeness of the typed program.
        let mut p1 = PassResult::new(1, PASS_NAMES[0]);
        if program.intent_id.is_empty() {
            p1.error("missing intent_id");
        }
        for (i, sel) in program.flow_selectors.iter().enumerate() {
            if sel.src_specifiers() > 1 {
                p1.error(format!(
                    "flow_selectors[{i}]: at most one of src_node/src_region/src_plane may be set"
                ));
            }
            if sel.dst_specifiers() > 1 {
                p1.error(format!(
                    "flow_selectors[{i}]: at most one of dst_node/dst_region/dst_plane may be set"
                ));
            }
        }
        let mut seen_events = BTreeSet::new();
        for name in &program.event_conditions {
            if !seen_events.insert(name.clone()) {
                p1.error(format!("event_conditions: duplicate event {name:?}"));
            }
        }

        // Pass 2: entity existence against the constellation model.
        let mut p2 = PassResult::new(2, PASS_NAMES[1]);
        {
            let check_target = |path: String, target: &Target, p2: &mut PassResult| match target {
                Target::Node(id) => {
                    if *id >= n {
                        p2.error(format!("{path}: node {id} out of range [0,{n})"));
                    }
                }
                Target::Plane(id) => {
                    if *id >= planes {
                        p2.error(format!("{path}: plane {id} out of range [0,{planes})"));
                    }
                }
                Target::Edge(u, v) => {
                    if *u >= n || *v >= n {
                        p2.error(format!("{path}: edge ({u},{v}) references a node out of range [0,{n})"));
                    } else if self.snapshot.edge_between(*u, *v).is_none() {
                        p2.error(format!("{path}: edge ({u},{v}) does not exist in the constellation"));
                    }
                }
                Target::FlowSelector(i) => {
                    if *i >= program.flow_selectors.len() {
                        p2.error(format!(
                            "{path}: flow_selector {i} out of range [0,{})",
                            program.flow_selectors.len()
                        ));
                    }
                }
                Target::Region(name) => {
                    if !self.catalog.contains_name(name) {
                        p2.error(format!("{path}: unknown region {name:?}"));
                    }
                }
                Target::Edges => {}
            };
            for (i, c) in program.hard_constraints.iter().enumerate() {
                check_target(format!("hard_constraints[{i}].target"), &c.target, &mut p2);
            }
            for (i, c) in program.soft_constraints.iter().enumerate() {
                check_target(format!("soft_constraints[{i}].target"), &c.target, &mut p2);
            }
        }
        for (i, c) in program.hard_constraints.iter().enumerate() {
            if let Some(cond) = &c.condition {
                if !ir::is_event_name(cond) {
                    p2.error(format!("hard_constraints[{i}].condition: unknown event {cond:?}"));
                }
            }
        }
        for (i, sel) in program.flow_selectors.iter().enumerate() {
            if let Some(class) = &sel.traffic_class {
                if !ir::is_traffic_class(class) {
                    p2.error(format!(
                        "flow_selectors[{i}].traffic_class: unknown traffic class {class:?}"
                    ));
                }
            }
            for (field, value) in [("src_node", sel.src_node), ("dst_node", sel.dst_node)] {
                if let Some(id) = value {
                    if id >= n {
                        p2.error(format!("flow_selectors[{i}].{field}: node {id} out of range [0,{n})"));
                    }
                }
            }
            for (field, value) in [("src_plane", sel.src_plane), ("dst_plane", sel.dst_plane)] {
                if let Some(id) = value {
                    if id >= planes {
                        p2.error(format!("flow_selectors[{i}].{field}: plane {id} out of range [0,{planes})"));
                    }
                }
            }
            for (field, value) in [("src_region", &sel.src_region), ("dst_region", &sel.dst_region)] {
                if let Some(name) = value {
                    if !self.catalog.contains_name(name) {
                        p2.error(format!("flow_selectors[{i}].{field}: unknown region {name:?}"));
                    }
                }
            }
        }
        for name in &program.event_conditions {
            if !ir::is_event_name(name) {
                p2.error(format!("event_conditions: unknown event {name:?}"));
            }
        }

        // Pass 3: constraint/target pairing.
        let mut p3 = PassResult::new(3, PASS_NAMES[2]);
        for (i, c) in program.hard_constraints.iter().enumerate() {
            let expected = c.ctype.expected_target();
            if c.target.kind() != expected {
                p3.error(format!(
                    "hard_constraints[{i}]: {} must target {}, got {}",
                    c.ctype.as_str(),
                    expected.as_str(),
                    c.target
                ));
            }
        }
        for (i, c) in program.soft_constraints.iter().enumerate() {
            let expected = c.ctype.expected_target();
            if c.target.kind() != expected {
                p3.error(format!(
                    "soft_constraints[{i}]: {} must target {}, got {}",
                    c.ctype.as_str(),
                    expected.as_str(),
                    c.target
                ));
            }
        }

        // Pass 4: numeric ranges.
        let mut p4 = PassResult::new(4, PASS_NAMES[3]);
        for (i, c) in program.hard_constraints.iter().enumerate() {
            let path = format!("hard_constraints[{i}].value");
            match (c.ctype.requires_value(), c.value) {
                (true, None) => p4.error(format!("{path}: {} requires a value", c.ctype.as_str())),
                (true, Some(v)) => match c.ctype {
                    HardType::AvoidLatitude => {
                        if !(-90.0..=90.0).contains(&v) {
                            p4.error(format!("{path}: latitude {v} outside [-90,90]"));
                        }
                    }
                    HardType::MaxLatencyMs => {
                        if !(v > 0.0) {
                            p4.error(format!("{path}: latency {v} must be > 0"));
                        }
                    }
                    HardType::MaxHops => {
                        if v.fract() != 0.0 || v < 1.0 {
                            p4.error(format!("{path}: hop limit {v} must be an integer >= 1"));
                        }
                    }
                    HardType::KEdgeDisjoint => {
                        if v.fract() != 0.0 || v < 1.0 {
                            p4.error(format!("{path}: disjoint path count {v} must be an integer >= 1"));
                        }
                    }
                    HardType::MinCapReserve => {
                        if !(v > 0.0 && v <= 1.0) {
                            p4.error(format!("{path}: capacity reservation {v} outside (0,1]"));
                        }
                    }
                    _ => {}
                },
                (false, Some(_)) => {
                    p4.warn(format!("{path}: {} ignores its value", c.ctype.as_str()));
                }
                (false, None) => {}
            }
        }
        for (i, c) in program.soft_constraints.iter().enumerate() {
            if c.ctype == SoftType::MaxUtilization && !(c.value > 0.0 && c.value <= 1.0) {
                p4.error(format!(
                    "soft_constraints[{i}].value: utilization cap {} outside (0,1]",
                    c.value
                ));
            }
            if c.penalty_weight < 0.0 {
                p4.error(format!(
                    "soft_constraints[{i}].penalty_weight: {} must be >= 0",
                    c.penalty_weight
                ));
            }
        }
        for (name, w) in &program.objective_weights {
            if *w < 0.0 {
                p4.error(format!("objective_weights.{name}: {w} must be >= 0"));
            }
        }

        vec![p1, p2, p3, p4]
    }

    /// Passes 5-7. Pass 7 needs a grounding; without one it is skipped.
    pub fn semantic_passes(&self, program: &ConstraintProgram, grounding: Option<&GroundingResult>) -> Vec<PassResult> {
        let n = self.snapshot.node_count();
        let spp = self.snapshot.config.sats_per_plane;
        let active = active_constraints(program, &self.active_events);

        // Pass 5: contradictions within the program.
        let mut p5 = PassResult::new(5, PASS_NAMES[4]);
        let mut disabled: BTreeSet<usize> = BTreeSet::new();
        for c in &active {
            match (c.ctype, &c.target) {
                (HardType::DisableNode, Target::Node(id)) if *id < n => {
                    disabled.insert(*id);
                }
                (HardType::DisablePlane, Target::Plane(p)) if p * spp < n => {
                    disabled.extend(p * spp..((p + 1) * spp).min(n));
                }
                _ => {}
            }
        }
        for (i, sel) in program.flow_selectors.iter().enumerate() {
            for (field, value) in [("src_node", sel.src_node), ("dst_node", sel.dst_node)] {
                if let Some(id) = value {
                    if disabled.contains(&id) {
                        p5.error(format!(
                            "flow_selectors[{i}].{field}: node {id} is disabled by the same program"
                        ));
                    }
                }
            }
        }
        let mut latency_bounds: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for c in &active {
            if c.ctype == HardType::MaxLatencyMs {
                if let (Target::FlowSelector(i), Some(v)) = (&c.target, c.value) {
                    latency_bounds.entry(*i).or_default().push(v);
                }
            }
        }
        for (i, bounds) in &latency_bounds {
            if bounds.len() > 1 {
                let distinct: BTreeSet<u64> = bounds.iter().map(|v| v.to_bits()).collect();
                if distinct.len() > 1 {
                    let list = bounds.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
                    p5.error(format!("flow_selector:{i}: conflicting latency bounds ({list})"));
                } else {
                    p5.warn(format!("flow_selector:{i}: duplicate latency bound {}", bounds[0]));
                }
            }
        }

        // Pass 6: physical admissibility. Deadline values are intrinsic, so
        // they are checked whether or not their event condition is active.
        let mut p6 = PassResult::new(6, PASS_NAMES[5]);
        if let Some(min_delay) = self.snapshot.min_edge_delay_ms() {
            p6.info.push(format!("snapshot minimum single-hop delay: {min_delay:.3} ms"));
        }
        for (i, c) in program.hard_constraints.iter().enumerate() {
            if c.ctype == HardType::MaxLatencyMs {
                if let Some(v) = c.value {
                    if v > 0.0 && v < MIN_DEADLINE_MS {
                        p6.error(format!(
                            "hard_constraints[{i}].value: deadline {v} ms is below the {MIN_DEADLINE_MS} ms single-hop physical minimum"
                        ));
                    }
                }
            }
        }
        let total_edges = self.snapshot.edge_count();
        for c in &active {
            if c.ctype == HardType::AvoidLatitude {
                if let Some(theta) = c.value {
                    let cleared = self
                        .snapshot
                        .edges
                        .iter()
                        .filter(|e| {
                            e.kind == EdgeKind::InterPlane
                                && (self.snapshot.nodes[e.u].latitude_deg.abs() > theta
                                    || self.snapshot.nodes[e.v].latitude_deg.abs() > theta)
                        })
                        .count();
                    if total_edges > 0 {
                        let fraction = cleared as f64 / total_edges as f64;
                        p6.info.push(format!(
                            "avoid_latitude {theta}: clears {cleared}/{total_edges} edges ({:.1}%)",
                            fraction * 100.0
                        ));
                        if fraction > EDGE_CLEAR_WARN_FRACTION {
                            p6.warn(format!(
                                "avoid_latitude {theta} clears {:.1}% of edges (> {:.0}%)",
                                fraction * 100.0,
                                EDGE_CLEAR_WARN_FRACTION * 100.0
                            ));
                        }
                    }
                }
            }
        }

        // Pass 7: reachability on the constrained graph. Heuristic warnings
        // only; never errors, never changes the outcome.
        let p7 = match grounding {
            None => PassResult::skipped(7, PASS_NAMES[6]),
            Some(grounding) => {
                let mut p7 = PassResult::new(7, PASS_NAMES[6]);
                let graph = ConstrainedGraph::new(self.snapshot, grounding);
                let disabled_fraction = if n > 0 {
                    grounding.masked_node_count() as f64 / n as f64
                } else {
                    0.0
                };
                if disabled_fraction >= CAPACITY_STRONG_WARN_FRACTION {
                    p7.warn(format!(
                        "severe capacity loss: {:.1}% of nodes disabled (>= 75%)",
                        disabled_fraction * 100.0
                    ));
                } else if disabled_fraction >= CAPACITY_WARN_FRACTION {
                    p7.warn(format!(
                        "capacity loss: {:.1}% of nodes disabled (>= 50%)",
                        disabled_fraction * 100.0
                    ));
                }
                let components = count_components(&graph);
                p7.info.push(format!(
                    "routable nodes: {}, live edges: {}, components: {components}",
                    n - grounding.masked_node_count(),
                    graph.live_edge_count()
                ));
                if components > 1 {
                    p7.warn(format!("constrained graph is disconnected ({components} components)"));
                }
                p7
            }
        };

        vec![p5, p6, p7]
    }

    /// Pass 8: per demanded flow, pick a fragment and construct a witness.
    pub fn certify_feasibility(&self, program: &ConstraintProgram, grounding: &GroundingResult) -> Vec<FlowCertificate> {
        let graph = ConstrainedGraph::new(self.snapshot, grounding);
        let mut certificates = Vec::new();
        for (idx, selector) in program.flow_selectors.iter().enumerate() {
            certificates.push(self.certify_flow(idx, selector, grounding, &graph));
        }
        certificates
    }

    fn resolve_side(&self, node: Option<usize>, plane: Option<usize>, region: &Option<String>) -> Vec<usize> {
        let n = self.snapshot.node_count();
        let spp = self.snapshot.config.sats_per_plane;
        if let Some(id) = node {
            return vec![id];
        }
        if let Some(p) = plane {
            return (p * spp..((p + 1) * spp).min(n)).collect();
        }
        if let Some(r) = region {
            return region_nodes(self.snapshot, self.catalog, r)
                .map(|s| s.into_iter().collect())
                .unwrap_or_default();
        }
        (0..n).collect()
    }

    fn certify_flow(
        &self,
        flow_index: usize,
        selector: &crate::ir::FlowSelector,
        grounding: &GroundingResult,
        graph: &ConstrainedGraph<'_>,
    ) -> FlowCertificate {
        let deadline = grounding.deadlines.get(&flow_index).copied();
        let hop_limit = grounding.hop_limits.get(&flow_index).copied();
        let disjoint = grounding.disjoint_demands.get(&flow_index).copied();
        let cap_reserve = grounding.cap_reserves.get(&flow_index).copied();

        let abstain = |detail: String| FlowCertificate {
            flow_index,
            fragment: None,
            decision: CertDecision::Abstain,
            detail,
            paths: Vec::new(),
        };

        if cap_reserve.is_some() {
            return abstain("min_cap_reserve is outside the certified fragments".into());
        }
        if disjoint.is_some() && (deadline.is_some() || hop_limit.is_some()) {
            return abstain("k-disjoint combined with latency/hop bounds is outside the certified fragments".into());
        }
        let fragment = match (deadline, hop_limit, disjoint) {
            (None, None, Some(_)) => Fragment::F5,
            (Some(_), Some(_), None) => Fragment::F4,
            (Some(_), None, None) => Fragment::F2,
            (None, Some(_), None) => Fragment::F3,
            (None, None, None) => Fragment::F1,
            _ => unreachable!("mixed combinations abstain above"),
        };

        let src_set = self.resolve_side(selector.src_node, selector.src_plane, &selector.src_region);
        let dst_set = self.resolve_side(selector.dst_node, selector.dst_plane, &selector.dst_region);
        if src_set.is_empty() || dst_set.is_empty() {
            return abstain("flow selector resolves to an empty endpoint set".into());
        }
        let product = src_set.len().saturating_mul(dst_set.len());
        if product > MAX_CERTIFIED_PAIRS {
            return abstain(format!(
                "endpoint product {product} exceeds the {MAX_CERTIFIED_PAIRS}-pair certification cap"
            ));
        }

        // Search from the smaller side; paths reverse cleanly because the
        // graph is undirected and the transit rule is endpoint-symmetric.
        let (sources, targets, swapped) = if dst_set.len() < src_set.len() {
            (&dst_set, &src_set, true)
        } else {
            (&src_set, &dst_set, false)
        };

        enum Search {
            Tree(crate::router::DijkstraTree),
            Hops(Vec<usize>, Vec<Option<(usize, usize)>>),
            PerPair,
        }

        let mut paths: Vec<WitnessPath> = Vec::new();
        let universal = self.mode == EndpointMode::Universal;
        let mut first_failure: Option<String> = None;
        let mut accepted_any = false;
        let mut any_pair = false;

        'outer: for &s in sources {
            let search = match fragment {
                Fragment::F2 => Search::Tree(dijkstra_from(graph, s)),
                Fragment::F1 | Fragment::F3 => {
                    let (hops, pred) = bfs_hops_from(graph, s);
                    Search::Hops(hops, pred)
                }
                Fragment::F4 | Fragment::F5 => Search::PerPair,
            };
            for &t in targets {
                if s == t {
                    continue;
                }
                any_pair = true;
                let (src, dst) = if swapped { (t, s) } else { (s, t) };
                let fail = |reason: String, first_failure: &mut Option<String>| {
                    if first_failure.is_none() {
                        *first_failure = Some(format!("pair ({src},{dst}): {reason}"));
                    }
                };
                let mut pair_ok = false;
                if !graph.is_routable(src) || !graph.is_routable(dst) {
                    fail("endpoint disabled by the program".into(), &mut first_failure);
                } else {
                    match (&search, fragment) {
                        (Search::Tree(tree), Fragment::F2) => {
                            let d = deadline.expect("F2 has a deadline");
                            match tree.path_to(t) {
                                Some(p) if p.delay_ms <= d => {
                                    paths.push(oriented(src, dst, p, swapped));
                                    pair_ok = true;
                                }
                                Some(p) => fail(
                                    format!("minimum delay {:.3} ms exceeds deadline {d} ms", p.delay_ms),
                                    &mut first_failure,
                                ),
                                None => fail("unreachable on the constrained graph".into(), &mut first_failure),
                            }
                        }
                        (Search::Hops(hops, pred), Fragment::F1) => {
                            if hops[t] == usize::MAX {
                                fail("unreachable on the constrained graph".into(), &mut first_failure);
                            } else if let Some(p) = reconstruct(s, t, pred, graph) {
                                paths.push(oriented(src, dst, p, swapped));
                                pair_ok = true;
                            }
                        }
                        (Search::Hops(hops, pred), Fragment::F3) => {
                            let h = hop_limit.expect("F3 has a hop limit") as usize;
                            if hops[t] == usize::MAX {
                                fail("unreachable on the constrained graph".into(), &mut first_failure);
                            } else if hops[t] > h {
                                fail(format!("minimum hop count {} exceeds limit {h}", hops[t]), &mut first_failure);
                            } else if let Some(p) = reconstruct(s, t, pred, graph) {
                                paths.push(oriented(src, dst, p, swapped));
                                pair_ok = true;
                            }
                        }
                        (Search::PerPair, Fragment::F4) => {
                            let d = deadline.expect("F4 has a deadline");
                            let h = hop_limit.expect("F4 has a hop limit") as usize;
                            match hop_layered_shortest_path(graph, src, dst, h) {
                                Some(p) if p.delay_ms <= d => {
                                    paths.push(WitnessPath::from_path(src, dst, p));
                                    pair_ok = true;
                                }
                                Some(p) => fail(
                                    format!(
                                        "best delay within {h} hops is {:.3} ms, exceeding deadline {d} ms",
                                        p.delay_ms
                                    ),
                                    &mut first_failure,
                                ),
                                None => fail(format!("no path within {h} hops"), &mut first_failure),
                            }
                        }
                        (Search::PerPair, Fragment::F5) => {
                            let k = disjoint.expect("F5 has a demand") as usize;
                            match edge_disjoint_paths(graph, src, dst, k) {
                                Some(found) => {
                                    for p in found {
                                        paths.push(WitnessPath::from_path(src, dst, p));
                                    }
                                    pair_ok = true;
                                }
                                None => fail(
                                    format!("max-flow below the demanded {k} edge-disjoint paths"),
                                    &mut first_failure,
                                ),
                            }
                        }
                        _ => unreachable!("search matches fragment"),
                    }
                }
                if pair_ok {
                    accepted_any = true;
                    if !universal {
                        break 'outer;
                    }
                } else if universal {
                    break 'outer;
                }
            }
        }

        if !any_pair {
            return abstain("flow selector resolves to no distinct endpoint pairs".into());
        }
        let decision = if universal {
            if first_failure.is_none() {
                CertDecision::Accept
            } else {
                CertDecision::Reject
            }
        } else if accepted_any {
            CertDecision::Accept
        } else {
            CertDecision::Reject
        };
        FlowCertificate {
            flow_index,
            fragment: Some(fragment),
            decision,
            detail: match decision {
                CertDecision::Accept => format!("{} path(s) certified", paths.len()),
                _ => first_failure.unwrap_or_default(),
            },
            paths: if decision == CertDecision::Accept { paths } else { Vec::new() },
        }
    }

    /// Resolve the fallback policy for a hard-infeasible program.
    pub fn resolve_fallback(&self, program: &ConstraintProgram, report: &ValidationReport) -> FallbackResolution {
        if !matches!(report.outcome, Outcome::Reject) {
            return FallbackResolution::PassThrough;
        }
        match program.fallback_policy {
            FallbackPolicy::RejectIfHardInfeasible => FallbackResolution::Refusal {
                errors: refusal_lines(report),
                note: None,
            },
            FallbackPolicy::RelaxSoftFirst => {
                // Drop softs in increasing penalty weight; hard constraints
                // are never touched.
                let mut order: Vec<usize> = (0..program.soft_constraints.len()).collect();
                order.sort_by(|&a, &b| {
                    let ca = &program.soft_constraints[a];
                    let cb = &program.soft_constraints[b];
                    ca.penalty_weight
                        .partial_cmp(&cb.penalty_weight)
                        .expect("finite weights")
                        .then_with(|| ca.sort_key().cmp(&cb.sort_key()))
                });
                let mut current = program.clone();
                let mut dropped: Vec<SoftConstraint> = Vec::new();
                for &victim in &order {
                    let constraint = &program.soft_constraints[victim];
                    current.soft_constraints.retain(|c| c.sort_key() != constraint.sort_key());
                    dropped.push(constraint.clone());
                    let retry = self.validate(&current);
                    if !matches!(retry.outcome, Outcome::Reject) {
                        return FallbackResolution::Relaxed {
                            program_text: ir::serialize_program(&current),
                            dropped: dropped.iter().map(|c| c.sort_key()).collect(),
                            outcome: retry.outcome.label().to_string(),
                        };
                    }
                }
                FallbackResolution::Refusal {
                    errors: refusal_lines(report),
                    note: Some("infeasibility persists after relaxing all soft constraints".to_string()),
                }
            }
            FallbackPolicy::ReportUnsatCore => {
                let indices = self.unsat_core(program);
                let constraints = indices.iter().map(|&i| program.hard_constraints[i].sort_key()).collect();
                FallbackResolution::UnsatCore { indices, constraints }
            }
        }
    }

    /// Deletion-based minimization: drop each hard constraint in turn and
    /// keep the removal whenever the program stays infeasible.
    fn unsat_core(&self, program: &ConstraintProgram) -> Vec<usize> {
        let mut kept: Vec<usize> = (0..program.hard_constraints.len()).collect();
        for candidate in 0..program.hard_constraints.len() {
            if !kept.contains(&candidate) {
                continue;
            }
            let trial: Vec<usize> = kept.iter().copied().filter(|&i| i != candidate).collect();
            let mut sub = program.clone();
            sub.hard_constraints = trial.iter().map(|&i| program.hard_constraints[i].clone()).collect();
            let report = self.validate(&sub);
            if matches!(report.outcome, Outcome::Reject) {
                kept = trial;
            }
        }
        kept
    }
}

fn oriented(src: usize, dst: usize, path: PathResult, swapped: bool) -> WitnessPath {
    if swapped {
        let mut nodes = path.nodes;
        nodes.reverse();
        WitnessPath {
            src,
            dst,
            delay_ms: path.delay_ms,
            hops: path.hops,
            nodes,
        }
    } else {
        WitnessPath::from_path(src, dst, path)
    }
}

fn refusal_lines(report: &ValidationReport) -> Vec<String> {
    if report.errors.is_empty() {
        report
            .certificates
            .iter()
            .filter(|c| c.decision == CertDecision::Reject)
            .map(|c| format!("flow_selector:{}: {}", c.flow_index, c.detail))
            .collect()
    } else {
        report.errors.clone()
    }
}

fn reconstruct(src: usize, dst: usize, pred: &[Option<(usize, usize)>], graph: &ConstrainedGraph<'_>) -> Option<PathResult> {
    let mut nodes = vec![dst];
    let mut delay = 0.0;
    let mut cur = dst;
    while cur != src {
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

fn count_components(graph: &ConstrainedGraph<'_>) -> usize {
    let n = graph.node_count();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] || !graph.is_routable(start) {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    components
}

/// Independent witness re-check. Shares no code with the pass-8 searches:
/// it only evaluates path predicates (continuity, masks, transit exclusion,
/// deadline, hop limit) and pairwise edge-disjointness.
pub fn verify_witness(
    witness: &Witness,
    snapshot: &TopologySnapshot,
    grounding: &GroundingResult,
) -> (bool, Vec<String>) {
    let mut violations = Vec::new();
    for flow in &witness.flows {
        let deadline = grounding.deadlines.get(&flow.flow_index).copied();
        let hop_limit = grounding.hop_limits.get(&flow.flow_index).copied();
        for path in &flow.paths {
            if path.nodes.first() != Some(&path.src) || path.nodes.last() != Some(&path.dst) {
                violations.push(format!(
                    "flow {}: path endpoints disagree with pair ({},{})",
                    flow.flow_index, path.src, path.dst
                ));
                continue;
            }
            for v in path_violations(&path.nodes, snapshot, grounding, deadline, hop_limit) {
                violations.push(format!("flow {}: {v}", flow.flow_index));
            }
        }
        if let Some(k) = grounding.disjoint_demands.get(&flow.flow_index) {
            let mut by_pair: BTreeMap<(usize, usize), Vec<&WitnessPath>> = BTreeMap::new();
            for path in &flow.paths {
                by_pair.entry((path.src, path.dst)).or_default().push(path);
            }
            for ((src, dst), group) in by_pair {
                if group.len() < *k as usize {
                    violations.push(format!(
                        "flow {}: pair ({src},{dst}) has {} paths, demanded {k}",
                        flow.flow_index,
                        group.len()
                    ));
                }
                let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
                for path in group {
                    for w in path.nodes.windows(2) {
                        let key = (w[0].min(w[1]), w[0].max(w[1]));
                        if !used.insert(key) {
                            violations.push(format!(
                                "flow {}: pair ({src},{dst}) shares edge ({},{}) between paths",
                                flow.flow_index, key.0, key.1
                            ));
                        }
                    }
                }
            }
        }
    }
    (violations.is_empty(), violations)
}
