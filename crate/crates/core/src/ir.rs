//! The typed ConstraintProgram intermediate representation.
//!
//! A program is the tuple of flow selectors, hard constraints, soft
//! constraints, event conditions, objective weights, a priority level, and a
//! fallback policy. The canonical interchange form is a JSON document with
//! exactly those eight top-level keys; parsing is strict (unknown fields are
//! rejected) and collects every field-level problem instead of stopping at
//! the first.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{Map, Value};

use crate::constellation::{region_nodes, RegionCatalog, TopologySnapshot};

/// The 8 recognized traffic classes.
pub const TRAFFIC_CLASSES: [&str; 8] = [
    "financial", "emergency", "military", "consumer", "iot", "video", "voice", "bulk",
];

/// The 6 recognized event condition names.
pub const EVENT_NAMES: [&str; 6] = [
    "solar_storm",
    "eclipse",
    "ground_station_outage",
    "traffic_surge",
    "link_degradation",
    "debris_warning",
];

pub fn is_traffic_class(name: &str) -> bool {
    TRAFFIC_CLASSES.contains(&name)
}

pub fn is_event_name(name: &str) -> bool {
    EVENT_NAMES.contains(&name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Priority {
    Critical,
    High,
    Medium,
    Low,
}

impl Priority {
    pub const ALL: [Priority; 4] = [Priority::Critical, Priority::High, Priority::Medium, Priority::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Priority::Critical => "critical",
            Priority::High => "high",
            Priority::Medium => "medium",
            Priority::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FallbackPolicy {
    RejectIfHardInfeasible,
    RelaxSoftFirst,
    ReportUnsatCore,
}

impl FallbackPolicy {
    pub const ALL: [FallbackPolicy; 3] = [
        FallbackPolicy::RejectIfHardInfeasible,
        FallbackPolicy::RelaxSoftFirst,
        FallbackPolicy::ReportUnsatCore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FallbackPolicy::RejectIfHardInfeasible => "reject_if_hard_infeasible",
            FallbackPolicy::RelaxSoftFirst => "relax_soft_first",
            FallbackPolicy::ReportUnsatCore => "report_unsat_core",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

/// The 10 hard constraint types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HardType {
    DisableNode,
    DisablePlane,
    DisableEdge,
    AvoidRegion,
    AvoidLatitude,
    RerouteAway,
    MaxLatencyMs,
    MaxHops,
    KEdgeDisjoint,
    MinCapReserve,
}

impl HardType {
    pub const ALL: [HardType; 10] = [
        HardType::DisableNode,
        HardType::DisablePlane,
        HardType::DisableEdge,
        HardType::AvoidRegion,
        HardType::AvoidLatitude,
        HardType::RerouteAway,
        HardType::MaxLatencyMs,
        HardType::MaxHops,
        HardType::KEdgeDisjoint,
        HardType::MinCapReserve,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HardType::DisableNode => "disable_node",
            HardType::DisablePlane => "disable_plane",
            HardType::DisableEdge => "disable_edge",
            HardType::AvoidRegion => "avoid_region",
            HardType::AvoidLatitude => "avoid_latitude",
            HardType::RerouteAway => "reroute_away",
            HardType::MaxLatencyMs => "max_latency_ms",
            HardType::MaxHops => "max_hops",
            HardType::KEdgeDisjoint => "k_edge_disjoint",
            HardType::MinCapReserve => "min_cap_reserve",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// The target kind this constraint type must attach to.
    pub fn expected_target(self) -> TargetKind {
        match self {
            HardType::DisableNode | HardType::RerouteAway => TargetKind::Node,
            HardType::DisablePlane => TargetKind::Plane,
            HardType::DisableEdge => TargetKind::Edge,
            HardType::AvoidRegion => TargetKind::Region,
            HardType::AvoidLatitude => TargetKind::Edges,
            HardType::MaxLatencyMs | HardType::MaxHops | HardType::KEdgeDisjoint | HardType::MinCapReserve => {
                TargetKind::FlowSelector
            }
        }
    }

    /// Whether this constraint type carries a numeric value.
    pub fn requires_value(self) -> bool {
        matches!(
            self,
            HardType::AvoidLatitude
                | HardType::MaxLatencyMs
                | HardType::MaxHops
                | HardType::KEdgeDisjoint
                | HardType::MinCapReserve
        )
    }
}

/// The 5 soft constraint types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SoftType {
    MaxUtilization,
    MinimizeLatency,
    MinimizeHops,
    LoadBalance,
    PathStability,
}

impl SoftType {
    pub const ALL: [SoftType; 5] = [
        SoftType::MaxUtilization,
        SoftType::MinimizeLatency,
        SoftType::MinimizeHops,
        SoftType::LoadBalance,
        SoftType::PathStability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SoftType::MaxUtilization => "max_utilization",
            SoftType::MinimizeLatency => "minimize_latency",
            SoftType::MinimizeHops => "minimize_hops",
            SoftType::LoadBalance => "load_balance",
            SoftType::PathStability => "path_stability",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn expected_target(self) -> TargetKind {
        match self {
            SoftType::MaxUtilization | SoftType::LoadBalance => TargetKind::Edges,
            SoftType::MinimizeLatency | SoftType::MinimizeHops | SoftType::PathStability => TargetKind::FlowSelector,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Node,
    Plane,
    Edge,
    FlowSelector,
    Edges,
    Region,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Node => "node",
            TargetKind::Plane => "plane",
            TargetKind::Edge => "edge",
            TargetKind::FlowSelector => "flow_selector",
            TargetKind::Edges => "edges",
            TargetKind::Region => "region",
        }
    }
}

/// A constraint target.
///
/// Grammar: `node:<n>`, `plane:<p>`, `edge:(<u>,<v>)`, `flow_selector:<i>`,
/// `edges`, `region:<name>`. No whitespace, base-10 non-negative integers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Node(usize),
    Plane(usize),
    Edge(usize, usize),
    FlowSelector(usize),
    Edges,
    Region(String),
}

impl Target {
    pub fn kind(&self) -> TargetKind {
        match self {
            Target::Node(_) => TargetKind::Node,
            Target::Plane(_) => TargetKind::Plane,
            Target::Edge(_, _) => TargetKind::Edge,
            Target::FlowSelector(_) => TargetKind::FlowSelector,
            Target::Edges => TargetKind::Edges,
            Target::Region(_) => TargetKind::Region,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Node(n) => write!(f, "node:{n}"),
            Target::Plane(p) => write!(f, "plane:{p}"),
            Target::Edge(u, v) => write!(f, "edge:({u},{v})"),
            Target::FlowSelector(i) => write!(f, "flow_selector:{i}"),
            Target::Edges => write!(f, "edges"),
            Target::Region(r) => write!(f, "region:{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid target {text:?}: {reason}")]
pub struct TargetParseError {
    pub text: String,
    pub reason: String,
}

fn parse_index(text: &str, whole: &str) -> Result<usize, TargetParseError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(TargetParseError {
            text: whole.to_string(),
            reason: format!("expected a non-negative base-10 integer, got {text:?}"),
        });
    }
    text.parse::<usize>().map_err(|_| TargetParseError {
        text: whole.to_string(),
        reason: format!("integer out of range: {text:?}"),
    })
}

/// Parse a target string. Whitespace-intolerant.
pub fn parse_target(text: &str) -> Result<Target, TargetParseError> {
    if text == "edges" {
        return Ok(Target::Edges);
    }
    let (kind, rest) = text.split_once(':').ok_or_else(|| TargetParseError {
        text: text.to_string(),
        reason: "expected `<kind>:<payload>` or `edges`".to_string(),
    })?;
    match kind {
        "node" => Ok(Target::Node(parse_index(rest, text)?)),
        "plane" => Ok(Target::Plane(parse_index(rest, text)?)),
        "flow_selector" => Ok(Target::FlowSelector(parse_index(rest, text)?)),
        "region" => {
            if rest.is_empty() {
                Err(TargetParseError {
                    text: text.to_string(),
                    reason: "empty region name".to_string(),
                })
            } else {
                Ok(Target::Region(rest.to_string()))
            }
        }
        "edge" => {
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| TargetParseError {
                    text: text.to_string(),
                    reason: "expected `edge:(<u>,<v>)`".to_string(),
                })?;
            let (a, b) = inner.split_once(',').ok_or_else(|| TargetParseError {
                text: text.to_string(),
                reason: "expected two comma-separated node ids".to_string(),
            })?;
            Ok(Target::Edge(parse_index(a, text)?, parse_index(b, text)?))
        }
        other => Err(TargetParseError {
            text: text.to_string(),
            reason: format!("unknown target kind {other:?}"),
        }),
    }
}

/// Selects a subset of traffic flows. All fields optional; an all-absent
/// selector matches every flow. Per side, at most one of node/region/plane
/// may be set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowSelector {
    pub traffic_class: Option<String>,
    pub src_region: Option<String>,
    pub dst_region: Option<String>,
    pub src_node: Option<usize>,
    pub dst_node: Option<usize>,
    pub src_plane: Option<usize>,
    pub dst_plane: Option<usize>,
}

impl FlowSelector {
    /// Number of endpoint specifiers set on the source side.
    pub fn src_specifiers(&self) -> usize {
        [self.src_node.is_some(), self.src_region.is_some(), self.src_plane.is_some()]
            .iter()
            .filter(|b| **b)
            .count()
    }

    pub fn dst_specifiers(&self) -> usize {
        [self.dst_node.is_some(), self.dst_region.is_some(), self.dst_plane.is_some()]
            .iter()
            .filter(|b| **b)
            .count()
    }

    pub fn is_empty(&self) -> bool {
        *self == FlowSelector::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardConstraint {
    pub ctype: HardType,
    pub target: Target,
    pub value: Option<f64>,
    pub condition: Option<String>,
}

impl HardConstraint {
    pub fn new(ctype: HardType, target: Target) -> Self {
        Self {
            ctype,
            target,
            value: None,
            condition: None,
        }
    }

    pub fn with_value(ctype: HardType, target: Target, value: f64) -> Self {
        Self {
            ctype,
            target,
            value: Some(value),
            condition: None,
        }
    }

    /// Stable textual form used for canonical ordering and scoring.
    pub fn sort_key(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            self.ctype.as_str(),
            self.target,
            self.value.map(|v| format!("{v}")).unwrap_or_default(),
            self.condition.as_deref().unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftConstraint {
    pub ctype: SoftType,
    pub target: Target,
    pub value: f64,
    pub penalty_weight: f64,
}

impl SoftConstraint {
    pub fn sort_key(&self) -> String {
        format!("{}|{}|{}|{}", self.ctype.as_str(), self.target, self.value, self.penalty_weight)
    }
}

/// The program tuple. Unit of compilation, validation, and grounding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintProgram {
    pub intent_id: String,
    pub flow_selectors: Vec<FlowSelector>,
    pub hard_constraints: Vec<HardConstraint>,
    pub soft_constraints: Vec<SoftConstraint>,
    pub event_conditions: Vec<String>,
    pub objective_weights: BTreeMap<String, f64>,
    pub priority: Priority,
    pub fallback_policy: FallbackPolicy,
}

impl ConstraintProgram {
    pub fn new(intent_id: impl Into<String>) -> Self {
        Self {
            intent_id: intent_id.into(),
            flow_selectors: Vec::new(),
            hard_constraints: Vec::new(),
            soft_constraints: Vec::new(),
            event_conditions: Vec::new(),
            objective_weights: BTreeMap::new(),
            priority: Priority::Medium,
            fallback_policy: FallbackPolicy::RejectIfHardInfeasible,
        }
    }

    /// Copy with constraint and event lists in canonical (sorted) order.
    pub fn canonicalized(&self) -> Self {
        let mut p = self.clone();
        p.hard_constraints.sort_by_key(|c| c.sort_key());
        p.soft_constraints.sort_by_key(|c| c.sort_key());
        p.event_conditions.sort();
        p
    }
}

/// One field-level schema problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct ErrorSink {
    errors: Vec<SchemaError>,
}

impl ErrorSink {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(SchemaError {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn take_object<'a>(value: &'a Value, path: &str, sink: &mut ErrorSink) -> Option<&'a Map<String, Value>> {
    match value {
        Value::Object(map) => Some(map),
        other => {
            sink.push(path, format!("expected an object, got {}", json_kind(other)));
            None
        }
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn opt_string(map: &Map<String, Value>, key: &str, path: &str, sink: &mut ErrorSink) -> Option<String> {
    match map.get(key) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => {
            sink.push(format!("{path}.{key}"), format!("expected a string, got {}", json_kind(other)));
            None
        }
    }
}

fn opt_number(map: &Map<String, Value>, key: &str, path: &str, sink: &mut ErrorSink) -> Option<f64> {
    match map.get(key) {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => n.as_f64(),
        Some(other) => {
            sink.push(format!("{path}.{key}"), format!("expected a number, got {}", json_kind(other)));
            None
        }
    }
}

fn opt_index(map: &Map<String, Value>, key: &str, path: &str, sink: &mut ErrorSink) -> Option<usize> {
    match map.get(key) {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => match n.as_u64() {
            Some(v) => Some(v as usize),
            None => {
                sink.push(
                    format!("{path}.{key}"),
                    format!("expected a non-negative integer, got {n}"),
                );
                None
            }
        },
        Some(other) => {
            sink.push(
                format!("{path}.{key}"),
                format!("expected a non-negative integer, got {}", json_kind(other)),
            );
            None
        }
    }
}

fn check_unknown_keys(map: &Map<String, Value>, allowed: &[&str], path: &str, sink: &mut ErrorSink) {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            sink.push(format!("{path}.{key}"), "unknown field".to_string());
        }
    }
}

fn parse_selector(value: &Value, path: &str, sink: &mut ErrorSink) -> FlowSelector {
    let mut selector = FlowSelector::default();
    let Some(map) = take_object(value, path, sink) else {
        return selector;
    };
    check_unknown_keys(
        map,
        &["traffic_class", "src_region", "dst_region", "src_node", "dst_node", "src_plane", "dst_plane"],
        path,
        sink,
    );
    selector.traffic_class = opt_string(map, "traffic_class", path, sink);
    selector.src_region = opt_string(map, "src_region", path, sink);
    selector.dst_region = opt_string(map, "dst_region", path, sink);
    selector.src_node = opt_index(map, "src_node", path, sink);
    selector.dst_node = opt_index(map, "dst_node", path, sink);
    selector.src_plane = opt_index(map, "src_plane", path, sink);
    selector.dst_plane = opt_index(map, "dst_plane", path, sink);
    selector
}

fn parse_target_field(map: &Map<String, Value>, path: &str, sink: &mut ErrorSink) -> Option<Target> {
    match map.get("target") {
        None | Some(Value::Null) => {
            sink.push(format!("{path}.target"), "missing required field".to_string());
            None
        }
        Some(Value::String(s)) => match parse_target(s) {
            Ok(t) => Some(t),
            Err(e) => {
                sink.push(format!("{path}.target"), e.reason);
                None
            }
        },
        Some(other) => {
            sink.push(format!("{path}.target"), format!("expected a string, got {}", json_kind(other)));
            None
        }
    }
}

fn parse_hard(value: &Value, path: &str, sink: &mut ErrorSink) -> Option<HardConstraint> {
    let map = take_object(value, path, sink)?;
    check_unknown_keys(map, &["type", "target", "value", "condition"], path, sink);
    let ctype = match map.get("type") {
        None | Some(Value::Null) => {
            sink.push(format!("{path}.type"), "missing required field".to_string());
            None
        }
        Some(Value::String(s)) => match HardType::parse(s) {
            Some(t) => Some(t),
            None => {
                sink.push(format!("{path}.type"), format!("unknown hard constraint type {s:?}"));
                None
            }
        },
        Some(other) => {
            sink.push(format!("{path}.type"), format!("expected a string, got {}", json_kind(other)));
            None
        }
    };
    let target = parse_target_field(map, path, sink);
    let value_field = opt_number(map, "value", path, sink);
    let condition = opt_string(map, "condition", path, sink);
    Some(HardConstraint {
        ctype: ctype?,
        target: target?,
        value: value_field,
        condition,
    })
}

fn parse_soft(value: &Value, path: &str, sink: &mut ErrorSink) -> Option<SoftConstraint> {
    let map = take_object(value, path, sink)?;
    check_unknown_keys(map, &["type", "target", "value", "penalty_weight"], path, sink);
    let ctype = match map.get("type") {
        None | Some(Value::Null) => {
            sink.push(format!("{path}.type"), "missing required field".to_string());
            None
        }
        Some(Value::String(s)) => match SoftType::parse(s) {
            Some(t) => Some(t),
            None => {
                sink.push(format!("{path}.type"), format!("unknown soft constraint type {s:?}"));
                None
            }
        },
        Some(other) => {
            sink.push(format!("{path}.type"), format!("expected a string, got {}", json_kind(other)));
            None
        }
    };
    let target = parse_target_field(map, path, sink);
    let value_field = match map.get("value") {
        None | Some(Value::Null) => {
            sink.push(format!("{path}.value"), "missing required field".to_string());
            None
        }
        _ => opt_number(map, "value", path, sink),
    };
    let penalty_weight = opt_number(map, "penalty_weight", path, sink).unwrap_or(1.0);
    Some(SoftConstraint {
        ctype: ctype?,
        target: target?,
        value: value_field?,
        penalty_weight,
    })
}

/// Parse the canonical JSON form. Returns the fully-typed program or every
/// schema error found. Never panics on arbitrary input.
pub fn parse_program(text: &str) -> Result<ConstraintProgram, Vec<SchemaError>> {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            return Err(vec![SchemaError {
                path: "$".to_string(),
                message: format!("syntax error: {e}"),
            }])
        }
    };
    let mut sink = ErrorSink { errors: Vec::new() };
    let Some(map) = take_object(&value, "$", &mut sink) else {
        return Err(sink.errors);
    };
    check_unknown_keys(
        map,
        &[
            "intent_id",
            "flow_selectors",
            "hard_constraints",
            "soft_constraints",
            "event_conditions",
            "objective_weights",
            "priority",
            "fallback_policy",
        ],
        "$",
        &mut sink,
    );

    let intent_id = match map.get("intent_id") {
        None | Some(Value::Null) => {
            sink.push("intent_id", "missing intent_id".to_string());
            None
        }
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(Value::String(_)) => {
            sink.push("intent_id", "must be a non-empty string".to_string());
            None
        }
        Some(other) => {
            sink.push("intent_id", format!("expected a string, got {}", json_kind(other)));
            None
        }
    };

    let priority = match map.get("priority") {
        None | Some(Value::Null) => Some(Priority::Medium),
        Some(Value::String(s)) => match Priority::parse(s) {
            Some(p) => Some(p),
            None => {
                sink.push(
                    "priority",
                    format!("unknown literal {s:?} (expected critical, high, medium, or low)"),
                );
                None
            }
        },
        Some(other) => {
            sink.push("priority", format!("expected a string, got {}", json_kind(other)));
            None
        }
    };

    let fallback_policy = match map.get("fallback_policy") {
        None | Some(Value::Null) => Some(FallbackPolicy::RejectIfHardInfeasible),
        Some(Value::String(s)) => match FallbackPolicy::parse(s) {
            Some(p) => Some(p),
            None => {
                sink.push(
                    "fallback_policy",
                    format!(
                        "unknown literal {s:?} (expected reject_if_hard_infeasible, relax_soft_first, or report_unsat_core)"
                    ),
                );
                None
            }
        },
        Some(other) => {
            sink.push("fallback_policy", format!("expected a string, got {}", json_kind(other)));
            None
        }
    };

    let mut flow_selectors = Vec::new();
    match map.get("flow_selectors") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                flow_selectors.push(parse_selector(item, &format!("flow_selectors[{i}]"), &mut sink));
            }
        }
        Some(other) => sink.push("flow_selectors", format!("expected an array, got {}", json_kind(other))),
    }

    let mut hard_constraints = Vec::new();
    match map.get("hard_constraints") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                if let Some(c) = parse_hard(item, &format!("hard_constraints[{i}]"), &mut sink) {
                    hard_constraints.push(c);
                }
            }
        }
        Some(other) => sink.push("hard_constraints", format!("expected an array, got {}", json_kind(other))),
    }

    let mut soft_constraints = Vec::new();
    match map.get("soft_constraints") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                if let Some(c) = parse_soft(item, &format!("soft_constraints[{i}]"), &mut sink) {
                    soft_constraints.push(c);
                }
            }
        }
        Some(other) => sink.push("soft_constraints", format!("expected an array, got {}", json_kind(other))),
    }

    let mut event_conditions = Vec::new();
    match map.get("event_conditions") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::String(s) => event_conditions.push(s.clone()),
                    other => sink.push(
                        format!("event_conditions[{i}]"),
                        format!("expected a string, got {}", json_kind(other)),
                    ),
                }
            }
        }
        Some(other) => sink.push("event_conditions", format!("expected an array, got {}", json_kind(other))),
    }

    let mut objective_weights = BTreeMap::new();
    match map.get("objective_weights") {
        None | Some(Value::Null) => {}
        Some(Value::Object(entries)) => {
            for (k, v) in entries {
                match v.as_f64() {
                    Some(w) => {
                        objective_weights.insert(k.clone(), w);
                    }
                    None => sink.push(
                        format!("objective_weights.{k}"),
                        format!("expected a number, got {}", json_kind(v)),
                    ),
                }
            }
        }
        Some(other) => sink.push("objective_weights", format!("expected an object, got {}", json_kind(other))),
    }

    if !sink.errors.is_empty() {
        return Err(sink.errors);
    }
    Ok(ConstraintProgram {
        intent_id: intent_id.expect("checked"),
        flow_selectors,
        hard_constraints,
        soft_constraints,
        event_conditions,
        objective_weights,
        priority: priority.expect("checked"),
        fallback_policy: fallback_policy.expect("checked"),
    })
}

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn selector_value(s: &FlowSelector) -> Value {
    let mut map = Map::new();
    if let Some(v) = &s.traffic_class {
        map.insert("traffic_class".into(), Value::String(v.clone()));
    }
    if let Some(v) = &s.src_region {
        map.insert("src_region".into(), Value::String(v.clone()));
    }
    if let Some(v) = &s.dst_region {
        map.insert("dst_region".into(), Value::String(v.clone()));
    }
    if let Some(v) = s.src_node {
        map.insert("src_node".into(), Value::from(v));
    }
    if let Some(v) = s.dst_node {
        map.insert("dst_node".into(), Value::from(v));
    }
    if let Some(v) = s.src_plane {
        map.insert("src_plane".into(), Value::from(v));
    }
    if let Some(v) = s.dst_plane {
        map.insert("dst_plane".into(), Value::from(v));
    }
    Value::Object(map)
}

/// Program as a canonical JSON value: sorted constraint lists, sorted keys,
/// absent optional fields omitted.
pub fn program_to_value(p: &ConstraintProgram) -> Value {
    let canon = p.canonicalized();
    let mut map = Map::new();
    map.insert("intent_id".into(), Value::String(canon.intent_id.clone()));
    map.insert(
        "flow_selectors".into(),
        Value::Array(canon.flow_selectors.iter().map(selector_value).collect()),
    );
    map.insert(
        "hard_constraints".into(),
        Value::Array(
            canon
                .hard_constraints
                .iter()
                .map(|c| {
                    let mut m = Map::new();
                    m.insert("type".into(), Value::String(c.ctype.as_str().into()));
                    m.insert("target".into(), Value::String(c.target.to_string()));
                    if let Some(v) = c.value {
                        m.insert("value".into(), number(v));
                    }
                    if let Some(cond) = &c.condition {
                        m.insert("condition".into(), Value::String(cond.clone()));
                    }
                    Value::Object(m)
                })
                .collect(),
        ),
    );
    map.insert(
        "soft_constraints".into(),
        Value::Array(
            canon
                .soft_constraints
                .iter()
                .map(|c| {
                    let mut m = Map::new();
                    m.insert("type".into(), Value::String(c.ctype.as_str().into()));
                    m.insert("target".into(), Value::String(c.target.to_string()));
                    m.insert("value".into(), number(c.value));
                    m.insert("penalty_weight".into(), number(c.penalty_weight));
                    Value::Object(m)
                })
                .collect(),
        ),
    );
    map.insert(
        "event_conditions".into(),
        Value::Array(canon.event_conditions.iter().map(|e| Value::String(e.clone())).collect()),
    );
    map.insert(
        "objective_weights".into(),
        Value::Object(canon.objective_weights.iter().map(|(k, v)| (k.clone(), number(*v))).collect()),
    );
    map.insert("priority".into(), Value::String(canon.priority.as_str().into()));
    map.insert("fallback_policy".into(), Value::String(canon.fallback_policy.as_str().into()));
    Value::Object(map)
}

/// Canonical serialized form. Round-trip stable:
/// `parse_program(serialize_program(p)) == p.canonicalized()`.
pub fn serialize_program(p: &ConstraintProgram) -> String {
    serde_json::to_string_pretty(&program_to_value(p)).expect("canonical value serializes")
}

/// True iff every set field of the selector matches the flow.
pub fn selector_matches(
    selector: &FlowSelector,
    src: usize,
    dst: usize,
    class: Option<&str>,
    snapshot: &TopologySnapshot,
    catalog: &RegionCatalog,
) -> bool {
    if let Some(want) = &selector.traffic_class {
        match class {
            Some(c) if c.eq_ignore_ascii_case(want) => {}
            _ => return false,
        }
    }
    let spp = snapshot.config.sats_per_plane.max(1);
    if let Some(n) = selector.src_node {
        if src != n {
            return false;
        }
    }
    if let Some(n) = selector.dst_node {
        if dst != n {
            return false;
        }
    }
    if let Some(p) = selector.src_plane {
        if src / spp != p {
            return false;
        }
    }
    if let Some(p) = selector.dst_plane {
        if dst / spp != p {
            return false;
        }
    }
    if let Some(r) = &selector.src_region {
        match region_nodes(snapshot, catalog, r) {
            Ok(nodes) if nodes.contains(&src) => {}
            _ => return false,
        }
    }
    if let Some(r) = &selector.dst_region {
        match region_nodes(snapshot, catalog, r) {
            Ok(nodes) if nodes.contains(&dst) => {}
            _ => return false,
        }
    }
    true
}
