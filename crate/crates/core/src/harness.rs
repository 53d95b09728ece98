//! Benchmark loading, scoring, audits, and evaluation protocols.
//!
//! Ships a 40-entry desk benchmark (14 single, 14 compositional, 6
//! conditional, 6 infeasible), the four-metric hierarchical scoring rubric,
//! the 8-type corruption audit, the 15-case adversarial suite, validator
//! runtime measurement, the standard end-to-end scenarios, and the
//! plane-removal severity sweep. Everything is seeded and deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::compiler::{self, BackendKind, ChatBackend, CompilerConfig, HttpBackend, MockBackend, Shots};
use crate::constellation::{RegionCatalog, TopologySnapshot, WalkerConfig};
use crate::ir::{
    self, parse_program, program_to_value, serialize_program, ConstraintProgram, FlowSelector, HardConstraint,
    HardType, SoftConstraint, SoftType, Target,
};
use crate::router::{evaluate_scenario, EvalResult, Router, ScenarioSpec};
use crate::validator::{Outcome, PassStatus, ValidationReport, Validator};

const BENCHMARK_JSON: &str = include_str!("../assets/benchmark_desk.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Category {
    Single,
    Compositional,
    Conditional,
    Infeasible,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Single,
        Category::Compositional,
        Category::Conditional,
        Category::Infeasible,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Single => "single",
            Category::Compositional => "compositional",
            Category::Conditional => "conditional",
            Category::Infeasible => "infeasible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkEntry {
    pub id: String,
    pub category: Category,
    pub intent_text: String,
    pub program: ConstraintProgram,
    pub difficulty: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark file is not a JSON array")]
    NotAnArray,
    #[error("entry {0}: missing or invalid field {1}")]
    BadField(usize, &'static str),
    #[error("entry {0}: ground truth does not parse: {1}")]
    BadGroundTruth(usize, String),
    #[error("failed to read benchmark: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse benchmark JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn load_benchmark(text: &str) -> Result<Vec<BenchmarkEntry>, BenchError> {
    let value: Value = serde_json::from_str(text)?;
    let items = value.as_array().ok_or(BenchError::NotAnArray)?;
    let mut entries = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let id = item["id"].as_str().ok_or(BenchError::BadField(i, "id"))?.to_string();
        let category = item["category"]
            .as_str()
            .and_then(Category::parse)
            .ok_or(BenchError::BadField(i, "category"))?;
        let intent_text = item["intent_text"]
            .as_str()
            .ok_or(BenchError::BadField(i, "intent_text"))?
            .to_string();
        let difficulty = item["difficulty"].as_str().unwrap_or("medium").to_string();
        let tags = item["tags"]
            .as_array()
            .map(|a| a.iter().filter_map(|t| t.as_str().map(str::to_string)).collect())
            .unwrap_or_default();
        let program_text = serde_json::to_string(&item["constraint_program"])?;
        let program = parse_program(&program_text).map_err(|errs| {
            BenchError::BadGroundTruth(i, errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
        })?;
        entries.push(BenchmarkEntry {
            id,
            category,
            intent_text,
            program,
            difficulty,
            tags,
        });
    }
    Ok(entries)
}

pub fn load_benchmark_file(path: &std::path::Path) -> Result<Vec<BenchmarkEntry>, BenchError> {
    load_benchmark(&std::fs::read_to_string(path)?)
}

/// The benchmark shipped with the artifact.
pub fn builtin_benchmark() -> Vec<BenchmarkEntry> {
    load_benchmark(BENCHMARK_JSON).expect("shipped benchmark is valid")
}

// Scoring -------------------------------------------------------------------

/// `isclose` with rel_tol = abs_tol = 1e-6.
pub fn numeric_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= f64::max(1e-6 * f64::max(a.abs(), b.abs()), 1e-6)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub compiled: bool,
    pub types_match: bool,
    pub targets_match: bool,
    pub full_match: bool,
    pub diffs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct ConstraintView {
    ctype: String,
    target: String,
    value: Option<f64>,
    condition: Option<String>,
}

fn constraint_views(p: &ConstraintProgram) -> Vec<ConstraintView> {
    let mut views: Vec<ConstraintView> = p
        .hard_constraints
        .iter()
        .map(|c| ConstraintView {
            ctype: c.ctype.as_str().to_string(),
            target: c.target.to_string().to_ascii_lowercase(),
            value: c.value,
            condition: c.condition.as_ref().map(|s| s.to_ascii_lowercase()),
        })
        .chain(p.soft_constraints.iter().map(|c| ConstraintView {
            ctype: c.ctype.as_str().to_string(),
            target: c.target.to_string().to_ascii_lowercase(),
            value: Some(c.value),
            condition: None,
        }))
        .collect();
    // Canonical sort by string representation.
    views.sort_by_key(|v| format!("{}|{}|{}|{}", v.ctype, v.target, v.value.map(|x| x.to_string()).unwrap_or_default(), v.condition.clone().unwrap_or_default()));
    views
}

/// Hierarchical rubric: compiled -> types -> targets -> full. Constraint
/// lists compare as sorted multisets; values use 1e-6 relative/absolute
/// tolerance; strings compare case-insensitively.
pub fn score_program(candidate: Option<&ConstraintProgram>, structurally_valid: bool, truth: &ConstraintProgram) -> ScoreReport {
    let mut diffs = Vec::new();
    let compiled = candidate.is_some() && structurally_valid;
    if !compiled {
        diffs.push("candidate missing or structurally invalid".to_string());
        return ScoreReport {
            compiled: false,
            types_match: false,
            targets_match: false,
            full_match: false,
            diffs,
        };
    }
    let cand = constraint_views(candidate.expect("checked"));
    let want = constraint_views(truth);

    let mut cand_types: Vec<&str> = cand.iter().map(|v| v.ctype.as_str()).collect();
    let mut want_types: Vec<&str> = want.iter().map(|v| v.ctype.as_str()).collect();
    cand_types.sort_unstable();
    want_types.sort_unstable();
    let types_match = cand_types == want_types;
    if !types_match {
        diffs.push(format!("constraint types {cand_types:?} != {want_types:?}"));
    }

    let mut targets_match = types_match;
    if types_match {
        let cand_pairs: Vec<(&str, &str)> = cand.iter().map(|v| (v.ctype.as_str(), v.target.as_str())).collect();
        let want_pairs: Vec<(&str, &str)> = want.iter().map(|v| (v.ctype.as_str(), v.target.as_str())).collect();
        if cand_pairs != want_pairs {
            targets_match = false;
            for (c, w) in cand_pairs.iter().zip(&want_pairs) {
                if c != w {
                    diffs.push(format!("target {}:{} != {}:{}", c.0, c.1, w.0, w.1));
                }
            }
        }
    }

    let mut full_match = targets_match;
    if targets_match {
        for (c, w) in cand.iter().zip(&want) {
            let value_ok = match (c.value, w.value) {
                (None, None) => true,
                (Some(a), Some(b)) => numeric_close(a, b),
                _ => false,
            };
            if !value_ok {
                full_match = false;
                diffs.push(format!(
                    "value mismatch on {} {}: {:?} != {:?}",
                    c.ctype, c.target, c.value, w.value
                ));
            }
            let cond_ok = c.condition == w.condition;
            if !cond_ok {
                full_match = false;
                diffs.push(format!(
                    "condition mismatch on {} {}: {:?} != {:?}",
                    c.ctype, c.target, c.condition, w.condition
                ));
            }
        }
    }

    ScoreReport {
        compiled,
        types_match,
        targets_match,
        full_match,
        diffs,
    }
}

// Corruption audit ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum CorruptionType {
    MissingIntentId,
    InvalidPriority,
    OutOfRangeNode,
    InvalidTrafficClass,
    TypeMismatch,
    NegativeLatency,
    LatencyBelowMinimum,
    InvalidPlane,
}

impl CorruptionType {
    pub const ALL: [CorruptionType; 8] = [
        CorruptionType::MissingIntentId,
        CorruptionType::InvalidPriority,
        CorruptionType::OutOfRangeNode,
        CorruptionType::InvalidTrafficClass,
        CorruptionType::TypeMismatch,
        CorruptionType::NegativeLatency,
        CorruptionType::LatencyBelowMinimum,
        CorruptionType::InvalidPlane,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionType::MissingIntentId => "missing_intent_id",
            CorruptionType::InvalidPriority => "invalid_priority",
            CorruptionType::OutOfRangeNode => "out_of_range_node",
            CorruptionType::InvalidTrafficClass => "invalid_traffic_class",
            CorruptionType::TypeMismatch => "type_mismatch",
            CorruptionType::NegativeLatency => "negative_latency",
            CorruptionType::LatencyBelowMinimum => "latency_below_minimum",
            CorruptionType::InvalidPlane => "invalid_plane",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CorruptionSpec {
    pub ctype: CorruptionType,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Corrupted {
    pub text: String,
    pub field_path: String,
    pub injected: String,
    /// Substring a detection error must mention.
    pub needle: String,
}

#[derive(Debug, Error)]
pub enum CorruptionError {
    #[error("program has no field of the kind required by {0:?}")]
    Inapplicable(CorruptionType),
}

enum Site {
    HardTarget(usize),
    HardValue(usize),
    Selector(usize, &'static str),
    TopLevel,
}

fn corruption_sites(value: &Value, ctype: CorruptionType) -> Vec<Site> {
    let hards = value["hard_constraints"].as_array().cloned().unwrap_or_default();
    let selectors = value["flow_selectors"].as_array().cloned().unwrap_or_default();
    let mut sites = Vec::new();
    match ctype {
        CorruptionType::MissingIntentId | CorruptionType::InvalidPriority => sites.push(Site::TopLevel),
        CorruptionType::OutOfRangeNode => {
            for (i, c) in hards.iter().enumerate() {
                let target = c["target"].as_str().unwrap_or("");
                if target.starts_with("node:") || target.starts_with("edge:(") {
                    sites.push(Site::HardTarget(i));
                }
            }
            for (i, s) in selectors.iter().enumerate() {
                for field in ["src_node", "dst_node"] {
                    if s.get(field).is_some() {
                        sites.push(Site::Selector(i, if field == "src_node" { "src_node" } else { "dst_node" }));
                    }
                }
            }
        }
        CorruptionType::InvalidTrafficClass => {
            for (i, _) in selectors.iter().enumerate() {
                sites.push(Site::Selector(i, "traffic_class"));
            }
        }
        CorruptionType::TypeMismatch => {
            for (i, _) in hards.iter().enumerate() {
                sites.push(Site::HardTarget(i));
            }
        }
        CorruptionType::NegativeLatency | CorruptionType::LatencyBelowMinimum => {
            for (i, c) in hards.iter().enumerate() {
                if c["type"].as_str() == Some("max_latency_ms") {
                    sites.push(Site::HardValue(i));
                }
            }
        }
        CorruptionType::InvalidPlane => {
            for (i, c) in hards.iter().enumerate() {
                if c["target"].as_str().unwrap_or("").starts_with("plane:") {
                    sites.push(Site::HardTarget(i));
                }
            }
            for (i, s) in selectors.iter().enumerate() {
                for field in ["src_plane", "dst_plane"] {
                    if s.get(field).is_some() {
                        sites.push(Site::Selector(i, if field == "src_plane" { "src_plane" } else { "dst_plane" }));
                    }
                }
            }
        }
    }
    sites
}

fn mismatched_target(ctype: &str) -> &'static str {
    match HardType::parse(ctype).map(|t| t.expected_target()) {
        Some(crate::ir::TargetKind::FlowSelector) => "node:42",
        Some(crate::ir::TargetKind::Node) => "edges",
        Some(crate::ir::TargetKind::Plane) => "node:42",
        Some(crate::ir::TargetKind::Edge) => "flow_selector:0",
        Some(crate::ir::TargetKind::Region) => "edges",
        _ => "node:42",
    }
}

/// Inject a single-field corruption into a valid program, returning the
/// corrupted serialized text. The seed picks the injection site.
pub fn corrupt_program(program: &ConstraintProgram, spec: CorruptionSpec) -> Result<Corrupted, CorruptionError> {
    let mut value = program_to_value(program);
    let n = 400; // injected ids follow the default 20x20 shell
    let planes = 20;
    let sites = corruption_sites(&value, spec.ctype);
    if sites.is_empty() {
        return Err(CorruptionError::Inapplicable(spec.ctype));
    }
    let site = &sites[(spec.seed as usize) % sites.len()];
    let map = value.as_object_mut().expect("canonical form is an object");

    let (field_path, injected, needle) = match (spec.ctype, site) {
        (CorruptionType::MissingIntentId, _) => {
            map.remove("intent_id");
            ("intent_id".to_string(), "<removed>".to_string(), "intent_id".to_string())
        }
        (CorruptionType::InvalidPriority, _) => {
            map.insert("priority".into(), Value::String("urgent".into()));
            ("priority".to_string(), "urgent".to_string(), "urgent".to_string())
        }
        (CorruptionType::OutOfRangeNode, Site::HardTarget(i)) => {
            let bad = n + 54;
            let target = map["hard_constraints"][*i]["target"].as_str().expect("target").to_string();
            let new_target = if let Some(rest) = target.strip_prefix("edge:(") {
                let second = rest.split_once(',').map(|(_, b)| b.trim_end_matches(')')).unwrap_or("0");
                format!("edge:({bad},{second})")
            } else {
                format!("node:{bad}")
            };
            map["hard_constraints"][*i]["target"] = Value::String(new_target.clone());
            (format!("hard_constraints[{i}].target"), new_target, bad.to_string())
        }
        (CorruptionType::OutOfRangeNode, Site::Selector(i, field)) => {
            let bad = n + 54;
            map["flow_selectors"][*i][*field] = Value::from(bad);
            (format!("flow_selectors[{i}].{field}"), bad.to_string(), bad.to_string())
        }
        (CorruptionType::InvalidTrafficClass, Site::Selector(i, _)) => {
            map["flow_selectors"][*i]["traffic_class"] = Value::String("gaming".into());
            (format!("flow_selectors[{i}].traffic_class"), "gaming".to_string(), "gaming".to_string())
        }
        (CorruptionType::TypeMismatch, Site::HardTarget(i)) => {
            let ctype = map["hard_constraints"][*i]["type"].as_str().expect("type").to_string();
            let wrong = mismatched_target(&ctype);
            map["hard_constraints"][*i]["target"] = Value::String(wrong.to_string());
            (format!("hard_constraints[{i}].target"), wrong.to_string(), "must target".to_string())
        }
        (CorruptionType::NegativeLatency, Site::HardValue(i)) => {
            map["hard_constraints"][*i]["value"] = Value::from(-50.0);
            (format!("hard_constraints[{i}].value"), "-50.0".to_string(), "-50".to_string())
        }
        (CorruptionType::LatencyBelowMinimum, Site::HardValue(i)) => {
            map["hard_constraints"][*i]["value"] = Value::from(0.5);
            (format!("hard_constraints[{i}].value"), "0.5".to_string(), "0.5".to_string())
        }
        (CorruptionType::InvalidPlane, Site::HardTarget(i)) => {
            let bad = planes + 5;
            map["hard_constraints"][*i]["target"] = Value::String(format!("plane:{bad}"));
            (format!("hard_constraints[{i}].target"), format!("plane:{bad}"), format!("plane {bad}"))
        }
        (CorruptionType::InvalidPlane, Site::Selector(i, field)) => {
            let bad = planes + 5;
            map["flow_selectors"][*i][*field] = Value::from(bad);
            (format!("flow_selectors[{i}].{field}"), bad.to_string(), format!("plane {bad}"))
        }
        _ => unreachable!("site kinds match corruption types"),
    };

    Ok(Corrupted {
        text: serde_json::to_string_pretty(&value).expect("serializable"),
        field_path,
        injected,
        needle,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CorruptionTypeResult {
    pub ctype: String,
    pub injected: usize,
    pub detected: usize,
    pub caught_by_passes: Vec<u8>,
    pub missed: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorruptionAuditReport {
    pub schema_version: u32,
    pub per_type: Vec<CorruptionTypeResult>,
    pub total_injected: usize,
    pub total_detected: usize,
    /// Pass number -> corruption types it flagged.
    pub pass_coverage: BTreeMap<u8, Vec<String>>,
    pub all_detected: bool,
    /// Every pass 1-6 flags at least one corruption type.
    pub passes_1_to_6_covered: bool,
}

/// 8 corruption types x `n_per_type` seeded injections over the feasible
/// benchmark entries. Detection requires outcome Reject plus an error naming
/// the corrupted field.
pub fn run_corruption_audit(entries: &[BenchmarkEntry], validator: &Validator<'_>, n_per_type: usize) -> CorruptionAuditReport {
    let candidates: Vec<&BenchmarkEntry> = entries.iter().filter(|e| e.category != Category::Infeasible).collect();
    let mut per_type = Vec::new();
    let mut pass_coverage: BTreeMap<u8, BTreeSet<String>> = BTreeMap::new();
    let mut total_detected = 0;
    let mut total_injected = 0;

    for ctype in CorruptionType::ALL {
        let applicable: Vec<&&BenchmarkEntry> = candidates
            .iter()
            .filter(|e| !corruption_sites(&program_to_value(&e.program), ctype).is_empty())
            .collect();
        let mut result = CorruptionTypeResult {
            ctype: ctype.as_str().to_string(),
            injected: 0,
            detected: 0,
            caught_by_passes: Vec::new(),
            missed: Vec::new(),
        };
        let mut caught: BTreeSet<u8> = BTreeSet::new();
        for k in 0..n_per_type {
            let entry = applicable[k % applicable.len()];
            let corrupted = corrupt_program(&entry.program, CorruptionSpec { ctype, seed: k as u64 })
                .expect("applicability pre-checked");
            result.injected += 1;
            total_injected += 1;
            let report = validator.validate_source(&corrupted.text);
            let rejected = matches!(report.outcome, Outcome::Reject);
            let named = report.errors.iter().any(|e| e.contains(&corrupted.needle));
            if rejected && named {
                result.detected += 1;
                total_detected += 1;
                for pass in report.erroring_passes() {
                    caught.insert(pass);
                    pass_coverage.entry(pass).or_default().insert(ctype.as_str().to_string());
                }
            } else {
                result.missed.push(format!(
                    "{} on {} (outcome {}, needle {:?} found: {named})",
                    corrupted.field_path,
                    entry.id,
                    report.outcome.label(),
                    corrupted.needle
                ));
            }
        }
        result.caught_by_passes = caught.into_iter().collect();
        per_type.push(result);
    }

    let passes_1_to_6_covered = (1..=6u8).all(|p| pass_coverage.contains_key(&p));
    CorruptionAuditReport {
        schema_version: 1,
        per_type,
        total_injected,
        total_detected,
        all_detected: total_detected == total_injected,
        pass_coverage: pass_coverage.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        passes_1_to_6_covered,
    }
}

// Confusion matrix ----------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConfusionRow {
    pub total: usize,
    pub accept: usize,
    pub reject: usize,
    pub abstain: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfusionReport {
    pub schema_version: u32,
    pub rows: BTreeMap<String, ConfusionRow>,
    pub total: ConfusionRow,
    pub unsafe_acceptances: usize,
    pub decided_rate: f64,
}

/// Validator-only confusion matrix over ground-truth programs.
pub fn run_confusion(entries: &[BenchmarkEntry], validator: &Validator<'_>) -> ConfusionReport {
    let mut rows: BTreeMap<String, ConfusionRow> = Category::ALL
        .iter()
        .map(|c| (c.as_str().to_string(), ConfusionRow::default()))
        .collect();
    let mut total = ConfusionRow::default();
    let mut unsafe_acceptances = 0;
    for entry in entries {
        let report = validator.validate(&entry.program);
        let row = rows.get_mut(entry.category.as_str()).expect("all categories present");
        row.total += 1;
        total.total += 1;
        match report.outcome {
            Outcome::Accept(_) => {
                row.accept += 1;
                total.accept += 1;
                if entry.category == Category::Infeasible {
                    unsafe_acceptances += 1;
                }
            }
            Outcome::Reject => {
                row.reject += 1;
                total.reject += 1;
            }
            Outcome::Abstain => {
                row.abstain += 1;
                total.abstain += 1;
            }
        }
    }
    let decided_rate = if total.total > 0 {
        (total.accept + total.reject) as f64 / total.total as f64
    } else {
        0.0
    };
    ConfusionReport {
        schema_version: 1,
        rows,
        total,
        unsafe_acceptances,
        decided_rate,
    }
}

// Benchmark runs (compiler in the loop) --------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AblationMode {
    #[default]
    Full,
    NoVerifier,
    NoRepair,
    ZeroShot,
}

impl AblationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Self::Full),
            "no-verifier" | "no_verifier" => Some(Self::NoVerifier),
            "no-repair" | "no_repair" => Some(Self::NoRepair),
            "zero-shot" | "zero_shot" => Some(Self::ZeroShot),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoVerifier => "no-verifier",
            Self::NoRepair => "no-repair",
            Self::ZeroShot => "zero-shot",
        }
    }

    /// (shots, max_retries, verifier gate) for this configuration.
    pub fn apply(self, base: &CompilerConfig) -> (CompilerConfig, bool) {
        let mut config = base.clone();
        let gate = match self {
            Self::Full => {
                config.shots = Shots::Six;
                config.max_retries = 3;
                true
            }
            Self::NoVerifier => {
                config.shots = Shots::Six;
                config.max_retries = 0;
                false
            }
            Self::NoRepair => {
                config.shots = Shots::Six;
                config.max_retries = 0;
                true
            }
            Self::ZeroShot => {
                config.shots = Shots::Zero;
                config.max_retries = 3;
                true
            }
        };
        (config, gate)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchEntryResult {
    pub id: String,
    pub category: String,
    pub compiled: bool,
    pub types_match: bool,
    pub targets_match: bool,
    pub full_match: bool,
    pub outcome: String,
    pub attempts: usize,
    pub first_try: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CategoryAggregate {
    pub n: usize,
    pub compiled: usize,
    pub types_match: usize,
    pub targets_match: usize,
    pub full_match: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRunReport {
    pub schema_version: u32,
    pub mode: String,
    pub backend: String,
    pub entries: Vec<BenchEntryResult>,
    pub per_category: BTreeMap<String, CategoryAggregate>,
    pub overall: CategoryAggregate,
    pub unsafe_acceptances: usize,
    pub first_try_rate: f64,
}

/// Compile every benchmark intent with the configured backend and score it
/// against ground truth. For infeasible entries "compiled" only requires a
/// parseable program.
pub fn run_bench(
    entries: &[BenchmarkEntry],
    base_config: &CompilerConfig,
    mode: AblationMode,
    validator: &Validator<'_>,
) -> Result<BenchRunReport, compiler::TransportError> {
    let (config, gate) = mode.apply(base_config);
    let mut results = Vec::new();
    let mut per_category: BTreeMap<String, CategoryAggregate> = Category::ALL
        .iter()
        .map(|c| (c.as_str().to_string(), CategoryAggregate::default()))
        .collect();
    let mut overall = CategoryAggregate::default();
    let mut unsafe_acceptances = 0;
    let mut first_tries = 0;

    for entry in entries {
        let mut http;
        let mut mock;
        let backend: &mut dyn ChatBackend = match config.backend {
            BackendKind::Llm => {
                http = HttpBackend::new(config.timeout_s)?;
                &mut http
            }
            _ => {
                mock = MockBackend::default();
                &mut mock
            }
        };
        let (candidate, trace) = if gate || config.backend == BackendKind::RuleBased {
            let (result, trace) = compiler::compile(&entry.intent_text, &config, backend, validator);
            (result.ok(), trace)
        } else {
            // No-verifier mode: accept the first extractable parse.
            let messages = compiler::build_prompt(&config, &entry.intent_text);
            match backend.complete(&messages, &config) {
                Ok(raw) => {
                    let candidate = compiler::extract_payload(&raw).ok().and_then(|text| parse_program(&text).ok());
                    (candidate, Default::default())
                }
                Err(e) => return Err(e),
            }
        };

        let (outcome_label, structurally_valid, accepted) = match &candidate {
            Some(program) => {
                let report = validator.validate(program);
                let accepted = report.outcome.is_accept();
                (report.outcome.label().to_string(), report.structurally_valid(), accepted)
            }
            None => ("failed".to_string(), false, false),
        };
        if accepted && entry.category == Category::Infeasible {
            unsafe_acceptances += 1;
        }
        // Infeasible intents only need a parseable program to count as
        // compiled.
        let compiled_flag = if entry.category == Category::Infeasible {
            candidate.is_some()
        } else {
            structurally_valid
        };
        let score = score_program(candidate.as_ref(), compiled_flag, &entry.program);
        if trace.first_try {
            first_tries += 1;
        }

        let agg = per_category.get_mut(entry.category.as_str()).expect("category row");
        for (bucket, flag) in [
            (&mut agg.compiled, score.compiled),
            (&mut agg.types_match, score.types_match),
            (&mut agg.targets_match, score.targets_match),
            (&mut agg.full_match, score.full_match),
        ] {
            if flag {
                *bucket += 1;
            }
        }
        agg.n += 1;
        overall.n += 1;
        if score.compiled {
            overall.compiled += 1;
        }
        if score.types_match {
            overall.types_match += 1;
        }
        if score.targets_match {
            overall.targets_match += 1;
        }
        if score.full_match {
            overall.full_match += 1;
        }

        results.push(BenchEntryResult {
            id: entry.id.clone(),
            category: entry.category.as_str().to_string(),
            compiled: score.compiled,
            types_match: score.types_match,
            targets_match: score.targets_match,
            full_match: score.full_match,
            outcome: outcome_label,
            attempts: trace.attempts.len(),
            first_try: trace.first_try,
        });
    }

    Ok(BenchRunReport {
        schema_version: 1,
        mode: mode.as_str().to_string(),
        backend: match base_config.backend {
            BackendKind::RuleBased => "rule_based",
            BackendKind::Llm => "llm",
            BackendKind::Mock => "mock",
        }
        .to_string(),
        entries: results,
        per_category,
        overall,
        unsafe_acceptances,
        first_try_rate: if entries.is_empty() {
            0.0
        } else {
            first_tries as f64 / entries.len() as f64
        },
    })
}

// Adversarial suite ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AdversarialFamily {
    ResourceExhaustion,
    SemanticConflict,
    BoundaryExploitation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Expectation {
    /// Outcome must be Reject.
    Reject,
    /// The named pass must error (implies Reject).
    ErrorInPass(u8),
    /// The severe-capacity warning must fire and the outcome must not be
    /// Accept.
    StrongWarningNoAccept,
}

pub struct AdversarialCase {
    pub id: &'static str,
    pub family: AdversarialFamily,
    pub description: &'static str,
    pub program: ConstraintProgram,
    pub expectation: Expectation,
}

fn flow(src: Option<usize>, dst: Option<usize>) -> FlowSelector {
    FlowSelector {
        src_node: src,
        dst_node: dst,
        ..FlowSelector::default()
    }
}

/// The shipped 15-case suite: 5 resource exhaustion, 5 semantic conflicts,
/// 5 boundary exploitation.
pub fn adversarial_cases() -> Vec<AdversarialCase> {
    let mut cases = Vec::new();

    // Resource exhaustion.
    let mut p = ConstraintProgram::new("adv-a1");
    for plane in 0..20 {
        if plane != 7 {
            p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(plane)));
        }
    }
    p.flow_selectors.push(FlowSelector {
        src_plane: Some(2),
        dst_plane: Some(12),
        ..FlowSelector::default()
    });
    cases.push(AdversarialCase {
        id: "a1_nineteen_planes_with_flow",
        family: AdversarialFamily::ResourceExhaustion,
        description: "disable 19/20 planes and demand a flow across dead planes",
        program: p,
        expectation: Expectation::Reject,
    });

    let mut p = ConstraintProgram::new("adv-a2");
    for plane in 0..20 {
        if plane != 7 {
            p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(plane)));
        }
    }
    cases.push(AdversarialCase {
        id: "a2_nineteen_planes_topology_only",
        family: AdversarialFamily::ResourceExhaustion,
        description: "disable 19/20 planes with no flow demand",
        program: p,
        expectation: Expectation::StrongWarningNoAccept,
    });

    let mut p = ConstraintProgram::new("adv-a3");
    for plane in 0..15 {
        p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(plane)));
    }
    cases.push(AdversarialCase {
        id: "a3_fifteen_planes_topology_only",
        family: AdversarialFamily::ResourceExhaustion,
        description: "disable 15/20 planes (75% capacity loss boundary)",
        program: p,
        expectation: Expectation::StrongWarningNoAccept,
    });

    let mut p = ConstraintProgram::new("adv-a4");
    for (u, v) in [(0usize, 1usize), (0, 19), (0, 20), (0, 380)] {
        p.hard_constraints.push(HardConstraint::new(HardType::DisableEdge, Target::Edge(u, v)));
    }
    p.flow_selectors.push(flow(Some(0), Some(210)));
    cases.push(AdversarialCase {
        id: "a4_edge_flood_isolates_source",
        family: AdversarialFamily::ResourceExhaustion,
        description: "disable every ISL of node 0, then demand a flow from it",
        program: p,
        expectation: Expectation::Reject,
    });

    let mut p = ConstraintProgram::new("adv-a5");
    p.flow_selectors.push(flow(Some(100), Some(300)));
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::KEdgeDisjoint, Target::FlowSelector(0), 4.0));
    p.hard_constraints.push(HardConstraint::new(HardType::DisableEdge, Target::Edge(100, 101)));
    cases.push(AdversarialCase {
        id: "a5_disjoint_demand_exceeds_cut",
        family: AdversarialFamily::ResourceExhaustion,
        description: "demand 4 disjoint paths after removing one incident edge",
        program: p,
        expectation: Expectation::Reject,
    });

    // Semantic conflicts.
    let mut p = ConstraintProgram::new("adv-b1");
    p.flow_selectors.push(flow(Some(7), Some(100)));
    p.hard_constraints.push(HardConstraint::new(HardType::DisableNode, Target::Node(7)));
    cases.push(AdversarialCase {
        id: "b1_disable_own_source",
        family: AdversarialFamily::SemanticConflict,
        description: "disable a node while using it as a flow source",
        program: p,
        expectation: Expectation::ErrorInPass(5),
    });

    let mut p = ConstraintProgram::new("adv-b2");
    p.flow_selectors.push(flow(Some(100), Some(65)));
    p.hard_constraints.push(HardConstraint::new(HardType::DisablePlane, Target::Plane(3)));
    cases.push(AdversarialCase {
        id: "b2_disable_destination_via_plane",
        family: AdversarialFamily::SemanticConflict,
        description: "disable the destination's whole plane",
        program: p,
        expectation: Expectation::ErrorInPass(5),
    });

    let mut p = ConstraintProgram::new("adv-b3");
    p.flow_selectors.push(flow(Some(0), Some(50)));
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::MaxLatencyMs, Target::FlowSelector(0), 80.0));
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::MaxLatencyMs, Target::FlowSelector(0), 40.0));
    cases.push(AdversarialCase {
        id: "b3_conflicting_latency_bounds",
        family: AdversarialFamily::SemanticConflict,
        description: "two different latency bounds on the same selector",
        program: p,
        expectation: Expectation::ErrorInPass(5),
    });

    let mut p = ConstraintProgram::new("adv-b4");
    p.flow_selectors.push(FlowSelector {
        src_region: Some("europe".into()),
        dst_node: Some(399),
        ..FlowSelector::default()
    });
    p.hard_constraints
        .push(HardConstraint::new(HardType::AvoidRegion, Target::Region("europe".into())));
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::MaxLatencyMs, Target::FlowSelector(0), 100.0));
    cases.push(AdversarialCase {
        id: "b4_avoid_region_of_own_source",
        family: AdversarialFamily::SemanticConflict,
        description: "avoid the region the flow originates in",
        program: p,
        expectation: Expectation::Reject,
    });

    let mut p = ConstraintProgram::new("adv-b5");
    p.flow_selectors.push(flow(Some(5), Some(210)));
    p.hard_constraints.push(HardConstraint::new(HardType::DisableNode, Target::Node(210)));
    cases.push(AdversarialCase {
        id: "b5_disable_own_destination",
        family: AdversarialFamily::SemanticConflict,
        description: "disable a node while using it as a flow destination",
        program: p,
        expectation: Expectation::ErrorInPass(5),
    });

    // Boundary exploitation.
    let mut p = ConstraintProgram::new("adv-c1");
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, -90.0001));
    cases.push(AdversarialCase {
        id: "c1_latitude_below_negative_ninety",
        family: AdversarialFamily::BoundaryExploitation,
        description: "latitude threshold just below -90",
        program: p,
        expectation: Expectation::ErrorInPass(4),
    });

    let mut p = ConstraintProgram::new("adv-c2");
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, 90.0001));
    cases.push(AdversarialCase {
        id: "c2_latitude_above_ninety",
        family: AdversarialFamily::BoundaryExploitation,
        description: "latitude threshold just above 90",
        program: p,
        expectation: Expectation::ErrorInPass(4),
    });

    let mut p = ConstraintProgram::new("adv-c3");
    p.flow_selectors.push(flow(Some(0), Some(1)));
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::MaxLatencyMs, Target::FlowSelector(0), 1.9999));
    cases.push(AdversarialCase {
        id: "c3_deadline_just_below_floor",
        family: AdversarialFamily::BoundaryExploitation,
        description: "deadline 1.9999 ms, just under the 2.0 ms physical floor",
        program: p,
        expectation: Expectation::ErrorInPass(6),
    });

    let mut p = ConstraintProgram::new("adv-c4");
    p.soft_constraints.push(SoftConstraint {
        ctype: SoftType::MaxUtilization,
        target: Target::Edges,
        value: 1.0000001,
        penalty_weight: 1.0,
    });
    cases.push(AdversarialCase {
        id: "c4_utilization_above_one",
        family: AdversarialFamily::BoundaryExploitation,
        description: "utilization cap epsilon above 1.0",
        program: p,
        expectation: Expectation::ErrorInPass(4),
    });

    let mut p = ConstraintProgram::new("adv-c5");
    p.flow_selectors.push(flow(Some(0), Some(9)));
    p.hard_constraints
        .push(HardConstraint::with_value(HardType::MaxHops, Target::FlowSelector(0), 0.0));
    cases.push(AdversarialCase {
        id: "c5_zero_hop_limit",
        family: AdversarialFamily::BoundaryExploitation,
        description: "hop limit zero",
        program: p,
        expectation: Expectation::ErrorInPass(4),
    });

    cases
}

#[derive(Debug, Clone, Serialize)]
pub struct AdversarialCaseResult {
    pub id: String,
    pub family: AdversarialFamily,
    pub description: String,
    pub outcome: String,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdversarialReport {
    pub schema_version: u32,
    pub cases: Vec<AdversarialCaseResult>,
    pub flagged: usize,
    pub total: usize,
}

fn expectation_met(expectation: Expectation, report: &ValidationReport) -> bool {
    match expectation {
        Expectation::Reject => matches!(report.outcome, Outcome::Reject),
        Expectation::ErrorInPass(pass) => {
            report
                .pass_results
                .iter()
                .any(|p| p.pass == pass && p.status == PassStatus::Error)
                && matches!(report.outcome, Outcome::Reject)
        }
        Expectation::StrongWarningNoAccept => {
            report.warnings.iter().any(|w| w.contains(">= 75%")) && !report.outcome.is_accept()
        }
    }
}

pub fn run_adversarial(validator: &Validator<'_>) -> AdversarialReport {
    let cases = adversarial_cases();
    let total = cases.len();
    let mut results = Vec::with_capacity(total);
    let mut flagged = 0;
    for case in cases {
        let report = validator.validate(&case.program);
        let ok = expectation_met(case.expectation, &report);
        if ok {
            flagged += 1;
        }
        results.push(AdversarialCaseResult {
            id: case.id.to_string(),
            family: case.family,
            description: case.description.to_string(),
            outcome: report.outcome.label().to_string(),
            flagged: ok,
        });
    }
    AdversarialReport {
        schema_version: 1,
        cases: results,
        flagged,
        total,
    }
}

// Runtime measurement ---------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RuntimeRow {
    pub label: String,
    pub n: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RuntimeReport {
    pub schema_version: u32,
    pub rows: Vec<RuntimeRow>,
}

fn runtime_row(label: &str, mut samples: Vec<f64>) -> RuntimeRow {
    if samples.is_empty() {
        return RuntimeRow {
            label: label.to_string(),
            n: 0,
            median_ms: 0.0,
            p95_ms: 0.0,
            max_ms: 0.0,
        };
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let pick = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
    RuntimeRow {
        label: label.to_string(),
        n: samples.len(),
        median_ms: pick(0.5),
        p95_ms: pick(0.95),
        max_ms: *samples.last().expect("nonempty"),
    }
}

/// Wall-clock validate time per benchmark entry, split by flow-selector
/// presence and by certification outcome.
pub fn measure_runtime(entries: &[BenchmarkEntry], validator: &Validator<'_>) -> RuntimeReport {
    let texts: Vec<String> = entries.iter().map(|e| serialize_program(&e.program)).collect();
    let mut all = Vec::new();
    let mut with_flows = Vec::new();
    let mut topology_only = Vec::new();
    let mut by_outcome: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for (entry, text) in entries.iter().zip(&texts) {
        let start = Instant::now();
        let report = validator.validate_source(text);
        let ms = start.elapsed().as_secs_f64() * 1000.0;
        all.push(ms);
        if entry.program.flow_selectors.is_empty() {
            topology_only.push(ms);
        } else {
            with_flows.push(ms);
        }
        by_outcome
            .entry(match report.outcome {
                Outcome::Accept(_) => "accepted",
                Outcome::Reject => "rejected",
                Outcome::Abstain => "abstain",
            })
            .or_default()
            .push(ms);
    }
    let mut rows = vec![
        runtime_row("all_programs", all),
        runtime_row("with_flow_selectors", with_flows),
        runtime_row("topology_only", topology_only),
    ];
    for label in ["accepted", "rejected", "abstain"] {
        rows.push(runtime_row(label, by_outcome.remove(label).unwrap_or_default()));
    }
    RuntimeReport { schema_version: 1, rows }
}

// Standard E2E scenarios -------------------------------------------------------

/// The four constrained routing scenarios used by the end-to-end protocol.
pub fn standard_scenarios() -> Vec<ScenarioSpec> {
    let mut node_failure = ConstraintProgram::new("scenario-node-failure");
    for node in [42usize, 137, 256] {
        node_failure
            .hard_constraints
            .push(HardConstraint::new(HardType::DisableNode, Target::Node(node)));
    }

    // Adjacent planes keep the survivors connected, so delivery tracks the
    // live-endpoint fraction rather than fragmenting the torus.
    let mut plane_maintenance = ConstraintProgram::new("scenario-plane-maintenance");
    for plane in [5usize, 6, 7] {
        plane_maintenance
            .hard_constraints
            .push(HardConstraint::new(HardType::DisablePlane, Target::Plane(plane)));
    }

    let mut polar = ConstraintProgram::new("scenario-polar-avoidance");
    polar
        .hard_constraints
        .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, 45.0));

    let mut compositional = ConstraintProgram::new("scenario-compositional");
    compositional
        .hard_constraints
        .push(HardConstraint::new(HardType::DisablePlane, Target::Plane(7)));
    compositional
        .hard_constraints
        .push(HardConstraint::with_value(HardType::AvoidLatitude, Target::Edges, 45.0));
    compositional.soft_constraints.push(SoftConstraint {
        ctype: SoftType::MaxUtilization,
        target: Target::Edges,
        value: 0.8,
        penalty_weight: 1.0,
    });

    [
        ("node_failure", node_failure),
        ("plane_maintenance", plane_maintenance),
        ("polar_avoidance", polar),
        ("compositional", compositional),
    ]
    .into_iter()
    .map(|(name, program)| ScenarioSpec {
        name: name.to_string(),
        program,
        active_events: BTreeSet::new(),
        traffic_class: None,
    })
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct E2eReport {
    pub schema_version: u32,
    pub router: String,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub pairs_per_step: usize,
    pub scenarios: Vec<EvalResult>,
}

/// Run the four standard scenarios with the given router.
pub fn run_e2e(
    config: &WalkerConfig,
    catalog: &RegionCatalog,
    router: &dyn Router,
    seeds: &[u64],
    steps: usize,
    pairs_per_step: usize,
) -> E2eReport {
    E2eReport {
        schema_version: 1,
        router: router.name().to_string(),
        seeds: seeds.to_vec(),
        steps,
        pairs_per_step,
        scenarios: standard_scenarios()
            .iter()
            .map(|spec| evaluate_scenario(spec, config, catalog, router, seeds, steps, pairs_per_step))
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub planes_off: usize,
    pub capacity_lost: f64,
    pub raw_pdr: f64,
    pub reachability: f64,
    pub reachable_pdr: f64,
    pub violations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub router: String,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub pairs_per_step: usize,
    pub rows: Vec<SweepRow>,
}

/// Plane-removal severity sweep with seeded random plane selection.
pub fn sweep_planes_off(
    counts: &[usize],
    config: &WalkerConfig,
    catalog: &RegionCatalog,
    router: &dyn Router,
    seeds: &[u64],
    steps: usize,
    pairs_per_step: usize,
) -> SweepReport {
    let mut rows = Vec::new();
    for &k in counts {
        let k = k.min(config.planes);
        let mut total_pairs = 0usize;
        let mut delivered = 0usize;
        let mut reachable = 0usize;
        let mut delivered_reachable = 0usize;
        let mut violations = 0u64;
        for &seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
            let mut planes: Vec<usize> = (0..config.planes).collect();
            planes.shuffle(&mut rng);
            planes.truncate(k);
            planes.sort_unstable();
            let mut program = ConstraintProgram::new(format!("sweep-{k}-planes-seed-{seed}"));
            for plane in planes {
                program
                    .hard_constraints
                    .push(HardConstraint::new(HardType::DisablePlane, Target::Plane(plane)));
            }
            let spec = ScenarioSpec {
                name: format!("planes_off_{k}"),
                program,
                active_events: BTreeSet::new(),
                traffic_class: None,
            };
            let result = evaluate_scenario(&spec, config, catalog, router, &[seed], steps, pairs_per_step);
            total_pairs += result.total_pairs;
            delivered += result.delivered;
            reachable += result.reachable_pairs;
            delivered_reachable += result.delivered_reachable;
            violations += result.violations;
        }
        rows.push(SweepRow {
            planes_off: k,
            capacity_lost: k as f64 / config.planes as f64,
            raw_pdr: if total_pairs > 0 { delivered as f64 / total_pairs as f64 } else { 0.0 },
            reachability: if total_pairs > 0 { reachable as f64 / total_pairs as f64 } else { 0.0 },
            reachable_pdr: if reachable > 0 {
                delivered_reachable as f64 / reachable as f64
            } else {
                1.0
            },
            violations,
        });
    }
    SweepReport {
        schema_version: 1,
        router: router.name().to_string(),
        seeds: seeds.to_vec(),
        steps,
        pairs_per_step,
        rows,
    }
}

// Random program generation -----------------------------------------------------

/// Seeded random program generator for property tests and audits. Generated
/// programs reference only in-range entities; demands range from generous to
/// unsatisfiable so Accept, Reject, and Abstain all occur.
pub fn random_program(rng: &mut ChaCha8Rng, snapshot: &TopologySnapshot) -> ConstraintProgram {
    let n = snapshot.node_count();
    let planes = snapshot.config.planes;
    let mut p = ConstraintProgram::new(format!("rand-{:08x}", rng.gen::<u32>()));

    let flavor = rng.gen_range(0..10);
    // Topology constraints.
    let topology_constraints = match flavor {
        0..=2 => rng.gen_range(1..=3),
        3..=6 => rng.gen_range(0..=1),
        _ => rng.gen_range(0..=2),
    };
    for _ in 0..topology_constraints {
        match rng.gen_range(0..5) {
            0 => {
                p.hard_constraints
                    .push(HardConstraint::new(HardType::DisableNode, Target::Node(rng.gen_range(0..n))));
            }
            1 if planes > 1 => {
                p.hard_constraints
                    .push(HardConstraint::new(HardType::DisablePlane, Target::Plane(rng.gen_range(0..planes))));
            }
            2 => {
                p.hard_constraints.push(HardConstraint::with_value(
                    HardType::AvoidLatitude,
                    Target::Edges,
                    rng.gen_range(20.0..90.0),
                ));
            }
            3 => {
                p.hard_constraints
                    .push(HardConstraint::new(HardType::RerouteAway, Target::Node(rng.gen_range(0..n))));
            }
            _ => {
                if !snapshot.edges.is_empty() {
                    let e = &snapshot.edges[rng.gen_range(0..snapshot.edges.len())];
                    p.hard_constraints
                        .push(HardConstraint::new(HardType::DisableEdge, Target::Edge(e.u, e.v)));
                }
            }
        }
    }

    // Flow selectors with demands.
    if flavor >= 3 {
        let selectors = rng.gen_range(1..=2);
        for i in 0..selectors {
            let mut sel = FlowSelector::default();
            if rng.gen_bool(0.4) {
                sel.traffic_class = Some(ir::TRAFFIC_CLASSES[rng.gen_range(0..8)].to_string());
            }
            match rng.gen_range(0..4) {
                0 => {
                    sel.src_node = Some(rng.gen_range(0..n));
                    sel.dst_node = Some(rng.gen_range(0..n));
                }
                1 if planes > 1 => {
                    sel.src_plane = Some(rng.gen_range(0..planes));
                    sel.dst_node = Some(rng.gen_range(0..n));
                }
                2 => {
                    sel.src_node = Some(rng.gen_range(0..n));
                }
                _ => {
                    sel.src_node = Some(rng.gen_range(0..n));
                    sel.dst_node = Some(rng.gen_range(0..n));
                }
            }
            p.flow_selectors.push(sel);
            match rng.gen_range(0..6) {
                0 => {}
                1 => {
                    p.hard_constraints.push(HardConstraint::with_value(
                        HardType::MaxLatencyMs,
                        Target::FlowSelector(i),
                        rng.gen_range(3.0..400.0),
                    ));
                }
                2 => {
                    p.hard_constraints.push(HardConstraint::with_value(
                        HardType::MaxHops,
                        Target::FlowSelector(i),
                        rng.gen_range(1..40) as f64,
                    ));
                }
                3 => {
                    p.hard_constraints.push(HardConstraint::with_value(
                        HardType::MaxLatencyMs,
                        Target::FlowSelector(i),
                        rng.gen_range(10.0..300.0),
                    ));
                    p.hard_constraints.push(HardConstraint::with_value(
                        HardType::MaxHops,
                        Target::FlowSelector(i),
                        rng.gen_range(2..30) as f64,
                    ));
                }
                4 => {
                    p.hard_constraints.push(HardConstraint::with_value(
                        HardType::KEdgeDisjoint,
                        Target::FlowSelector(i),
                        rng.gen_range(1..=4) as f64,
                    ));
                }
                _ => {
                    p.hard_constraints.push(HardConstraint::with_value(
                        HardType::MinCapReserve,
                        Target::FlowSelector(i),
                        rng.gen_range(0.05..1.0),
                    ));
                }
            }
        }
    }

    if rng.gen_bool(0.2) {
        p.soft_constraints.push(SoftConstraint {
            ctype: SoftType::MaxUtilization,
            target: Target::Edges,
            value: rng.gen_range(0.3..1.0),
            penalty_weight: rng.gen_range(0.0..5.0),
        });
    }
    if rng.gen_bool(0.15) {
        let event = ir::EVENT_NAMES[rng.gen_range(0..6)];
        p.event_conditions.push(event.to_string());
        if let Some(c) = p.hard_constraints.first_mut() {
            c.condition = Some(event.to_string());
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_snapshot, default_catalog};
    use crate::router::DijkstraRouter;

    fn snapshot() -> TopologySnapshot {
        build_snapshot(&WalkerConfig::default(), 0.0).unwrap()
    }

    #[test]
    fn builtin_benchmark_has_the_documented_shape() {
        let bench = builtin_benchmark();
        assert_eq!(bench.len(), 40);
        let count = |c: Category| bench.iter().filter(|e| e.category == c).count();
        assert_eq!(count(Category::Single), 14);
        assert_eq!(count(Category::Compositional), 14);
        assert_eq!(count(Category::Conditional), 6);
        assert_eq!(count(Category::Infeasible), 6);
        let ids: BTreeSet<&str> = bench.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids.len(), 40, "ids unique");
    }

    #[test]
    fn feasible_ground_truths_validate_cleanly() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        for entry in builtin_benchmark() {
            if entry.category == Category::Infeasible {
                continue;
            }
            let report = validator.validate(&entry.program);
            assert!(
                report.structurally_valid(),
                "{}: {:?}",
                entry.id,
                report.errors
            );
        }
    }

    #[test]
    fn infeasible_ground_truths_never_accept() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        for entry in builtin_benchmark() {
            if entry.category != Category::Infeasible {
                continue;
            }
            let report = validator.validate(&entry.program);
            assert!(
                !report.outcome.is_accept(),
                "{} must not accept",
                entry.id
            );
        }
    }

    #[test]
    fn scoring_identity_and_hierarchy() {
        let bench = builtin_benchmark();
        for entry in &bench {
            let score = score_program(Some(&entry.program), true, &entry.program);
            assert!(score.compiled && score.types_match && score.targets_match && score.full_match, "{}", entry.id);
        }
        let truth = &bench[0].program;
        let score = score_program(None, false, truth);
        assert!(!score.compiled && !score.full_match);
    }

    #[test]
    fn scoring_tolerance_boundaries() {
        let mut truth = ConstraintProgram::new("t");
        truth.flow_selectors.push(FlowSelector::default());
        truth
            .hard_constraints
            .push(HardConstraint::with_value(HardType::MaxLatencyMs, Target::FlowSelector(0), 80.0));
        let mut near = truth.clone();
        near.hard_constraints[0].value = Some(80.0 + 1e-9);
        let score = score_program(Some(&near), true, &truth);
        assert!(score.full_match, "within tolerance");
        let mut near2 = truth.clone();
        near2.hard_constraints[0].value = Some(80.00007);
        assert!(score_program(Some(&near2), true, &truth).full_match, "7e-5 within 8e-5 band");
        let mut far = truth.clone();
        far.hard_constraints[0].value = Some(80.0001);
        let score = score_program(Some(&far), true, &truth);
        assert!(!score.full_match, "1e-4 outside band");
        assert!(score.targets_match, "hierarchy: targets still match");
    }

    #[test]
    fn scoring_is_order_insensitive() {
        let bench = builtin_benchmark();
        let entry = bench.iter().find(|e| e.id == "bench-c01").unwrap();
        let mut shuffled = entry.program.clone();
        shuffled.hard_constraints.reverse();
        let score = score_program(Some(&shuffled), true, &entry.program);
        assert!(score.full_match);
    }

    #[test]
    fn scoring_types_without_targets() {
        let bench = builtin_benchmark();
        let truth = &bench.iter().find(|e| e.id == "bench-s01").unwrap().program;
        let mut wrong_target = truth.clone();
        wrong_target.hard_constraints[0].target = Target::Node(141);
        let score = score_program(Some(&wrong_target), true, truth);
        assert!(score.types_match);
        assert!(!score.targets_match);
        assert!(!score.full_match);
    }

    #[test]
    fn corruption_examples_match_catalog() {
        let bench = builtin_benchmark();
        let s08 = bench.iter().find(|e| e.id == "bench-s08").unwrap();
        let bad_priority = corrupt_program(&s08.program, CorruptionSpec { ctype: CorruptionType::InvalidPriority, seed: 0 }).unwrap();
        assert!(bad_priority.text.contains("urgent"));
        let low = corrupt_program(&s08.program, CorruptionSpec { ctype: CorruptionType::LatencyBelowMinimum, seed: 0 }).unwrap();
        assert!(low.text.contains("0.5"));
        let s03 = bench.iter().find(|e| e.id == "bench-s03").unwrap();
        let plane = corrupt_program(&s03.program, CorruptionSpec { ctype: CorruptionType::InvalidPlane, seed: 0 }).unwrap();
        assert!(plane.text.contains("plane:25"));
        // Inapplicable spec errors out so the harness can resample.
        assert!(corrupt_program(&s03.program, CorruptionSpec { ctype: CorruptionType::NegativeLatency, seed: 0 }).is_err());
    }

    #[test]
    fn corruption_audit_smoke_run_detects_everything() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let bench = builtin_benchmark();
        let report = run_corruption_audit(&bench, &validator, 1);
        assert_eq!(report.total_injected, 8);
        assert_eq!(report.total_detected, 8, "{:#?}", report.per_type);
        for t in &report.per_type {
            assert!(!t.caught_by_passes.is_empty(), "{} caught by no pass", t.ctype);
        }
    }

    #[test]
    fn confusion_matrix_rows_sum_and_no_unsafe_accepts() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let bench = builtin_benchmark();
        let report = run_confusion(&bench, &validator);
        assert_eq!(report.total.total, 40);
        for (category, row) in &report.rows {
            assert_eq!(row.total, row.accept + row.reject + row.abstain, "{category}");
        }
        assert_eq!(report.unsafe_acceptances, 0);
        let decided = report.total.accept + report.total.reject;
        assert!((report.decided_rate - decided as f64 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn rule_based_bench_run_compiles_everything() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let bench = builtin_benchmark();
        let config = CompilerConfig::default();
        let report = run_bench(&bench, &config, AblationMode::Full, &validator).unwrap();
        assert_eq!(report.overall.n, 40);
        assert_eq!(report.overall.compiled, 40, "rule-based compiles by construction");
        assert_eq!(report.unsafe_acceptances, 0);
        // Every single-category entry full-matches.
        let singles = &report.per_category["single"];
        assert_eq!(singles.full_match, singles.n, "{:#?}", report.entries.iter().filter(|e| e.category == "single" && !e.full_match).collect::<Vec<_>>());
    }

    #[test]
    fn adversarial_suite_flags_all_fifteen() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let report = run_adversarial(&validator);
        assert_eq!(report.total, 15);
        assert_eq!(
            report.flagged,
            15,
            "{:#?}",
            report.cases.iter().filter(|c| !c.flagged).collect::<Vec<_>>()
        );
        let family = |f: AdversarialFamily| adversarial_cases().iter().filter(|c| c.family == f).count();
        assert_eq!(family(AdversarialFamily::ResourceExhaustion), 5);
        assert_eq!(family(AdversarialFamily::SemanticConflict), 5);
        assert_eq!(family(AdversarialFamily::BoundaryExploitation), 5);
    }

    #[test]
    fn runtime_report_has_expected_rows() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let bench = builtin_benchmark();
        let report = measure_runtime(&bench, &validator);
        assert_eq!(report.rows[0].label, "all_programs");
        assert_eq!(report.rows[0].n, 40);
        let topo = report.rows.iter().find(|r| r.label == "topology_only").unwrap();
        let flows = report.rows.iter().find(|r| r.label == "with_flow_selectors").unwrap();
        assert_eq!(topo.n + flows.n, 40);
        assert!(report.rows.iter().all(|r| r.max_ms >= r.median_ms));
    }

    #[test]
    fn empty_benchmark_runtime_is_empty() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let report = measure_runtime(&[], &validator);
        assert!(report.rows.iter().all(|r| r.n == 0));
    }

    #[test]
    fn standard_scenarios_ground_cleanly() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let scenarios = standard_scenarios();
        assert_eq!(scenarios.len(), 4);
        for spec in &scenarios {
            let report = validator.validate(&spec.program);
            assert!(report.structurally_valid(), "{}: {:?}", spec.name, report.errors);
        }
    }

    #[test]
    fn sweep_rows_are_seeded_and_reproducible() {
        let config = WalkerConfig::default();
        let a = sweep_planes_off(&[1, 3], &config, default_catalog(), &DijkstraRouter, &[7], 2, 20);
        let b = sweep_planes_off(&[1, 3], &config, default_catalog(), &DijkstraRouter, &[7], 2, 20);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.rows[0].planes_off, 1);
        assert!(a.rows[1].raw_pdr <= a.rows[0].raw_pdr + 0.2, "more planes off, roughly less delivery");
        assert_eq!(a.rows[0].violations + a.rows[1].violations, 0);
        assert_eq!(a.seeds, vec![7]);
    }

    #[test]
    fn random_programs_reference_valid_entities() {
        let snap = snapshot();
        let validator = Validator::new(&snap, default_catalog());
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut outcomes = BTreeSet::new();
        for _ in 0..200 {
            let p = random_program(&mut rng, &snap);
            let report = validator.validate(&p);
            // Entity references are always in range: pass 2 never errors.
            assert!(
                !report.erroring_passes().contains(&2),
                "{:?}",
                report.errors
            );
            outcomes.insert(report.outcome.label());
        }
        assert!(outcomes.contains("accept") && outcomes.contains("abstain"), "{outcomes:?}");
    }
}
