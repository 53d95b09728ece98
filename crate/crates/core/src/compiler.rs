//! Intent front end.
//!
//! Three backends behind one `compile` entry point: a regex/keyword
//! rule-based baseline, an OpenAI-compatible HTTP chat backend with few-shot
//! prompting, and a scripted mock used for deterministic offline tests.
//! Chat backends run the verifier-feedback repair loop: when a compiled
//! program fails structural validation (passes 1-7), the error lines are
//! appended verbatim to the conversation and the model retries.

use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::TopologySnapshot;
use crate::ir::{
    self, parse_program, serialize_program, ConstraintProgram, FlowSelector, HardConstraint, HardType, Priority,
    SoftConstraint, SoftType, Target,
};
use crate::validator::Validator;

/// The shipped system prompt (constellation parameters, IR schema, enum
/// catalogs, target grammar, compilation rules).
pub const SYSTEM_PROMPT: &str = include_str!("../assets/system_prompt.txt");
/// Versioned few-shot examples: user/assistant pairs.
const FEW_SHOT_JSON: &str = include_str!("../assets/few_shot.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendKind {
    #[default]
    RuleBased,
    Llm,
    Mock,
}

impl BackendKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rule" | "rule_based" | "rule-based" => Some(Self::RuleBased),
            "llm" => Some(Self::Llm),
            "mock" => Some(Self::Mock),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Shots {
    Zero,
    #[default]
    Six,
}

#[derive(Debug, Clone)]
pub struct CompilerConfig {
    pub backend: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
    pub timeout_s: u64,
    pub shots: Shots,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::RuleBased,
            endpoint_url: "http://localhost:1234/v1/chat/completions".to_string(),
            model_name: "local-model".to_string(),
            temperature: 0.1,
            max_tokens: 2048,
            max_retries: 3,
            timeout_s: 120,
            shots: Shots::Six,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("mock script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("http transport: {0}")]
    Http(String),
    #[error("malformed completion response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Error)]
pub enum CompileFailure {
    #[error("transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("no structurally valid program after {attempts} attempt(s)")]
    Invalid { attempts: usize, last_errors: Vec<String> },
}

#[derive(Debug, Clone, Serialize)]
pub struct CompileAttempt {
    pub messages: Vec<ChatMessage>,
    pub raw_response: String,
    pub extracted: Option<String>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct CompileTrace {
    pub attempts: Vec<CompileAttempt>,
    pub first_try: bool,
    #[serde(serialize_with = "serialize_secs")]
    pub wall_time: Duration,
}

fn serialize_secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

/// A chat completion provider.
pub trait ChatBackend {
    fn complete(&mut self, messages: &[ChatMessage], config: &CompilerConfig) -> Result<String, TransportError>;
}

/// Replays scripted responses keyed by attempt index. Fully deterministic
/// and network-free.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub responses: Vec<String>,
    cursor: usize,
}

impl MockBackend {
    pub fn new(responses: Vec<String>) -> Self {
        Self { responses, cursor: 0 }
    }
}

impl ChatBackend for MockBackend {
    fn complete(&mut self, _messages: &[ChatMessage], _config: &CompilerConfig) -> Result<String, TransportError> {
        let response = self
            .responses
            .get(self.cursor)
            .ok_or(TransportError::ScriptExhausted(self.responses.len()))?;
        self.cursor += 1;
        Ok(response.clone())
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(timeout_s: u64) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_s))
            .build()
            .map_err(|e| TransportError::Http(e.to_string()))?;
        Ok(Self { client })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, messages: &[ChatMessage], config: &CompilerConfig) -> Result<String, TransportError> {
        let body = serde_json::json!({
            "model": config.model_name,
            "messages": messages,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        });
        let response = self
            .client
            .post(&config.endpoint_url)
            .json(&body)
            .send()
            .map_err(|e| TransportError::Http(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportError::Http(format!("status {status}")));
        }
        let value: serde_json::Value = response.json().map_err(|e| TransportError::BadResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::BadResponse("missing choices[0].message.content".to_string()))
    }
}

#[derive(Debug, Deserialize)]
struct FewShotPair {
    user: String,
    assistant: String,
}

static FEW_SHOT: Lazy<Vec<FewShotPair>> =
    Lazy::new(|| serde_json::from_str(FEW_SHOT_JSON).expect("shipped few-shot examples parse"));

/// Assemble the prompt: system message, optionally the three shipped
/// user/assistant example pairs, then the operator intent. Deterministic.
pub fn build_prompt(config: &CompilerConfig, intent_text: &str) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::new("system", SYSTEM_PROMPT)];
    if config.shots == Shots::Six {
        for pair in FEW_SHOT.iter() {
            messages.push(ChatMessage::new("user", pair.user.clone()));
            messages.push(ChatMessage::new("assistant", pair.assistant.clone()));
        }
    }
    messages.push(ChatMessage::new("user", intent_text));
    messages
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no extractable program payload: {0}")]
pub struct ExtractError(pub String);

static THINK_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?s)<think>.*?</think>").expect("static regex"));
static FENCE_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)```[a-zA-Z]*[ \t]*\r?\n?(.*?)```").expect("static regex"));

/// Recover candidate program text from a model response: strip reasoning
/// tags, then try the whole text, the first fenced code block, and the
/// first balanced top-level brace span, in that order.
pub fn extract_payload(response_text: &str) -> Result<String, ExtractError> {
    let stripped = THINK_RE.replace_all(response_text, "");
    let trimmed = stripped.trim();
    if serde_json::from_str::<serde_json::Value>(trimmed).is_ok() && trimmed.starts_with('{') {
        return Ok(trimmed.to_string());
    }
    if let Some(caps) = FENCE_RE.captures(&stripped) {
        let inner = caps.get(1).expect("capture").as_str().trim();
        if !inner.is_empty() {
            return Ok(inner.to_string());
        }
    }
    if let Some(span) = first_brace_span(&stripped) {
        return Ok(span.to_string());
    }
    Err(ExtractError("no JSON object found in response".to_string()))
}

/// First balanced `{...}` span, string- and escape-aware.
fn first_brace_span(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Compile an intent with the configured backend. Chat backends retry up to
/// `max_retries` times, feeding validation errors back verbatim; the loop
/// stops at the first program that passes structural validation (passes
/// 1-7). Pass-8 outcomes never trigger repair.
pub fn compile(
    intent_text: &str,
    config: &CompilerConfig,
    backend: &mut dyn ChatBackend,
    validator: &Validator<'_>,
) -> (Result<ConstraintProgram, CompileFailure>, CompileTrace) {
    let start = Instant::now();
    let mut trace = CompileTrace::default();

    if config.backend == BackendKind::RuleBased {
        let program = rule_based_compile(intent_text, validator.snapshot);
        trace.attempts.push(CompileAttempt {
            messages: Vec::new(),
            raw_response: String::new(),
            extracted: Some(serialize_program(&program)),
            errors: Vec::new(),
        });
        trace.first_try = true;
        trace.wall_time = start.elapsed();
        return (Ok(program), trace);
    }

    let mut messages = build_prompt(config, intent_text);
    let max_attempts = 1 + config.max_retries as usize;
    let mut last_errors = Vec::new();
    for attempt in 0..max_attempts {
        let raw = match backend.complete(&messages, config) {
            Ok(raw) => raw,
            Err(e) => {
                trace.wall_time = start.elapsed();
                return (Err(e.into()), trace);
            }
        };
        let mut attempt_record = CompileAttempt {
            messages: messages.clone(),
            raw_response: raw.clone(),
            extracted: None,
            errors: Vec::new(),
        };
        let candidate = match extract_payload(&raw) {
            Ok(text) => {
                attempt_record.extracted = Some(text.clone());
                text
            }
            Err(e) => {
                attempt_record.errors.push(e.to_string());
                last_errors = attempt_record.errors.clone();
                trace.attempts.push(attempt_record);
                messages.push(ChatMessage::new("assistant", raw));
                messages.push(ChatMessage::new(
                    "user",
                    format!("The previous response failed validation:\n{}\nReturn a corrected ConstraintProgram JSON object only.", last_errors.join("\n")),
                ));
                continue;
            }
        };
        let errors: Vec<String> = match parse_program(&candidate) {
            Ok(program) => {
                let report = validator.validate(&program);
                if report.structurally_valid() {
                    trace.attempts.push(attempt_record);
                    trace.first_try = attempt == 0;
                    trace.wall_time = start.elapsed();
                    return (Ok(program), trace);
                }
                report.errors
            }
            Err(schema_errors) => schema_errors.iter().map(|e| e.to_string()).collect(),
        };
        attempt_record.errors = errors.clone();
        last_errors = errors;
        trace.attempts.push(attempt_record);
        // Verifier feedback: append the raw response and the error lines
        // verbatim, then retry.
        messages.push(ChatMessage::new("assistant", raw));
        messages.push(ChatMessage::new(
            "user",
            format!(
                "The previous program failed validation with these errors:\n{}\nReturn a corrected ConstraintProgram JSON object only.",
                last_errors.join("\n")
            ),
        ));
    }
    trace.wall_time = start.elapsed();
    let attempts = trace.attempts.len();
    (Err(CompileFailure::Invalid { attempts, last_errors }), trace)
}

// Rule-based baseline -------------------------------------------------------

static NODE_DISABLE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:disable|shut\s+down|turn\s+off|kill|take\s+down)(?:\s+\w+)?\s+(?:satellite|sat|node)\s+(\d+)|(?:take|put)\s+(?:satellite|sat|node)\s+(\d+)\s+(?:offline|out\s+of\s+service)")
        .expect("static regex")
});
static PLANE_DISABLE_VERB_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:disable|shut\s+down|turn\s+off|kill|take\s+down|take)\b[^.;]*?\bplanes?\s+\d")
        .expect("static regex")
});
static PLANE_NUM_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"planes?\s+(\d+)").expect("static regex"));
static EDGE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"link\s+between\s+(?:satellite|sat|node)\s+(\d+)\s+and\s+(?:(?:satellite|sat|node)\s+)?(\d+)")
        .expect("static regex")
});
static REROUTE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:route|reroute|steer)\s+(?:\w+\s+)*?around\s+(?:satellite|sat|node)\s+(\d+)|reroute\s+(?:\w+\s+)*?away\s+from\s+(?:satellite|sat|node)\s+(\d+)")
        .expect("static regex")
});
static LATITUDE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:above|over)\s+(\d+(?:\.\d+)?)\s*(?:degrees?|deg|°)").expect("static regex")
});
static LATENCY_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:under|below|within|less\s+than|at\s+most)\s+(\d+(?:\.\d+)?)\s*ms\b").expect("static regex")
});
static HOPS_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:at\s+most|within|no\s+more\s+than|max(?:imum)?(?:\s+of)?|to)\s+(\d+)\s+hops?").expect("static regex")
});
static DISJOINT_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(\d+)\s+(?:edge[\s-]?)?(?:disjoint|redundant|independent)\s+paths?").expect("static regex")
});
static UTILIZATION_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"utili[sz]ation\s+(?:cap(?:ped)?\s+)?(?:at|to|under|below)?\s*(\d+(?:\.\d+)?)\s*(%?)").expect("static regex")
});
static RESERVE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"reserve\s+(\d+(?:\.\d+)?)\s*(%?)\s*(?:of\s+)?(?:the\s+)?capacity").expect("static regex")
});
static AVOID_REGION_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:avoid|away\s+from)\s+(?:routing\s+through\s+)?(?:the\s+)?([a-z_]+)(?:\s+region)?").expect("static regex")
});
static FROM_TO_NODE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"from\s+(?:satellite|sat|node)\s+(\d+)\s+to\s+(?:(?:satellite|sat|node)\s+)?(\d+)").expect("static regex")
});
static FROM_TO_PLANE_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"from\s+plane\s+(\d+)\s+to\s+plane\s+(\d+)").expect("static regex"));
static FROM_TO_REGION_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"from\s+(?:the\s+)?([a-z_]+?)(?:\s+region)?\s+to\s+(?:the\s+)?([a-z_]+?)(?:\s+region)?(?:\s|,|\.|$)")
        .expect("static regex")
});
static PRIORITY_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\b(critical|high|medium|low)\s+priority\b").expect("static regex"));
static BARE_NODE_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^(?:satellite|sat|node)\s+(\d+)$").expect("static regex"));
static BARE_PLANE_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^planes?\s+(\d+)\b").expect("static regex"));

fn fnv1a(data: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in data {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn fraction(value: f64, explicit_percent: bool) -> f64 {
    if explicit_percent || value > 1.0 {
        value / 100.0
    } else {
        value
    }
}

/// Regex/keyword baseline. Always produces some program; unrecognized text
/// yields an empty-constraint program.
pub fn rule_based_compile(intent_text: &str, snapshot: &TopologySnapshot) -> ConstraintProgram {
    let text = intent_text.to_ascii_lowercase();
    let mut program = ConstraintProgram::new(format!("rule-{:016x}", fnv1a(intent_text.as_bytes())));

    // Event conditions apply to every hard constraint in the intent.
    let mut condition: Option<String> = None;
    for event in ir::EVENT_NAMES {
        let spaced = event.replace('_', " ");
        if text.contains(event) || text.contains(&spaced) {
            condition = Some(event.to_string());
            program.event_conditions.push(event.to_string());
            break;
        }
    }

    let hard = |ctype: HardType, target: Target, value: Option<f64>, condition: &Option<String>| HardConstraint {
        ctype,
        target,
        value,
        condition: condition.clone(),
    };

    for caps in EDGE_RE.captures_iter(&text) {
        let u: usize = caps[1].parse().unwrap_or(0);
        let v: usize = caps[2].parse().unwrap_or(0);
        program
            .hard_constraints
            .push(hard(HardType::DisableEdge, Target::Edge(u, v), None, &condition));
    }
    for caps in REROUTE_RE.captures_iter(&text) {
        let id: usize = caps
            .get(1)
            .or_else(|| caps.get(2))
            .and_then(|m| m.as_str().parse().ok())
            .unwrap_or(0);
        program
            .hard_constraints
            .push(hard(HardType::RerouteAway, Target::Node(id), None, &condition));
    }
    // Clause-wise scan with verb carry-over so "disable satellite 42,
    // satellite 137" hits both.
    let mut disabling_nodes = false;
    let mut disabling_planes = false;
    for clause in text.split([',', '.', ';']) {
        let clause = clause.trim().trim_start_matches("and ").trim();
        if clause.is_empty() || EDGE_RE.is_match(clause) {
            continue;
        }
        let mut matched_here = false;
        for caps in NODE_DISABLE_RE.captures_iter(clause) {
            let id: usize = caps
                .get(1)
                .or_else(|| caps.get(2))
                .and_then(|m| m.as_str().parse().ok())
                .unwrap_or(0);
            program
                .hard_constraints
                .push(hard(HardType::DisableNode, Target::Node(id), None, &condition));
            matched_here = true;
        }
        if matched_here {
            disabling_nodes = true;
            continue;
        }
        // Bare "satellite N" / "plane N" clauses carry the action over from
        // the preceding disable clause.
        if disabling_nodes && REROUTE_RE.find(clause).is_none() {
            if let Some(caps) = BARE_NODE_RE.captures(clause) {
                let id: usize = caps[1].parse().unwrap_or(0);
                program
                    .hard_constraints
                    .push(hard(HardType::DisableNode, Target::Node(id), None, &condition));
                continue;
            }
        }
        disabling_nodes = false;
        if disabling_planes {
            if let Some(caps) = BARE_PLANE_RE.captures(clause) {
                let id: usize = caps[1].parse().unwrap_or(0);
                program
                    .hard_constraints
                    .push(hard(HardType::DisablePlane, Target::Plane(id), None, &condition));
                continue;
            }
        }
        disabling_planes = false;
        if PLANE_DISABLE_VERB_RE.is_match(clause) {
            for caps in PLANE_NUM_RE.captures_iter(clause) {
                let id: usize = caps[1].parse().unwrap_or(0);
                program
                    .hard_constraints
                    .push(hard(HardType::DisablePlane, Target::Plane(id), None, &condition));
            }
            disabling_planes = true;
        }
    }
    if let Some(caps) = LATITUDE_RE.captures(&text) {
        let theta: f64 = caps[1].parse().unwrap_or(90.0);
        program
            .hard_constraints
            .push(hard(HardType::AvoidLatitude, Target::Edges, Some(theta), &condition));
    }
    for caps in AVOID_REGION_RE.captures_iter(&text) {
        let name = &caps[1];
        if crate::constellation::default_catalog().contains_name(name) {
            program.hard_constraints.push(hard(
                HardType::AvoidRegion,
                Target::Region(name.to_string()),
                None,
                &condition,
            ));
        }
    }

    // Flow-scoped demands share one selector assembled from class and
    // endpoint mentions.
    let latency = LATENCY_RE.captures(&text).and_then(|c| c[1].parse::<f64>().ok());
    let hops = HOPS_RE.captures(&text).and_then(|c| c[1].parse::<f64>().ok());
    let disjoint = DISJOINT_RE.captures(&text).and_then(|c| c[1].parse::<f64>().ok());
    let reserve = RESERVE_RE
        .captures(&text)
        .and_then(|c| c[1].parse::<f64>().ok().map(|v| fraction(v, &c[2] == "%")));
    if latency.is_some() || hops.is_some() || disjoint.is_some() || reserve.is_some() {
        let mut selector = FlowSelector::default();
        for class in ir::TRAFFIC_CLASSES {
            if text.contains(&format!("{class} traffic")) || text.contains(&format!("{class} flows")) {
                selector.traffic_class = Some(class.to_string());
                break;
            }
        }
        if let Some(caps) = FROM_TO_NODE_RE.captures(&text) {
            selector.src_node = caps[1].parse().ok();
            selector.dst_node = caps[2].parse().ok();
        } else if let Some(caps) = FROM_TO_PLANE_RE.captures(&text) {
            selector.src_plane = caps[1].parse().ok();
            selector.dst_plane = caps[2].parse().ok();
        } else if let Some(caps) = FROM_TO_REGION_RE.captures(&text) {
            let catalog = crate::constellation::default_catalog();
            if catalog.contains_name(&caps[1]) && catalog.contains_name(&caps[2]) {
                selector.src_region = Some(caps[1].to_string());
                selector.dst_region = Some(caps[2].to_string());
            }
        }
        program.flow_selectors.push(selector);
        if let Some(v) = latency {
            program
                .hard_constraints
                .push(hard(HardType::MaxLatencyMs, Target::FlowSelector(0), Some(v), &condition));
        }
        if let Some(v) = hops {
            program
                .hard_constraints
                .push(hard(HardType::MaxHops, Target::FlowSelector(0), Some(v), &condition));
        }
        if let Some(v) = disjoint {
            program
                .hard_constraints
                .push(hard(HardType::KEdgeDisjoint, Target::FlowSelector(0), Some(v), &condition));
        }
        if let Some(v) = reserve {
            program
                .hard_constraints
                .push(hard(HardType::MinCapReserve, Target::FlowSelector(0), Some(v), &condition));
        }
    }

    if let Some(caps) = UTILIZATION_RE.captures(&text) {
        if let Ok(v) = caps[1].parse::<f64>() {
            program.soft_constraints.push(SoftConstraint {
                ctype: SoftType::MaxUtilization,
                target: Target::Edges,
                value: fraction(v, &caps[2] == "%"),
                penalty_weight: 1.0,
            });
        }
    }
    if let Some(caps) = PRIORITY_RE.captures(&text) {
        if let Some(p) = Priority::parse(&caps[1]) {
            program.priority = p;
        }
    }

    let _ = snapshot; // targets are validated downstream against the snapshot
    program
}
