//! Human-in-the-loop suspension: one neutral question per detected rogue
//! segment, a guard that refuses autonomous inference while the question is
//! open, and collapse of the state onto the chosen interpretation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::RogueCandidate;
use crate::mpg::{MpgSnapshot, NodeId};
use crate::quantum::{collapse, subspace_weight, QuantumError, StateVector};

/// Listed interpretation clusters per request; the fallback option makes five.
pub const MAX_CLUSTER_OPTIONS: usize = 4;
/// Options whose projected amplitude falls below this are dropped.
pub const MIN_OPTION_AMPLITUDE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceKind {
    Predict,
    Recommend,
    Act,
    /// Read-only access to snapshots, weights, traces and operators.
    Inspect,
}

impl InferenceKind {
    pub const ALL: [InferenceKind; 4] = [
        InferenceKind::Predict,
        InferenceKind::Recommend,
        InferenceKind::Act,
        InferenceKind::Inspect,
    ];

    pub fn is_read_only(self) -> bool {
        matches!(self, InferenceKind::Inspect)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum GuardDecision {
    Permit,
    Refuse { request_id: String },
}

impl GuardDecision {
    pub fn is_permit(&self) -> bool {
        matches!(self, GuardDecision::Permit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub label: String,
    pub keep_nodes: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationRequest {
    pub id: String,
    pub issued_at: u64,
    pub statement: String,
    pub question: String,
    pub options: Vec<Interpretation>,
    pub triggering: RogueCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum UnresolvedTag {
    Unresolved,
}

/// The human's pick: an option index (zero-based) or an explicit "unresolved".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Option(usize),
    Unresolved,
}

impl Serialize for Choice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Choice::Option(i) => s.serialize_u64(*i as u64),
            Choice::Unresolved => UnresolvedTag::Unresolved.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Choice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Index(usize),
            Tag(UnresolvedTag),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Index(i) => Choice::Option(i),
            Repr::Tag(_) => Choice::Unresolved,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationAnswer {
    pub request_id: String,
    pub chosen: Choice,
    pub answered_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

impl ClarificationAnswer {
    pub fn pick(request_id: impl Into<String>, option: usize, answered_at: u64) -> Self {
        ClarificationAnswer {
            request_id: request_id.into(),
            chosen: Choice::Option(option),
            answered_at,
            free_text: None,
        }
    }

    pub fn unresolved(request_id: impl Into<String>, answered_at: u64) -> Self {
        ClarificationAnswer {
            request_id: request_id.into(),
            chosen: Choice::Unresolved,
            answered_at,
            free_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "pending", rename_all = "snake_case")]
pub enum EngineMode {
    Autonomous,
    Suspended(Box<ClarificationRequest>),
}

impl EngineMode {
    pub fn pending(&self) -> Option<&ClarificationRequest> {
        match self {
            EngineMode::Autonomous => None,
            EngineMode::Suspended(r) => Some(r),
        }
    }

    pub fn is_suspended(&self) -> bool {
        matches!(self, EngineMode::Suspended(_))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecoherenceError {
    #[error("a clarification request is already pending")]
    AlreadySuspended,
    #[error("no clarification request is pending")]
    NotSuspended,
    #[error("answer refers to unknown request {0}")]
    UnknownRequest(String),
    #[error("option {chosen} is out of range for {available} options")]
    InvalidOption { chosen: usize, available: usize },
    #[error("answer time {answered} precedes request time {issued}")]
    AnswerBeforeRequest { issued: u64, answered: u64 },
    #[error("no interpretation of segment carries amplitude")]
    NoViableInterpretation,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Outcome of answering the pending request.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub request: ClarificationRequest,
    pub answer: ClarificationAnswer,
    /// State after collapse; equal to the input state when unresolved.
    pub state: StateVector,
    pub resolved: bool,
}

fn humanize(id: &NodeId) -> String {
    id.as_str().replace(['_', '-'], " ")
}

fn label_of(nodes: &BTreeSet<NodeId>) -> String {
    nodes.iter().map(humanize).collect::<Vec<_>>().join(" / ")
}

/// Interpretation options: one per connected cluster of nodes adjacent to the
/// segment, or the segment itself when it has no neighbours, plus a fallback
/// spanning the whole basis.
pub fn interpretation_options(
    segment: &BTreeSet<NodeId>,
    snapshot: &MpgSnapshot,
    state: &StateVector,
) -> Result<Vec<Interpretation>, DecoherenceError> {
    let mut neighbours: BTreeSet<NodeId> = BTreeSet::new();
    for (key, _) in snapshot.incident_edges(segment) {
        for end in [&key.from, &key.to] {
            if !segment.contains(end) && state.index_of(end).is_some() {
                neighbours.insert(end.clone());
            }
        }
    }
    let mut adjacency: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
    for (key, _) in snapshot.induced_edges(&neighbours) {
        adjacency.entry(&key.from).or_default().insert(&key.to);
        adjacency.entry(&key.to).or_default().insert(&key.from);
    }
    let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
    let mut clusters: Vec<BTreeSet<NodeId>> = Vec::new();
    for start in &neighbours {
        if !seen.insert(start) {
            continue;
        }
        let mut cluster = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            cluster.insert(n.clone());
            for next in adjacency.get(n).into_iter().flatten() {
                if seen.insert(next) {
                    stack.push(next);
                }
            }
        }
        clusters.push(cluster);
    }
    let viable = |nodes: &BTreeSet<NodeId>| subspace_weight(state, nodes).sqrt() >= MIN_OPTION_AMPLITUDE;
    let mut weighted: Vec<(f64, BTreeSet<NodeId>)> = clusters
        .into_iter()
        .filter(viable)
        .map(|c| (subspace_weight(state, &c), c))
        .collect();
    weighted.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.first().cmp(&b.1.first())));
    let mut options: Vec<Interpretation> = weighted
        .into_iter()
        .take(MAX_CLUSTER_OPTIONS)
        .map(|(_, keep_nodes)| Interpretation {
            label: label_of(&keep_nodes),
            keep_nodes,
        })
        .collect();
    if options.is_empty() {
        let own: BTreeSet<NodeId> = segment.iter().filter(|n| state.index_of(n).is_some()).cloned().collect();
        if own.is_empty() || !viable(&own) {
            return Err(DecoherenceError::NoViableInterpretation);
        }
        options.push(Interpretation {
            label: label_of(&own),
            keep_nodes: own,
        });
    }
    options.push(Interpretation {
        label: "none of these".to_owned(),
        keep_nodes: state.basis().iter().cloned().collect(),
    });
    Ok(options)
}

/// Template text for a request; never ranks or recommends an option.
pub fn neutral_wording(segment: &BTreeSet<NodeId>) -> (String, String) {
    let statement = format!(
        "Signals around {} have not settled into a single consistent reading. \
         Several readings remain possible.",
        label_of(segment)
    );
    let question = "Which of the following readings matches the situation as you see it?".to_owned();
    (statement, question)
}

#[derive(Debug, Clone, PartialEq)]
struct Embargo {
    segment: BTreeSet<NodeId>,
    until: u64,
}

/// Suspension state machine for one actor.
#[derive(Debug, Clone)]
pub struct DecoherenceLoop {
    actor_id: String,
    mode: EngineMode,
    issued: u64,
    embargo_length: u64,
    embargoes: Vec<Embargo>,
}

impl DecoherenceLoop {
    pub fn new(actor_id: impl Into<String>, embargo_length: u64) -> Self {
        DecoherenceLoop {
            actor_id: actor_id.into(),
            mode: EngineMode::Autonomous,
            issued: 0,
            embargo_length,
            embargoes: Vec::new(),
        }
    }

    pub fn mode(&self) -> &EngineMode {
        &self.mode
    }

    pub fn pending(&self) -> Option<&ClarificationRequest> {
        self.mode.pending()
    }

    pub fn requests_issued(&self) -> u64 {
        self.issued
    }

    /// Whether `segment` may trigger a suspension at `t`.
    pub fn is_embargoed(&self, segment: &BTreeSet<NodeId>, t: u64) -> bool {
        self.embargoes.iter().any(|e| &e.segment == segment && t < e.until)
    }

    pub fn suspend(
        &mut self,
        candidate: RogueCandidate,
        snapshot: &MpgSnapshot,
        state: &StateVector,
        t: u64,
    ) -> Result<&ClarificationRequest, DecoherenceError> {
        if self.mode.is_suspended() {
            return Err(DecoherenceError::AlreadySuspended);
        }
        let options = interpretation_options(&candidate.segment, snapshot, state)?;
        let (statement, question) = neutral_wording(&candidate.segment);
        let request = ClarificationRequest {
            id: format!("{}-rq-{:04}", self.actor_id, self.issued),
            issued_at: t,
            statement,
            question,
            options,
            triggering: candidate,
        };
        self.issued += 1;
        self.mode = EngineMode::Suspended(Box::new(request));
        Ok(self.mode.pending().expect("just suspended"))
    }

    pub fn guard(&self, kind: InferenceKind) -> GuardDecision {
        match (&self.mode, kind.is_read_only()) {
            (EngineMode::Suspended(r), false) => GuardDecision::Refuse {
                request_id: r.id.clone(),
            },
            _ => GuardDecision::Permit,
        }
    }

    /// Validates `answer` against the pending request and leaves suspension.
    pub fn resolve(&mut self, answer: ClarificationAnswer, state: &StateVector) -> Result<Resolution, DecoherenceError> {
        let request = match &self.mode {
            EngineMode::Autonomous => return Err(DecoherenceError::NotSuspended),
            EngineMode::Suspended(r) => r,
        };
        if answer.request_id != request.id {
            return Err(DecoherenceError::UnknownRequest(answer.request_id));
        }
        if answer.answered_at < request.issued_at {
            return Err(DecoherenceError::AnswerBeforeRequest {
                issued: request.issued_at,
                answered: answer.answered_at,
            });
        }
        let (next, resolved) = match answer.chosen {
            Choice::Option(i) => {
                let option = request.options.get(i).ok_or(DecoherenceError::InvalidOption {
                    chosen: i,
                    available: request.options.len(),
                })?;
                (collapse(state, &option.keep_nodes)?, true)
            }
            Choice::Unresolved => (state.clone(), false),
        };
        let EngineMode::Suspended(request) = std::mem::replace(&mut self.mode, EngineMode::Autonomous) else {
            unreachable!("checked above")
        };
        let request = *request;
        if !resolved {
            self.embargoes.push(Embargo {
                segment: request.triggering.segment.clone(),
                until: answer.answered_at + self.embargo_length,
            });
        }
        self.embargoes.retain(|e| e.until > answer.answered_at);
        Ok(Resolution {
            request,
            answer,
            state: next,
            resolved,
        })
    }

    /// Leaves suspension without an answer, e.g. when a replay ends. The
    /// segment is embargoed as for an unresolved answer.
    pub fn abandon(&mut self, t: u64) -> Option<ClarificationRequest> {
        let EngineMode::Suspended(request) = std::mem::replace(&mut self.mode, EngineMode::Autonomous) else {
            return None;
        };
        self.embargoes.push(Embargo {
            segment: request.triggering.segment.clone(),
            until: t + self.embargo_length,
        });
        Some(*request)
    }
}

impl fmt::Display for GuardDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuardDecision::Permit => f.write_str("permit"),
            GuardDecision::Refuse { request_id } => write!(f, "refused pending {request_id}"),
        }
    }
}
