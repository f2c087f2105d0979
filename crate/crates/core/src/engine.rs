//! Per-actor engine: the single writer that owns an actor's snapshot,
//! state, suspension mode and detection history.
//!
//! Each [`Engine::step`] evolves the current state under the operator of the
//! current snapshot, applies that step's signals, rebuilds the observed
//! state and records the divergence between the two. Detection runs on the
//! trailing window; a persistent, validated segment suspends the engine.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoherence::{
    ClarificationAnswer, ClarificationRequest, DecoherenceError, DecoherenceLoop, EngineMode, GuardDecision,
    InferenceKind,
};
use crate::divergence::{
    divergence, DetectError, Detector, Dynamics, ErrorWeightedOperator, Observation, RogueCandidate, WindowConfig,
};
use crate::linalg::ComplexMatrixJson;
use crate::memory::{update_baseline, AmbiguityConfig, Baseline, RogueEpisode, DEFAULT_BASELINE_ALPHA};
use crate::mpg::{validate, MpgSnapshot, NodeId, SignalError, SignalEvent};
use crate::quantum::{build_hamiltonian, build_state, evolve, ActivationWeights, Hamiltonian, QuantumError, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub window: WindowConfig,
    pub dynamics: Dynamics,
    pub baseline_alpha: f64,
    /// Raise the inclusion threshold to the actor's `ewma + 2 sigma` baseline.
    pub adaptive_threshold: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window: WindowConfig::default(),
            dynamics: Dynamics::default(),
            baseline_alpha: DEFAULT_BASELINE_ALPHA,
            adaptive_threshold: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("snapshot is invalid: {0}")]
    InvalidSnapshot(String),
    #[error("step time {requested} does not advance past {current}")]
    StaleStep { current: u64, requested: u64 },
    #[error("event at t={event} lies outside step ({current}, {step}]")]
    EventOutOfStep { current: u64, step: u64, event: u64 },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Decoherence(#[from] DecoherenceError),
}

/// Returned instead of an inference while a clarification is pending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("autonomous {kind:?} refused while request {request_id} is pending")]
pub struct Refusal {
    pub kind: InferenceKind,
    pub request_id: String,
}

/// Divergence terms of one step, as exported in traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: u64,
    pub epsilon: f64,
    pub fidelity_term: f64,
    pub uncertainty_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub point: TracePoint,
    /// Candidate standing after this step, if any.
    pub candidate: Option<RogueCandidate>,
    /// Request issued by this step.
    pub suspended: Option<String>,
}

#[derive(Debug, Clone)]
struct OpenEpisode {
    opened_at: u64,
    candidate: RogueCandidate,
    config: AmbiguityConfig,
}

pub struct Engine {
    actor_id: String,
    config: EngineConfig,
    snapshot: Arc<MpgSnapshot>,
    state: StateVector,
    loop_: DecoherenceLoop,
    detector: Detector,
    history: Vec<Observation>,
    trace: Vec<TracePoint>,
    baseline: Baseline,
    open: Option<OpenEpisode>,
    episodes_closed: u64,
    last_operator: Option<ErrorWeightedOperator>,
}

impl Engine {
    pub fn new(actor_id: impl Into<String>, initial: MpgSnapshot, config: EngineConfig) -> Result<Self, EngineError> {
        config.window.check()?;
        let violations = validate(&initial);
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(EngineError::InvalidSnapshot(text.join("; ")));
        }
        let actor_id = actor_id.into();
        let state = build_state(&initial)?;
        Ok(Engine {
            loop_: DecoherenceLoop::new(actor_id.clone(), config.window.length as u64),
            detector: Detector::new(config.window, config.dynamics),
            baseline: Baseline::new(actor_id.clone()),
            actor_id,
            config,
            snapshot: Arc::new(initial),
            state,
            history: Vec::new(),
            trace: Vec::new(),
            open: None,
            episodes_closed: 0,
            last_operator: None,
        })
    }

    pub fn actor_id(&self) -> &str {
        &self.actor_id
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &MpgSnapshot {
        &self.snapshot
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn weights(&self) -> ActivationWeights {
        self.state.weights()
    }

    pub fn mode(&self) -> &EngineMode {
        self.loop_.mode()
    }

    pub fn pending(&self) -> Option<&ClarificationRequest> {
        self.loop_.pending()
    }

    pub fn trace(&self) -> &[TracePoint] {
        &self.trace
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn t(&self) -> u64 {
        self.snapshot.t
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian, EngineError> {
        Ok(build_hamiltonian(&self.snapshot, &self.config.dynamics.gains)?)
    }

    /// Most recent window operator, padded to the current basis.
    pub fn operator_json(&self) -> ComplexMatrixJson {
        match &self.last_operator {
            Some(op) => op.to_json(),
            None => {
                let basis = self.snapshot.basis();
                let n = basis.len();
                ComplexMatrixJson {
                    basis,
                    re: vec![vec![0.0; n]; n],
                    im: vec![vec![0.0; n]; n],
                }
            }
        }
    }

    pub fn guard(&self, kind: InferenceKind) -> GuardDecision {
        self.loop_.guard(kind)
    }

    fn permit(&self, kind: InferenceKind) -> Result<(), Refusal> {
        match self.guard(kind) {
            GuardDecision::Permit => Ok(()),
            GuardDecision::Refuse { request_id } => Err(Refusal { kind, request_id }),
        }
    }

    /// Prior expectation for the next step.
    pub fn predict(&self) -> Result<StateVector, Refusal> {
        self.permit(InferenceKind::Predict)?;
        let h = build_hamiltonian(&self.snapshot, &self.config.dynamics.gains).expect("snapshot validated on entry");
        Ok(evolve(&self.state, &h, self.config.dynamics.dt).expect("state and operator share the snapshot basis"))
    }

    /// Nodes ranked by predicted activation, highest first.
    pub fn recommend(&self, top: usize) -> Result<Vec<(NodeId, f64)>, Refusal> {
        self.permit(InferenceKind::Recommend)?;
        let pred = self.predict()?;
        let mut ranked: Vec<(NodeId, f64)> = pred.weights().iter().map(|(n, w)| (n.clone(), w)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(top);
        Ok(ranked)
    }

    /// Gate for an autonomous action; the engine itself performs none.
    pub fn act(&self, action: &str) -> Result<String, Refusal> {
        self.permit(InferenceKind::Act)?;
        Ok(format!("{}: {action} permitted at t={}", self.actor_id, self.t()))
    }

    /// One observation step at time `t`.
    pub fn step(&mut self, t: u64, events: &[SignalEvent]) -> Result<StepOutcome, EngineError> {
        let current = self.snapshot.t;
        if t <= current {
            return Err(EngineError::StaleStep { current, requested: t });
        }
        let mut next = (*self.snapshot).clone();
        for ev in events {
            if ev.t > t {
                return Err(EngineError::EventOutOfStep { current, step: t, event: ev.t });
            }
            next.apply_in_place(ev)?;
        }
        next.t = t;
        let prior = self.snapshot.clone();
        let h = build_hamiltonian(&prior, &self.config.dynamics.gains)?;
        let pred = evolve(&self.state, &h, self.config.dynamics.dt)?;
        let obs = build_state(&next)?;
        let sample = divergence(&pred, &obs, &next, self.config.window.lambda)?;
        self.baseline = update_baseline(&self.baseline, &sample, self.config.baseline_alpha);
        let point = TracePoint {
            t,
            epsilon: sample.epsilon,
            fidelity_term: sample.fidelity_term,
            uncertainty_term: sample.uncertainty_term,
        };
        let snapshot = Arc::new(next);
        self.history.push(Observation {
            prior,
            snapshot: snapshot.clone(),
            sample,
        });
        let keep = self.config.window.length;
        if self.history.len() > keep {
            self.history.drain(..self.history.len() - keep);
        }
        self.trace.push(point);
        self.snapshot = snapshot;
        self.state = obs;

        if self.config.adaptive_threshold {
            let threshold = self.baseline.adaptive_threshold(self.config.window.inclusion_threshold);
            self.detector.set_inclusion_threshold(threshold);
        }
        let candidate = self.detector.observe(&self.history)?;
        if let Some(eval) = self.detector.last_evaluation() {
            self.last_operator = Some(eval.operator.clone());
        }
        let mut suspended = None;
        if let Some(c) = &candidate {
            if !self.loop_.mode().is_suspended() && !self.loop_.is_embargoed(&c.segment, t) {
                suspended = Some(self.suspend(c.clone())?.id.clone());
            }
        }
        Ok(StepOutcome {
            point,
            candidate,
            suspended,
        })
    }

    /// Suspends autonomous inference and issues a clarification request.
    pub fn suspend(&mut self, candidate: RogueCandidate) -> Result<&ClarificationRequest, EngineError> {
        let t = self.snapshot.t;
        let operator = self.last_operator.as_ref().map_or_else(|| self.operator_json(), |op| op.to_json());
        let config = AmbiguityConfig::capture(operator, &candidate, &self.snapshot);
        let request = self.loop_.suspend(candidate.clone(), &self.snapshot, &self.state, t)?;
        self.open = Some(OpenEpisode {
            opened_at: t,
            candidate,
            config,
        });
        Ok(request)
    }

    /// Answers the pending request, returning the closed episode.
    pub fn resolve(&mut self, answer: ClarificationAnswer) -> Result<RogueEpisode, EngineError> {
        let resolution = self.loop_.resolve(answer, &self.state)?;
        self.state = resolution.state.clone();
        self.detector.reset();
        // A collapse supersedes the evidence gathered under the old reading.
        if resolution.resolved {
            self.history.clear();
        }
        let closed_at = resolution.answer.answered_at;
        Ok(self.close_episode(resolution.request, Some(resolution.answer), resolution.resolved, closed_at))
    }

    /// Closes a still-pending request without an answer.
    pub fn abandon_pending(&mut self) -> Option<RogueEpisode> {
        let t = self.snapshot.t;
        let request = self.loop_.abandon(t)?;
        self.detector.reset();
        Some(self.close_episode(request, None, false, t))
    }

    fn close_episode(
        &mut self,
        request: ClarificationRequest,
        answer: Option<ClarificationAnswer>,
        resolved: bool,
        closed_at: u64,
    ) -> RogueEpisode {
        let open = self.open.take().expect("a pending request always has an open episode");
        let episode = RogueEpisode {
            episode_id: format!("{}-ep-{:04}", self.actor_id, self.episodes_closed),
            actor_id: self.actor_id.clone(),
            opened_at: open.opened_at,
            closed_at: closed_at.max(open.opened_at),
            candidate: open.candidate,
            request,
            answer,
            resolved,
            ambiguity_config: open.config,
        };
        self.episodes_closed += 1;
        self.baseline.note_episode();
        episode
    }

    /// Latest loading per node from the most recent window evaluation.
    pub fn loadings(&self) -> BTreeMap<NodeId, f64> {
        self.detector
            .last_evaluation()
            .map(|e| e.extraction.loadings.clone())
            .unwrap_or_default()
    }
}
