//! Seeded scenario generation and deterministic replay.
//!
//! Generated streams keep the observation equal to the operator prediction
//! outside the anomaly interval: every node's relevance and phase are reset
//! each step to the evolved state. Inside the interval the planted segment
//! gains strong couplings and local risk, but the true state keeps evolving
//! as if that segment had no influence, so the engine's prior drifts away
//! from what is observed until the segment is ablated.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoherence::{ClarificationAnswer, GuardDecision, InferenceKind};
use crate::divergence::{ablate, divergence, Dynamics, Observation, RogueCandidate};
use crate::engine::{Engine, EngineConfig, EngineError, TracePoint};
use crate::memory::RogueEpisode;
use crate::mpg::{
    EdgeKey, Feature, FeatureChange, FeatureDelta, MpgSnapshot, NodeFeatures, NodeId, Provenance, RelationKind,
    SignalEvent,
};
use crate::quantum::{build_hamiltonian, build_state, evolve, QuantumError, StateVector};

/// Actor id used by [`replay`].
pub const SIM_ACTOR: &str = "sim";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("step {t}: {source}")]
    Step { t: u64, source: EngineError },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub segment: BTreeSet<NodeId>,
    pub onset: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub initial: MpgSnapshot,
    pub events: Vec<SignalEvent>,
    /// Keyed by the 0-based ordinal of the request the answer responds to.
    #[serde(default)]
    pub scripted_answers: BTreeMap<u64, ClarificationAnswer>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
    #[serde(default)]
    pub collapse_event: Option<u64>,
}

impl Scenario {
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if let Some(pos) = self.events.windows(2).position(|w| w[1].t < w[0].t) {
            return bad(format!("events out of order at index {}", pos + 1));
        }
        if let Some(ev) = self.events.first() {
            if ev.t <= self.initial.t {
                return bad(format!("event at t={} does not follow the initial snapshot", ev.t));
            }
        }
        if let Some(gt) = &self.ground_truth {
            if let Some(n) = gt.segment.iter().find(|n| !self.initial.contains(n)) {
                return bad(format!("ground truth node {n} missing from the initial snapshot"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, SimError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn horizon(&self) -> u64 {
        self.events.last().map_or(self.initial.t, |e| e.t)
    }
}

/// Knobs of [`generate_planted_with`]. [`generate_planted`] uses the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedParams {
    pub n_nodes: usize,
    pub anomaly_size: usize,
    pub onset: u64,
    pub duration: u64,
    /// Steps simulated after the anomaly ends (or after onset when duration is 0).
    pub tail: u64,
    pub edge_probability: f64,
    /// Share of activation weight moved onto the planted segment at onset.
    pub planted_share: f64,
    pub planted_coupling: (f64, f64),
    pub planted_risk: f64,
    pub planted_uncertainty: f64,
    pub background_uncertainty: (f64, f64),
    /// Relative relevance noise applied to every tracked node each step.
    pub jitter: f64,
    pub dynamics: Dynamics,
    /// Persistence times window length the duration must cover.
    pub min_duration: u64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        PlantedParams {
            n_nodes: 12,
            anomaly_size: 3,
            onset: 40,
            duration: 60,
            tail: 20,
            edge_probability: 0.3,
            planted_share: 0.85,
            planted_coupling: (0.8, 1.0),
            planted_risk: 0.8,
            planted_uncertainty: 0.6,
            background_uncertainty: (0.02, 0.08),
            jitter: 0.005,
            dynamics: Dynamics::default(),
            min_duration: 36,
        }
    }
}

pub fn generate_planted(
    seed: u64,
    n_nodes: usize,
    anomaly_size: usize,
    onset: u64,
    duration: u64,
) -> Result<Scenario, SimError> {
    generate_planted_with(
        seed,
        &PlantedParams {
            n_nodes,
            anomaly_size,
            onset,
            duration,
            ..PlantedParams::default()
        },
    )
}

pub fn node_name(i: usize) -> NodeId {
    NodeId::from(format!("n{i:02}"))
}

pub fn generate_planted_with(seed: u64, p: &PlantedParams) -> Result<Scenario, SimError> {
    let bad = |m: &str| Err(SimError::InvalidParams(m.to_owned()));
    if p.n_nodes == 0 {
        return bad("n_nodes must be positive");
    }
    if p.anomaly_size == 0 || p.anomaly_size > p.n_nodes {
        return bad("anomaly_size must lie in 1..=n_nodes");
    }
    if p.duration > 0 && p.duration < p.min_duration {
        return bad("duration must cover persistence times window length");
    }
    if !(p.planted_share > 0.0 && p.planted_share < 1.0) {
        return bad("planted_share must lie in (0, 1)");
    }
    if p.onset == 0 {
        return bad("onset must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<NodeId> = (0..p.n_nodes).map(node_name).collect();
    let mut initial = MpgSnapshot::new(0);
    for name in &names {
        initial = initial.with_node(
            name.as_str(),
            NodeFeatures {
                relevance: rng.random_range(0.2..1.0),
                uncertainty: rng.random_range(p.background_uncertainty.0..=p.background_uncertainty.1),
                risk: rng.random_range(0.0..0.3),
                phase: rng.random_range(-PI..PI),
            },
        );
    }
    for i in 0..p.n_nodes {
        for j in i + 1..p.n_nodes {
            if rng.random_bool(p.edge_probability) {
                let kind = RelationKind::ALL[rng.random_range(0..RelationKind::ALL.len())];
                let (a, b) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
                initial = initial.with_edge(names[a].as_str(), names[b].as_str(), kind, rng.random_range(0.1..0.5));
            }
        }
    }
    let planted: BTreeSet<NodeId> = rand::seq::index::sample(&mut rng, p.n_nodes, p.anomaly_size)
        .into_iter()
        .map(|i| names[i].clone())
        .collect();
    let background: Vec<NodeId> = names.iter().filter(|n| !planted.contains(*n)).cloned().collect();

    let end = p.onset + p.duration;
    let horizon = end + p.tail;
    let mut stream = Tracker::new(initial.clone(), p.dynamics, p.jitter, rng);
    let mut restore: Vec<SignalEvent> = Vec::new();
    for t in 1..=horizon {
        let anomalous = p.duration > 0 && t > p.onset && t <= end;
        let mut psi = stream.truth(anomalous.then_some(&planted))?;
        if p.duration > 0 && t == p.onset {
            restore = stream.plant(t, &planted, &background, p);
            psi = concentrate(&psi, &planted, p.planted_share, stream.rng.random_range(-PI..PI))?;
        }
        if p.duration > 0 && t == end {
            for ev in std::mem::take(&mut restore) {
                stream.push(SignalEvent { t, ..ev });
            }
        }
        stream.emit_state(t, &psi);
    }
    Ok(Scenario {
        seed,
        initial,
        events: stream.events,
        scripted_answers: BTreeMap::new(),
        ground_truth: (p.duration > 0).then(|| GroundTruth {
            segment: planted,
            onset: p.onset,
            end,
        }),
        collapse_event: None,
    })
}

/// Moves `share` of the weight onto `segment`, spread evenly with one phase.
fn concentrate(psi: &StateVector, segment: &BTreeSet<NodeId>, share: f64, phase: f64) -> Result<StateVector, SimError> {
    let background: f64 = psi
        .basis()
        .iter()
        .zip(psi.amplitudes().iter())
        .filter(|(n, _)| !segment.contains(*n))
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let magnitude = if background > 1e-12 {
        (share * background / ((1.0 - share) * segment.len() as f64)).sqrt()
    } else {
        1.0
    };
    let amps = psi
        .basis()
        .iter()
        .zip(psi.amplitudes().iter())
        .map(|(n, a)| {
            if segment.contains(n) {
                num_complex::Complex64::from_polar(magnitude, phase)
            } else {
                *a
            }
        })
        .collect();
    Ok(StateVector::from_amplitudes(psi.basis().to_vec(), amps)?)
}

/// Ground-truth stream builder: holds the snapshot as the events leave it.
struct Tracker {
    snap: MpgSnapshot,
    dynamics: Dynamics,
    jitter: f64,
    rng: ChaCha8Rng,
    events: Vec<SignalEvent>,
}

impl Tracker {
    fn new(snap: MpgSnapshot, dynamics: Dynamics, jitter: f64, rng: ChaCha8Rng) -> Self {
        Tracker {
            snap,
            dynamics,
            jitter,
            rng,
            events: Vec::new(),
        }
    }

    /// True next state: the current one evolved under the current operator,
    /// with `inert` stripped of influence when given.
    fn truth(&self, inert: Option<&BTreeSet<NodeId>>) -> Result<StateVector, SimError> {
        let source = match inert {
            Some(seg) => ablate(&self.snap, seg).map_err(|e| SimError::InvalidScenario(e.to_string()))?,
            None => self.snap.clone(),
        };
        let h = build_hamiltonian(&source, &self.dynamics.gains)?;
        Ok(evolve(&build_state(&self.snap)?, &h, self.dynamics.dt)?)
    }

    fn push(&mut self, event: SignalEvent) {
        self.snap
            .apply_in_place(&event)
            .expect("generated events stay within the graph");
        self.events.push(event);
    }

    fn set_node(&mut self, t: u64, node: &NodeId, delta: FeatureDelta, provenance: Provenance) {
        self.push(SignalEvent::node(t, node.clone(), delta, provenance));
    }

    fn set_edge(&mut self, t: u64, key: EdgeKey, weight: f64) {
        self.push(SignalEvent::edge(t, key, FeatureChange::Set(weight), Provenance::Contextual));
    }

    /// Sets every node's relevance and phase so the snapshot reproduces `psi`.
    fn emit_state(&mut self, t: u64, psi: &StateVector) {
        let peak = psi.amplitudes().iter().map(|a| a.norm()).fold(0.0, f64::max);
        let targets: Vec<(NodeId, f64, f64)> = psi
            .basis()
            .iter()
            .zip(psi.amplitudes().iter())
            .map(|(n, a)| (n.clone(), a.norm() / peak, a.arg()))
            .collect();
        for (node, relevance, phase) in targets {
            let noise = 1.0 - self.jitter * self.rng.random::<f64>();
            let delta = FeatureDelta::set(Feature::Relevance, relevance * noise)
                .and(Feature::Phase, FeatureChange::Set(phase));
            self.set_node(t, &node, delta, Provenance::Behavioral);
        }
    }

    /// Gives each segment node one strong supporting link into the
    /// background, muting its other links so contributions cannot cancel.
    /// Returns the events that undo the change.
    fn plant(
        &mut self,
        t: u64,
        segment: &BTreeSet<NodeId>,
        background: &[NodeId],
        p: &PlantedParams,
    ) -> Vec<SignalEvent> {
        let mut undo = Vec::new();
        let incident: Vec<(EdgeKey, f64)> = self
            .snap
            .incident_edges(segment)
            .map(|(k, e)| (k.clone(), e.weight))
            .collect();
        for (key, weight) in incident {
            undo.push(SignalEvent::edge(t, key.clone(), FeatureChange::Set(weight), Provenance::Contextual));
            self.set_edge(t, key, 0.0);
        }
        let targets: Vec<NodeId> = if background.len() >= segment.len() {
            rand::seq::index::sample(&mut self.rng, background.len(), segment.len())
                .into_iter()
                .map(|i| background[i].clone())
                .collect()
        } else if background.is_empty() {
            Vec::new()
        } else {
            (0..segment.len())
                .map(|_| background[self.rng.random_range(0..background.len())].clone())
                .collect()
        };
        for (node, other) in segment.iter().zip(targets) {
            let key = EdgeKey::new(node.as_str(), other.as_str(), RelationKind::Supports);
            let strong = self.rng.random_range(p.planted_coupling.0..=p.planted_coupling.1);
            let before = self.snap.edges.get(&key).map_or(0.0, |e| e.weight);
            undo.push(SignalEvent::edge(t, key.clone(), FeatureChange::Set(before), Provenance::Contextual));
            self.set_edge(t, key, strong);
        }
        for node in segment {
            let f = *self.snap.node(node).expect("planted node exists");
            undo.push(SignalEvent::node(
                t,
                node.clone(),
                FeatureDelta::set(Feature::Risk, f.risk).and(Feature::Uncertainty, FeatureChange::Set(f.uncertainty)),
                Provenance::Internal,
            ));
            self.set_node(
                t,
                node,
                FeatureDelta::set(Feature::Risk, p.planted_risk)
                    .and(Feature::Uncertainty, FeatureChange::Set(p.planted_uncertainty)),
                Provenance::Internal,
            );
        }
        undo
    }
}

/// Nodes of the built-in case study.
pub mod case {
    pub const DELIVERY_COMMITMENTS: &str = "delivery_commitments";
    pub const TASK_PROGRESS: &str = "task_progress";
    pub const INTERACTION_PATTERNS: &str = "interaction_patterns";
    pub const PLANS_OPENNESS: &str = "plans_openness";
    pub const MILESTONES: &str = "milestones";
    pub const LEGAL_PATENT_STATUS: &str = "legal_patent_status";
    pub const SIDE_PROJECT: &str = "side_project";
    pub const TEAM_CONTEXT: &str = "team_context";
    pub const ORGANIZATIONAL_SUPPORT: &str = "organizational_support";
    pub const EXTERNAL_PROJECTS: &str = "external_projects";
    pub const COORDINATION_DELAYS: &str = "coordination_delays";
    pub const GUARDED_PLANS: &str = "guarded_plans_communication";
    pub const IP_BOUNDARY: &str = "ip_boundary_unresolved";
    pub const CONTINUE_PARALLEL: &str = "continue_parallel";
    pub const INTEGRATION_ACQUISITION: &str = "integration_acquisition";
    pub const IP_APPROPRIATION: &str = "ip_appropriation";
    pub const DISENGAGEMENT: &str = "disengagement";

    pub const SEGMENT: [&str; 3] = [COORDINATION_DELAYS, GUARDED_PLANS, IP_BOUNDARY];
    pub const READINGS: [&str; 4] = [CONTINUE_PARALLEL, INTEGRATION_ACQUISITION, IP_APPROPRIATION, DISENGAGEMENT];

    pub const STEPS: u64 = 90;
    pub const ONSET: u64 = 30;
    pub const COLLAPSE: u64 = 85;
    /// Steps between the first request and its scripted unresolved answer.
    pub const FIRST_ANSWER_DELAY: u64 = 5;
    pub const SEED: u64 = 2024;
}

fn case_stream() -> Result<Scenario, SimError> {
    use case::*;
    use RelationKind::*;

    let node = |relevance, uncertainty, risk, phase| NodeFeatures {
        relevance,
        uncertainty,
        risk,
        phase,
    };
    let initial = MpgSnapshot::new(0)
        .with_node(DELIVERY_COMMITMENTS, node(0.9, 0.05, 0.2, 0.0))
        .with_node(TASK_PROGRESS, node(0.8, 0.05, 0.1, 0.3))
        .with_node(INTERACTION_PATTERNS, node(0.7, 0.06, 0.1, -0.4))
        .with_node(PLANS_OPENNESS, node(0.6, 0.08, 0.1, 0.8))
        .with_node(MILESTONES, node(0.7, 0.04, 0.2, -1.0))
        .with_node(LEGAL_PATENT_STATUS, node(0.3, 0.05, 0.1, 1.5))
        .with_node(SIDE_PROJECT, node(0.25, 0.07, 0.1, -2.0))
        .with_node(TEAM_CONTEXT, node(0.6, 0.03, 0.0, 2.2))
        .with_node(ORGANIZATIONAL_SUPPORT, node(0.5, 0.03, 0.0, -2.6))
        .with_node(EXTERNAL_PROJECTS, node(0.3, 0.06, 0.1, 0.6))
        .with_node(COORDINATION_DELAYS, node(0.3, 0.1, 0.1, 1.1))
        .with_node(GUARDED_PLANS, node(0.25, 0.1, 0.1, -0.7))
        .with_node(IP_BOUNDARY, node(0.2, 0.1, 0.1, 2.8))
        .with_node(CONTINUE_PARALLEL, node(0.3, 0.05, 0.0, 0.2))
        .with_node(INTEGRATION_ACQUISITION, node(0.3, 0.05, 0.0, -1.3))
        .with_node(IP_APPROPRIATION, node(0.3, 0.05, 0.0, 1.9))
        .with_node(DISENGAGEMENT, node(0.3, 0.05, 0.0, -2.9))
        .with_edge(TASK_PROGRESS, DELIVERY_COMMITMENTS, Supports, 0.4)
        .with_edge(MILESTONES, DELIVERY_COMMITMENTS, DependsOn, 0.35)
        .with_edge(INTERACTION_PATTERNS, TEAM_CONTEXT, Supports, 0.3)
        .with_edge(PLANS_OPENNESS, INTERACTION_PATTERNS, Supports, 0.25)
        .with_edge(ORGANIZATIONAL_SUPPORT, TEAM_CONTEXT, Supports, 0.3)
        .with_edge(TASK_PROGRESS, MILESTONES, TemporallyPrecedes, 0.2)
        .with_edge(SIDE_PROJECT, EXTERNAL_PROJECTS, Supports, 0.3)
        .with_edge(EXTERNAL_PROJECTS, LEGAL_PATENT_STATUS, IncreasesRiskOf, 0.2)
        .with_edge(SIDE_PROJECT, TASK_PROGRESS, Contradicts, 0.15)
        .with_edge(CONTINUE_PARALLEL, DELIVERY_COMMITMENTS, Supports, 0.2)
        .with_edge(INTEGRATION_ACQUISITION, ORGANIZATIONAL_SUPPORT, DependsOn, 0.2)
        .with_edge(IP_APPROPRIATION, LEGAL_PATENT_STATUS, IncreasesRiskOf, 0.25)
        .with_edge(DISENGAGEMENT, TEAM_CONTEXT, Contradicts, 0.2)
        .with_edge(COORDINATION_DELAYS, CONTINUE_PARALLEL, Supports, 0.15)
        .with_edge(GUARDED_PLANS, INTEGRATION_ACQUISITION, Supports, 0.15)
        .with_edge(IP_BOUNDARY, IP_APPROPRIATION, IncreasesRiskOf, 0.15)
        .with_edge(GUARDED_PLANS, IP_BOUNDARY, Supports, 0.2)
        .with_edge(COORDINATION_DELAYS, GUARDED_PLANS, DependsOn, 0.2);

    let segment: BTreeSet<NodeId> = SEGMENT.iter().map(|&n| NodeId::from(n)).collect();
    let strong: [(&str, &str, RelationKind, f64); 7] = [
        (COORDINATION_DELAYS, CONTINUE_PARALLEL, Supports, 0.85),
        (COORDINATION_DELAYS, DISENGAGEMENT, Supports, 0.9),
        (GUARDED_PLANS, INTEGRATION_ACQUISITION, Supports, 0.8),
        (GUARDED_PLANS, DISENGAGEMENT, DependsOn, 0.85),
        (IP_BOUNDARY, IP_APPROPRIATION, IncreasesRiskOf, 0.95),
        (IP_BOUNDARY, INTEGRATION_ACQUISITION, Contradicts, 0.8),
        (GUARDED_PLANS, CONTINUE_PARALLEL, Contradicts, 0.8),
    ];

    let rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut stream = Tracker::new(initial.clone(), Dynamics::default(), 0.004, rng);
    for t in 1..=STEPS {
        let anomalous = t > ONSET && t < COLLAPSE;
        let mut psi = stream.truth(anomalous.then_some(&segment))?;
        // Ambiguity signals build up on the segment before it takes hold.
        if (10..ONSET).contains(&t) {
            for n in &segment {
                stream.set_node(t, n, FeatureDelta::add(Feature::Uncertainty, 0.015), Provenance::Behavioral);
            }
        }
        if t == ONSET {
            for (from, to, kind, w) in strong {
                stream.set_edge(t, EdgeKey::new(from, to, kind), w);
            }
            for n in &segment {
                let delta = FeatureDelta::set(Feature::Risk, 0.75).and(Feature::Uncertainty, FeatureChange::Set(0.6));
                stream.set_node(t, n, delta, Provenance::Internal);
            }
            psi = concentrate(&psi, &segment, 0.8, 0.4)?;
        }
        if t == 60 || t == 70 {
            // Patent filing and legal preparation: recorded, no feature change.
            let id = NodeId::from(LEGAL_PATENT_STATUS);
            stream.set_node(t, &id, FeatureDelta::default(), Provenance::Contextual);
        }
        if t == COLLAPSE {
            for (from, to, kind, _) in strong {
                let base = initial.edges.get(&EdgeKey::new(from, to, kind)).map_or(0.0, |e| e.weight);
                stream.set_edge(t, EdgeKey::new(from, to, kind), base);
            }
            for n in &segment {
                let delta = FeatureDelta::set(Feature::Risk, 0.1).and(Feature::Uncertainty, FeatureChange::Set(0.1));
                stream.set_node(t, n, delta, Provenance::Internal);
            }
            let leave = BTreeSet::from([NodeId::from(DISENGAGEMENT)]);
            psi = concentrate(&psi, &leave, 0.7, 0.0)?;
        }
        stream.emit_state(t, &psi);
    }
    Ok(Scenario {
        seed: SEED,
        initial,
        events: stream.events,
        scripted_answers: BTreeMap::new(),
        ground_truth: Some(GroundTruth {
            segment,
            onset: ONSET,
            end: COLLAPSE,
        }),
        collapse_event: Some(COLLAPSE),
    })
}

/// Built-in three-month case: an ambiguous segment around delivery delays,
/// guarded communication of plans and an unresolved IP boundary, with four
/// competing readings. The first request is answered as unresolved; the
/// second is answered at the collapse step with the disengagement reading.
///
/// Answer indices refer to the option lists produced under the default
/// engine configuration.
pub fn case_study() -> Scenario {
    let mut scenario = case_stream().expect("built-in case graph is valid");
    let config = EngineConfig::default();
    let first = replay(&scenario, &config).expect("built-in case replays");
    let request = &first.episodes.first().expect("case study triggers a request").request;
    scenario.scripted_answers.insert(
        0,
        ClarificationAnswer::unresolved(&request.id, request.issued_at + case::FIRST_ANSWER_DELAY),
    );
    let second = replay(&scenario, &config).expect("built-in case replays");
    let request = &second.episodes.get(1).expect("case study triggers a second request").request;
    let index = request
        .options
        .iter()
        .position(|o| o.keep_nodes.len() == 1 && o.keep_nodes.contains(&NodeId::from(case::DISENGAGEMENT)))
        .expect("disengagement is offered as a reading");
    scenario
        .scripted_answers
        .insert(1, ClarificationAnswer::pick(&request.id, index, case::COLLAPSE));
    scenario
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub t: u64,
    pub candidate: RogueCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardRecord {
    pub t: u64,
    pub suspended: bool,
    pub predict_permitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trace: Vec<TracePoint>,
    /// Steps at which a candidate starts standing or changes segment.
    pub detections: Vec<Detection>,
    pub episodes: Vec<String>,
    pub detection_latency: Option<u64>,
    pub segment_jaccard: Option<f64>,
    pub guard_log: Vec<GuardRecord>,
}

impl SimReport {
    pub fn to_json(&self) -> Result<String, SimError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_trace_csv(&self, out: impl Write) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.trace {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Predictions permitted while a request was pending.
    pub fn permits_while_suspended(&self) -> usize {
        self.guard_log.iter().filter(|g| g.suspended && g.predict_permitted).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub report: SimReport,
    pub episodes: Vec<RogueEpisode>,
}

impl Replay {
    /// Episodes as a JSON Lines log, one record per line.
    pub fn episode_log(&self) -> Result<Vec<u8>, SimError> {
        let mut out = Vec::new();
        for e in &self.episodes {
            serde_json::to_writer(&mut out, e)?;
            out.push(b'\n');
        }
        Ok(out)
    }
}

/// The engine's observation sequence for `scenario` when no answers are
/// applied: one entry per step with prior and observed snapshots.
pub fn observations(scenario: &Scenario, lambda: f64, dynamics: &Dynamics) -> Result<Vec<Observation>, SimError> {
    scenario.check()?;
    let mut by_step: BTreeMap<u64, Vec<&SignalEvent>> = BTreeMap::new();
    for ev in &scenario.events {
        by_step.entry(ev.t).or_default().push(ev);
    }
    let mut prior = Arc::new(scenario.initial.clone());
    let mut out = Vec::new();
    for t in scenario.initial.t + 1..=scenario.horizon() {
        let mut next = (*prior).clone();
        for ev in by_step.get(&t).into_iter().flatten() {
            next.apply_in_place(ev)
                .map_err(|e| SimError::Step { t, source: e.into() })?;
        }
        next.t = t;
        let h = build_hamiltonian(&prior, &dynamics.gains)?;
        let pred = evolve(&build_state(&prior)?, &h, dynamics.dt)?;
        let obs = build_state(&next)?;
        let sample = divergence(&pred, &obs, &next, lambda).map_err(|e| SimError::Step { t, source: e.into() })?;
        let snapshot = Arc::new(next);
        out.push(Observation {
            prior,
            snapshot: snapshot.clone(),
            sample,
        });
        prior = snapshot;
    }
    Ok(out)
}

pub fn jaccard(a: &BTreeSet<NodeId>, b: &BTreeSet<NodeId>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn replay(scenario: &Scenario, config: &EngineConfig) -> Result<Replay, SimError> {
    scenario.check()?;
    let start = scenario.initial.t;
    let at = |source| SimError::Step { t: start, source };
    let mut engine = Engine::new(SIM_ACTOR, scenario.initial.clone(), *config).map_err(at)?;
    let mut by_step: BTreeMap<u64, Vec<SignalEvent>> = BTreeMap::new();
    for ev in &scenario.events {
        by_step.entry(ev.t).or_default().push(ev.clone());
    }
    let end = scenario.horizon();
    let mut episodes = Vec::new();
    let mut detections: Vec<Detection> = Vec::new();
    let mut guard_log = Vec::new();
    let mut standing: Option<BTreeSet<NodeId>> = None;
    let mut issued = 0u64;
    for t in start + 1..=end {
        let at = |source| SimError::Step { t, source };
        if engine.pending().is_some() {
            let ordinal = issued - 1;
            if let Some(answer) = scenario.scripted_answers.get(&ordinal).filter(|a| t >= a.answered_at) {
                episodes.push(engine.resolve(answer.clone()).map_err(at)?);
                standing = None;
            }
        }
        let events = by_step.get(&t).map_or(&[][..], Vec::as_slice);
        let outcome = engine.step(t, events).map_err(at)?;
        if outcome.suspended.is_some() {
            issued += 1;
        }
        match outcome.candidate {
            Some(c) => {
                if standing.as_ref() != Some(&c.segment) {
                    standing = Some(c.segment.clone());
                    detections.push(Detection { t, candidate: c });
                }
            }
            None => standing = None,
        }
        let decision = engine.guard(InferenceKind::Predict);
        guard_log.push(GuardRecord {
            t,
            suspended: engine.mode().is_suspended(),
            predict_permitted: matches!(decision, GuardDecision::Permit),
        });
    }
    if let Some(e) = engine.abandon_pending() {
        episodes.push(e);
    }
    let first = scenario
        .ground_truth
        .as_ref()
        .and_then(|gt| detections.iter().find(|d| d.t >= gt.onset).map(|d| (gt, d)));
    let report = SimReport {
        trace: engine.trace().to_vec(),
        detection_latency: first.map(|(gt, d)| d.t - gt.onset),
        segment_jaccard: scenario.ground_truth.as_ref().map(|gt| {
            first.map_or(0.0, |(_, d)| jaccard(&d.candidate.segment, &gt.segment))
        }),
        detections,
        episodes: episodes.iter().map(|e| e.episode_id.clone()).collect(),
        guard_log,
    };
    Ok(Replay { report, episodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_zero_has_no_ground_truth() {
        let s = generate_planted(1, 6, 2, 20, 0).unwrap();
        assert!(s.ground_truth.is_none());
        assert_eq!(s.horizon(), 40);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_planted(7, 8, 2, 20, 40).unwrap().to_json().unwrap();
        let b = generate_planted(7, 8, 2, 20, 40).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate_planted(8, 8, 2, 20, 40).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_bounds() {
        assert!(generate_planted(1, 3, 4, 20, 40).is_err());
        assert!(generate_planted(1, 3, 0, 20, 40).is_err());
        assert!(generate_planted(1, 6, 2, 20, 10).is_err());
    }

    #[test]
    fn empty_event_list_gives_empty_trace() {
        let s = Scenario {
            seed: 0,
            initial: MpgSnapshot::new(0).with_node("A", NodeFeatures::with_relevance(1.0)),
            events: vec![],
            scripted_answers: BTreeMap::new(),
            ground_truth: None,
            collapse_event: None,
        };
        let r = replay(&s, &EngineConfig::default()).unwrap();
        assert!(r.report.trace.is_empty());
        assert!(r.episodes.is_empty());
    }

    #[test]
    fn jaccard_values() {
        let set = |v: &[&str]| v.iter().map(|&s| NodeId::from(s)).collect::<BTreeSet<_>>();
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["b", "c"])), 1.0 / 3.0);
    }
}
