//! Time-indexed signal graph: nodes, typed directed edges, feature vectors
//! and signal-driven updates.
//!
//! Snapshots are immutable values. [`apply_signal`] produces a new snapshot
//! and never touches its input.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque identifier of a graph entity, unique within one actor's graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Supports,
    Contradicts,
    DependsOn,
    IncreasesRiskOf,
    TemporallyPrecedes,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::Supports,
        RelationKind::Contradicts,
        RelationKind::DependsOn,
        RelationKind::IncreasesRiskOf,
        RelationKind::TemporallyPrecedes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Supports => "supports",
            RelationKind::Contradicts => "contradicts",
            RelationKind::DependsOn => "depends_on",
            RelationKind::IncreasesRiskOf => "increases_risk_of",
            RelationKind::TemporallyPrecedes => "temporally_precedes",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named scalar features tracked per node or edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Relevance,
    Uncertainty,
    Risk,
    Phase,
    Weight,
}

impl Feature {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Feature::Phase => (-PI, PI),
            _ => (0.0, 1.0),
        }
    }

    pub fn clamp(self, value: f64) -> f64 {
        let (lo, hi) = self.bounds();
        value.clamp(lo, hi)
    }

    fn holds(self, value: f64) -> bool {
        let (lo, hi) = self.bounds();
        value.is_finite() && value >= lo && value <= hi
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Feature::Relevance => "relevance",
            Feature::Uncertainty => "uncertainty",
            Feature::Risk => "risk",
            Feature::Phase => "phase",
            Feature::Weight => "weight",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeFeatures {
    #[serde(default)]
    pub relevance: f64,
    #[serde(default)]
    pub uncertainty: f64,
    #[serde(default)]
    pub risk: f64,
    /// Radians in `[-pi, pi]`.
    #[serde(default)]
    pub phase: f64,
}

impl NodeFeatures {
    /// Features with every value clamped into its bound.
    pub fn clamped(relevance: f64, uncertainty: f64, risk: f64, phase: f64) -> Self {
        NodeFeatures {
            relevance: Feature::Relevance.clamp(relevance),
            uncertainty: Feature::Uncertainty.clamp(uncertainty),
            risk: Feature::Risk.clamp(risk),
            phase: Feature::Phase.clamp(phase),
        }
    }

    pub fn with_relevance(relevance: f64) -> Self {
        NodeFeatures::clamped(relevance, 0.0, 0.0, 0.0)
    }

    fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Relevance => self.relevance,
            Feature::Uncertainty => self.uncertainty,
            Feature::Risk => self.risk,
            Feature::Phase => self.phase,
            Feature::Weight => unreachable!("weight is an edge feature"),
        }
    }

    fn slot(&mut self, feature: Feature) -> &mut f64 {
        match feature {
            Feature::Relevance => &mut self.relevance,
            Feature::Uncertainty => &mut self.uncertainty,
            Feature::Risk => &mut self.risk,
            Feature::Phase => &mut self.phase,
            Feature::Weight => unreachable!("weight is an edge feature"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeFeatures {
    pub weight: f64,
}

/// Identity of a directed typed edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: RelationKind,
}

impl EdgeKey {
    pub fn new(from: impl Into<NodeId>, to: impl Into<NodeId>, kind: RelationKind) -> Self {
        EdgeKey {
            from: from.into(),
            to: to.into(),
            kind,
        }
    }

    pub fn touches(&self, node: &NodeId) -> bool {
        &self.from == node || &self.to == node
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -[{}]-> {}", self.from, self.kind, self.to)
    }
}

/// Graph state at one discrete time index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MpgSnapshot {
    pub t: u64,
    pub nodes: BTreeMap<NodeId, NodeFeatures>,
    #[serde(with = "edge_list")]
    pub edges: BTreeMap<EdgeKey, EdgeFeatures>,
}

impl MpgSnapshot {
    pub fn new(t: u64) -> Self {
        MpgSnapshot {
            t,
            ..Default::default()
        }
    }

    /// Builder-style node insertion; features are clamped.
    pub fn with_node(mut self, id: impl Into<NodeId>, features: NodeFeatures) -> Self {
        let f = NodeFeatures::clamped(
            features.relevance,
            features.uncertainty,
            features.risk,
            features.phase,
        );
        self.nodes.insert(id.into(), f);
        self
    }

    /// Builder-style edge insertion. Zero weight removes the edge.
    pub fn with_edge(
        mut self,
        from: impl Into<NodeId>,
        to: impl Into<NodeId>,
        kind: RelationKind,
        weight: f64,
    ) -> Self {
        let key = EdgeKey::new(from, to, kind);
        let weight = Feature::Weight.clamp(weight);
        if weight > 0.0 {
            self.edges.insert(key, EdgeFeatures { weight });
        } else {
            self.edges.remove(&key);
        }
        self
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeFeatures> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Node ids in lexicographic order.
    pub fn basis(&self) -> Vec<NodeId> {
        self.nodes.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges with at least one endpoint in `nodes`.
    pub fn incident_edges<'a>(
        &'a self,
        nodes: &'a BTreeSet<NodeId>,
    ) -> impl Iterator<Item = (&'a EdgeKey, &'a EdgeFeatures)> + 'a {
        self.edges
            .iter()
            .filter(move |(k, _)| nodes.contains(&k.from) || nodes.contains(&k.to))
    }

    /// Edges with both endpoints in `nodes`.
    pub fn induced_edges<'a>(
        &'a self,
        nodes: &'a BTreeSet<NodeId>,
    ) -> impl Iterator<Item = (&'a EdgeKey, &'a EdgeFeatures)> + 'a {
        self.edges
            .iter()
            .filter(move |(k, _)| nodes.contains(&k.from) && nodes.contains(&k.to))
    }

    /// Canonical JSON text (nodes and edges sorted).
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

mod edge_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct EdgeRecord {
        from: NodeId,
        to: NodeId,
        kind: RelationKind,
        weight: f64,
    }

    pub fn serialize<S: Serializer>(
        edges: &BTreeMap<EdgeKey, EdgeFeatures>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let records: Vec<EdgeRecord> = edges
            .iter()
            .map(|(k, f)| EdgeRecord {
                from: k.from.clone(),
                to: k.to.clone(),
                kind: k.kind,
                weight: f.weight,
            })
            .collect();
        records.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<EdgeKey, EdgeFeatures>, D::Error> {
        let records = Vec::<EdgeRecord>::deserialize(d)?;
        let mut edges = BTreeMap::new();
        for r in records {
            let key = EdgeKey {
                from: r.from,
                to: r.to,
                kind: r.kind,
            };
            if edges.insert(key.clone(), EdgeFeatures { weight: r.weight }).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate edge {key}")));
            }
        }
        Ok(edges)
    }
}

/// What a [`SignalEvent`] updates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalTarget {
    Node(NodeId),
    Edge(EdgeKey),
}

impl fmt::Display for SignalTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalTarget::Node(n) => write!(f, "node {n}"),
            SignalTarget::Edge(e) => write!(f, "edge {e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureChange {
    Set(f64),
    Add(f64),
}

impl FeatureChange {
    fn value(self) -> f64 {
        match self {
            FeatureChange::Set(v) | FeatureChange::Add(v) => v,
        }
    }

    fn apply(self, current: f64) -> f64 {
        match self {
            FeatureChange::Set(v) => v,
            FeatureChange::Add(v) => current + v,
        }
    }
}

/// Partial feature assignment; absent fields are left untouched.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureDelta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<FeatureChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<FeatureChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<FeatureChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<FeatureChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<FeatureChange>,
}

impl FeatureDelta {
    pub fn set(feature: Feature, value: f64) -> Self {
        FeatureDelta::default().and(feature, FeatureChange::Set(value))
    }

    pub fn add(feature: Feature, value: f64) -> Self {
        FeatureDelta::default().and(feature, FeatureChange::Add(value))
    }

    pub fn and(mut self, feature: Feature, change: FeatureChange) -> Self {
        *self.slot(feature) = Some(change);
        self
    }

    fn slot(&mut self, feature: Feature) -> &mut Option<FeatureChange> {
        match feature {
            Feature::Relevance => &mut self.relevance,
            Feature::Uncertainty => &mut self.uncertainty,
            Feature::Risk => &mut self.risk,
            Feature::Phase => &mut self.phase,
            Feature::Weight => &mut self.weight,
        }
    }

    fn node_changes(&self) -> impl Iterator<Item = (Feature, FeatureChange)> + '_ {
        [
            (Feature::Relevance, self.relevance),
            (Feature::Uncertainty, self.uncertainty),
            (Feature::Risk, self.risk),
            (Feature::Phase, self.phase),
        ]
        .into_iter()
        .filter_map(|(f, c)| c.map(|c| (f, c)))
    }

    fn touches_node_features(&self) -> bool {
        self.node_changes().next().is_some()
    }

    pub fn is_empty(&self) -> bool {
        !self.touches_node_features() && self.weight.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Behavioral,
    Contextual,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalEvent {
    pub t: u64,
    pub target: SignalTarget,
    #[serde(default)]
    pub delta: FeatureDelta,
    pub provenance: Provenance,
}

impl SignalEvent {
    pub fn node(t: u64, id: impl Into<NodeId>, delta: FeatureDelta, provenance: Provenance) -> Self {
        SignalEvent {
            t,
            target: SignalTarget::Node(id.into()),
            delta,
            provenance,
        }
    }

    pub fn edge(t: u64, key: EdgeKey, weight: FeatureChange, provenance: Provenance) -> Self {
        SignalEvent {
            t,
            target: SignalTarget::Edge(key),
            delta: FeatureDelta::default().and(Feature::Weight, weight),
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("event at t={event} precedes snapshot at t={snapshot}")]
    TimeRegression { snapshot: u64, event: u64 },
    #[error("edge {edge} references missing node {node}")]
    MissingEndpoint { edge: EdgeKey, node: NodeId },
    #[error("edge {0} is a self-loop")]
    SelfLoop(EdgeKey),
    #[error("delta for {target} changes {feature}, which it does not carry")]
    FeatureMismatch { target: SignalTarget, feature: Feature },
    #[error("delta for {target} carries a non-finite {feature} value")]
    NonFinite { target: SignalTarget, feature: Feature },
}

/// Applies one event and returns the resulting snapshot at `event.t`.
pub fn apply_signal(snapshot: &MpgSnapshot, event: &SignalEvent) -> Result<MpgSnapshot, SignalError> {
    let mut next = snapshot.clone();
    next.apply_in_place(event)?;
    Ok(next)
}

impl MpgSnapshot {
    /// In-place form of [`apply_signal`]. On error `self` is left unchanged.
    pub fn apply_in_place(&mut self, event: &SignalEvent) -> Result<(), SignalError> {
        if event.t < self.t {
            return Err(SignalError::TimeRegression {
                snapshot: self.t,
                event: event.t,
            });
        }
        let delta = &event.delta;
        for (feature, change) in delta.node_changes().chain(delta.weight.map(|c| (Feature::Weight, c))) {
            if !change.value().is_finite() {
                return Err(SignalError::NonFinite {
                    target: event.target.clone(),
                    feature,
                });
            }
        }
        match &event.target {
            SignalTarget::Node(id) => {
                if delta.weight.is_some() {
                    return Err(SignalError::FeatureMismatch {
                        target: event.target.clone(),
                        feature: Feature::Weight,
                    });
                }
                let features = self.nodes.entry(id.clone()).or_default();
                for (feature, change) in delta.node_changes() {
                    let slot = features.slot(feature);
                    *slot = feature.clamp(change.apply(*slot));
                }
            }
            SignalTarget::Edge(key) => {
                if let Some((feature, _)) = delta.node_changes().next() {
                    return Err(SignalError::FeatureMismatch {
                        target: event.target.clone(),
                        feature,
                    });
                }
                if key.from == key.to {
                    return Err(SignalError::SelfLoop(key.clone()));
                }
                for node in [&key.from, &key.to] {
                    if !self.nodes.contains_key(node) {
                        return Err(SignalError::MissingEndpoint {
                            edge: key.clone(),
                            node: node.clone(),
                        });
                    }
                }
                if let Some(change) = delta.weight {
                    let current = self.edges.get(key).map_or(0.0, |e| e.weight);
                    let weight = Feature::Weight.clamp(change.apply(current));
                    if weight > 0.0 {
                        self.edges.insert(key.clone(), EdgeFeatures { weight });
                    } else {
                        self.edges.remove(key);
                    }
                }
            }
        }
        self.t = event.t;
        Ok(())
    }
}

/// One broken snapshot invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    MissingEndpoint { edge: EdgeKey, node: NodeId },
    SelfLoop { edge: EdgeKey, node: NodeId },
    ZeroWeightEdge { edge: EdgeKey },
    NodeFeatureOutOfBounds { node: NodeId, feature: Feature, value: f64 },
    EdgeWeightOutOfBounds { edge: EdgeKey, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingEndpoint { edge, node } => {
                write!(f, "edge {edge} references missing node {node}")
            }
            Violation::SelfLoop { node, .. } => write!(f, "self-loop on node {node}"),
            Violation::ZeroWeightEdge { edge } => write!(f, "edge {edge} is stored with zero weight"),
            Violation::NodeFeatureOutOfBounds { node, feature, value } => {
                write!(f, "node {node} has {feature}={value} out of bounds")
            }
            Violation::EdgeWeightOutOfBounds { edge, value } => {
                write!(f, "edge {edge} has weight={value} out of bounds")
            }
        }
    }
}

/// Lists every invariant violation; empty means the snapshot is well formed.
pub fn validate(snapshot: &MpgSnapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    for (id, features) in &snapshot.nodes {
        for feature in [Feature::Relevance, Feature::Uncertainty, Feature::Risk, Feature::Phase] {
            let value = features.get(feature);
            if !feature.holds(value) {
                out.push(Violation::NodeFeatureOutOfBounds {
                    node: id.clone(),
                    feature,
                    value,
                });
            }
        }
    }
    for (key, features) in &snapshot.edges {
        if key.from == key.to {
            out.push(Violation::SelfLoop {
                edge: key.clone(),
                node: key.from.clone(),
            });
        } else {
            for node in [&key.from, &key.to] {
                if !snapshot.nodes.contains_key(node) {
                    out.push(Violation::MissingEndpoint {
                        edge: key.clone(),
                        node: node.clone(),
                    });
                }
            }
        }
        if features.weight == 0.0 {
            out.push(Violation::ZeroWeightEdge { edge: key.clone() });
        } else if !Feature::Weight.holds(features.weight) {
            out.push(Violation::EdgeWeightOutOfBounds {
                edge: key.clone(),
                value: features.weight,
            });
        }
    }
    out
}

/// Sorted union of both snapshots' node ids.
pub fn union_basis(a: &MpgSnapshot, b: &MpgSnapshot) -> Vec<NodeId> {
    a.nodes
        .keys()
        .chain(b.nodes.keys())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
