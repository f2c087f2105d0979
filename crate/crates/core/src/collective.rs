//! Cross-actor aggregation of episode signatures.
//!
//! A signature keeps only the relation-kind profile of the rogue segment,
//! its size, the outcome and a salted hash of the actor. Node ids, labels,
//! feature values and free text cannot be represented by the type.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::memory::RogueEpisode;
use crate::mpg::RelationKind;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeSignature {
    pub actor_hash: String,
    pub relation_profile: BTreeMap<RelationKind, u32>,
    pub segment_size: u32,
    pub resolved: bool,
    pub window_length: u32,
}

/// Canonical text key of a relation profile, e.g. `contradicts:1,supports:2`.
pub fn profile_key(profile: &BTreeMap<RelationKind, u32>) -> String {
    let mut parts: Vec<String> = profile
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(k, n)| format!("{}:{n}", k.as_str()))
        .collect();
    parts.sort();
    if parts.is_empty() {
        "empty".to_owned()
    } else {
        parts.join(",")
    }
}

pub fn actor_hash(actor_id: &str, salt: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(salt);
    h.update([0u8]);
    h.update(actor_id.as_bytes());
    hex::encode(h.finalize())
}

pub fn anonymize(episode: &RogueEpisode, salt: &[u8]) -> EpisodeSignature {
    let mut relation_profile = BTreeMap::new();
    for rel in &episode.ambiguity_config.segment_relations {
        *relation_profile.entry(rel.kind).or_insert(0) += 1;
    }
    let window_length = episode
        .candidate
        .window_end
        .saturating_sub(episode.candidate.window_start)
        + 1;
    EpisodeSignature {
        actor_hash: actor_hash(&episode.actor_id, salt),
        relation_profile,
        segment_size: episode.candidate.segment.len() as u32,
        resolved: episode.resolved,
        window_length: window_length as u32,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationPattern {
    pub relation_profile: String,
    pub actor_count: usize,
    pub episode_count: usize,
    pub unresolved_fraction: f64,
}

/// Groups signatures by relation profile, keeping groups seen by at least
/// `min_actors` distinct actors. A floor below two is raised to two.
pub fn aggregate(signatures: &[EpisodeSignature], min_actors: usize) -> Vec<PopulationPattern> {
    let floor = min_actors.max(2);
    let mut groups: BTreeMap<String, (BTreeSet<&str>, usize, usize)> = BTreeMap::new();
    for s in signatures {
        let g = groups.entry(profile_key(&s.relation_profile)).or_default();
        g.0.insert(&s.actor_hash);
        g.1 += 1;
        if !s.resolved {
            g.2 += 1;
        }
    }
    let mut out: Vec<PopulationPattern> = groups
        .into_iter()
        .filter(|(_, (actors, _, _))| actors.len() >= floor)
        .map(|(key, (actors, episodes, unresolved))| PopulationPattern {
            relation_profile: key,
            actor_count: actors.len(),
            episode_count: episodes,
            unresolved_fraction: unresolved as f64 / episodes as f64,
        })
        .collect();
    out.sort_by(|a, b| {
        b.episode_count
            .cmp(&a.episode_count)
            .then_with(|| a.relation_profile.cmp(&b.relation_profile))
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlertThresholds {
    pub unresolved_fraction: f64,
    pub actor_floor: usize,
}

impl Default for AlertThresholds {
    fn default() -> Self {
        AlertThresholds {
            unresolved_fraction: 0.5,
            actor_floor: 3,
        }
    }
}

/// Descriptive population-level alert. Never feeds back into an engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveAlert {
    pub relation_profile: String,
    pub actor_count: usize,
    pub episode_count: usize,
    pub unresolved_fraction: f64,
    pub message: String,
}

pub fn alert(patterns: &[PopulationPattern], thresholds: &AlertThresholds) -> Vec<CollectiveAlert> {
    patterns
        .iter()
        .filter(|p| p.unresolved_fraction >= thresholds.unresolved_fraction && p.actor_count >= thresholds.actor_floor)
        .map(|p| CollectiveAlert {
            relation_profile: p.relation_profile.clone(),
            actor_count: p.actor_count,
            episode_count: p.episode_count,
            unresolved_fraction: p.unresolved_fraction,
            message: format!(
                "{} actors share an ambiguity pattern ({}) that stayed unresolved in {:.0}% of {} episodes",
                p.actor_count,
                p.relation_profile,
                100.0 * p.unresolved_fraction,
                p.episode_count
            ),
        })
        .collect()
}
