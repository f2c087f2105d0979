//! Append-only episode log and per-actor divergence baselines.
//!
//! The durable form is JSON Lines: one episode per line, written with a
//! single `write_all` and flushed. Readers parse complete lines only, so a
//! reader racing an append sees a consistent prefix.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoherence::{Choice, ClarificationAnswer, ClarificationRequest};
use crate::divergence::{DivergenceSample, RogueCandidate};
use crate::linalg::ComplexMatrixJson;
use crate::mpg::{MpgSnapshot, NodeId, RelationKind};

/// One relation inside the rogue segment at the time it was flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRelation {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: RelationKind,
    pub weight: f64,
}

/// What the engine saw when it suspended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub operator: ComplexMatrixJson,
    pub loadings: BTreeMap<NodeId, f64>,
    /// Edges of the subgraph induced by the segment.
    pub segment_relations: Vec<SegmentRelation>,
}

impl AmbiguityConfig {
    pub fn capture(operator: ComplexMatrixJson, candidate: &RogueCandidate, snapshot: &MpgSnapshot) -> Self {
        let segment_relations = snapshot
            .induced_edges(&candidate.segment)
            .map(|(k, e)| SegmentRelation {
                from: k.from.clone(),
                to: k.to.clone(),
                kind: k.kind,
                weight: e.weight,
            })
            .collect();
        AmbiguityConfig {
            operator,
            loadings: candidate.loadings.clone(),
            segment_relations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RogueEpisode {
    pub episode_id: String,
    pub actor_id: String,
    pub opened_at: u64,
    pub closed_at: u64,
    pub candidate: RogueCandidate,
    pub request: ClarificationRequest,
    pub answer: Option<ClarificationAnswer>,
    pub resolved: bool,
    pub ambiguity_config: AmbiguityConfig,
}

impl RogueEpisode {
    pub fn check(&self) -> Result<(), MemoryError> {
        if self.closed_at < self.opened_at {
            return Err(MemoryError::Invalid(format!(
                "episode {} closes at {} before it opens at {}",
                self.episode_id, self.closed_at, self.opened_at
            )));
        }
        let chosen = matches!(self.answer, Some(ClarificationAnswer { chosen: Choice::Option(_), .. }));
        if chosen != self.resolved {
            return Err(MemoryError::Invalid(format!(
                "episode {} resolved={} disagrees with its answer",
                self.episode_id, self.resolved
            )));
        }
        Ok(())
    }

    pub fn segment(&self) -> &BTreeSet<NodeId> {
        &self.candidate.segment
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("episode {0} is already recorded")]
    DuplicateEpisode(String),
    #[error("invalid episode: {0}")]
    Invalid(String),
    #[error("episode log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("episode log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

enum Sink {
    Memory(Vec<u8>),
    File { path: PathBuf, file: File },
}

/// Durable, append-only store of episodes.
pub struct EpisodeStore {
    sink: Sink,
    episodes: Vec<RogueEpisode>,
    ids: HashSet<String>,
}

impl EpisodeStore {
    pub fn in_memory() -> Self {
        EpisodeStore {
            sink: Sink::Memory(Vec::new()),
            episodes: Vec::new(),
            ids: HashSet::new(),
        }
    }

    /// Opens (or creates) a log file and replays the episodes already in it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| MemoryError::Io {
            path: path.clone(),
            source,
        };
        let episodes = if path.exists() { read_log(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        let ids = episodes.iter().map(|e| e.episode_id.clone()).collect();
        Ok(EpisodeStore {
            sink: Sink::File { path, file },
            episodes,
            ids,
        })
    }

    pub fn record(&mut self, episode: RogueEpisode) -> Result<usize, MemoryError> {
        episode.check()?;
        if self.ids.contains(&episode.episode_id) {
            return Err(MemoryError::DuplicateEpisode(episode.episode_id));
        }
        let mut line = serde_json::to_vec(&episode).expect("episode serialization is infallible");
        line.push(b'\n');
        match &mut self.sink {
            Sink::Memory(buf) => buf.extend_from_slice(&line),
            Sink::File { path, file } => {
                let wrap = |source| MemoryError::Io {
                    path: path.clone(),
                    source,
                };
                file.write_all(&line).map_err(wrap)?;
                file.flush().map_err(wrap)?;
            }
        }
        self.ids.insert(episode.episode_id.clone());
        self.episodes.push(episode);
        Ok(self.episodes.len())
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[RogueEpisode] {
        &self.episodes
    }

    /// Raw log bytes of an in-memory store.
    pub fn log_bytes(&self) -> Option<&[u8]> {
        match &self.sink {
            Sink::Memory(buf) => Some(buf),
            Sink::File { .. } => None,
        }
    }

    pub fn query(&self, filter: &EpisodeFilter) -> Vec<RogueEpisode> {
        query(&self.episodes, filter)
    }
}

/// Parses every complete line of a log; a trailing partial line is ignored.
pub fn read_log(path: &Path) -> Result<Vec<RogueEpisode>, MemoryError> {
    let file = File::open(path).map_err(|source| MemoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log(BufReader::new(file)).map_err(|e| match e {
        MemoryError::Io { source, .. } => MemoryError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_log(mut reader: impl BufRead) -> Result<Vec<RogueEpisode>, MemoryError> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    let mut line = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|source| MemoryError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if n == 0 || buf.last() != Some(&b'\n') {
            break;
        }
        line += 1;
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        out.push(serde_json::from_slice(&buf).map_err(|source| MemoryError::Parse { line, source })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeFilter {
    pub actor_id: Option<String>,
    /// Inclusive lower bound on `opened_at`.
    pub opened_from: Option<u64>,
    /// Inclusive upper bound on `opened_at`.
    pub opened_to: Option<u64>,
    /// Keep episodes whose segment contains this node.
    pub segment_contains: Option<NodeId>,
    pub resolved: Option<bool>,
}

impl EpisodeFilter {
    pub fn matches(&self, e: &RogueEpisode) -> bool {
        self.actor_id.as_ref().is_none_or(|a| &e.actor_id == a)
            && self.opened_from.is_none_or(|t| e.opened_at >= t)
            && self.opened_to.is_none_or(|t| e.opened_at <= t)
            && self.segment_contains.as_ref().is_none_or(|n| e.segment().contains(n))
            && self.resolved.is_none_or(|r| e.resolved == r)
    }
}

/// Matching episodes ordered by `opened_at`, then episode id.
pub fn query(episodes: &[RogueEpisode], filter: &EpisodeFilter) -> Vec<RogueEpisode> {
    let mut out: Vec<RogueEpisode> = episodes.iter().filter(|e| filter.matches(e)).cloned().collect();
    out.sort_by(|a, b| a.opened_at.cmp(&b.opened_at).then_with(|| a.episode_id.cmp(&b.episode_id)));
    out
}

/// Exponentially weighted divergence statistics for one actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub actor_id: String,
    pub epsilon_ewma: f64,
    pub epsilon_var: f64,
    pub episodes_seen: u64,
}

pub const DEFAULT_BASELINE_ALPHA: f64 = 0.1;

impl Baseline {
    pub fn new(actor_id: impl Into<String>) -> Self {
        Baseline {
            actor_id: actor_id.into(),
            epsilon_ewma: 0.0,
            epsilon_var: 0.0,
            episodes_seen: 0,
        }
    }

    /// `ewma + 2 sigma`, clamped to `[floor, 1]`.
    pub fn adaptive_threshold(&self, floor: f64) -> f64 {
        (self.epsilon_ewma + 2.0 * self.epsilon_var.sqrt()).clamp(floor, 1f64.max(floor))
    }

    pub fn note_episode(&mut self) {
        self.episodes_seen += 1;
    }
}

/// EWMA update of mean and variance; `alpha` outside `(0, 1)` falls back to the default.
pub fn update_baseline(baseline: &Baseline, sample: &DivergenceSample, alpha: f64) -> Baseline {
    let alpha = if alpha > 0.0 && alpha < 1.0 { alpha } else { DEFAULT_BASELINE_ALPHA };
    let eps = sample.epsilon.clamp(0.0, 1.0);
    let diff = eps - baseline.epsilon_ewma;
    let ewma = (baseline.epsilon_ewma + alpha * diff).clamp(0.0, 1.0);
    let var = ((1.0 - alpha) * (baseline.epsilon_var + alpha * diff * diff)).max(0.0);
    Baseline {
        actor_id: baseline.actor_id.clone(),
        epsilon_ewma: ewma,
        epsilon_var: var,
        episodes_seen: baseline.episodes_seen,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::decoherence::Interpretation;
    use crate::quantum::StateVector;
    use proptest::prelude::*;

    pub(crate) fn episode(id: &str, actor: &str, opened: u64, resolved: bool) -> RogueEpisode {
        let segment: BTreeSet<NodeId> = ["A".into()].into_iter().collect();
        let candidate = RogueCandidate {
            segment: segment.clone(),
            loadings: [("A".into(), 1.0)].into_iter().collect(),
            baseline_divergence: 0.4,
            ablated_divergence: 0.1,
            reduction: 0.75,
            windows_persisted: 3,
            window_start: opened.saturating_sub(11),
            window_end: opened,
        };
        let request = ClarificationRequest {
            id: format!("{id}-rq"),
            issued_at: opened,
            statement: "s".into(),
            question: "q".into(),
            options: vec![
                Interpretation { label: "a".into(), keep_nodes: segment.clone() },
                Interpretation { label: "none of these".into(), keep_nodes: segment },
            ],
            triggering: candidate.clone(),
        };
        let answer = if resolved {
            ClarificationAnswer::pick(&request.id, 0, opened + 2)
        } else {
            ClarificationAnswer::unresolved(&request.id, opened + 2)
        };
        RogueEpisode {
            episode_id: id.into(),
            actor_id: actor.into(),
            opened_at: opened,
            closed_at: opened + 2,
            candidate,
            request,
            answer: Some(answer),
            resolved,
            ambiguity_config: AmbiguityConfig {
                operator: ComplexMatrixJson { basis: vec!["A".into()], re: vec![vec![1.0]], im: vec![vec![0.0]] },
                loadings: [("A".into(), 1.0)].into_iter().collect(),
                segment_relations: vec![],
            },
        }
    }

    #[test]
    fn record_and_reject_duplicates() {
        let mut store = EpisodeStore::in_memory();
        assert_eq!(store.record(episode("e1", "a", 10, true)).unwrap(), 1);
        assert!(matches!(store.record(episode("e1", "a", 12, true)), Err(MemoryError::DuplicateEpisode(_))));
        assert_eq!(store.record(episode("e2", "a", 12, false)).unwrap(), 2);
        assert!(!store.episodes()[1].resolved);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn inconsistent_episode_is_rejected() {
        let mut store = EpisodeStore::in_memory();
        let mut e = episode("e1", "a", 10, true);
        e.resolved = false;
        assert!(matches!(store.record(e), Err(MemoryError::Invalid(_))));
        let mut e = episode("e2", "a", 10, true);
        e.closed_at = 3;
        assert!(matches!(store.record(e), Err(MemoryError::Invalid(_))));
    }

    #[test]
    fn query_examples() {
        assert!(query(&[], &EpisodeFilter::default()).is_empty());
        let eps = vec![episode("e3", "b", 30, true), episode("e2", "a", 20, true), episode("e1", "a", 10, false)];
        let by_actor = query(&eps, &EpisodeFilter { actor_id: Some("a".into()), ..Default::default() });
        assert_eq!(by_actor.iter().map(|e| e.episode_id.as_str()).collect::<Vec<_>>(), ["e1", "e2"]);
        let none = query(&eps, &EpisodeFilter { opened_from: Some(40), ..Default::default() });
        assert!(none.is_empty());
        let unresolved = query(&eps, &EpisodeFilter { resolved: Some(false), ..Default::default() });
        assert_eq!(unresolved.len(), 1);
    }

    #[test]
    fn file_log_replays_and_appends_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.jsonl");
        let mut store = EpisodeStore::open(&path).unwrap();
        store.record(episode("e1", "a", 10, true)).unwrap();
        let prefix = std::fs::read(&path).unwrap();
        drop(store);

        let mut store = EpisodeStore::open(&path).unwrap();
        assert_eq!(store.episodes(), &[episode("e1", "a", 10, true)]);
        assert!(matches!(store.record(episode("e1", "a", 10, true)), Err(MemoryError::DuplicateEpisode(_))));
        store.record(episode("e2", "b", 11, false)).unwrap();
        let after = std::fs::read(&path).unwrap();
        assert!(after.starts_with(&prefix));
        assert_eq!(read_log(&path).unwrap(), store.episodes());
    }

    #[test]
    fn partial_trailing_line_is_invisible() {
        let line = serde_json::to_string(&episode("e1", "a", 10, true)).unwrap();
        let text = format!("{line}\n{}", &line[..line.len() / 2]);
        let eps = parse_log(text.as_bytes()).unwrap();
        assert_eq!(eps.len(), 1);
    }

    fn sample(eps: f64) -> DivergenceSample {
        DivergenceSample {
            t: 0,
            epsilon: eps,
            fidelity_term: 1.0,
            uncertainty_term: 0.0,
            state: StateVector::basis_state(vec!["A".into()], &"A".into()).unwrap(),
        }
    }

    #[test]
    fn baseline_examples() {
        let b = Baseline::new("a");
        assert_eq!(update_baseline(&b, &sample(0.0), 0.1).epsilon_ewma, 0.0);
        let b1 = update_baseline(&b, &sample(1.0), 0.1);
        assert!((b1.epsilon_ewma - 0.1).abs() < 1e-15);
        assert!((b1.epsilon_var - 0.09).abs() < 1e-15);
        assert_eq!(b.adaptive_threshold(0.3), 0.3);
        assert!((b1.adaptive_threshold(0.3) - 0.7).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn constant_stream_converges_monotonically(c in 0.0..1.0f64, alpha in 0.01..0.99f64) {
            let mut b = Baseline::new("a");
            let mut gap = (c - b.epsilon_ewma).abs();
            for _ in 0..2000 {
                b = update_baseline(&b, &sample(c), alpha);
                let next = (c - b.epsilon_ewma).abs();
                prop_assert!(next <= gap + 1e-15);
                gap = next;
            }
            prop_assert!(gap < 1e-6);
        }

        #[test]
        fn threshold_never_below_floor(stream in prop::collection::vec(0.0..1.0f64, 0..100), floor in 0.0..1.0f64) {
            let mut b = Baseline::new("a");
            for e in stream {
                b = update_baseline(&b, &sample(e), 0.1);
                prop_assert!(b.adaptive_threshold(floor) >= floor);
                prop_assert!(b.epsilon_var >= 0.0);
            }
        }
    }
}
