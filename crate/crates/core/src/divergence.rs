//! Prediction/observation divergence, the error-weighted window operator,
//! rogue segment extraction and ablation-based validation.
//!
//! A window is the last `length` observation steps. Only samples whose
//! divergence reaches `inclusion_threshold` feed the operator
//! `O = sum eps_t |psi_t><psi_t| / sum eps_t`. The dominant eigenvector of `O`
//! proposes a node segment; the segment is accepted when removing its
//! influence (incident edges and local risk) lowers the window's mean
//! divergence by at least `reduction_threshold`, relative. A candidate is
//! reported once the same segment is accepted in `persistence` consecutive
//! windows.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CMatrix, ComplexMatrixJson, HermitianSpectrum};
use crate::mpg::{MpgSnapshot, NodeId};
use crate::quantum::{align, build_hamiltonian, build_state, evolve, fidelity, CouplingGains, QuantumError, StateVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("no sample in the window reaches the inclusion threshold")]
    EmptyWindow,
    #[error("uncertainty blend must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("segment references node {0} missing from the snapshot")]
    UnknownNode(NodeId),
    #[error("invalid window configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Divergence at one observation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSample {
    pub t: u64,
    pub epsilon: f64,
    pub fidelity_term: f64,
    pub uncertainty_term: f64,
    /// Observation-updated state at `t`.
    pub state: StateVector,
}

impl DivergenceSample {
    /// Recomputes epsilon from the stored terms.
    pub fn recompute(&self, lambda: f64) -> f64 {
        blend(self.fidelity_term, self.uncertainty_term, lambda)
    }
}

fn blend(fidelity: f64, uncertainty: f64, lambda: f64) -> f64 {
    ((1.0 - lambda) * (1.0 - fidelity) + lambda * uncertainty).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Steps per rolling window.
    pub length: usize,
    /// Samples with epsilon at or above this enter the operator.
    pub inclusion_threshold: f64,
    /// Weight of the uncertainty term in epsilon.
    pub lambda: f64,
    /// Minimum eigenvector loading for segment membership.
    pub loading_threshold: f64,
    pub max_segment: usize,
    /// Minimum relative divergence reduction under ablation.
    pub reduction_threshold: f64,
    /// Consecutive accepting windows before a candidate is reported.
    pub persistence: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            length: 12,
            inclusion_threshold: 0.3,
            lambda: 0.25,
            loading_threshold: 0.15,
            max_segment: 4,
            reduction_threshold: 0.2,
            persistence: 3,
        }
    }
}

impl WindowConfig {
    pub fn check(&self) -> Result<(), DetectError> {
        let bad = |what: &str| Err(DetectError::InvalidConfig(what.to_owned()));
        if self.length < 2 {
            return bad("length must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.inclusion_threshold) {
            return bad("inclusion_threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.loading_threshold > 0.0 && self.loading_threshold <= 1.0) {
            return bad("loading_threshold must lie in (0, 1]");
        }
        if self.max_segment < 1 {
            return bad("max_segment must be at least 1");
        }
        if !(self.reduction_threshold > 0.0 && self.reduction_threshold < 1.0) {
            return bad("reduction_threshold must lie in (0, 1)");
        }
        if self.persistence < 1 {
            return bad("persistence must be at least 1");
        }
        Ok(())
    }
}

/// Operator settings used when replaying a window counterfactually.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dynamics {
    pub gains: CouplingGains,
    pub dt: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics {
            gains: CouplingGains::default(),
            dt: 1.0,
        }
    }
}

/// Divergence-weighted mixture of window states.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorWeightedOperator {
    pub basis: Vec<NodeId>,
    pub matrix: CMatrix,
    /// Normalizer: sum of included epsilons.
    pub z: f64,
    pub included: usize,
}

impl ErrorWeightedOperator {
    pub fn spectrum(&self) -> HermitianSpectrum {
        HermitianSpectrum::new(&self.matrix)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn to_json(&self) -> ComplexMatrixJson {
        ComplexMatrixJson::from_matrix(&self.basis, &self.matrix)
    }
}

/// Segment proposed by the dominant eigen-direction of a window operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentExtraction {
    pub segment: BTreeSet<NodeId>,
    /// `|v_i|^2` of the dominant eigenvector for every basis node.
    pub loadings: BTreeMap<NodeId, f64>,
    /// Operator eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RogueCandidate {
    pub segment: BTreeSet<NodeId>,
    pub loadings: BTreeMap<NodeId, f64>,
    pub baseline_divergence: f64,
    pub ablated_divergence: f64,
    pub reduction: f64,
    pub windows_persisted: usize,
    pub window_start: u64,
    pub window_end: u64,
}

/// One engine step: the snapshot the prior was built from, the snapshot
/// after that step's signals, and the resulting divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub prior: Arc<MpgSnapshot>,
    pub snapshot: Arc<MpgSnapshot>,
    pub sample: DivergenceSample,
}

pub fn divergence(
    pred: &StateVector,
    obs: &StateVector,
    snapshot: &MpgSnapshot,
    lambda: f64,
) -> Result<DivergenceSample, DetectError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DetectError::InvalidLambda(lambda));
    }
    let (pred, obs) = align(pred, obs);
    let fidelity_term = fidelity(&pred, &obs)?;
    let uncertainty_term = obs
        .weights()
        .iter()
        .map(|(node, w)| w * snapshot.node(node).map_or(0.0, |f| f.uncertainty))
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(DivergenceSample {
        t: snapshot.t,
        epsilon: blend(fidelity_term, uncertainty_term, lambda),
        fidelity_term,
        uncertainty_term,
        state: obs,
    })
}

pub fn accumulate(samples: &[DivergenceSample], config: &WindowConfig) -> Result<ErrorWeightedOperator, DetectError> {
    let included: Vec<&DivergenceSample> = samples
        .iter()
        .filter(|s| s.epsilon >= config.inclusion_threshold && s.epsilon > 0.0)
        .collect();
    if included.is_empty() {
        return Err(DetectError::EmptyWindow);
    }
    let basis: Vec<NodeId> = included
        .iter()
        .flat_map(|s| s.state.basis().iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = basis.len();
    let mut matrix = CMatrix::zeros(n, n);
    let mut z = 0.0;
    for s in &included {
        let psi = s.state.embed(&basis)?;
        let v = psi.amplitudes();
        matrix += (v * v.adjoint()).scale(s.epsilon);
        z += s.epsilon;
    }
    matrix.unscale_mut(z);
    let matrix = crate::linalg::hermitize(&matrix);
    Ok(ErrorWeightedOperator {
        basis,
        matrix,
        z,
        included: included.len(),
    })
}

// Loadings closer than this are treated as ties.
const TIE_QUANTUM: f64 = 1e-12;

pub fn extract_segment(op: &ErrorWeightedOperator, config: &WindowConfig) -> SegmentExtraction {
    let spectrum = op.spectrum();
    let dominant: DVector<Complex64> = spectrum.vectors.column(0).into_owned();
    let loadings: BTreeMap<NodeId, f64> = op
        .basis
        .iter()
        .cloned()
        .zip(dominant.iter().map(|c| c.norm_sqr()))
        .collect();
    let mut ranked: Vec<(&NodeId, f64)> = loadings.iter().map(|(n, &l)| (n, l)).collect();
    let key = |l: f64| (l / TIE_QUANTUM).round() as i64;
    ranked.sort_by(|a, b| key(b.1).cmp(&key(a.1)).then_with(|| a.0.cmp(b.0)));
    let mut segment: BTreeSet<NodeId> = ranked
        .iter()
        .filter(|(_, l)| *l >= config.loading_threshold - TIE_QUANTUM)
        .take(config.max_segment)
        .map(|(n, _)| (*n).clone())
        .collect();
    if segment.is_empty() {
        if let Some((top, _)) = ranked.first() {
            segment.insert((*top).clone());
        }
    }
    SegmentExtraction {
        segment,
        loadings,
        eigenvalues: spectrum.values,
    }
}

/// Removes the influence of `segment`: incident edges dropped, risk zeroed.
/// Nodes, relevance and phase are kept so the basis is unchanged.
pub fn ablate(snapshot: &MpgSnapshot, segment: &BTreeSet<NodeId>) -> Result<MpgSnapshot, DetectError> {
    if let Some(missing) = segment.iter().find(|n| !snapshot.contains(n)) {
        return Err(DetectError::UnknownNode(missing.clone()));
    }
    Ok(ablate_present(snapshot, segment))
}

fn ablate_present(snapshot: &MpgSnapshot, segment: &BTreeSet<NodeId>) -> MpgSnapshot {
    let mut out = snapshot.clone();
    out.edges
        .retain(|k, _| !segment.contains(&k.from) && !segment.contains(&k.to));
    for node in segment {
        if let Some(f) = out.nodes.get_mut(node) {
            f.risk = 0.0;
        }
    }
    out
}

/// Mean divergence over the window when the prior and observation of every
/// step are rebuilt from snapshots with `segment` ablated. An empty segment
/// gives the unablated baseline.
pub fn counterfactual_divergence(
    window: &[Observation],
    segment: &BTreeSet<NodeId>,
    lambda: f64,
    dynamics: &Dynamics,
) -> Result<f64, DetectError> {
    if window.is_empty() {
        return Err(DetectError::EmptyWindow);
    }
    let mut total = 0.0;
    for step in window {
        let prior = ablate_present(&step.prior, segment);
        let current = ablate_present(&step.snapshot, segment);
        let h = build_hamiltonian(&prior, &dynamics.gains)?;
        let pred = evolve(&build_state(&prior)?, &h, dynamics.dt)?;
        let obs = build_state(&current)?;
        total += divergence(&pred, &obs, &current, lambda)?.epsilon;
    }
    Ok(total / window.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "candidate", rename_all = "snake_case")]
pub enum Verdict {
    Accepted(RogueCandidate),
    Rejected(RogueCandidate),
}

impl Verdict {
    pub fn candidate(&self) -> &RogueCandidate {
        match self {
            Verdict::Accepted(c) | Verdict::Rejected(c) => c,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted(_))
    }
}

/// Relative reduction `(baseline - ablated) / baseline`, zero when baseline is zero.
pub fn relative_reduction(baseline: f64, ablated: f64) -> f64 {
    if baseline > 0.0 {
        (baseline - ablated) / baseline
    } else {
        0.0
    }
}

pub fn validate_segment(
    window: &[Observation],
    extraction: &SegmentExtraction,
    config: &WindowConfig,
    dynamics: &Dynamics,
) -> Result<Verdict, DetectError> {
    let qualifying = window
        .iter()
        .filter(|o| o.sample.epsilon >= config.inclusion_threshold && o.sample.epsilon > 0.0)
        .count();
    if qualifying < 2 {
        return Err(DetectError::EmptyWindow);
    }
    let baseline = counterfactual_divergence(window, &BTreeSet::new(), config.lambda, dynamics)?;
    let ablated = counterfactual_divergence(window, &extraction.segment, config.lambda, dynamics)?;
    let reduction = relative_reduction(baseline, ablated);
    let candidate = RogueCandidate {
        segment: extraction.segment.clone(),
        loadings: extraction.loadings.clone(),
        baseline_divergence: baseline,
        ablated_divergence: ablated,
        reduction,
        windows_persisted: 0,
        window_start: window.first().map_or(0, |o| o.sample.t),
        window_end: window.last().map_or(0, |o| o.sample.t),
    };
    Ok(if baseline > 0.0 && reduction >= config.reduction_threshold {
        Verdict::Accepted(candidate)
    } else {
        Verdict::Rejected(candidate)
    })
}

/// Everything computed for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEvaluation {
    pub operator: ErrorWeightedOperator,
    pub extraction: SegmentExtraction,
    pub verdict: Verdict,
}

/// Runs accumulate, extract and validate on one window. `None` when the
/// window has too little high-divergence evidence.
pub fn evaluate_window(
    window: &[Observation],
    config: &WindowConfig,
    dynamics: &Dynamics,
) -> Result<Option<WindowEvaluation>, DetectError> {
    let samples: Vec<DivergenceSample> = window.iter().map(|o| o.sample.clone()).collect();
    let operator = match accumulate(&samples, config) {
        Ok(op) => op,
        Err(DetectError::EmptyWindow) => return Ok(None),
        Err(e) => return Err(e),
    };
    let extraction = extract_segment(&operator, config);
    let verdict = match validate_segment(window, &extraction, config, dynamics) {
        Ok(v) => v,
        Err(DetectError::EmptyWindow) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(WindowEvaluation {
        operator,
        extraction,
        verdict,
    }))
}

/// Streaming persistence tracker; feed it the latest window once per step.
#[derive(Debug, Clone)]
pub struct Detector {
    config: WindowConfig,
    dynamics: Dynamics,
    streak: Option<(BTreeSet<NodeId>, usize)>,
    last: Option<WindowEvaluation>,
}

impl Detector {
    pub fn new(config: WindowConfig, dynamics: Dynamics) -> Self {
        Detector {
            config,
            dynamics,
            streak: None,
            last: None,
        }
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    pub fn last_evaluation(&self) -> Option<&WindowEvaluation> {
        self.last.as_ref()
    }

    pub fn reset(&mut self) {
        self.streak = None;
    }

    pub fn set_inclusion_threshold(&mut self, threshold: f64) {
        self.config.inclusion_threshold = threshold.clamp(0.0, 1.0);
    }

    /// Evaluates the trailing window of `history`. Returns the current
    /// candidate when the persistence requirement is met.
    pub fn observe(&mut self, history: &[Observation]) -> Result<Option<RogueCandidate>, DetectError> {
        if history.len() < self.config.length {
            self.streak = None;
            return Ok(None);
        }
        let window = &history[history.len() - self.config.length..];
        let evaluation = evaluate_window(window, &self.config, &self.dynamics)?;
        let accepted = evaluation
            .as_ref()
            .and_then(|e| e.verdict.is_accepted().then(|| e.verdict.candidate().clone()));
        self.last = evaluation;
        let Some(mut candidate) = accepted else {
            self.streak = None;
            return Ok(None);
        };
        let count = match &self.streak {
            Some((segment, n)) if *segment == candidate.segment => n + 1,
            _ => 1,
        };
        self.streak = Some((candidate.segment.clone(), count));
        candidate.windows_persisted = count;
        Ok((count >= self.config.persistence).then_some(candidate))
    }
}

/// Batch form of [`Detector`]: the candidate standing at the end of `history`.
pub fn detect(history: &[Observation], config: &WindowConfig, dynamics: &Dynamics) -> Option<RogueCandidate> {
    let mut detector = Detector::new(*config, *dynamics);
    let mut current = None;
    for end in 1..=history.len() {
        current = detector.observe(&history[..end]).ok().flatten();
    }
    current
}
