//! Normalized state over the node basis, the Hermitian coupling operator,
//! unitary prior evolution and projective collapse.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{hermitize, CMatrix, CVector, ComplexMatrixJson, HermitianSpectrum, ZERO};
use crate::mpg::{MpgSnapshot, NodeId, RelationKind};

/// Allowed deviation of `<psi|psi>` from one.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Smallest projected norm that [`collapse`] accepts.
pub const MIN_PROJECTED_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("state has zero norm; at least one node needs positive relevance")]
    ZeroNorm,
    #[error("basis mismatch between operands")]
    BasisMismatch,
    #[error("kept subspace carries no amplitude")]
    ZeroProjection,
    #[error("collapse needs a non-empty subset to keep")]
    EmptyKeep,
    #[error("node {0} is not in the basis")]
    UnknownNode(NodeId),
    #[error("edge endpoint {0} is not a node of the snapshot")]
    InvalidSnapshot(NodeId),
    #[error("time step must be finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("malformed state: {0}")]
    Malformed(String),
}

/// Unit-norm complex amplitudes aligned with an ordered node basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    basis: Vec<NodeId>,
    amplitudes: CVector,
}

impl StateVector {
    /// Normalizes `amplitudes`; fails on zero norm, duplicate ids or length mismatch.
    pub fn from_amplitudes(basis: Vec<NodeId>, amplitudes: Vec<Complex64>) -> Result<Self, QuantumError> {
        if basis.len() != amplitudes.len() {
            return Err(QuantumError::Malformed(format!(
                "{} basis entries but {} amplitudes",
                basis.len(),
                amplitudes.len()
            )));
        }
        let unique: BTreeSet<&NodeId> = basis.iter().collect();
        if unique.len() != basis.len() {
            return Err(QuantumError::Malformed("duplicate basis entries".into()));
        }
        StateVector::normalized(basis, CVector::from_vec(amplitudes))
    }

    /// Vector that is one at `node` and zero elsewhere.
    pub fn basis_state(basis: Vec<NodeId>, node: &NodeId) -> Result<Self, QuantumError> {
        let idx = basis
            .iter()
            .position(|b| b == node)
            .ok_or_else(|| QuantumError::UnknownNode(node.clone()))?;
        let mut amps = vec![ZERO; basis.len()];
        amps[idx] = Complex64::new(1.0, 0.0);
        StateVector::from_amplitudes(basis, amps)
    }

    fn normalized(basis: Vec<NodeId>, amplitudes: CVector) -> Result<Self, QuantumError> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(QuantumError::ZeroNorm);
        }
        Ok(StateVector {
            basis,
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub fn basis(&self) -> &[NodeId] {
        &self.basis
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.basis.binary_search(node).ok().or_else(|| self.basis.iter().position(|b| b == node))
    }

    pub fn amplitude(&self, node: &NodeId) -> Option<Complex64> {
        self.index_of(node).map(|i| self.amplitudes[i])
    }

    /// `<psi|psi>`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn weights(&self) -> ActivationWeights {
        ActivationWeights {
            basis: self.basis.clone(),
            weights: self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
        }
    }

    /// Multiplies every amplitude by `exp(i * phi)`.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let z = Complex64::from_polar(1.0, phi);
        StateVector {
            basis: self.basis.clone(),
            amplitudes: self.amplitudes.map(|a| a * z),
        }
    }

    /// Re-expresses the state on a superset basis, zero-padding new positions.
    pub fn embed(&self, target: &[NodeId]) -> Result<Self, QuantumError> {
        if target == self.basis.as_slice() {
            return Ok(self.clone());
        }
        let mut amps = vec![ZERO; target.len()];
        for (node, a) in self.basis.iter().zip(self.amplitudes.iter()) {
            let idx = target
                .iter()
                .position(|t| t == node)
                .ok_or_else(|| QuantumError::UnknownNode(node.clone()))?;
            amps[idx] = *a;
        }
        StateVector::normalized(target.to_vec(), CVector::from_vec(amps))
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    basis: Vec<NodeId>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StateJson {
            basis: self.basis.clone(),
            re: self.amplitudes.iter().map(|a| a.re).collect(),
            im: self.amplitudes.iter().map(|a| a.im).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = StateJson::deserialize(d)?;
        if j.re.len() != j.im.len() {
            return Err(serde::de::Error::custom("re/im length mismatch"));
        }
        let amps = j.re.iter().zip(&j.im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        StateVector::from_amplitudes(j.basis, amps).map_err(serde::de::Error::custom)
    }
}

/// Squared amplitude magnitudes, one per basis node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationWeights {
    pub basis: Vec<NodeId>,
    pub weights: Vec<f64>,
}

impl ActivationWeights {
    pub fn get(&self, node: &NodeId) -> Option<f64> {
        self.basis.iter().position(|b| b == node).map(|i| self.weights[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, f64)> {
        self.basis.iter().zip(self.weights.iter().copied())
    }
}

/// Hermitian operator on the node basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    basis: Vec<NodeId>,
    matrix: CMatrix,
}

impl Hamiltonian {
    /// Wraps an arbitrary square matrix after Hermitizing it.
    pub fn from_matrix(basis: Vec<NodeId>, matrix: CMatrix) -> Result<Self, QuantumError> {
        if !matrix.is_square() || matrix.nrows() != basis.len() {
            return Err(QuantumError::Malformed("matrix dimension does not match basis".into()));
        }
        Ok(Hamiltonian {
            basis,
            matrix: hermitize(&matrix),
        })
    }

    pub fn zero(basis: Vec<NodeId>) -> Self {
        let n = basis.len();
        Hamiltonian {
            basis,
            matrix: CMatrix::zeros(n, n),
        }
    }

    pub fn basis(&self) -> &[NodeId] {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn to_json(&self) -> ComplexMatrixJson {
        ComplexMatrixJson::from_matrix(&self.basis, &self.matrix)
    }

    fn is_diagonal(&self) -> bool {
        let n = self.matrix.nrows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == ZERO))
    }

    /// `exp(-i H dt)`.
    pub fn propagator(&self, dt: f64) -> CMatrix {
        if self.is_diagonal() {
            let n = self.matrix.nrows();
            let mut u = CMatrix::zeros(n, n);
            for i in 0..n {
                u[(i, i)] = Complex64::new(0.0, -self.matrix[(i, i)].re * dt).exp();
            }
            return u;
        }
        HermitianSpectrum::new(&self.matrix).propagator(dt)
    }
}

impl Serialize for Hamiltonian {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Hamiltonian {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = ComplexMatrixJson::deserialize(d)?;
        let m = j.to_matrix().map_err(serde::de::Error::custom)?;
        Hamiltonian::from_matrix(j.basis, m).map_err(serde::de::Error::custom)
    }
}

/// Scales applied when turning graph features into operator entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingGains {
    /// Multiplier on edge weights.
    #[serde(default = "one")]
    pub coupling: f64,
    /// Multiplier on node risk for the diagonal local term.
    #[serde(default = "one")]
    pub local: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CouplingGains {
    fn default() -> Self {
        CouplingGains {
            coupling: 1.0,
            local: 1.0,
        }
    }
}

/// Raw amplitude `relevance * exp(i * phase)` per node, normalized.
pub fn build_state(snapshot: &MpgSnapshot) -> Result<StateVector, QuantumError> {
    let basis = snapshot.basis();
    let amps = snapshot
        .nodes
        .values()
        .map(|f| Complex64::from_polar(f.relevance, f.phase))
        .collect::<Vec<_>>();
    StateVector::normalized(basis, CVector::from_vec(amps))
}

pub fn build_hamiltonian(snapshot: &MpgSnapshot, gains: &CouplingGains) -> Result<Hamiltonian, QuantumError> {
    let basis = snapshot.basis();
    let n = basis.len();
    let index = |id: &NodeId| {
        basis
            .binary_search(id)
            .map_err(|_| QuantumError::InvalidSnapshot(id.clone()))
    };
    let mut a = CMatrix::zeros(n, n);
    for (key, edge) in &snapshot.edges {
        let (i, j) = (index(&key.from)?, index(&key.to)?);
        let w = gains.coupling * edge.weight;
        // Symmetric kinds are mirrored so a single edge keeps its full weight.
        let (forward, backward) = match key.kind {
            RelationKind::Supports | RelationKind::DependsOn => {
                (Complex64::new(w, 0.0), Complex64::new(w, 0.0))
            }
            RelationKind::Contradicts | RelationKind::IncreasesRiskOf => {
                (Complex64::new(-w, 0.0), Complex64::new(-w, 0.0))
            }
            RelationKind::TemporallyPrecedes => (Complex64::new(0.0, w), Complex64::new(0.0, -w)),
        };
        a[(i, j)] += forward;
        a[(j, i)] += backward;
    }
    for (i, f) in snapshot.nodes.values().enumerate() {
        a[(i, i)] += Complex64::new(gains.local * f.risk, 0.0);
    }
    Ok(Hamiltonian {
        basis,
        matrix: hermitize(&a),
    })
}

/// Applies `exp(-i H dt)` to `state`.
pub fn evolve(state: &StateVector, h: &Hamiltonian, dt: f64) -> Result<StateVector, QuantumError> {
    if !dt.is_finite() {
        return Err(QuantumError::InvalidTimeStep(dt));
    }
    if state.basis != h.basis {
        return Err(QuantumError::BasisMismatch);
    }
    if h.matrix.iter().all(|z| *z == ZERO) || dt == 0.0 {
        return Ok(state.clone());
    }
    let u = h.propagator(dt);
    apply_unitary(state, &u)
}

/// Applies a precomputed propagator.
pub fn apply_unitary(state: &StateVector, u: &CMatrix) -> Result<StateVector, QuantumError> {
    if u.nrows() != state.dim() || u.ncols() != state.dim() {
        return Err(QuantumError::BasisMismatch);
    }
    StateVector::normalized(state.basis.clone(), u * &state.amplitudes)
}

/// Puts both states on the sorted union of their bases.
pub fn align(pred: &StateVector, obs: &StateVector) -> (StateVector, StateVector) {
    if pred.basis == obs.basis {
        return (pred.clone(), obs.clone());
    }
    let union: Vec<NodeId> = pred
        .basis
        .iter()
        .chain(obs.basis.iter())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let embed = |s: &StateVector| s.embed(&union).expect("union basis contains every node and the norm is one");
    (embed(pred), embed(obs))
}

/// Projects onto `keep` and renormalizes.
pub fn collapse(state: &StateVector, keep: &BTreeSet<NodeId>) -> Result<StateVector, QuantumError> {
    if keep.is_empty() {
        return Err(QuantumError::EmptyKeep);
    }
    if let Some(missing) = keep.iter().find(|k| !state.basis.contains(k)) {
        return Err(QuantumError::UnknownNode(missing.clone()));
    }
    let projected = CVector::from_iterator(
        state.dim(),
        state
            .basis
            .iter()
            .zip(state.amplitudes.iter())
            .map(|(node, a)| if keep.contains(node) { *a } else { ZERO }),
    );
    if projected.norm() <= MIN_PROJECTED_NORM {
        return Err(QuantumError::ZeroProjection);
    }
    StateVector::normalized(state.basis.clone(), projected)
}

/// Squared amplitude mass of `state` inside `nodes`.
pub fn subspace_weight(state: &StateVector, nodes: &BTreeSet<NodeId>) -> f64 {
    state
        .basis
        .iter()
        .zip(state.amplitudes.iter())
        .filter(|(n, _)| nodes.contains(*n))
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// `|<a|b>|^2`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64, QuantumError> {
    if a.basis != b.basis {
        return Err(QuantumError::BasisMismatch);
    }
    Ok(a.amplitudes.dotc(&b.amplitudes).norm_sqr().clamp(0.0, 1.0))
}
