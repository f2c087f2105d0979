//! Independent oracles and random generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use rogue_core::divergence::{counterfactual_divergence, relative_reduction, Dynamics, Observation};
use rogue_core::linalg::CMatrix;
use rogue_core::mpg::NodeId;
use rogue_core::quantum::StateVector;

pub fn basis(n: usize) -> Vec<NodeId> {
    (0..n).map(|i| NodeId::from(format!("b{i:02}"))).collect()
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize, scale: f64) -> CMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
    });
    (&a + a.adjoint()).unscale(2.0)
}

pub fn random_state(rng: &mut impl Rng, basis: Vec<NodeId>) -> StateVector {
    let amps = (0..basis.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    StateVector::from_amplitudes(basis, amps).expect("random amplitudes are nonzero")
}

/// `exp(-i H dt)` by Taylor series with scaling and squaring.
pub fn taylor_propagator(h: &CMatrix, dt: f64) -> CMatrix {
    let n = h.nrows();
    let a = h.scale(dt) * Complex64::new(0.0, -1.0);
    let norm = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let squarings = (norm / 0.25).log2().ceil().max(0.0) as u32;
    let a = a.unscale(2f64.powi(squarings as i32));
    let mut term = CMatrix::identity(n, n);
    let mut sum = CMatrix::identity(n, n);
    for k in 1..40 {
        term = (&term * &a).unscale(k as f64);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Every subset of `nodes` with 1 to `max` members.
pub fn subsets(nodes: &[NodeId], max: usize) -> Vec<BTreeSet<NodeId>> {
    let mut out = Vec::new();
    let n = nodes.len();
    for mask in 1u32..(1 << n) {
        if (mask.count_ones() as usize) <= max {
            out.push((0..n).filter(|i| mask & (1 << i) != 0).map(|i| nodes[i].clone()).collect());
        }
    }
    out
}

/// Best relative reduction over all subsets of size at most `max`.
pub fn brute_force_best(window: &[Observation], max: usize, lambda: f64, dynamics: &Dynamics) -> (BTreeSet<NodeId>, f64) {
    let nodes = window.last().expect("nonempty window").snapshot.basis();
    let baseline = counterfactual_divergence(window, &BTreeSet::new(), lambda, dynamics).unwrap();
    subsets(&nodes, max)
        .into_iter()
        .map(|s| {
            let ablated = counterfactual_divergence(window, &s, lambda, dynamics).unwrap();
            let r = relative_reduction(baseline, ablated);
            (s, r)
        })
        .fold((BTreeSet::new(), f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}
