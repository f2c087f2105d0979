//! Builds a state from a small graph and evolves it under the graph operator.

use rogue_core::mpg::{MpgSnapshot, NodeFeatures, RelationKind};
use rogue_core::quantum::{build_hamiltonian, build_state, evolve, fidelity, CouplingGains};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = MpgSnapshot::new(0)
        .with_node("deadline", NodeFeatures::clamped(0.9, 0.1, 0.6, 0.0))
        .with_node("workload", NodeFeatures::clamped(0.6, 0.2, 0.2, 0.5))
        .with_node("morale", NodeFeatures::clamped(0.4, 0.3, 0.0, -0.5))
        .with_edge("workload", "deadline", RelationKind::IncreasesRiskOf, 0.7)
        .with_edge("morale", "workload", RelationKind::Supports, 0.4)
        .with_edge("deadline", "morale", RelationKind::TemporallyPrecedes, 0.3);

    let psi = build_state(&g)?;
    let h = build_hamiltonian(&g, &CouplingGains::default())?;
    println!("t=0 weights:");
    for (node, w) in psi.weights().iter() {
        println!("  {node:<10} {w:.4}");
    }
    let mut state = psi.clone();
    for step in 1..=4 {
        state = evolve(&state, &h, 0.5)?;
        let w: Vec<String> = state.weights().iter().map(|(n, w)| format!("{n}={w:.3}")).collect();
        println!("t={:.1} {}  norm={:.12}", step as f64 * 0.5, w.join(" "), state.norm_sqr());
    }
    let back = evolve(&state, &h, -2.0)?;
    println!("fidelity after evolving back: {:.12}", fidelity(&back, &psi)?);
    Ok(())
}
