//! Accumulates the error-weighted operator over a planted window and prints
//! its spectrum and the extracted segment.

use rogue_core::divergence::{accumulate, extract_segment, DivergenceSample};
use rogue_core::engine::EngineConfig;
use rogue_core::sim::{generate_planted, observations};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EngineConfig::default();
    let scenario = generate_planted(7, 12, 3, 40, 60)?;
    let obs = observations(&scenario, cfg.window.lambda, &cfg.dynamics)?;
    let window: Vec<DivergenceSample> = obs[45..45 + cfg.window.length].iter().map(|o| o.sample.clone()).collect();
    for s in &window {
        println!("t={:<3} eps={:.3} infidelity={:.3} uncertainty={:.3}", s.t, s.epsilon, 1.0 - s.fidelity_term, s.uncertainty_term);
    }
    let op = accumulate(&window, &cfg.window)?;
    println!("included {} samples, trace {:.6}", op.included, op.trace());
    let ext = extract_segment(&op, &cfg.window);
    let top: Vec<String> = ext.eigenvalues.iter().take(4).map(|v| format!("{v:.4}")).collect();
    println!("leading eigenvalues: {}", top.join(", "));
    for (node, l) in &ext.loadings {
        let mark = if ext.segment.contains(node) { "*" } else { " " };
        println!(" {mark} {node} {l:.4}");
    }
    println!("planted: {:?}", scenario.ground_truth.map(|g| g.segment));
    Ok(())
}
