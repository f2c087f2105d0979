//! Drives one engine into suspension, shows the guard refusing inference,
//! then answers the request and prints the collapsed weights.

use std::collections::BTreeMap;

use rogue_core::decoherence::{ClarificationAnswer, InferenceKind};
use rogue_core::engine::{Engine, EngineConfig};
use rogue_core::sim::generate_planted;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = generate_planted(7, 12, 3, 40, 60)?;
    let mut engine = Engine::new("alice", scenario.initial.clone(), EngineConfig::default())?;
    let mut steps: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    for ev in &scenario.events {
        steps.entry(ev.t).or_default().push(ev.clone());
    }
    for (t, events) in steps {
        if engine.step(t, &events)?.suspended.is_some() {
            break;
        }
    }
    let request = engine.pending().expect("suspended").clone();
    println!("{} issued at t={}", request.id, request.issued_at);
    println!("{}\n{}", request.statement, request.question);
    for (i, o) in request.options.iter().enumerate() {
        println!("  [{i}] {}", o.label);
    }
    for kind in InferenceKind::ALL {
        println!("guard {kind:?}: {}", engine.guard(kind));
    }
    if let Err(refusal) = engine.predict() {
        println!("predict refused: {refusal}");
    }
    let episode = engine.resolve(ClarificationAnswer::pick(&request.id, 0, engine.t()))?;
    println!("{} resolved={}", episode.episode_id, episode.resolved);
    for (node, w) in engine.weights().iter().filter(|(_, w)| *w > 1e-9) {
        println!("  {node} {w:.4}");
    }
    println!("predict now permitted: {}", engine.predict().is_ok());
    Ok(())
}
