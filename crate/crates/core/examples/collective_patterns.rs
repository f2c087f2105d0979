//! Anonymizes episodes from several simulated actors and aggregates them.

use rogue_core::collective::{aggregate, alert, anonymize, AlertThresholds};
use rogue_core::engine::EngineConfig;
use rogue_core::sim::{case_study, generate_planted, replay};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let salt = b"example-salt";
    let config = EngineConfig::default();
    let mut signatures = Vec::new();
    let case = replay(&case_study(), &config)?;
    for i in 0..4 {
        for mut e in case.episodes.clone() {
            e.actor_id = format!("case-actor-{i}");
            signatures.push(anonymize(&e, salt));
        }
    }
    for (i, seed) in [3u64, 7, 11].into_iter().enumerate() {
        let run = replay(&generate_planted(seed, 10, 2, 20, 40)?, &config)?;
        for mut e in run.episodes {
            e.actor_id = format!("planted-actor-{i}");
            signatures.push(anonymize(&e, salt));
        }
    }
    println!("{}", serde_json::to_string_pretty(&signatures[0])?);
    let patterns = aggregate(&signatures, 3);
    for p in &patterns {
        println!(
            "{:<24} actors={} episodes={} unresolved={:.2}",
            p.relation_profile, p.actor_count, p.episode_count, p.unresolved_fraction
        );
    }
    for a in alert(&patterns, &AlertThresholds::default()) {
        println!("alert: {}", a.message);
    }
    Ok(())
}
