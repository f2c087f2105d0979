//! Writes replayed episodes to an append-only log, reopens it and queries it.

use rogue_core::engine::EngineConfig;
use rogue_core::memory::{EpisodeFilter, EpisodeStore};
use rogue_core::sim::{case_study, replay};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("episode-store-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("episodes.jsonl");
    let run = replay(&case_study(), &EngineConfig::default())?;
    {
        let mut store = EpisodeStore::open(&path)?;
        for e in run.episodes {
            store.record(e)?;
        }
    }
    let store = EpisodeStore::open(&path)?;
    println!("{} episodes in {}", store.len(), path.display());
    let unresolved = store.query(&EpisodeFilter {
        resolved: Some(false),
        ..Default::default()
    });
    for e in unresolved {
        println!("unresolved: {} opened {} segment {:?}", e.episode_id, e.opened_at, e.segment());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
