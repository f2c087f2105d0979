//! Replays the built-in case study and writes its report, trace and episode
//! log to a directory (default `case_study_out`).

use std::fs;
use std::path::PathBuf;

use rogue_core::decoherence::Choice;
use rogue_core::engine::EngineConfig;
use rogue_core::sim::{case_study, replay};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "case_study_out".into()));
    let scenario = case_study();
    let run = replay(&scenario, &EngineConfig::default())?;
    for e in &run.episodes {
        let answer = match e.answer.as_ref().map(|a| a.chosen) {
            Some(Choice::Option(i)) => e.request.options[i].label.clone(),
            Some(Choice::Unresolved) => "unresolved".into(),
            None => "no answer".into(),
        };
        println!("{} t={}..{} -> {answer}", e.episode_id, e.opened_at, e.closed_at);
        println!("  {}", e.request.statement);
        for (i, o) in e.request.options.iter().enumerate() {
            println!("  [{i}] {}", o.label);
        }
    }
    let suspended = run.report.guard_log.iter().filter(|g| g.suspended).count();
    println!(
        "{} steps, {suspended} suspended, {} predictions permitted while suspended",
        run.report.trace.len(),
        run.report.permits_while_suspended()
    );
    fs::create_dir_all(&out)?;
    fs::write(out.join("scenario.json"), scenario.to_json()?)?;
    fs::write(out.join("report.json"), run.report.to_json()?)?;
    fs::write(out.join("episodes.jsonl"), run.episode_log()?)?;
    run.report.write_trace_csv(fs::File::create(out.join("divergence.csv"))?)?;
    println!("wrote {}", out.display());
    Ok(())
}
