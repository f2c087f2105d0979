//! Replays a planted-anomaly scenario and reports detection quality.
//!
//! Usage: cargo run --example planted_anomaly -- [seed]

use rogue_core::engine::EngineConfig;
use rogue_core::sim::{generate_planted, replay};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let scenario = generate_planted(seed, 12, 3, 40, 60)?;
    let gt = scenario.ground_truth.clone().expect("planted");
    println!("seed {seed}: planted {:?} active {}..={}", gt.segment, gt.onset, gt.end);
    let run = replay(&scenario, &EngineConfig::default())?;
    for d in &run.report.detections {
        println!(
            "detection at t={} segment {:?} reduction {:.3} ({:.3} -> {:.3})",
            d.t, d.candidate.segment, d.candidate.reduction, d.candidate.baseline_divergence, d.candidate.ablated_divergence
        );
    }
    println!("latency {:?}, jaccard {:?}", run.report.detection_latency, run.report.segment_jaccard);

    let control = generate_planted(seed, 12, 3, 40, 0)?;
    let quiet = replay(&control, &EngineConfig::default())?;
    let peak = quiet.report.trace.iter().map(|p| p.epsilon).fold(0.0, f64::max);
    println!("control: {} detections, peak eps {peak:.4}", quiet.report.detections.len());
    Ok(())
}
