use rogue_core::decoherence::{Choice, EngineMode};
use rogue_core::engine::EngineConfig;
use rogue_core::mpg::NodeId;
use rogue_core::sim::{case, case_study, generate_planted, replay, Scenario};

#[test]
fn seed_seven_recovers_the_planted_segment() {
    let s = generate_planted(7, 12, 3, 40, 60).unwrap();
    let r = replay(&s, &EngineConfig::default()).unwrap().report;
    assert!(r.segment_jaccard.unwrap() >= 0.8);
    assert!(r.detection_latency.unwrap() <= 24);
}

#[test]
fn scenario_json_round_trip() {
    let s = generate_planted(9, 6, 2, 20, 40).unwrap();
    let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.to_json().unwrap(), s.to_json().unwrap());
}

#[test]
fn case_study_story() {
    let s = case_study();
    assert_eq!(s.horizon(), case::STEPS);
    assert_eq!(s.scripted_answers[&0].chosen, Choice::Unresolved);
    let run = replay(&s, &EngineConfig::default()).unwrap();
    let eps = &run.episodes;
    assert_eq!(eps.len(), 2);
    assert!(!eps[0].resolved);
    assert!(eps[1].resolved);
    let picked = match eps[1].answer.as_ref().unwrap().chosen {
        Choice::Option(i) => &eps[1].request.options[i],
        Choice::Unresolved => unreachable!(),
    };
    assert!(picked.keep_nodes.contains(&NodeId::from(case::DISENGAGEMENT)));
    // Four readings plus the fallback.
    assert_eq!(eps[1].request.options.len(), 5);
    assert_eq!(run.report.permits_while_suspended(), 0);
    let last = run.report.guard_log.last().unwrap();
    assert!(!last.suspended && last.predict_permitted);
    let _ = EngineMode::Autonomous;
}

#[test]
fn trace_csv_has_one_row_per_step() {
    let s = generate_planted(1, 6, 2, 20, 0).unwrap();
    let r = replay(&s, &EngineConfig::default()).unwrap().report;
    let mut buf = Vec::new();
    r.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,epsilon,fidelity_term,uncertainty_term"));
    assert_eq!(lines.count(), r.trace.len());
}
