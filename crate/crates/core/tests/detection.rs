use std::collections::BTreeSet;

use rogue_core::divergence::{ablate, accumulate, detect, Detector, DivergenceSample, WindowConfig};
use rogue_core::engine::EngineConfig;
use rogue_core::linalg::is_hermitian;
use rogue_core::mpg::NodeId;
use rogue_core::sim::{generate_planted, observations};

#[test]
fn streaming_and_batch_agree() {
    let cfg = EngineConfig::default();
    let s = generate_planted(7, 12, 3, 40, 60).unwrap();
    let obs = observations(&s, cfg.window.lambda, &cfg.dynamics).unwrap();
    let mut streaming = Detector::new(cfg.window, cfg.dynamics);
    let mut last = None;
    for end in 1..=70 {
        last = streaming.observe(&obs[..end]).unwrap();
    }
    assert_eq!(last, detect(&obs[..70], &cfg.window, &cfg.dynamics));
    let c = last.expect("planted segment detected by t=70");
    assert_eq!(&c.segment, &s.ground_truth.unwrap().segment);
    assert!(c.reduction >= cfg.window.reduction_threshold);
    assert!(c.windows_persisted >= cfg.window.persistence);
}

#[test]
fn first_candidate_needs_consecutive_windows() {
    let cfg = EngineConfig::default();
    let s = generate_planted(3, 12, 3, 40, 60).unwrap();
    let obs = observations(&s, cfg.window.lambda, &cfg.dynamics).unwrap();
    let mut d = Detector::new(cfg.window, cfg.dynamics);
    let mut first = None;
    for end in 1..=obs.len() {
        if let Some(c) = d.observe(&obs[..end]).unwrap() {
            first = Some((end, c));
            break;
        }
    }
    let (end, c) = first.unwrap();
    assert_eq!(c.windows_persisted, cfg.window.persistence);
    // The two windows before the first report were accepted but not yet persistent.
    let mut strict = cfg.window;
    strict.persistence = 1;
    assert!(detect(&obs[..end - 2], &strict, &cfg.dynamics).is_some());
    assert!(detect(&obs[..end - 1], &cfg.window, &cfg.dynamics).is_none());
}

#[test]
fn quiet_stream_never_detects() {
    let cfg = EngineConfig::default();
    let s = generate_planted(5, 12, 3, 40, 0).unwrap();
    let obs = observations(&s, cfg.window.lambda, &cfg.dynamics).unwrap();
    assert!(obs.iter().all(|o| o.sample.epsilon < cfg.window.inclusion_threshold));
    assert_eq!(detect(&obs, &cfg.window, &cfg.dynamics), None);
}

#[test]
fn window_operators_from_real_streams_obey_the_laws() {
    let cfg = WindowConfig::default();
    let s = generate_planted(11, 10, 2, 20, 40).unwrap();
    let obs = observations(&s, cfg.lambda, &Default::default()).unwrap();
    for w in obs.windows(cfg.length) {
        let samples: Vec<DivergenceSample> = w.iter().map(|o| o.sample.clone()).collect();
        if let Ok(op) = accumulate(&samples, &cfg) {
            assert!(is_hermitian(&op.matrix, 1e-12));
            assert!((op.trace() - 1.0).abs() < 1e-12);
            assert!(op.spectrum().values.iter().all(|&v| v > -1e-12));
        }
    }
}

#[test]
fn ablation_keeps_basis_and_rejects_unknown_nodes() {
    let s = generate_planted(2, 6, 2, 20, 40).unwrap();
    let seg: BTreeSet<NodeId> = s.ground_truth.as_ref().unwrap().segment.clone();
    let a = ablate(&s.initial, &seg).unwrap();
    assert_eq!(a.basis(), s.initial.basis());
    assert!(a.incident_edges(&seg).next().is_none());
    assert!(seg.iter().all(|n| a.node(n).unwrap().risk == 0.0));
    assert!(ablate(&s.initial, &BTreeSet::from([NodeId::from("zz")])).is_err());
}
