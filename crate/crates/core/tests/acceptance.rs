//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rogue_core::collective::{aggregate, alert, anonymize, AlertThresholds, EpisodeSignature};
use rogue_core::decoherence::{ClarificationAnswer, DecoherenceLoop, GuardDecision, InferenceKind};
use rogue_core::divergence::{accumulate, evaluate_window, DivergenceSample, RogueCandidate, WindowConfig};
use rogue_core::engine::{Engine, EngineConfig};
use rogue_core::linalg::{is_hermitian, max_abs_diff, CMatrix, ComplexMatrixJson, HermitianSpectrum};
use rogue_core::memory::{AmbiguityConfig, RogueEpisode};
use rogue_core::mpg::{MpgSnapshot, NodeFeatures, NodeId, RelationKind};
use rogue_core::quantum::{align, build_state, collapse, evolve, Hamiltonian, StateVector, NORM_TOLERANCE};
use rogue_core::sim::{case_study, generate_planted, generate_planted_with, observations, replay, PlantedParams};

use support::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_snapshot(rng: &mut ChaCha8Rng, n: usize) -> MpgSnapshot {
    let mut g = MpgSnapshot::new(0);
    for id in basis(n) {
        g = g.with_node(
            id.as_str(),
            NodeFeatures {
                relevance: rng.random_range(0.0..1.0),
                uncertainty: rng.random_range(0.0..1.0),
                risk: rng.random_range(0.0..1.0),
                phase: rng.random_range(-3.14..3.14),
            },
        );
    }
    let ids = basis(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(0.3) {
                let kind = RelationKind::ALL[rng.random_range(0..5)];
                g = g.with_edge(ids[i].as_str(), ids[j].as_str(), kind, rng.random_range(0.05..1.0));
            }
        }
    }
    // At least one node must carry relevance for the state to exist.
    let first = ids[0].clone();
    let f = *g.node(&first).unwrap();
    g.with_node(first.as_str(), NodeFeatures { relevance: f.relevance.max(0.1), ..f })
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut ops = 0;
    let mut state = build_state(&random_snapshot(&mut rng, 5)).unwrap();
    while ops < 10_000 {
        let check = |s: &StateVector, worst: &mut f64| *worst = worst.max((s.norm_sqr() - 1.0).abs());
        match rng.random_range(0..4) {
            0 => {
                let n = rng.random_range(1..=16);
                state = build_state(&random_snapshot(&mut rng, n)).unwrap();
                check(&state, &mut worst);
            }
            1 => {
                let h = Hamiltonian::from_matrix(state.basis().to_vec(), random_hermitian(&mut rng, state.dim(), 2.0)).unwrap();
                state = evolve(&state, &h, rng.random_range(-3.0..3.0)).unwrap();
                check(&state, &mut worst);
            }
            2 => {
                let n = rng.random_range(1..=16);
                let other = random_state(&mut rng, basis(n));
                let (a, b) = align(&state, &other);
                check(&a, &mut worst);
                check(&b, &mut worst);
                state = a;
            }
            _ => {
                let keep: BTreeSet<NodeId> = state.basis().iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
                match collapse(&state, &keep) {
                    Ok(s) => {
                        check(&s, &mut worst);
                        state = s;
                    }
                    Err(_) => continue,
                }
            }
        }
        ops += 1;
    }
    outcome(worst <= NORM_TOLERANCE, format!("{ops} operations, max |<psi|psi> - 1| = {worst:.2e}"))
}

fn unitarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut unit, mut back, mut oracle) = (0f64, 0f64, 0f64);
    let mut oracle_cases = 0;
    for case in 0..500 {
        let n = if case % 4 == 0 { rng.random_range(1..=8) } else { rng.random_range(1..=64) };
        let h = random_hermitian(&mut rng, n, 1.5);
        let dt = rng.random_range(-2.0..2.0);
        let spectrum = HermitianSpectrum::new(&h);
        let u = spectrum.propagator(dt);
        unit = unit.max(max_abs_diff(&(u.adjoint() * &u), &CMatrix::identity(n, n)));
        let ham = Hamiltonian::from_matrix(basis(n), h.clone()).unwrap();
        let psi = random_state(&mut rng, basis(n));
        let there = evolve(&psi, &ham, dt).unwrap();
        let again = evolve(&there, &ham, -dt).unwrap();
        back = back.max((again.amplitudes() - psi.amplitudes()).iter().map(|z| z.norm()).fold(0.0, f64::max));
        if n <= 8 {
            oracle_cases += 1;
            oracle = oracle.max(max_abs_diff(&u, &taylor_propagator(&h, dt)));
        }
    }
    let pass = unit <= 1e-9 && back <= 1e-8 && oracle <= 1e-8;
    outcome(
        pass,
        format!("500 operators, ||U'U - I|| = {unit:.2e}, round trip {back:.2e}, Taylor oracle ({oracle_cases} cases) {oracle:.2e}"),
    )
}

fn operator_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let config = WindowConfig::default();
    let (mut herm, mut neg, mut tr) = (0f64, 0f64, 0f64);
    let mut windows = 0;
    while windows < 1000 {
        let len = rng.random_range(1..=24);
        let samples: Vec<DivergenceSample> = (0..len)
            .map(|t| {
                let n = rng.random_range(1..=12);
                DivergenceSample {
                    t,
                    epsilon: rng.random_range(0.0..1.0),
                    fidelity_term: 0.0,
                    uncertainty_term: 0.0,
                    state: random_state(&mut rng, basis(n)),
                }
            })
            .collect();
        let Ok(op) = accumulate(&samples, &config) else { continue };
        windows += 1;
        herm = herm.max(max_abs_diff(&op.matrix, &op.matrix.adjoint()));
        neg = neg.min(op.spectrum().values.iter().copied().fold(f64::INFINITY, f64::min));
        tr = tr.max((op.trace() - 1.0).abs());
        debug_assert!(is_hermitian(&op.matrix, 1e-10));
    }
    outcome(
        herm <= 1e-10 && neg >= -1e-10 && (tr <= 1e-9),
        format!("{windows} windows, hermitian {herm:.2e}, min eigenvalue {neg:.2e}, trace error {tr:.2e}"),
    )
}

fn ablation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let config = EngineConfig::default();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for case in 0..100u64 {
        let anomaly = rng.random_range(1..=4);
        let n = rng.random_range((anomaly + 3).max(4)..=8);
        let params = PlantedParams {
            n_nodes: n,
            anomaly_size: anomaly,
            onset: 13,
            duration: 36,
            tail: 0,
            ..PlantedParams::default()
        };
        let scenario = generate_planted_with(1000 + case, &params).unwrap();
        let obs = observations(&scenario, config.window.lambda, &config.dynamics).unwrap();
        let window = &obs[obs.len() - config.window.length..];
        let validated = evaluate_window(window, &config.window, &config.dynamics)
            .unwrap()
            .filter(|e| e.verdict.is_accepted())
            .map(|e| e.verdict.candidate().reduction);
        let (_, best) = brute_force_best(window, 4, config.window.lambda, &config.dynamics);
        match validated {
            Some(r) => {
                worst = worst.max((best - r).abs());
                if (best - r).abs() > 0.05 {
                    failures.push(format!("case {case}: {r:.3} vs {best:.3}"));
                }
            }
            None => failures.push(format!("case {case}: no validated segment")),
        }
    }
    outcome(
        failures.is_empty(),
        format!("100 graphs, max gap to exhaustive best {worst:.4}{}", fmt_failures(&failures)),
    )
}

fn fmt_failures(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!("; {} failing, first: {}", f.len(), f[0])
    }
}

fn planted_benchmark() -> Outcome {
    let config = EngineConfig::default();
    let limit = 2 * config.window.length as u64;
    let mut failures = Vec::new();
    let (mut worst_latency, mut worst_jaccard) = (0u64, 1f64);
    for seed in 0..20u64 {
        let s = generate_planted(seed, 12, 3, 40, 60).unwrap();
        let r = replay(&s, &config).unwrap().report;
        match (r.detection_latency, r.segment_jaccard) {
            (Some(lat), Some(j)) => {
                worst_latency = worst_latency.max(lat);
                worst_jaccard = worst_jaccard.min(j);
                if lat > limit || j < 0.8 {
                    failures.push(format!("seed {seed}: latency {lat}, jaccard {j:.2}"));
                }
            }
            _ => failures.push(format!("seed {seed}: no detection")),
        }
    }
    let mut false_alarms = 0;
    for seed in 0..20u64 {
        let s = generate_planted(500 + seed, 12, 3, 40, 0).unwrap();
        false_alarms += replay(&s, &config).unwrap().report.detections.len();
    }
    if false_alarms > 0 {
        failures.push(format!("{false_alarms} detections on controls"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "20 seeds, worst latency {worst_latency} (limit {limit}), worst jaccard {worst_jaccard:.2}; 20 controls, {false_alarms} detections{}",
            fmt_failures(&failures)
        ),
    )
}

fn suspension_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let config = EngineConfig::default();
    let (mut refusals, mut permits, mut suspensions, mut episodes) = (0u64, 0u64, 0u64, 0u64);
    let mut violations = Vec::new();
    for seed in 0..30u64 {
        let s = generate_planted(200 + seed, 8, 2, 15, 45).unwrap();
        let mut engine = Engine::new("fuzz", s.initial.clone(), config).unwrap();
        let mut by_step: BTreeMap<u64, Vec<_>> = BTreeMap::new();
        for ev in &s.events {
            by_step.entry(ev.t).or_default().push(ev.clone());
        }
        for t in 1..=s.horizon() {
            if let Some(req) = engine.pending().cloned() {
                if rng.random_bool(0.25) {
                    let answer = match rng.random_range(0..4) {
                        0 => ClarificationAnswer::unresolved(&req.id, t),
                        1 => ClarificationAnswer::pick("fuzz-rq-9999", 0, t),
                        2 => ClarificationAnswer::pick(&req.id, req.options.len() + 3, t),
                        _ => ClarificationAnswer::pick(&req.id, rng.random_range(0..req.options.len()), t),
                    };
                    if engine.resolve(answer).is_ok() {
                        episodes += 1;
                    }
                }
            }
            let out = engine.step(t, by_step.get(&t).map_or(&[][..], |v| v.as_slice())).unwrap();
            suspensions += out.suspended.is_some() as u64;
            for _ in 0..8 {
                let pending = engine.pending().map(|r| r.id.clone());
                let kind = InferenceKind::ALL[rng.random_range(0..4)];
                let refused = match kind {
                    InferenceKind::Predict => engine.predict().err().map(|r| r.request_id),
                    InferenceKind::Recommend => engine.recommend(3).err().map(|r| r.request_id),
                    InferenceKind::Act => engine.act("notify").err().map(|r| r.request_id),
                    InferenceKind::Inspect => match engine.guard(InferenceKind::Inspect) {
                        GuardDecision::Permit => {
                            let _ = (engine.state(), engine.operator_json(), engine.trace().len());
                            None
                        }
                        GuardDecision::Refuse { request_id } => Some(request_id),
                    },
                };
                match (&pending, kind.is_read_only(), &refused) {
                    (Some(id), false, Some(r)) if r == id => refusals += 1,
                    (_, true, None) | (None, _, None) => permits += 1,
                    _ => violations.push(format!("seed {seed} t {t}: {kind:?} pending {pending:?} refused {refused:?}")),
                }
            }
        }
        if engine.abandon_pending().is_some() {
            episodes += 1;
        }
    }
    if suspensions != episodes {
        violations.push(format!("{suspensions} suspensions but {episodes} episodes"));
    }
    if suspensions == 0 {
        violations.push("no suspension was reached".into());
    }
    outcome(
        violations.is_empty(),
        format!(
            "{suspensions} suspensions, {episodes} episodes, {refusals} refusals, {permits} permits{}",
            fmt_failures(&violations)
        ),
    )
}

fn case_study_replay() -> Outcome {
    let config = EngineConfig::default();
    let scenario = case_study();
    let collapse = scenario.collapse_event.unwrap();
    let a = replay(&scenario, &config).unwrap();
    let b = replay(&case_study(), &config).unwrap();
    let before = a.report.detections.iter().filter(|d| d.t < collapse).count();
    let unresolved = a.episodes.iter().filter(|e| !e.resolved).count();
    let resolved: Vec<&RogueEpisode> = a.episodes.iter().filter(|e| e.resolved).collect();
    let at_collapse = resolved.len() == 1 && resolved[0].closed_at == collapse;
    let permits = a.report.permits_while_suspended();
    let deterministic = a.report.to_json().unwrap() == b.report.to_json().unwrap();
    outcome(
        before >= 1 && unresolved == 1 && at_collapse && permits == 0 && deterministic,
        format!(
            "{before} detections before t={collapse}, {unresolved} unresolved, {} resolved (closed at {:?}), {permits} permits while suspended, deterministic {deterministic}",
            resolved.len(),
            resolved.first().map(|e| e.closed_at)
        ),
    )
}

fn random_id(rng: &mut ChaCha8Rng) -> String {
    format!("q{:012x}", rng.random::<u64>() & 0xffff_ffff_ffff)
}

fn random_episode(rng: &mut ChaCha8Rng, actor: &str, seq: usize) -> RogueEpisode {
    let n = rng.random_range(3..=8);
    let ids: Vec<String> = (0..n).map(|_| random_id(rng)).collect();
    let mut g = MpgSnapshot::new(rng.random_range(20..200));
    for id in &ids {
        g = g.with_node(
            id.as_str(),
            NodeFeatures {
                relevance: rng.random_range(0.05..1.0),
                uncertainty: rng.random_range(0.0..1.0),
                risk: rng.random_range(0.0..1.0),
                phase: rng.random_range(-3.0..3.0),
            },
        );
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(0.35) {
                g = g.with_edge(ids[i].as_str(), ids[j].as_str(), RelationKind::ALL[rng.random_range(0..5)], rng.random_range(0.05..1.0));
            }
        }
    }
    let basis = g.basis();
    let k = rng.random_range(1..=3.min(n));
    let segment: BTreeSet<NodeId> = rand::seq::index::sample(rng, n, k).into_iter().map(|i| basis[i].clone()).collect();
    let t = g.t;
    let candidate = RogueCandidate {
        segment,
        loadings: basis.iter().map(|b| (b.clone(), rng.random::<f64>())).collect(),
        baseline_divergence: rng.random(),
        ablated_divergence: rng.random(),
        reduction: rng.random(),
        windows_persisted: 3,
        window_start: t - 11,
        window_end: t,
    };
    let state = build_state(&g).unwrap();
    let mut lp = DecoherenceLoop::new(actor, 12);
    let request = lp.suspend(candidate.clone(), &g, &state, t).unwrap().clone();
    let answer = if rng.random_bool(0.5) {
        ClarificationAnswer::pick(&request.id, rng.random_range(0..request.options.len()), t + 2)
    } else {
        ClarificationAnswer::unresolved(&request.id, t + 2)
    };
    let resolution = lp.resolve(answer, &state).unwrap();
    let op = random_hermitian(rng, n, 1.0);
    let operator = ComplexMatrixJson::from_matrix(&basis, &op);
    RogueEpisode {
        episode_id: format!("{actor}-ep-{seq:04}"),
        actor_id: actor.to_owned(),
        opened_at: t,
        closed_at: t + 2,
        ambiguity_config: AmbiguityConfig::capture(operator, &candidate, &g),
        candidate,
        request: resolution.request,
        answer: Some(resolution.answer),
        resolved: resolution.resolved,
    }
}

fn secrets(e: &RogueEpisode) -> Vec<String> {
    let num = |x: f64| serde_json::to_string(&x).unwrap();
    let mut out: Vec<String> = Vec::new();
    let cfg = &e.ambiguity_config;
    out.extend(cfg.operator.basis.iter().map(|b| b.as_str().to_owned()));
    out.extend(cfg.loadings.values().map(|&v| num(v)));
    out.extend(cfg.segment_relations.iter().map(|r| num(r.weight)));
    out.extend(cfg.operator.re.iter().flatten().chain(cfg.operator.im.iter().flatten()).map(|&v| num(v)));
    out.push(num(e.candidate.baseline_divergence));
    out.push(num(e.candidate.ablated_divergence));
    out.push(num(e.candidate.reduction));
    out.push(e.actor_id.clone());
    out.push(e.episode_id.clone());
    // Short renderings such as "0.0" also occur in legitimate fields.
    out.retain(|s| s.len() >= 6);
    out
}

fn privacy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let actors: Vec<String> = (0..25).map(|i| format!("actor{i:02}")).collect();
    let episodes: Vec<RogueEpisode> = (0..1000)
        .map(|i| {
            let a = actors[rng.random_range(0..actors.len())].clone();
            random_episode(&mut rng, &a, i)
        })
        .collect();
    let salt = b"acceptance-salt";
    let sigs: Vec<EpisodeSignature> = episodes.iter().map(|e| anonymize(e, salt)).collect();
    let mut leaks = Vec::new();
    let mut under = 0;
    let mut outputs = vec![serde_json::to_string(&sigs).unwrap()];
    for min_actors in [1usize, 2, 3, 5, 8] {
        let patterns = aggregate(&sigs, min_actors);
        for p in &patterns {
            let actual: BTreeSet<&str> = sigs
                .iter()
                .filter(|s| rogue_core::collective::profile_key(&s.relation_profile) == p.relation_profile)
                .map(|s| s.actor_hash.as_str())
                .collect();
            if p.actor_count < min_actors.max(2) || actual.len() != p.actor_count {
                under += 1;
            }
        }
        let alerts = alert(&patterns, &AlertThresholds::default());
        outputs.push(serde_json::to_string(&patterns).unwrap());
        outputs.push(serde_json::to_string(&alerts).unwrap());
    }
    let all = outputs.join("\n");
    for e in &episodes {
        for s in secrets(e) {
            if all.contains(&s) {
                leaks.push(format!("{} leaks {s}", e.episode_id));
            }
        }
    }
    if under > 0 {
        leaks.push(format!("{under} patterns below the actor floor"));
    }
    outcome(
        leaks.is_empty(),
        format!("1000 episodes, {} output bytes scanned{}", all.len(), fmt_failures(&leaks)),
    )
}

fn determinism() -> Outcome {
    let mut mismatches = Vec::new();
    let mut runs = 0;
    let configs = [EngineConfig::default(), {
        let mut c = EngineConfig::default();
        c.window.length = 8;
        c.adaptive_threshold = true;
        c
    }];
    for config in &configs {
        let mut scenarios = vec![("case study".to_owned(), case_study())];
        for seed in [3u64, 7, 19] {
            scenarios.push((format!("planted {seed}"), generate_planted(seed, 12, 3, 40, 60).unwrap()));
            scenarios.push((format!("control {seed}"), generate_planted(seed, 12, 3, 40, 0).unwrap()));
        }
        for (name, s) in scenarios {
            let a = replay(&s, config).unwrap();
            let b = replay(&s, config).unwrap();
            runs += 1;
            let same = a.report.to_json().unwrap() == b.report.to_json().unwrap()
                && a.episode_log().unwrap() == b.episode_log().unwrap();
            if !same {
                mismatches.push(name);
            }
        }
    }
    let regen = generate_planted(7, 12, 3, 40, 60).unwrap().to_json().unwrap()
        == generate_planted(7, 12, 3, 40, 60).unwrap().to_json().unwrap();
    if !regen {
        mismatches.push("generator".into());
    }
    outcome(mismatches.is_empty(), format!("{runs} paired replays{}", fmt_failures(&mismatches)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("normalization", normalization, Duration::from_secs(10)),
        ("unitarity and reversibility", unitarity, Duration::from_secs(30)),
        ("operator laws", operator_laws, Duration::from_secs(20)),
        ("ablation oracle equivalence", ablation_oracle, Duration::from_secs(120)),
        ("planted-anomaly benchmark", planted_benchmark, Duration::from_secs(120)),
        ("suspension soundness", suspension_soundness, Duration::MAX),
        ("case-study replay", case_study_replay, Duration::MAX),
        ("privacy", privacy, Duration::MAX),
        ("determinism", determinism, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = result.pass && in_time;
        failed += !pass as usize;
        let budget_note = if budget == Duration::MAX {
            String::new()
        } else {
            format!(" / {}s", budget.as_secs())
        };
        println!(
            "{} {name}: {} [{:.2}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
