//! Acceptance suite: one test per criterion, each printing a pass line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Run with `cargo test --test acceptance`.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;
use specrun_core::action::{Action, ActionKind};
use specrun_core::analysis::{
    entropy_report, intervention_rate, profile_threshold, token_entropy_proxy,
    trajectory_aggregates, DevRecord, EntropyGrouping,
};
use specrun_core::backends::{GenerationMode, Role};
use specrun_core::orchestrator::{parse_trace, serialize_trace, Orchestrator, RunConfig};
use specrun_core::simulator::{expected_step_latency, simulate, LatencyDist, SimParams};
use specrun_core::speculation::{
    reasoning_length, select_draft, Draft, DraftFailure, DraftPair, DraftSource, SelectionPolicy,
};
use specrun_core::trajectory::{
    Observation, ObservationKind, Provenance, ReasoningTrace, Step, TimingBreakdown, Trajectory,
};
use specrun_core::verification::{decide, levenshtein, match_verify, verifier_score, MatchPolicy};

#[test]
fn criterion_1_verifier_math() {
    assert_eq!(verifier_score(0.5, 0.5).unwrap(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let p_acc = rng.gen_range(1e-9..=1.0);
        let p_rej = rng.gen_range(1e-9..=1.0);
        let fwd = verifier_score(p_acc, p_rej).unwrap();
        let rev = verifier_score(p_rej, p_acc).unwrap();
        if (fwd + rev).abs() > 1e-9 {
            violations += 1;
        }
        // Monotonicity: increasing p_acc with p_rej fixed raises the score.
        let higher = (p_acc * 1.5).min(1.0);
        if higher > p_acc && verifier_score(higher, p_rej).unwrap() <= fwd {
            violations += 1;
        }
        // decide is monotone non-decreasing in score.
        if decide(fwd, 0.5) && !decide(fwd + 1.0, 0.5) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);

    // Boundary: a score exactly at the threshold accepts.
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..1000 {
        let tau = rng.gen_range(-20.0..20.0);
        assert!(decide(tau, tau));
    }
    println!("acceptance 1: PASS — verifier math (zero violations in 10^4-pair sweeps, inclusive boundary)");
}

#[test]
fn criterion_2_selection_truth_table() {
    fn mk_draft(source: DraftSource, kind: ActionKind, reasoning_tokens: usize) -> Draft {
        let action = match kind {
            ActionKind::Search => Action::search("q").unwrap(),
            ActionKind::Visit => Action::visit("http://u", "i").unwrap(),
            ActionKind::Finish => Action::finish("a").unwrap(),
            ActionKind::Other => Action::other("t", Default::default()).unwrap(),
        };
        Draft {
            source,
            reasoning: (reasoning_tokens > 0)
                .then(|| ReasoningTrace::new("r", reasoning_tokens, vec![])),
            action,
            raw: specrun_core::backends::BackendResponse {
                text: String::new(),
                tokens: vec![],
                token_logprobs: vec![],
                finish_reason: specrun_core::backends::FinishReason::Stop,
                latency_ms: 0,
            },
            action_logprobs: vec![],
        }
    }

    let policy = SelectionPolicy { tau_think: 512 };
    let kinds = [
        ActionKind::Search,
        ActionKind::Visit,
        ActionKind::Finish,
        ActionKind::Other,
    ];
    let mut cases = 0usize;
    for kind in kinds {
        for length in [policy.tau_think, policy.tau_think + 1] {
            let exceeds = length > policy.tau_think;
            let s2 = mk_draft(DraftSource::System2, kind, length);
            let s1 = mk_draft(DraftSource::System1, ActionKind::Visit, 0);
            let fail = || DraftFailure {
                error: "down".to_string(),
                latency_ms: 0,
            };

            // Both present: Search/Finish/Other keep the reasoned draft;
            // Visit takes the large-model draft unless reasoning exceeds
            // the threshold.
            let both = DraftPair {
                system2: Ok(s2.clone()),
                system1: Ok(s1.clone()),
            };
            let selected = select_draft(&both, &policy).unwrap();
            let expected = if kind == ActionKind::Visit && !exceeds {
                DraftSource::System1
            } else {
                DraftSource::System2
            };
            assert_eq!(selected.source, expected, "kind={kind:?} L={length}");
            assert_eq!(
                reasoning_length(selected) > policy.tau_think,
                selected.source == DraftSource::System2 && exceeds
            );
            cases += 1;

            // A missing side forces the other.
            let only_s2 = DraftPair {
                system2: Ok(s2.clone()),
                system1: Err(fail()),
            };
            assert_eq!(
                select_draft(&only_s2, &policy).unwrap().source,
                DraftSource::System2
            );
            cases += 1;
            let only_s1 = DraftPair {
                system2: Err(fail()),
                system1: Ok(s1.clone()),
            };
            assert_eq!(
                select_draft(&only_s1, &policy).unwrap().source,
                DraftSource::System1
            );
            cases += 1;
        }
    }
    assert_eq!(cases, 24);
    println!("acceptance 2: PASS — selection truth table (24/24 cases, zero deviations)");
}

fn analysis_step(action: Action, with_reasoning: bool, action_logprobs: Vec<f64>) -> Step {
    Step {
        reasoning: with_reasoning.then(|| ReasoningTrace::new("r", 1, vec![-0.2])),
        action,
        observation: Observation {
            kind: ObservationKind::ToolOutput,
            payload: "p".to_string(),
            latency_ms: 0,
        },
        provenance: if with_reasoning {
            Provenance::System2Draft
        } else {
            Provenance::System1Draft
        },
        verdict: None,
        timing: TimingBreakdown::default(),
        action_logprobs,
    }
}

fn trajectory_of(steps: Vec<Step>) -> Trajectory {
    Trajectory {
        task_id: "t".to_string(),
        question: "q".to_string(),
        steps,
        final_answer: None,
        config_digest: "d".to_string(),
    }
}

#[test]
fn criterion_3_entropy_proxy() {
    // Independent brute-force oracle: negate each entry and average in
    // reverse order.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let logprobs: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..12.0)).collect();
        let oracle = logprobs.iter().rev().map(|lp| -lp).sum::<f64>() / logprobs.len() as f64;
        assert!((token_entropy_proxy(&logprobs).unwrap() - oracle).abs() < 1e-12);
    }

    // Hand-computed group means: Search/no-reasoning proxies {2, 4} mean 3;
    // Visit/no-reasoning {1} mean 1; Search/with-reasoning {0.5}.
    let corpus = vec![trajectory_of(vec![
        analysis_step(Action::search("a").unwrap(), false, vec![-2.0]),
        analysis_step(Action::search("b").unwrap(), false, vec![-4.0]),
        analysis_step(Action::visit("http://u", "i").unwrap(), false, vec![-1.0]),
        analysis_step(Action::search("c").unwrap(), true, vec![-0.5]),
    ])];
    let report = entropy_report(&corpus, EntropyGrouping::KindAndReasoningMode).unwrap();
    let search = &report.groups[&(ActionKind::Search, Some(GenerationMode::ActionOnly))];
    let visit = &report.groups[&(ActionKind::Visit, Some(GenerationMode::ActionOnly))];
    assert_eq!(search.mean, 3.0);
    assert_eq!(visit.mean, 1.0);
    assert_eq!(
        report.groups[&(ActionKind::Search, Some(GenerationMode::WithReasoning))].mean,
        0.5
    );
    // Search logprobs constructed uniformly lower -> higher uncertainty.
    assert_eq!(report.search_above_visit_without_reasoning, Some(true));
    println!("acceptance 3: PASS — entropy proxy (oracle within 1e-12, hand-computed group means, inequality verdict)");
}

/// Ten-step scenario where the critic rejects exactly loop steps 3 and 7.
fn ten_step_speculative_entries() -> Vec<Value> {
    let mut entries = Vec::new();
    for t in 0..10 {
        if t == 9 {
            entries.push(slm_draft(t, "wrap up\nfinish{answer=\"42\"}", 300));
            entries.push(llm_draft(t, "finish{answer=\"42\"}", 500));
        } else {
            entries.push(slm_draft(t, &format!("dig\nsearch{{query=\"q{t}\"}}"), 300));
            entries.push(llm_draft(
                t,
                &format!("visit{{url=\"http://q{t}\",instruction=\"skim\"}}"),
                500,
            ));
        }
        if t == 3 || t == 7 {
            entries.push(critic_reject(t, 50));
        } else {
            entries.push(critic_accept(t, 50));
        }
    }
    // Fallback regenerations for the two rejected steps.
    entries.push(llm_full(0, "rethink\nsearch{query=\"f0\"}", 10_000));
    entries.push(llm_full(1, "rethink\nsearch{query=\"f1\"}", 10_000));
    entries
}

fn ten_step_baseline_entries() -> Vec<Value> {
    let mut entries = Vec::new();
    for t in 0..10 {
        let text = if t == 9 {
            "conclude\nfinish{answer=\"42\"}".to_string()
        } else {
            format!("think\nsearch{{query=\"q{t}\"}}")
        };
        entries.push(llm_full(t, &text, 10_000));
    }
    entries
}

fn ten_step_fixtures() -> String {
    let mut search = Vec::new();
    for t in 0..9 {
        search.push(search_fixture(&format!("q{t}"), 200));
    }
    search.push(search_fixture("f0", 200));
    search.push(search_fixture("f1", 200));
    fixtures(search, vec![])
}

#[tokio::test]
async fn criterion_4_end_to_end_scripted_run() {
    let backend = backend_from(ten_step_speculative_entries());
    let (_, tools) = tools_from(&ten_step_fixtures());
    let orch = Orchestrator::new(backend.clone(), tools, RunConfig::default()).unwrap();
    let report = orch
        .run_task("task-1", "what is the answer?")
        .await
        .unwrap();

    assert_eq!(report.step_count, 10);
    assert_eq!(report.fallback_count, 2);
    assert_eq!(report.intervention_rate, 0.200);
    // The call-count invariant behind removing base-model reasoning from
    // the critical path: exactly one full-reasoning call per fallback.
    assert_eq!(
        backend.generate_calls(Role::Llm, GenerationMode::WithReasoning),
        2
    );

    let baseline_backend = backend_from(ten_step_baseline_entries());
    let (_, baseline_tools) = tools_from(&ten_step_fixtures());
    let baseline_orch =
        Orchestrator::new(baseline_backend, baseline_tools, RunConfig::default()).unwrap();
    let baseline = baseline_orch
        .run_baseline("task-1", "what is the answer?")
        .await
        .unwrap();
    assert_eq!(
        baseline.trajectory.final_answer,
        report.trajectory.final_answer
    );
    assert_eq!(report.trajectory.final_answer.as_deref(), Some("42"));
    // R_base (10000) > max(R_slm, G_llm) + V (550): speculation wins.
    assert!(baseline.wall_ms >= report.wall_ms);
    println!(
        "acceptance 4: PASS — end-to-end scripted run (intervention 0.200, 2 base calls, answers match, {} ms vs {} ms baseline)",
        report.wall_ms, baseline.wall_ms
    );
}

#[test]
fn criterion_5_threshold_profiling() {
    // Counting oracle on the explicit score set {1..100}.
    let dev: Vec<DevRecord> = (1..=100)
        .map(|i| DevRecord::new(f64::from(i), format!("s{i}")))
        .collect();
    let tau = profile_threshold(&dev, 0.2).unwrap();
    assert_eq!(tau, 21.0);
    assert_eq!(intervention_rate(&dev, tau), 0.20);

    // Synthetic dev set from two Gaussians.
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let good = Normal::new(2.0, 1.0).unwrap();
    let bad = Normal::new(-1.5, 1.0).unwrap();
    let mut dev = Vec::new();
    for i in 0..800 {
        dev.push(DevRecord::new(good.sample(&mut rng), format!("good{i}")));
    }
    for i in 0..200 {
        dev.push(DevRecord::new(bad.sample(&mut rng), format!("bad{i}")));
    }
    let target = 0.2;
    let tau = profile_threshold(&dev, target).unwrap();
    let achieved = intervention_rate(&dev, tau);
    assert!(
        (achieved - target).abs() <= 0.02,
        "achieved {achieved} vs target {target}"
    );
    println!("acceptance 5: PASS — threshold profiling (tau = 21 on {{1..100}}, Gaussian dev set within ±2 pp)");
}

#[test]
fn criterion_6_simulator_vs_analytics() {
    let constant = |ms: f64| LatencyDist::Constant { ms };
    let params = SimParams {
        r_base: constant(10_000.0),
        r_slm: constant(3_000.0),
        g_llm: constant(2_000.0),
        v: constant(500.0),
        e_tool: constant(2_000.0),
        accept_prob: 0.8,
        steps: 10_000,
        seed: 7,
        prefetch: false,
    };
    assert_eq!(expected_step_latency(&params).unwrap(), 7_500.0);
    let report = simulate(&params).unwrap();
    assert_eq!(report.mean_step_ms, 7_500.0);
    assert_eq!(report.speedup, 1.6);

    // Exponential variant vs an independent straightforward Monte-Carlo
    // sampler (inverse-CDF draws, Bernoulli acceptance, its own stream).
    let mut exp_params = params.clone();
    exp_params.r_base = LatencyDist::Exponential { mean_ms: 10_000.0 };
    exp_params.r_slm = LatencyDist::Exponential { mean_ms: 3_000.0 };
    exp_params.g_llm = LatencyDist::Exponential { mean_ms: 2_000.0 };
    exp_params.e_tool = LatencyDist::Exponential { mean_ms: 2_000.0 };
    exp_params.steps = 100_000;
    let report = simulate(&exp_params).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let exp_draw = |mean: f64, rng: &mut ChaCha8Rng| -> f64 {
        let u: f64 = rng.gen_range(0.0..1.0);
        -mean * (1.0 - u).ln()
    };
    let mut total = 0.0;
    for _ in 0..100_000 {
        let r_base = exp_draw(10_000.0, &mut rng);
        let r_slm = exp_draw(3_000.0, &mut rng);
        let g_llm = exp_draw(2_000.0, &mut rng);
        let v = 500.0;
        let e_tool = exp_draw(2_000.0, &mut rng);
        total += if rng.gen_range(0.0..1.0) < 0.8 {
            r_slm.max(g_llm) + v + e_tool
        } else {
            r_slm.max(g_llm) + v + r_base + e_tool
        };
    }
    let reference = total / 100_000.0;
    let relative = (report.mean_step_ms - reference).abs() / reference;
    assert!(relative < 0.01, "relative error {relative}");

    // Speedup monotone non-decreasing across an 11-point acceptance sweep.
    let mut last = 0.0;
    for i in 0..=10 {
        let mut p = params.clone();
        p.accept_prob = i as f64 / 10.0;
        p.steps = 1_000;
        let sweep = simulate(&p).unwrap();
        assert!(sweep.speedup >= last, "not monotone at p={}", p.accept_prob);
        last = sweep.speedup;
    }
    println!("acceptance 6: PASS — simulator vs analytics (7500 ms exact, speedup 1.600, MC within 1%, monotone sweep)");
}

fn arbitrary_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    let n = rng.gen_range(0..7);
    let mut steps = Vec::new();
    for _ in 0..n {
        let action = match rng.gen_range(0..3) {
            0 => Action::search(format!("q {}", rng.gen::<u32>())).unwrap(),
            1 => Action::visit(format!("http://h{}", rng.gen::<u16>()), "read").unwrap(),
            _ => {
                let mut args = std::collections::BTreeMap::new();
                args.insert("expr".to_string(), format!("{}+1", rng.gen::<u8>()));
                Action::other("calc", args).unwrap()
            }
        };
        let with_reasoning = rng.gen_bool(0.5);
        let mut step = analysis_step(
            action,
            with_reasoning,
            (0..rng.gen_range(0..4))
                .map(|_| -rng.gen_range(0.0..5.0))
                .collect(),
        );
        step.timing = TimingBreakdown {
            draft_slm_ms: rng.gen_range(0..2000),
            draft_llm_ms: rng.gen_range(0..2000),
            verify_ms: rng.gen_range(0..200),
            tool_ms: rng.gen_range(0..800),
            fallback_reasoning_ms: 0,
            wall_step_ms: 5_000,
        };
        step.verdict = Some(
            specrun_core::verification::Verdict::from_probabilities(
                rng.gen_range(1e-9..1.0),
                rng.gen_range(1e-9..1.0),
                0.0,
            )
            .unwrap(),
        );
        if step.verdict.as_ref().unwrap().accepted {
            steps.push(step);
        } else {
            // Keep provenance consistent with a rejecting verdict.
            step.provenance = Provenance::Fallback;
            step.reasoning = Some(ReasoningTrace::new("fb", 2, vec![-0.1, -0.4]));
            steps.push(step);
        }
    }
    let mut t = trajectory_of(steps);
    if rng.gen_bool(0.5) {
        let mut finish = analysis_step(Action::finish("done").unwrap(), true, vec![]);
        finish.observation = Observation {
            kind: ObservationKind::AnswerEcho,
            payload: "done".to_string(),
            latency_ms: 0,
        };
        t.steps.push(finish);
        t.final_answer = Some("done".to_string());
    }
    t.validate().unwrap();
    t
}

#[tokio::test]
async fn criterion_7_determinism() {
    // Two runs with identical config, scenario, fixtures, and seed produce
    // byte-identical trace files.
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for run in 0..2 {
        let backend = backend_from(ten_step_speculative_entries());
        let (_, tools) = tools_from(&ten_step_fixtures());
        let orch = Orchestrator::new(backend, tools, RunConfig::default()).unwrap();
        let report = orch
            .run_task("task-1", "what is the answer?")
            .await
            .unwrap();
        let path = dir.path().join(format!("trace{run}.ndjson"));
        std::fs::write(&path, serialize_trace(&report.trajectory)).unwrap();
        paths.push(path);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    let b = std::fs::read(&paths[1]).unwrap();
    assert_eq!(a, b, "trace files differ across identical runs");

    // Round-trip identity on generated trajectories.
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for _ in 0..100 {
        let t = arbitrary_trajectory(&mut rng);
        assert_eq!(parse_trace(&serialize_trace(&t)).unwrap(), t);
    }
    println!(
        "acceptance 7: PASS — determinism (byte-identical trace files, 100 round-trip identities)"
    );
}

#[test]
fn criterion_8_trajectory_aggregates() {
    let agg = trajectory_aggregates(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(agg.mean, 2.5);
    assert_eq!(agg.p25, 1.0);

    // Correct trajectories scripted with uniformly higher scores: both
    // aggregates order correct above incorrect.
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for _ in 0..20 {
        let n = rng.gen_range(3..12);
        let high: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..3.0)).collect();
        let low: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.5)).collect();
        correct.push(trajectory_aggregates(&high).unwrap());
        incorrect.push(trajectory_aggregates(&low).unwrap());
    }
    let min_correct_mean = correct.iter().map(|a| a.mean).fold(f64::INFINITY, f64::min);
    let max_incorrect_mean = incorrect
        .iter()
        .map(|a| a.mean)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(min_correct_mean > max_incorrect_mean);
    let min_correct_p25 = correct.iter().map(|a| a.p25).fold(f64::INFINITY, f64::min);
    let max_incorrect_p25 = incorrect
        .iter()
        .map(|a| a.p25)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(min_correct_p25 > max_incorrect_p25);
    println!("acceptance 8: PASS — aggregates (nearest-rank p25, Mean and p25 separate correct from incorrect)");
}

#[test]
fn criterion_9_matching_baselines() {
    fn oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in dp.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in dp[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                dp[i][j] = (dp[i - 1][j] + 1)
                    .min(dp[i][j - 1] + 1)
                    .min(dp[i - 1][j - 1] + cost);
            }
        }
        dp[a.len()][b.len()]
    }

    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let alphabet: Vec<char> = "abcd e.".chars().collect();
    let random_string = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.gen_range(0..15);
        (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect()
    };
    for _ in 0..1000 {
        let a = random_string(&mut rng);
        let b = random_string(&mut rng);
        assert_eq!(levenshtein(&a, &b), oracle(&a, &b), "{a:?} vs {b:?}");
    }

    // Exact equals EditDistance(0) on all random action pairs.
    let random_action = |rng: &mut ChaCha8Rng| -> Action {
        match rng.gen_range(0..3) {
            0 => Action::search(format!("q{}", rng.gen_range(0..5))).unwrap(),
            1 => Action::visit(format!("http://h{}", rng.gen_range(0..5)), "i").unwrap(),
            _ => Action::finish(format!("a{}", rng.gen_range(0..5))).unwrap(),
        }
    };
    for _ in 0..1000 {
        let a = random_action(&mut rng);
        let b = random_action(&mut rng);
        assert_eq!(
            match_verify(&a, &b, MatchPolicy::Exact),
            match_verify(&a, &b, MatchPolicy::EditDistance(0)),
        );
    }
    println!("acceptance 9: PASS — matching baselines (10^3-pair oracle agreement, Exact == EditDistance(0))");
}
