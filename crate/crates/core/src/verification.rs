//! Draft verification: a confidence-scored critic plus matching baselines.
//!
//! The semantic path builds a trajectory-audit prompt, asks the large model
//! for its next-token distribution, aggregates Yes/No surface variants into
//! acceptance and rejection probabilities, and scores the draft by the
//! log-odds margin `ln p_acc - ln p_rej`. A draft is accepted when the
//! score reaches the threshold. Matching verifiers (exact and bounded edit
//! distance over canonical renderings) are kept for baseline comparison.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::action::{render_action, Action};
use crate::backends::{ModelBackend, NextTokenDistribution, Role};
use crate::context::AgentContext;
use crate::trajectory::ReasoningTrace;
use crate::Timed;

/// Versioned audit prompt template; the template section of every audit
/// prompt reproduces this text byte for byte.
pub const AUDIT_PROMPT_TEMPLATE: &str = include_str!("../assets/audit_prompt_v1.txt");

/// Probability floor keeping the log-odds score finite and order-preserving
/// when a variant receives no mass.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Critic output for one draft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub p_acc: f64,
    pub p_rej: f64,
    /// `ln(p_acc) - ln(p_rej)` exactly as computed.
    pub score: f64,
    pub accepted: bool,
    pub threshold: f64,
}

impl Verdict {
    /// Builds a verdict from aggregated probabilities, deciding against
    /// `threshold`.
    pub fn from_probabilities(
        p_acc: f64,
        p_rej: f64,
        threshold: f64,
    ) -> Result<Self, VerificationError> {
        let score = verifier_score(p_acc, p_rej)?;
        Ok(Verdict {
            p_acc,
            p_rej,
            score,
            accepted: decide(score, threshold),
            threshold,
        })
    }

    pub fn validate(&self) -> Result<(), VerificationError> {
        let expect = verifier_score(self.p_acc, self.p_rej)?;
        if self.score != expect {
            return Err(VerificationError::InconsistentVerdict(
                "score does not equal ln(p_acc) - ln(p_rej)",
            ));
        }
        if self.accepted != decide(self.score, self.threshold) {
            return Err(VerificationError::InconsistentVerdict(
                "accepted flag disagrees with score >= threshold",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerificationError {
    #[error("probability out of domain (must be in (0, 1]): {0}")]
    ProbabilityDomain(String),
    #[error("variant sets must be disjoint and non-empty")]
    InvalidVariantSets,
    #[error("inconsistent verdict: {0}")]
    InconsistentVerdict(&'static str),
}

/// Token surface forms counted as acceptance or rejection answers.
/// Membership is tested after trimming whitespace and case-folding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSets {
    pub affirmative: BTreeSet<String>,
    pub negative: BTreeSet<String>,
}

impl VariantSets {
    pub fn new(
        affirmative: BTreeSet<String>,
        negative: BTreeSet<String>,
    ) -> Result<Self, VerificationError> {
        if affirmative.is_empty()
            || negative.is_empty()
            || affirmative.intersection(&negative).next().is_some()
        {
            return Err(VerificationError::InvalidVariantSets);
        }
        Ok(VariantSets {
            affirmative,
            negative,
        })
    }

    fn contains_affirmative(&self, token: &str) -> bool {
        self.affirmative.contains(&normalize_token(token))
    }

    fn contains_negative(&self, token: &str) -> bool {
        self.negative.contains(&normalize_token(token))
    }
}

impl Default for VariantSets {
    fn default() -> Self {
        VariantSets {
            affirmative: BTreeSet::from(["yes".to_string()]),
            negative: BTreeSet::from(["no".to_string()]),
        }
    }
}

fn normalize_token(token: &str) -> String {
    token.trim().to_lowercase()
}

/// Builds the critic prompt: the audit template verbatim, the recent-steps
/// window, the draft reasoning (omitted when absent), and the canonical
/// rendered action.
pub fn build_audit_prompt(
    state: &AgentContext,
    reasoning: Option<&ReasoningTrace>,
    action: &Action,
    window: usize,
) -> String {
    let mut prompt = String::from(AUDIT_PROMPT_TEMPLATE);
    prompt.push('\n');
    prompt.push_str(&state.render_recent_steps(window));
    if let Some(trace) = reasoning {
        if !trace.text.is_empty() {
            prompt.push_str("\nDraft reasoning:\n");
            prompt.push_str(&trace.text);
            prompt.push('\n');
        }
    }
    prompt.push_str("\nDraft action: ");
    prompt.push_str(&render_action(action));
    prompt.push('\n');
    prompt
}

/// Sums the probability mass of each variant set in a next-token
/// distribution, flooring both sides at `epsilon` so the score stays
/// finite.
pub fn aggregate_yes_no(
    dist: &NextTokenDistribution,
    variants: &VariantSets,
    epsilon: f64,
) -> (f64, f64) {
    let mut p_acc = 0.0;
    let mut p_rej = 0.0;
    for (token, logprob) in dist.entries() {
        if variants.contains_affirmative(token) {
            p_acc += logprob.exp();
        } else if variants.contains_negative(token) {
            p_rej += logprob.exp();
        }
    }
    (p_acc.max(epsilon), p_rej.max(epsilon))
}

/// The log-probability margin `ln(p_acc) - ln(p_rej)`.
pub fn verifier_score(p_acc: f64, p_rej: f64) -> Result<f64, VerificationError> {
    if !(p_acc > 0.0 && p_acc <= 1.0) || !p_acc.is_finite() {
        return Err(VerificationError::ProbabilityDomain(format!(
            "p_acc = {p_acc}"
        )));
    }
    if !(p_rej > 0.0 && p_rej <= 1.0) || !p_rej.is_finite() {
        return Err(VerificationError::ProbabilityDomain(format!(
            "p_rej = {p_rej}"
        )));
    }
    Ok(p_acc.ln() - p_rej.ln())
}

/// Acceptance rule: true iff `score >= tau` (boundary inclusive).
pub fn decide(score: f64, tau: f64) -> bool {
    score >= tau
}

/// Matching policy for baseline verifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchPolicy {
    /// Canonical renderings must be byte-equal.
    Exact,
    /// Levenshtein distance between canonical renderings at most `limit`.
    EditDistance(usize),
}

/// Compares a drafted action against a reference action.
pub fn match_verify(draft: &Action, reference: &Action, policy: MatchPolicy) -> bool {
    let a = render_action(draft);
    let b = render_action(reference);
    match policy {
        MatchPolicy::Exact => a == b,
        MatchPolicy::EditDistance(limit) => levenshtein(&a, &b) <= limit,
    }
}

/// Character-level Levenshtein distance, two-row dynamic program.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Semantic verifier configuration: variant sets, probability floor, the
/// context window shown to the critic, and the top-k width requested from
/// the judge call.
#[derive(Debug, Clone)]
pub struct SemanticVerifier {
    pub variants: VariantSets,
    pub epsilon: f64,
    pub window: usize,
    pub top_k: usize,
}

impl Default for SemanticVerifier {
    fn default() -> Self {
        SemanticVerifier {
            variants: VariantSets::default(),
            epsilon: DEFAULT_EPSILON,
            window: 8,
            top_k: 20,
        }
    }
}

impl SemanticVerifier {
    /// Runs the full critic pass for one draft: prompt, judge call,
    /// aggregation, scoring, decision.
    pub async fn verify(
        &self,
        backend: &dyn ModelBackend,
        state: &AgentContext,
        reasoning: Option<&ReasoningTrace>,
        action: &Action,
        tau: f64,
    ) -> Result<Timed<Verdict>, crate::backends::BackendError> {
        let prompt = build_audit_prompt(state, reasoning, action, self.window);
        let judged = backend
            .judge_next_token(Role::Critic, &prompt, self.top_k)
            .await?;
        let (p_acc, p_rej) = aggregate_yes_no(&judged.value, &self.variants, self.epsilon);
        let verdict = Verdict::from_probabilities(p_acc, p_rej, tau)
            .expect("aggregated probabilities are floored into domain");
        Ok(Timed::new(verdict, judged.latency_ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(entries: Vec<(&str, f64)>) -> NextTokenDistribution {
        NextTokenDistribution::new(
            entries
                .into_iter()
                .map(|(t, lp)| (t.to_string(), lp))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn audit_prompt_reproduces_template_and_demands_yes_no() {
        let state = AgentContext::new("find x", 8192);
        let action = Action::search("x").unwrap();
        let prompt = build_audit_prompt(&state, None, &action, 8);
        assert!(prompt.starts_with(AUDIT_PROMPT_TEMPLATE));
        assert!(prompt.contains("Answer only \"Yes\" or \"No\"."));
        assert!(prompt.contains("Draft action: search{query=\"x\"}"));
    }

    #[test]
    fn audit_prompt_omits_absent_reasoning() {
        let state = AgentContext::new("q", 8192);
        let action = Action::search("x").unwrap();
        let without = build_audit_prompt(&state, None, &action, 8);
        assert!(!without.contains("Draft reasoning:"));
        let trace = ReasoningTrace::new("because", 1, vec![]);
        let with = build_audit_prompt(&state, Some(&trace), &action, 8);
        assert!(with.contains("Draft reasoning:\nbecause\n"));
    }

    #[test]
    fn audit_prompt_windows_context() {
        let mut state = AgentContext::new("q", 8192);
        for i in 0..12 {
            state.push(None, format!("search{{query=\"q{i}\"}}"), "obs");
        }
        let prompt = build_audit_prompt(&state, None, &Action::search("x").unwrap(), 8);
        assert_eq!(prompt.matches("\nStep ").count(), 8);
    }

    #[test]
    fn aggregate_hand_summed_exponentials() {
        let d = dist(vec![
            ("Yes", (0.7f64).ln()),
            (" yes", (0.2f64).ln()),
            ("No", (0.1f64).ln()),
        ]);
        let (p_acc, p_rej) = aggregate_yes_no(&d, &VariantSets::default(), DEFAULT_EPSILON);
        assert!((p_acc - 0.9).abs() < 1e-12);
        assert!((p_rej - 0.1).abs() < 1e-12);
    }

    #[test]
    fn aggregate_floor_and_symmetric_cases() {
        let none = dist(vec![("maybe", (0.5f64).ln())]);
        let (p_acc, p_rej) = aggregate_yes_no(&none, &VariantSets::default(), DEFAULT_EPSILON);
        assert_eq!((p_acc, p_rej), (DEFAULT_EPSILON, DEFAULT_EPSILON));

        let even = dist(vec![("Yes", (0.5f64).ln()), ("No", (0.5f64).ln())]);
        let (p_acc, p_rej) = aggregate_yes_no(&even, &VariantSets::default(), DEFAULT_EPSILON);
        assert!((p_acc - 0.5).abs() < 1e-12 && (p_rej - 0.5).abs() < 1e-12);
    }

    #[test]
    fn aggregate_mass_bound_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            // Random sub-probability distribution over a few tokens.
            let n = rng.gen_range(1..6);
            let mut remaining = 1.0f64;
            let mut entries = Vec::new();
            for i in 0..n {
                let p = remaining * rng.gen_range(0.05..0.45);
                remaining -= p;
                let token = match i % 4 {
                    0 => "Yes".to_string(),
                    1 => "No".to_string(),
                    2 => " YES ".to_string(),
                    _ => format!("t{i}"),
                };
                entries.push((token, p.ln()));
            }
            let d = NextTokenDistribution::new(entries).unwrap();
            let (p_acc, p_rej) = aggregate_yes_no(&d, &VariantSets::default(), DEFAULT_EPSILON);
            assert!(p_acc + p_rej <= 1.0 + 2.0 * DEFAULT_EPSILON);
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(verifier_score(0.5, 0.5).unwrap(), 0.0);
        assert!((verifier_score(0.9, 0.1).unwrap() - 9.0f64.ln()).abs() < 1e-12);
        assert!((verifier_score(0.1, 0.9).unwrap() + 9.0f64.ln()).abs() < 1e-12);
        assert!(verifier_score(0.0, 0.5).is_err());
        assert!(verifier_score(0.5, -0.1).is_err());
        assert!(verifier_score(1.5, 0.5).is_err());
    }

    #[test]
    fn score_antisymmetry_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = rng.gen_range(1e-9..1.0);
            let b = rng.gen_range(1e-9..1.0);
            let fwd = verifier_score(a, b).unwrap();
            let rev = verifier_score(b, a).unwrap();
            assert!(
                (fwd + rev).abs() < 1e-9,
                "antisymmetry violated at ({a}, {b})"
            );
        }
    }

    #[test]
    fn score_monotone_in_p_acc() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let p_rej = rng.gen_range(1e-9..1.0);
            let lo = rng.gen_range(1e-9..0.5);
            let hi = rng.gen_range(lo..1.0);
            if hi > lo {
                assert!(
                    verifier_score(hi, p_rej).unwrap() > verifier_score(lo, p_rej).unwrap(),
                    "monotonicity violated at ({lo}, {hi}, {p_rej})"
                );
            }
        }
    }

    #[test]
    fn decide_boundary_and_extremes() {
        assert!(decide(0.0, 0.0));
        assert!(!decide(-1.0, 0.0));
        // Achievable scores are bounded by ln(1/eps) - ln(eps): a threshold
        // below every achievable score accepts all, one above rejects all.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let max_score = (1.0f64).ln() - DEFAULT_EPSILON.ln();
        for _ in 0..1000 {
            let p_acc = rng.gen_range(DEFAULT_EPSILON..=1.0);
            let p_rej = rng.gen_range(DEFAULT_EPSILON..=1.0);
            let score = verifier_score(p_acc, p_rej).unwrap();
            assert!(decide(score, -max_score - 1.0));
            assert!(!decide(score, max_score + 1.0));
        }
    }

    #[test]
    fn verdict_invariants_enforced() {
        let v = Verdict::from_probabilities(0.9, 0.1, 0.0).unwrap();
        assert!(v.accepted);
        assert!(v.validate().is_ok());
        let broken = Verdict {
            accepted: false,
            ..v
        };
        assert!(broken.validate().is_err());
    }

    #[test]
    fn match_verify_examples() {
        let a = Action::search("paris population 2023").unwrap();
        let b = Action::search("paris population 2024").unwrap();
        assert!(match_verify(&a, &a, MatchPolicy::Exact));
        assert!(match_verify(&a, &a, MatchPolicy::EditDistance(0)));
        assert!(!match_verify(
            &Action::search("a").unwrap(),
            &Action::search("b").unwrap(),
            MatchPolicy::Exact
        ));
        // Independent DP oracle confirms the distance is exactly 1.
        assert_eq!(
            levenshtein_oracle(&render_action(&a), &render_action(&b)),
            1
        );
        assert!(match_verify(&a, &b, MatchPolicy::EditDistance(1)));
        assert!(!match_verify(&a, &b, MatchPolicy::EditDistance(0)));
    }

    /// Full-matrix reference implementation, independent of the two-row
    /// production version.
    fn levenshtein_oracle(a: &str, b: &str) -> usize {
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

    fn random_string(rng: &mut ChaCha8Rng, max_len: usize) -> String {
        let len = rng.gen_range(0..=max_len);
        (0..len)
            .map(|_| *b"abcde ".get(rng.gen_range(0..6)).unwrap() as char)
            .collect()
    }

    #[test]
    fn levenshtein_agrees_with_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let a = random_string(&mut rng, 12);
            let b = random_string(&mut rng, 12);
            assert_eq!(
                levenshtein(&a, &b),
                levenshtein_oracle(&a, &b),
                "{a:?} vs {b:?}"
            );
            assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            assert_eq!(levenshtein(&a, &a), 0);
        }
    }

    #[test]
    fn variant_sets_must_be_disjoint() {
        let overlapping = VariantSets::new(
            BTreeSet::from(["yes".to_string()]),
            BTreeSet::from(["yes".to_string()]),
        );
        assert!(overlapping.is_err());
        assert!(VariantSets::new(BTreeSet::new(), BTreeSet::from(["no".into()])).is_err());
    }
}
