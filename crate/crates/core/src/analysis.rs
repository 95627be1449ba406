//! Offline metrics over traces: entropy proxies, alignment metrics,
//! verifier-score aggregates, threshold profiling, latency breakdowns.
//!
//! Everything here is a pure batch computation over parsed trajectories;
//! reports serialize to comma-delimited text for plotting elsewhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::ActionKind;
use crate::backends::GenerationMode;
use crate::trajectory::{TimingBreakdown, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("embedding is a zero vector")]
    ZeroVector,
    #[error("logprob above zero: {0}")]
    PositiveLogprob(f64),
    #[error("target rate {0} outside [0, 1)")]
    InvalidTarget(f64),
}

/// Mean negated token log-probability of a realized action: the tractable
/// uncertainty proxy. Zero iff every token had probability one.
pub fn token_entropy_proxy(logprobs: &[f64]) -> Result<f64, AnalysisError> {
    if logprobs.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if let Some(bad) = logprobs.iter().find(|lp| **lp > 0.0) {
        return Err(AnalysisError::PositiveLogprob(*bad));
    }
    let sum: f64 = logprobs.iter().map(|lp| -lp).sum();
    Ok(sum / logprobs.len() as f64)
}

/// Distribution summary for one (action kind, reasoning mode) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// How entropy samples are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyGrouping {
    /// One group per (action kind, with/without reasoning) pair.
    KindAndReasoningMode,
    /// One group per action kind, both modes pooled.
    KindOnly,
}

/// Grouped uncertainty-proxy distributions over a trace corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub groups: BTreeMap<(ActionKind, Option<GenerationMode>), GroupStats>,
    /// Whether no-reasoning Search uncertainty exceeds no-reasoning Visit
    /// uncertainty on this corpus; absent when either group is missing.
    pub search_above_visit_without_reasoning: Option<bool>,
}

impl EntropyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,mode,count,mean,p25,p50,p75\n");
        for ((kind, mode), stats) in &self.groups {
            let mode = match mode {
                Some(GenerationMode::WithReasoning) => "with_reasoning",
                Some(GenerationMode::ActionOnly) => "action_only",
                None => "all",
            };
            out.push_str(&format!(
                "{kind},{mode},{},{},{},{},{}\n",
                stats.count, stats.mean, stats.p25, stats.p50, stats.p75
            ));
        }
        out
    }
}

/// Groups per-step action uncertainty proxies over a corpus. Steps without
/// recorded action logprobs are skipped; a step counts as `WithReasoning`
/// when a reasoning trace was retained for it.
pub fn entropy_report(
    trajectories: &[Trajectory],
    grouping: EntropyGrouping,
) -> Result<EntropyReport, AnalysisError> {
    let mut samples: BTreeMap<(ActionKind, Option<GenerationMode>), Vec<f64>> = BTreeMap::new();
    for trajectory in trajectories {
        for step in &trajectory.steps {
            if step.action_logprobs.is_empty() {
                continue;
            }
            let proxy = token_entropy_proxy(&step.action_logprobs)?;
            let mode = match grouping {
                EntropyGrouping::KindOnly => None,
                EntropyGrouping::KindAndReasoningMode => Some(if step.reasoning.is_some() {
                    GenerationMode::WithReasoning
                } else {
                    GenerationMode::ActionOnly
                }),
            };
            samples
                .entry((step.action.kind(), mode))
                .or_default()
                .push(proxy);
        }
    }
    if samples.is_empty() {
        return Err(AnalysisError::InsufficientData(
            "no steps with action logprobs".to_string(),
        ));
    }

    let mut groups = BTreeMap::new();
    for (key, values) in &samples {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        groups.insert(
            *key,
            GroupStats {
                count: sorted.len(),
                mean,
                p25: nearest_rank(&sorted, 0.25),
                p50: nearest_rank(&sorted, 0.50),
                p75: nearest_rank(&sorted, 0.75),
            },
        );
    }

    let search = groups.get(&(ActionKind::Search, Some(GenerationMode::ActionOnly)));
    let visit = groups.get(&(ActionKind::Visit, Some(GenerationMode::ActionOnly)));
    let verdict = match (search, visit) {
        (Some(s), Some(v)) => Some(s.mean > v.mean),
        _ => None,
    };
    Ok(EntropyReport {
        groups,
        search_above_visit_without_reasoning: verdict,
    })
}

/// Maps text to a fixed-dimension real vector.
pub trait TextEmbedder {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Deterministic bag-of-tokens embedder: whitespace tokens counted into
/// FNV-hashed buckets. Desk-scale stand-in for a sentence embedding model;
/// stable across platforms and releases.
#[derive(Debug, Clone)]
pub struct TokenCountEmbedder {
    pub dim: usize,
}

impl Default for TokenCountEmbedder {
    fn default() -> Self {
        TokenCountEmbedder { dim: 512 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl TextEmbedder for TokenCountEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut vector = vec![0.0; self.dim];
        for token in text.split_whitespace() {
            let bucket = (fnv1a(token.as_bytes()) % self.dim as u64) as usize;
            vector[bucket] += 1.0;
        }
        vector
    }
}

/// Cosine similarity of two texts under an embedder.
pub fn alignment_cosine(
    text_a: &str,
    text_b: &str,
    embedder: &dyn TextEmbedder,
) -> Result<f64, AnalysisError> {
    let a = embedder.embed(text_a);
    let b = embedder.embed(text_b);
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(AnalysisError::ZeroVector);
    }
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Fraction of positions where the selected URL equals the oracle URL.
/// Equal empty lists count as full agreement.
pub fn url_hit_rate(selected: &[String], oracle: &[String]) -> Result<f64, AnalysisError> {
    if selected.len() != oracle.len() {
        return Err(AnalysisError::LengthMismatch {
            left: selected.len(),
            right: oracle.len(),
        });
    }
    if selected.is_empty() {
        return Ok(1.0);
    }
    let hits = selected.iter().zip(oracle).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / selected.len() as f64)
}

/// Trajectory-level score aggregates: mean plus the 25th percentile, which
/// emphasizes the low-confidence segments of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScoreAggregate {
    pub mean: f64,
    pub p25: f64,
    pub n: usize,
}

/// Nearest-rank percentile: the value at 1-based index `ceil(q * n)` of
/// the ascending sort.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).max(1);
    sorted[rank - 1]
}

pub fn trajectory_aggregates(scores: &[f64]) -> Result<TrajectoryScoreAggregate, AnalysisError> {
    if scores.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(TrajectoryScoreAggregate {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p25: nearest_rank(&sorted, 0.25),
        n: sorted.len(),
    })
}

/// Verifier scores of a trajectory's steps, in order.
pub fn verdict_scores(trajectory: &Trajectory) -> Vec<f64> {
    trajectory
        .steps
        .iter()
        .filter_map(|s| s.verdict.as_ref().map(|v| v.score))
        .collect()
}

/// One held-out record for threshold profiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevRecord {
    pub score: f64,
    pub step_label: String,
}

impl DevRecord {
    pub fn new(score: f64, step_label: impl Into<String>) -> Self {
        DevRecord {
            score,
            step_label: step_label.into(),
        }
    }
}

/// Largest threshold whose intervention rate on the dev records (fraction
/// of scores strictly below it, mirroring the inclusive acceptance rule)
/// does not exceed `target_rate`. A record's score is always a feasible
/// candidate, so a solution exists whenever the input is large enough.
pub fn profile_threshold(
    dev_records: &[DevRecord],
    target_rate: f64,
) -> Result<f64, AnalysisError> {
    if dev_records.len() < 10 {
        return Err(AnalysisError::InsufficientData(format!(
            "{} dev records, need at least 10",
            dev_records.len()
        )));
    }
    if !(0.0..1.0).contains(&target_rate) {
        return Err(AnalysisError::InvalidTarget(target_rate));
    }
    let mut sorted: Vec<f64> = dev_records.iter().map(|r| r.score).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let budget = target_rate * n as f64;

    let mut best = sorted[0];
    for (below, candidate) in sorted.iter().enumerate() {
        // `below` counts records strictly under `candidate` only at its
        // first occurrence; later duplicates overcount, so skip them.
        if below > 0 && sorted[below - 1] == *candidate {
            continue;
        }
        if (below as f64) <= budget {
            best = *candidate;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Fraction of dev records that would fall back under `tau`.
pub fn intervention_rate(dev_records: &[DevRecord], tau: f64) -> f64 {
    if dev_records.is_empty() {
        return 0.0;
    }
    let below = dev_records.iter().filter(|r| r.score < tau).count();
    below as f64 / dev_records.len() as f64
}

/// Per-phase latency totals plus a per-step table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub per_step: Vec<TimingBreakdown>,
    pub totals: TimingBreakdown,
}

pub fn latency_breakdown(trajectory: &Trajectory) -> LatencyBreakdown {
    let per_step: Vec<TimingBreakdown> = trajectory.steps.iter().map(|s| s.timing).collect();
    let mut totals = TimingBreakdown::default();
    for t in &per_step {
        totals.draft_slm_ms += t.draft_slm_ms;
        totals.draft_llm_ms += t.draft_llm_ms;
        totals.verify_ms += t.verify_ms;
        totals.tool_ms += t.tool_ms;
        totals.fallback_reasoning_ms += t.fallback_reasoning_ms;
        totals.wall_step_ms += t.wall_step_ms;
    }
    LatencyBreakdown { per_step, totals }
}

impl LatencyBreakdown {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,draft_slm_ms,draft_llm_ms,verify_ms,tool_ms,fallback_reasoning_ms,wall_step_ms\n",
        );
        for (i, t) in self.per_step.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i + 1,
                t.draft_slm_ms,
                t.draft_llm_ms,
                t.verify_ms,
                t.tool_ms,
                t.fallback_reasoning_ms,
                t.wall_step_ms
            ));
        }
        let t = &self.totals;
        out.push_str(&format!(
            "total,{},{},{},{},{},{}\n",
            t.draft_slm_ms,
            t.draft_llm_ms,
            t.verify_ms,
            t.tool_ms,
            t.fallback_reasoning_ms,
            t.wall_step_ms
        ));
        out
    }
}
