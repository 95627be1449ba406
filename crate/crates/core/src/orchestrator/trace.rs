//! Trace files: line-delimited records, one header plus one record per
//! step. Serialization is canonical — two serializations of the same
//! trajectory are byte-identical — so replay equality is a byte
//! comparison.

use serde::{Deserialize, Serialize};

use crate::trajectory::{Step, Trajectory};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    record: String,
    version: u32,
    task_id: String,
    question: String,
    config_digest: String,
    final_answer: Option<String>,
}

// No deny_unknown_fields here: serde does not support it together with
// flatten.
#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    record: String,
    #[serde(flatten)]
    step: Step,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error("record 0: missing or invalid header")]
    MissingHeader,
    #[error("unsupported trace version {0} (expected 1)")]
    Version(u32),
}

/// Serializes a trajectory to line-delimited records.
pub fn serialize_trace(trajectory: &Trajectory) -> String {
    let header = HeaderRecord {
        record: "header".to_string(),
        version: TRACE_VERSION,
        task_id: trajectory.task_id.clone(),
        question: trajectory.question.clone(),
        config_digest: trajectory.config_digest.clone(),
        final_answer: trajectory.final_answer.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for step in &trajectory.steps {
        let record = StepRecord {
            record: "step".to_string(),
            step: step.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("step serializes"));
        out.push('\n');
    }
    out
}

/// Parses a trace back into a trajectory; inverse of [`serialize_trace`].
pub fn parse_trace(text: &str) -> Result<Trajectory, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(TraceError::MissingHeader)?;
    let header: HeaderRecord =
        serde_json::from_str(header_line).map_err(|_| TraceError::MissingHeader)?;
    if header.record != "header" {
        return Err(TraceError::MissingHeader);
    }
    if header.version != TRACE_VERSION {
        return Err(TraceError::Version(header.version));
    }

    let mut steps = Vec::new();
    for (index, line) in lines {
        if line.is_empty() {
            continue;
        }
        let record: StepRecord = serde_json::from_str(line).map_err(|e| TraceError::Parse {
            record: index,
            message: e.to_string(),
        })?;
        if record.record != "step" {
            return Err(TraceError::Parse {
                record: index,
                message: format!("unexpected record type `{}`", record.record),
            });
        }
        steps.push(record.step);
    }

    Ok(Trajectory {
        task_id: header.task_id,
        question: header.question,
        steps,
        final_answer: header.final_answer,
        config_digest: header.config_digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::trajectory::{Observation, ObservationKind, Provenance, TimingBreakdown};
    use crate::verification::Verdict;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arbitrary_step(rng: &mut ChaCha8Rng, allow_finish: bool) -> Step {
        let action = match rng.gen_range(0..if allow_finish { 4 } else { 3 }) {
            0 => Action::search(format!("q{}", rng.gen::<u32>())).unwrap(),
            1 => Action::visit(format!("http://u{}", rng.gen::<u16>()), "extract").unwrap(),
            2 => {
                let mut args = std::collections::BTreeMap::new();
                args.insert("code".to_string(), "print(1)".to_string());
                Action::other("python", args).unwrap()
            }
            _ => Action::finish(format!("answer {}", rng.gen::<u16>())).unwrap(),
        };
        let accepted = rng.gen_bool(0.7);
        let provenance = if accepted {
            if rng.gen_bool(0.5) {
                Provenance::System2Draft
            } else {
                Provenance::System1Draft
            }
        } else {
            Provenance::Fallback
        };
        let reasoning = if provenance == Provenance::System1Draft {
            None
        } else {
            let n = rng.gen_range(1..5);
            let logprobs: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..3.0)).collect();
            Some(crate::trajectory::ReasoningTrace::new(
                "thinking…",
                n,
                logprobs,
            ))
        };
        let tool_ms = rng.gen_range(0..500);
        let verdict = if accepted {
            Verdict::from_probabilities(rng.gen_range(0.5..1.0), 0.1, 0.0).unwrap()
        } else {
            Verdict::from_probabilities(1e-9, rng.gen_range(0.5..1.0), 0.0).unwrap()
        };
        Step {
            reasoning,
            action,
            observation: Observation {
                kind: ObservationKind::SearchResults,
                payload: format!("{{\"n\":{}}}", rng.gen::<u8>()),
                latency_ms: tool_ms,
            },
            provenance,
            verdict: Some(verdict),
            timing: TimingBreakdown {
                draft_slm_ms: rng.gen_range(0..1000),
                draft_llm_ms: rng.gen_range(0..1000),
                verify_ms: rng.gen_range(0..100),
                tool_ms,
                fallback_reasoning_ms: 0,
                wall_step_ms: tool_ms + rng.gen_range(0..2000),
            },
            action_logprobs: (0..rng.gen_range(0..4))
                .map(|_| -rng.gen_range(0.0..2.0))
                .collect(),
        }
    }

    pub(crate) fn arbitrary_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
        let n = rng.gen_range(0..8);
        let mut steps: Vec<Step> = (0..n).map(|_| arbitrary_step(rng, false)).collect();
        let final_answer = if rng.gen_bool(0.6) {
            let finish = Step {
                action: Action::finish("done").unwrap(),
                observation: Observation {
                    kind: ObservationKind::AnswerEcho,
                    payload: "done".to_string(),
                    latency_ms: 0,
                },
                ..arbitrary_step(rng, false)
            };
            let answer = finish.observation.payload.clone();
            steps.push(finish);
            Some(answer)
        } else {
            None
        };
        let t = Trajectory {
            task_id: format!("task-{}", rng.gen::<u32>()),
            question: "what is x? \"quoted\" and unicode: Δλ".to_string(),
            steps,
            final_answer,
            config_digest: "deadbeef".to_string(),
        };
        t.validate().unwrap();
        t
    }

    #[test]
    fn round_trip_identity_on_generated_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let t = arbitrary_trajectory(&mut rng);
            let serialized = serialize_trace(&t);
            let parsed = parse_trace(&serialized).unwrap();
            assert_eq!(parsed, t);
        }
    }

    #[test]
    fn serialization_is_byte_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let t = arbitrary_trajectory(&mut rng);
        assert_eq!(serialize_trace(&t), serialize_trace(&t));
    }

    #[test]
    fn missing_header_is_record_zero_error() {
        assert_eq!(parse_trace(""), Err(TraceError::MissingHeader));
        assert_eq!(
            parse_trace("{\"record\":\"step\"}"),
            Err(TraceError::MissingHeader)
        );
    }

    #[test]
    fn bad_step_record_reports_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = arbitrary_trajectory(&mut rng);
        let mut serialized = serialize_trace(&t);
        serialized.push_str("{\"record\":\"step\",\"bogus\":true}\n");
        match parse_trace(&serialized) {
            Err(TraceError::Parse { record, .. }) => assert_eq!(record, t.steps.len() + 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let doc = "{\"record\":\"header\",\"version\":9,\"task_id\":\"t\",\"question\":\"q\",\"config_digest\":\"d\",\"final_answer\":null}\n";
        assert_eq!(parse_trace(doc), Err(TraceError::Version(9)));
    }
}
