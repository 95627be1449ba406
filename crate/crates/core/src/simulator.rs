//! Discrete-event latency model of the speculate-verify pipeline.
//!
//! Five phase latencies parameterize a step: base-model reasoning
//! (`r_base`), small-model drafting (`r_slm`), large-model action-only
//! drafting (`g_llm`), verification (`v`, one critic forward pass), and
//! tool execution (`e_tool`). An accepted step costs the concurrent draft
//! phase plus verification plus the tool call; a rejected step additionally
//! pays full base-model reasoning. The baseline pays `r_base + e_tool`
//! every step.
//!
//! Acceptance is sampled by a low-discrepancy (stratified) sequence so a
//! constant-latency simulation reproduces the closed-form expectation
//! exactly; latency noise is seeded and reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

/// A per-phase latency model, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum LatencyDist {
    Constant { ms: f64 },
    Exponential { mean_ms: f64 },
}

impl LatencyDist {
    pub fn mean(&self) -> f64 {
        match self {
            LatencyDist::Constant { ms } => *ms,
            LatencyDist::Exponential { mean_ms } => *mean_ms,
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            LatencyDist::Constant { ms } => Some(*ms),
            LatencyDist::Exponential { .. } => None,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            LatencyDist::Constant { ms } => *ms,
            LatencyDist::Exponential { mean_ms } => {
                if *mean_ms == 0.0 {
                    0.0
                } else {
                    Exp::new(1.0 / mean_ms).expect("positive rate").sample(rng)
                }
            }
        }
    }
}

/// Simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub r_base: LatencyDist,
    pub r_slm: LatencyDist,
    pub g_llm: LatencyDist,
    pub v: LatencyDist,
    pub e_tool: LatencyDist,
    pub accept_prob: f64,
    pub steps: usize,
    pub seed: u64,
    pub prefetch: bool,
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        for dist in [self.r_base, self.r_slm, self.g_llm, self.v, self.e_tool] {
            if dist.mean().is_nan() || dist.mean() < 0.0 {
                return Err(SimError::InvalidParams("latency means must be >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.accept_prob) {
            return Err(SimError::InvalidParams("accept_prob must be in [0, 1]"));
        }
        if self.steps == 0 {
            return Err(SimError::InvalidParams("steps must be >= 1"));
        }
        Ok(())
    }
}

/// Simulation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub mean_step_ms: f64,
    pub total_ms: f64,
    pub baseline_total_ms: f64,
    /// `baseline_total_ms / total_ms` when `total_ms > 0`.
    pub speedup: f64,
    pub per_step_ms: Vec<f64>,
}

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,step_ms\n");
        for (i, ms) in self.per_step_ms.iter().enumerate() {
            out.push_str(&format!("{},{ms}\n", i + 1));
        }
        out.push_str(&format!(
            "mean_step_ms,{}\ntotal_ms,{}\nbaseline_total_ms,{}\nspeedup,{:.3}\n",
            self.mean_step_ms, self.total_ms, self.baseline_total_ms, self.speedup
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("expected_step_latency requires constant latency distributions")]
    NonConstantDistribution,
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

fn accept_path(r_slm: f64, g_llm: f64, v: f64, e_tool: f64, prefetch: bool) -> f64 {
    let draft = r_slm.max(g_llm);
    if prefetch {
        draft + v.max(e_tool)
    } else {
        draft + v + e_tool
    }
}

fn reject_path(r_base: f64, r_slm: f64, g_llm: f64, v: f64, e_tool: f64) -> f64 {
    r_slm.max(g_llm) + v + r_base + e_tool
}

/// Closed-form expected step latency for constant-latency parameters:
/// `p * accept_path + (1 - p) * reject_path`, evaluated as
/// `reject - p * (reject - accept)` so the mixture stays exact at clean
/// probabilities. A constant-latency [`simulate`] run reproduces this
/// value exactly whenever `accept_prob * steps` lands on an integer.
pub fn expected_step_latency(params: &SimParams) -> Result<f64, SimError> {
    params.validate()?;
    let (r_base, r_slm, g_llm, v, e_tool) = match (
        params.r_base.constant(),
        params.r_slm.constant(),
        params.g_llm.constant(),
        params.v.constant(),
        params.e_tool.constant(),
    ) {
        (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
        _ => return Err(SimError::NonConstantDistribution),
    };
    let p = params.accept_prob;
    let accept = accept_path(r_slm, g_llm, v, e_tool, params.prefetch);
    let reject = reject_path(r_base, r_slm, g_llm, v, e_tool);
    Ok(reject - p * (reject - accept))
}

/// Expected baseline step latency (`r_base + e_tool`), constant params.
pub fn expected_baseline_step_latency(params: &SimParams) -> Result<f64, SimError> {
    params.validate()?;
    match (params.r_base.constant(), params.e_tool.constant()) {
        (Some(r), Some(e)) => Ok(r + e),
        _ => Err(SimError::NonConstantDistribution),
    }
}

/// Runs the seeded simulation. For constant distributions the mean step
/// latency equals [`expected_step_latency`] exactly; for exponential ones
/// it converges to the analogous expectation.
pub fn simulate(params: &SimParams) -> Result<SimReport, SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let p = params.accept_prob;
    let mut per_step_ms = Vec::with_capacity(params.steps);
    let mut total_ms = 0.0;
    let mut baseline_total_ms = 0.0;

    for i in 0..params.steps {
        let r_base = params.r_base.sample(&mut rng);
        let r_slm = params.r_slm.sample(&mut rng);
        let g_llm = params.g_llm.sample(&mut rng);
        let v = params.v.sample(&mut rng);
        let e_tool = params.e_tool.sample(&mut rng);

        // Stratified acceptance: step i accepts iff the integer part of
        // the cumulative acceptance budget advances. Exactly floor(n * p)
        // of n steps accept.
        let accepted = ((i + 1) as f64 * p).floor() > (i as f64 * p).floor();
        let step_ms = if accepted {
            accept_path(r_slm, g_llm, v, e_tool, params.prefetch)
        } else {
            reject_path(r_base, r_slm, g_llm, v, e_tool)
        };
        per_step_ms.push(step_ms);
        total_ms += step_ms;
        baseline_total_ms += r_base + e_tool;
    }

    let mean_step_ms = total_ms / params.steps as f64;
    let speedup = if total_ms > 0.0 {
        baseline_total_ms / total_ms
    } else {
        0.0
    };
    Ok(SimReport {
        mean_step_ms,
        total_ms,
        baseline_total_ms,
        speedup,
        per_step_ms,
    })
}
