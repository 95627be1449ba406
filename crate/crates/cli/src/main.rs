//! `specrun` — command-line front end binding config, backends, tools,
//! the orchestrator, analysis, and the latency simulator.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Reports go to
//! standard output, diagnostics to standard error. Every command is
//! idempotent: identical inputs and seed produce byte-identical outputs.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use specrun_core::analysis::{
    entropy_report, intervention_rate, latency_breakdown, profile_threshold, trajectory_aggregates,
    verdict_scores, DevRecord, EntropyGrouping,
};
use specrun_core::backends::wire::RoleRouter;
use specrun_core::backends::{load_scenario, ModelBackend, ScriptedBackend, WireBackend};
use specrun_core::orchestrator::{
    parse_trace, serialize_trace, Orchestrator, RunReport, StopReason,
};
use specrun_core::simulator::{expected_step_latency, simulate};
use specrun_core::tools::{load_fixtures, FixtureToolBackend, ToolConfig, ToolExecutor};
use specrun_core::trajectory::Trajectory;

use config::{BackendsSection, ConfigFile, ResolvedTask};

#[derive(Parser)]
#[command(
    name = "specrun",
    version,
    about = "Speculative draft-verify agent runtime"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the speculate-verify loop on one or more tasks.
    Run(RunArgs),
    /// Run the fully-reasoning baseline loop.
    Baseline(RunArgs),
    /// Re-run a task and compare against an existing trace file.
    Replay(RunArgs),
    /// Emit entropy, latency, and score reports over trace files.
    Analyze(AnalyzeArgs),
    /// Calibrate the acceptance threshold on recorded verifier scores.
    ProfileThreshold(ProfileArgs),
    /// Evaluate pipeline latency under parameterized phase times.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Scenario file for the scripted backend.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Tool fixture file.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Where to write (or, for replay, read) the trace.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_think: Option<usize>,
    /// semantic | exact | edit:<limit> | always-accept | always-reject
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    prefetch: Option<bool>,
    /// Maximum number of tasks run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace files to analyze.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Trace files holding the held-out verifier scores.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Target intervention rate in [0, 1).
    #[arg(long, default_value_t = 0.2)]
    target_rate: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Path to the TOML config file with a [simulate] section.
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().context("tokio runtime")?;
    match cli.command {
        Command::Run(args) => runtime.block_on(run_tasks(args, Mode::Speculative)),
        Command::Baseline(args) => runtime.block_on(run_tasks(args, Mode::Baseline)),
        Command::Replay(args) => runtime.block_on(run_tasks(args, Mode::Replay)),
        Command::Analyze(args) => analyze(args),
        Command::ProfileThreshold(args) => profile(args),
        Command::Simulate(args) => run_simulation(args),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Speculative,
    Baseline,
    Replay,
}

async fn run_tasks(args: RunArgs, mode: Mode) -> Result<()> {
    let config = ConfigFile::load(&args.config)?;
    let tasks = config.resolve_tasks(
        args.scenario.as_deref(),
        args.fixtures.as_deref(),
        args.trace_out.as_deref(),
    )?;
    let overrides = config::Overrides {
        seed: args.seed,
        tau: args.tau,
        tau_think: args.tau_think,
        policy: args.policy.clone(),
        prefetch: args.prefetch,
    };
    let parallel = args.parallel.max(1);

    let semaphore = Arc::new(tokio::sync::Semaphore::new(parallel));
    let mut handles = Vec::new();
    for (index, task) in tasks.into_iter().enumerate() {
        let permit_source = semaphore.clone();
        let run_config = config.run_config(&overrides)?;
        let backends_section = config.backends.clone();
        let handle = tokio::spawn(async move {
            let _permit = permit_source.acquire_owned().await.expect("semaphore open");
            let output = execute_task(&task, run_config, &backends_section, mode).await;
            (index, output)
        });
        handles.push(handle);
    }

    let mut outputs: Vec<(usize, Result<String>)> = Vec::new();
    for handle in handles {
        outputs.push(handle.await.context("task panicked")?);
    }
    outputs.sort_by_key(|(index, _)| *index);
    let mut failed = false;
    for (_, output) in outputs {
        match output {
            Ok(text) => print!("{text}"),
            Err(e) => {
                failed = true;
                eprintln!("error: {e:#}");
            }
        }
    }
    if failed {
        bail!("one or more tasks failed");
    }
    Ok(())
}

async fn execute_task(
    task: &ResolvedTask,
    run_config: specrun_core::orchestrator::RunConfig,
    backends: &BackendsSection,
    mode: Mode,
) -> Result<String> {
    let backend = build_model_backend(backends, task.scenario.as_deref())?;
    let tools = build_tools(task.fixtures.as_deref())?;
    let orchestrator = Orchestrator::new(backend, tools, run_config)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let report = match mode {
        Mode::Baseline => {
            orchestrator
                .run_baseline(&task.task_id, &task.question)
                .await
        }
        Mode::Speculative | Mode::Replay => {
            orchestrator.run_task(&task.task_id, &task.question).await
        }
    }
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let trace = serialize_trace(&report.trajectory);
    let mut output = summarize(&report);

    match mode {
        Mode::Replay => {
            let reference_path = task
                .trace_out
                .as_ref()
                .context("replay requires --trace-out (the reference trace)")?;
            let reference = std::fs::read_to_string(reference_path)
                .with_context(|| format!("reading {}", reference_path.display()))?;
            if reference == trace {
                output.push_str(&format!(
                    "replay OK: byte-identical to {}\n",
                    reference_path.display()
                ));
            } else {
                bail!(
                    "replay mismatch: regenerated trace differs from {}",
                    reference_path.display()
                );
            }
        }
        Mode::Speculative | Mode::Baseline => {
            if let Some(path) = &task.trace_out {
                std::fs::write(path, &trace)
                    .with_context(|| format!("writing {}", path.display()))?;
                output.push_str(&format!("trace written to {}\n", path.display()));
            }
        }
    }
    Ok(output)
}

fn summarize(report: &RunReport) -> String {
    let stop = match report.stop_reason {
        StopReason::Finished => "finished",
        StopReason::StepBudgetExhausted => "step_budget_exhausted",
    };
    format!(
        "task {}: steps={} accepted={} fallbacks={} intervention_rate={:.3} wall_ms={} stop={} answer={}\n",
        report.trajectory.task_id,
        report.step_count,
        report.accept_count,
        report.fallback_count,
        report.intervention_rate,
        report.wall_ms,
        stop,
        report.trajectory.final_answer.as_deref().unwrap_or("-"),
    )
}

fn build_model_backend(
    section: &BackendsSection,
    scenario: Option<&Path>,
) -> Result<Arc<dyn ModelBackend>> {
    match section.mode.as_str() {
        "scripted" => {
            let path = scenario.context("scripted backend requires --scenario")?;
            let doc = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let script = load_scenario(&doc).map_err(|e| anyhow::anyhow!(e.to_string()))?;
            Ok(Arc::new(ScriptedBackend::new(Arc::new(script))))
        }
        "wire" => {
            let slm = section.slm.clone().context("[backends.slm] missing")?;
            let llm = section.llm.clone().context("[backends.llm] missing")?;
            let critic = section.critic.clone().unwrap_or_else(|| llm.clone());
            let slm: Arc<dyn ModelBackend> =
                Arc::new(WireBackend::new(slm.into()).map_err(|e| anyhow::anyhow!(e.to_string()))?);
            let llm: Arc<dyn ModelBackend> =
                Arc::new(WireBackend::new(llm.into()).map_err(|e| anyhow::anyhow!(e.to_string()))?);
            let critic: Arc<dyn ModelBackend> = Arc::new(
                WireBackend::new(critic.into()).map_err(|e| anyhow::anyhow!(e.to_string()))?,
            );
            Ok(Arc::new(RoleRouter { slm, llm, critic }))
        }
        other => bail!("unknown backend mode `{other}` (expected scripted or wire)"),
    }
}

fn build_tools(fixtures: Option<&Path>) -> Result<Arc<ToolExecutor>> {
    let set = match fixtures {
        Some(path) => {
            let doc = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            load_fixtures(&doc).map_err(|e| anyhow::anyhow!(e.to_string()))?
        }
        None => Default::default(),
    };
    let backend = Arc::new(FixtureToolBackend::new(set));
    Ok(Arc::new(ToolExecutor::new(backend, ToolConfig::default())))
}

fn read_traces(paths: &[PathBuf]) -> Result<Vec<Trajectory>> {
    let mut trajectories = Vec::new();
    for path in paths {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let trajectory =
            parse_trace(&text).with_context(|| format!("parsing {}", path.display()))?;
        trajectories.push(trajectory);
    }
    Ok(trajectories)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let trajectories = read_traces(&args.traces)?;

    println!("# entropy report");
    match entropy_report(&trajectories, EntropyGrouping::KindAndReasoningMode) {
        Ok(report) => {
            print!("{}", report.to_csv());
            if let Some(verdict) = report.search_above_visit_without_reasoning {
                println!("search_above_visit_without_reasoning,{verdict}");
            }
        }
        Err(e) => println!("unavailable,{e}"),
    }

    println!("# latency breakdown");
    for trajectory in &trajectories {
        println!("task,{}", trajectory.task_id);
        print!("{}", latency_breakdown(trajectory).to_csv());
    }

    println!("# trajectory score aggregates");
    println!("task,n,mean,p25");
    for trajectory in &trajectories {
        let scores = verdict_scores(trajectory);
        match trajectory_aggregates(&scores) {
            Ok(agg) => println!("{},{},{},{}", trajectory.task_id, agg.n, agg.mean, agg.p25),
            Err(_) => println!("{},0,-,-", trajectory.task_id),
        }
    }
    Ok(())
}

fn profile(args: ProfileArgs) -> Result<()> {
    let trajectories = read_traces(&args.traces)?;
    let mut records = Vec::new();
    for trajectory in &trajectories {
        for (i, score) in verdict_scores(trajectory).into_iter().enumerate() {
            records.push(DevRecord::new(
                score,
                format!("{}#{}", trajectory.task_id, i),
            ));
        }
    }
    let tau = profile_threshold(&records, args.target_rate)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let achieved = intervention_rate(&records, tau);
    println!("records,{}", records.len());
    println!("target_rate,{}", args.target_rate);
    println!("tau,{tau}");
    println!("achieved_rate,{achieved}");
    Ok(())
}

fn run_simulation(args: SimulateArgs) -> Result<()> {
    let config = ConfigFile::load(&args.config)?;
    let params = config.simulate.context("[simulate] section missing")?;
    let report = simulate(&params).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    println!("mean_step_ms,{}", report.mean_step_ms);
    println!("total_ms,{}", report.total_ms);
    println!("baseline_total_ms,{}", report.baseline_total_ms);
    println!("speedup,{:.3}", report.speedup);
    if let Ok(expected) = expected_step_latency(&params) {
        println!("expected_step_ms,{expected}");
    }
    Ok(())
}
