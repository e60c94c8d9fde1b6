use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{BenchTask, Dataset};
use super::{derive_seed, parallel_map};
use super::metrics::{aggregate, evaluate, log_csv, summary_csv, Metrics, SummaryRow, TaskRecord};
use crate::baselines::{run_planner, PlannerKind, RrtParams};
use crate::error::{Error, Result};
use crate::planner::{NoisyGoal, PlanResult, PlannerParams, Problem};

/// One planner configuration to run over every task.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// Name used in the result tables.
    pub label: String,
    pub kind: PlannerKind,
    pub params: PlannerParams,
    pub rrt: RrtParams,
    /// When set, the planner also receives `q_goal + N(0, sigma^2 I)`.
    pub noise_sigma: Option<f64>,
}

impl RunSpec {
    pub fn new(kind: PlannerKind, params: PlannerParams) -> Self {
        RunSpec {
            label: kind.name().to_string(),
            kind,
            rrt: RrtParams::from_planner(&params, RrtParams::default().max_iters),
            params,
            noise_sigma: None,
        }
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = Some(sigma);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub workers: usize,
    /// When false every timing field is written as zero, which makes the
    /// outputs byte-identical across repeated runs.
    pub record_time: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            workers: 1,
            record_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub spec: usize,
    pub task: usize,
    pub result: PlanResult,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Ordered by spec, then task.
    pub runs: Vec<RunOutcome>,
    pub records: Vec<TaskRecord>,
    pub summary: Vec<SummaryRow>,
}

impl BenchReport {
    /// Writes `summary.csv` and `tasks.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary = dir.join("summary.csv");
        std::fs::write(&summary, summary_csv(&self.summary)).map_err(|e| Error::io(&summary, e))?;
        let log = dir.join("tasks.csv");
        std::fs::write(&log, log_csv(&self.records)).map_err(|e| Error::io(&log, e))
    }
}

/// Seed of the planner run for `task` under base seed `seed`.
pub fn run_seed(seed: u64, task: &BenchTask) -> u64 {
    derive_seed(seed, task.seed)
}

fn run_one(spec: &RunSpec, task: &BenchTask, problem: &Problem, opts: &BenchOptions) -> Result<(PlanResult, Metrics, u64)> {
    let seed = run_seed(spec.params.seed, task);
    let params = PlannerParams { seed, ..spec.params.clone() };
    let rrt = RrtParams { seed, ..spec.rrt.clone() };
    let mut problem = problem.clone();
    if let Some(sigma) = spec.noise_sigma {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(task.seed, sigma.to_bits()));
        problem.goal.noisy = Some(NoisyGoal::perturb(&problem.model, &task.q_goal, sigma, &mut rng)?);
    }
    let mut result = run_planner(spec.kind, &problem, &params, &rrt, Some(&task.q_goal))?;
    if !opts.record_time {
        result.wall_time_s = 0.0;
    }
    let metrics = evaluate(
        &result,
        &task.q_goal,
        &problem.model,
        &problem.camera,
        &problem.render,
        &problem.goal.image,
    )?;
    Ok((result, metrics, seed))
}

/// Runs every spec on every task with `opts.workers` threads. Results are
/// ordered by spec and task regardless of scheduling.
pub fn run_benchmark(
    dataset: &Dataset,
    dir: &Path,
    tasks: &[BenchTask],
    specs: &[RunSpec],
    opts: &BenchOptions,
) -> Result<BenchReport> {
    let scenes = dataset.load_scenes(dir)?;
    let problems: Vec<Problem> = tasks
        .iter()
        .map(|t| dataset.problem(dir, &scenes, t))
        .collect::<Result<_>>()?;
    let jobs = specs.len() * tasks.len();
    let done = AtomicUsize::new(0);
    let slots = parallel_map(jobs, opts.workers, |j| {
        let (si, ti) = (j / tasks.len(), j % tasks.len());
        let r = run_one(&specs[si], &tasks[ti], &problems[ti], opts);
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n.is_multiple_of(100) || n == jobs {
            log::info!("benchmark: {n}/{jobs} runs finished");
        }
        r
    });

    let mut runs = Vec::with_capacity(jobs);
    let mut records = Vec::with_capacity(jobs);
    for (j, slot) in slots.into_iter().enumerate() {
        let (si, ti) = (j / tasks.len(), j % tasks.len());
        let (result, metrics, seed) = slot?;
        let task = &tasks[ti];
        records.push(TaskRecord {
            task_id: task.id.clone(),
            planner: specs[si].label.clone(),
            bin: task.bin,
            seed,
            success: metrics.success,
            joint_error: metrics.joint_error,
            path_length: metrics.path_length,
            time_s: metrics.time_s,
            psnr: metrics.psnr,
        });
        runs.push(RunOutcome {
            spec: si,
            task: ti,
            result,
            metrics,
        });
    }
    let summary = aggregate(&records);
    Ok(BenchReport {
        runs,
        records,
        summary,
    })
}
