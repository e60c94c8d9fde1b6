//! Command-line front end.
//!
//! Every parameter can come from a TOML config file (`--config`); command
//! line flags override the file, which overrides the built-in defaults.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{run_planner, PlannerKind, RrtParams};
use crate::bench::{
    evaluate, export_tree_svg, generate_scenes, generate_tasks_parallel, read_scene_dir, run_benchmark,
    write_scenes, BenchOptions, ColorBy, Dataset, Metrics, RunSpec, SceneConfig, SvgMode, TaskConfig,
};
use crate::collision::Scene;
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradcheckConfig};
use crate::kinematics::{Configuration, RobotModel};
use crate::optimizer::Strategy;
use crate::planner::{
    FrontierKind, GoalSpec, NoisyGoal, PlanResult, PlannerParams, Problem, Vrrt,
};
use crate::renderer::{read_pgm, render, write_pgm, Camera, PgmFormat, RenderParams};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "VRRT_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "vrrt-out";

#[derive(Debug, Parser)]
#[command(
    name = "vrrt",
    version,
    about = "Visual-goal RRT planning for planar arms",
    long_about = "Visual-goal RRT planning for planar arms.\n\n\
        Subcommands: gen-scenes, gen-tasks, plan, bench, render, gradcheck, viz.\n\
        Parameters can be given in a TOML file (--config); flags override the file,\n\
        which overrides the defaults shown in each subcommand's --help."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate obstacle scenes into <out>/scenes
    #[command(allow_negative_numbers = true)]
    GenScenes(GenScenesArgs),
    /// Generate binned goal tasks and goal images for the scenes of a dataset
    #[command(allow_negative_numbers = true)]
    GenTasks(GenTasksArgs),
    /// Run one planner on one task and write the result as JSON
    #[command(allow_negative_numbers = true)]
    Plan(PlanArgs),
    /// Run planners over a dataset and write summary and per-task tables
    #[command(allow_negative_numbers = true)]
    Bench(BenchArgs),
    /// Render a configuration to a PGM image
    #[command(allow_negative_numbers = true)]
    Render(RenderArgs),
    /// Check the analytic render-loss gradient against finite differences
    #[command(allow_negative_numbers = true)]
    Gradcheck(GradcheckArgs),
    /// Plan one task and export the tree or path as SVG
    #[command(allow_negative_numbers = true)]
    Viz(VizArgs),
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
struct RobotArgs {
    /// Robot model TOML (link_lengths, joint_limits, blobs_per_link) [default: 5 links of 0.4, ±π, 8 blobs]
    #[arg(long)]
    robot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct ImageArgs {
    /// Image width in pixels [default: 64]
    #[arg(long)]
    width: Option<usize>,
    /// Image height in pixels [default: 64]
    #[arg(long)]
    height: Option<usize>,
    /// Blob standard deviation in pixels [default: 1]
    #[arg(long)]
    blob_sigma: Option<f64>,
    /// Blob peak intensity [default: 0.2]
    #[arg(long)]
    blob_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClockArg {
    /// Record wall-clock planning times
    Wall,
    /// Write zero for every time, making outputs byte-identical across runs
    Off,
}

#[derive(Debug, Clone, Args)]
struct PlannerArgs {
    /// Planner: vrrt | gd | two-stage | rrt | rrt-star [default: vrrt]
    #[arg(long)]
    planner: Option<String>,
    /// Random steering step ε in radians [default: 0.04]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Optimizer: adam | naive | momentum | adagrad | rmsprop | lion [default: adam]
    #[arg(long)]
    optimizer: Option<Strategy>,
    /// Gradient step size α [default: 0.04]
    #[arg(long)]
    alpha: Option<f64>,
    /// First-moment decay β₁ [default: 0.9]
    #[arg(long)]
    beta1: Option<f64>,
    /// Second-moment decay β₂ [default: 0.9]
    #[arg(long)]
    beta2: Option<f64>,
    /// Optimizer denominator offset δ [default: 1e-8]
    #[arg(long)]
    delta: Option<f64>,
    /// Momentum coefficient for momentum and lion [default: 0.9]
    #[arg(long)]
    mu: Option<f64>,
    /// Frontier geometric ratio κ [default: 0.9]
    #[arg(long)]
    kappa: Option<f64>,
    /// Frontier size M [default: 200]
    #[arg(long)]
    frontier_size: Option<usize>,
    /// Frontier rank distribution: trunc-geometric | uniform | top-k [default: trunc-geometric]
    #[arg(long)]
    frontier_policy: Option<FrontierKindArg>,
    /// Rank cut-off for the top-k frontier policy [default: 10]
    #[arg(long)]
    top_k: Option<usize>,
    /// Exploration ball radius ρ in radians [default: 0.7]
    #[arg(long)]
    rho: Option<f64>,
    /// Exploration ratio r [default: 0.3]
    #[arg(long)]
    explore_ratio: Option<f64>,
    /// Frontier sampling ratio η [default: 0.7]
    #[arg(long)]
    frontier_ratio: Option<f64>,
    /// Expansion attempts per iteration [default: 32]
    #[arg(long)]
    batch: Option<usize>,
    /// Plateau loss-change threshold [default: 0.0001]
    #[arg(long)]
    plateau_eps: Option<f64>,
    /// Plateau length in iterations [default: 100]
    #[arg(long)]
    plateau_iters: Option<usize>,
    /// Iteration cap [default: 1000]
    #[arg(long)]
    max_iters: Option<usize>,
    /// RRT* choose-parent and rewiring [default: true]
    #[arg(long)]
    rewire: Option<bool>,
    /// Rewiring radius in radians [default: 3ε]
    #[arg(long)]
    rewire_radius: Option<f64>,
    /// Edge collision-check resolution in radians [default: 0.01]
    #[arg(long)]
    edge_resolution: Option<f64>,
    /// Shortcutting attempts [default: 200]
    #[arg(long)]
    shortcut_attempts: Option<usize>,
    /// Fraction of exploit attempts steering to the noisy goal [default: 0.25]
    #[arg(long)]
    noisy_goal_fraction: Option<f64>,
    /// Give the planner a noisy goal configuration with this σ in radians [default: none]
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// RRT goal-bias probability [default: 0.05]
    #[arg(long)]
    goal_bias: Option<f64>,
    /// RRT / RRT* iteration budget [default: 20000]
    #[arg(long)]
    rrt_max_iters: Option<usize>,
    /// Timing: wall | off [default: wall]
    #[arg(long)]
    clock: Option<ClockArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FrontierKindArg {
    TruncGeometric,
    Uniform,
    TopK,
}

impl From<FrontierKindArg> for FrontierKind {
    fn from(k: FrontierKindArg) -> Self {
        match k {
            FrontierKindArg::TruncGeometric => FrontierKind::TruncGeometric,
            FrontierKindArg::Uniform => FrontierKind::Uniform,
            FrontierKindArg::TopK => FrontierKind::TopK,
        }
    }
}

#[derive(Debug, Args)]
struct GenScenesArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    robot: RobotArgs,
    /// Dataset directory [default: $VRRT_OUT_DIR/dataset]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of scenes [default: 6]
    #[arg(long)]
    count: Option<usize>,
    /// Minimum obstacles per scene [default: 3]
    #[arg(long)]
    min_obstacles: Option<usize>,
    /// Maximum obstacles per scene [default: 5]
    #[arg(long)]
    max_obstacles: Option<usize>,
    /// Smallest box side [default: 0.1]
    #[arg(long)]
    size_min: Option<f64>,
    /// Largest box side [default: 0.4]
    #[arg(long)]
    size_max: Option<f64>,
}

#[derive(Debug, Args)]
struct GenTasksArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    robot: RobotArgs,
    #[command(flatten)]
    image: ImageArgs,
    /// Dataset directory holding scenes/ [default: $VRRT_OUT_DIR/dataset]
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated bin centres in radians [default: 0.5,1,1.5,2,2.5]
    #[arg(long, value_delimiter = ',')]
    bins: Option<Vec<f64>>,
    /// Bin half-width in radians [default: 0.1]
    #[arg(long)]
    band: Option<f64>,
    /// Tasks per bin per scene [default: 50]
    #[arg(long)]
    per_bin: Option<usize>,
    /// RRT reachability budget in iterations [default: 20000]
    #[arg(long)]
    rrt_budget: Option<usize>,
    /// Worker threads; the output does not depend on this [default: 1]
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Task: a task id within --dataset, or a path to a standalone task JSON file
    #[arg(long)]
    task: String,
    /// Dataset directory [default: $VRRT_OUT_DIR/dataset]
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Result file [default: $VRRT_OUT_DIR/plan_<task>_<planner>.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Dataset directory [default: $VRRT_OUT_DIR/dataset]
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated planners to compare [default: vrrt,gd]
    #[arg(long, value_delimiter = ',')]
    planners: Option<Vec<String>>,
    /// Only tasks in these bins [default: all]
    #[arg(long, value_delimiter = ',')]
    bins: Option<Vec<f64>>,
    /// Worker threads [default: 1]
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for summary.csv and tasks.csv [default: $VRRT_OUT_DIR/bench]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    robot: RobotArgs,
    #[command(flatten)]
    image: ImageArgs,
    /// Comma-separated joint angles in radians
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    q: Vec<f64>,
    /// Output PGM [default: $VRRT_OUT_DIR/render.pgm]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write plain-text P2 instead of binary P5
    #[arg(long)]
    ascii: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of random cases [default: 100]
    #[arg(long)]
    cases: Option<usize>,
    /// Image width and height [default: 64]
    #[arg(long)]
    size: Option<usize>,
    /// Central-difference step [default: 1e-5]
    #[arg(long)]
    step: Option<f64>,
    /// Pass threshold on the max relative error [default: 1e-4]
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VizMode {
    Workspace,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VizColor {
    Frontier,
    OptSteps,
}

#[derive(Debug, Args)]
struct VizArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Task id within --dataset, or a standalone task JSON file
    #[arg(long)]
    task: String,
    /// Dataset directory [default: $VRRT_OUT_DIR/dataset]
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// View: workspace | pca [default: pca]
    #[arg(long, value_enum, default_value_t = VizMode::Pca, hide_default_value = true)]
    mode: VizMode,
    /// Node colouring in pca mode: frontier | opt-steps [default: frontier]
    #[arg(long, value_enum, default_value_t = VizColor::Frontier, hide_default_value = true)]
    color: VizColor,
    /// Output SVG [default: $VRRT_OUT_DIR/viz_<task>_<mode>.svg]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the tree as CSV
    #[arg(long)]
    tree_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ImageConfig {
    width: usize,
    height: usize,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig { width: 64, height: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchConfig {
    planners: Vec<String>,
    workers: usize,
    /// `wall` or `off`.
    clock: String,
    noise_sigma: Option<f64>,
    bins: Option<Vec<f64>>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            planners: vec!["vrrt".into(), "gd".into()],
            workers: 1,
            clock: "wall".into(),
            noise_sigma: None,
            bins: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GradcheckFileConfig {
    cases: usize,
    size: usize,
    step: f64,
    tolerance: f64,
}

impl Default for GradcheckFileConfig {
    fn default() -> Self {
        GradcheckFileConfig {
            cases: 100,
            size: 64,
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Config file layout. All sections and keys are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    robot: Option<PathBuf>,
    planner_kind: Option<String>,
    planner: PlannerParams,
    rrt: RrtParams,
    scenes: SceneConfig,
    tasks: TaskConfig,
    image: ImageConfig,
    render: RenderParams,
    bench: BenchConfig,
    gradcheck: GradcheckFileConfig,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::parse(path, e))
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn robot_model(flag: &RobotArgs, cfg: &ConfigFile) -> Result<RobotModel> {
    match flag.robot.as_ref().or(cfg.robot.as_ref()) {
        Some(p) => RobotModel::load(p),
        None => Ok(RobotModel::default()),
    }
}

fn image_settings(flag: &ImageArgs, cfg: &ConfigFile) -> (usize, usize, RenderParams) {
    let render = RenderParams {
        blob_sigma: flag.blob_sigma.unwrap_or(cfg.render.blob_sigma),
        blob_weight: flag.blob_weight.unwrap_or(cfg.render.blob_weight),
    };
    (
        flag.width.unwrap_or(cfg.image.width),
        flag.height.unwrap_or(cfg.image.height),
        render,
    )
}

/// Planner selection and parameters after applying file and flags.
struct Resolved {
    kind: PlannerKind,
    params: PlannerParams,
    rrt: RrtParams,
    noise_sigma: Option<f64>,
    record_time: bool,
}

fn resolve_planner(flag: &PlannerArgs, common: &CommonArgs, cfg: &ConfigFile) -> Result<Resolved> {
    let mut p = cfg.planner.clone();
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = flag.$f { p.$f = v; } )* };
    }
    set!(epsilon, optimizer, alpha, beta1, beta2, delta, mu, kappa, frontier_size, top_k, rho);
    set!(explore_ratio, frontier_ratio, batch, plateau_eps, plateau_iters, max_iters, rewire);
    set!(edge_resolution, shortcut_attempts, noisy_goal_fraction);
    if let Some(v) = flag.frontier_policy {
        p.frontier_policy = v.into();
    }
    if flag.rewire_radius.is_some() {
        p.rewire_radius = flag.rewire_radius;
    }
    if let Some(s) = common.seed.or(cfg.seed) {
        p.seed = s;
    }
    p.validate()?;

    let mut rrt = cfg.rrt.clone();
    rrt.epsilon = p.epsilon;
    rrt.edge_resolution = p.edge_resolution;
    rrt.rewire_radius = p.rewire_radius;
    rrt.shortcut_attempts = p.shortcut_attempts;
    rrt.seed = p.seed;
    if let Some(v) = flag.goal_bias {
        rrt.goal_bias = v;
    }
    if let Some(v) = flag.rrt_max_iters {
        rrt.max_iters = v;
    }
    rrt.validate()?;

    let kind = flag
        .planner
        .as_deref()
        .or(cfg.planner_kind.as_deref())
        .unwrap_or("vrrt")
        .parse()?;
    let clock = match flag.clock {
        Some(ClockArg::Off) => false,
        Some(ClockArg::Wall) => true,
        None => match cfg.bench.clock.as_str() {
            "wall" => true,
            "off" => false,
            other => return Err(Error::InvalidParam(format!("clock must be wall or off, got '{other}'"))),
        },
    };
    Ok(Resolved {
        kind,
        params: p,
        rrt,
        noise_sigma: flag.noise_sigma.or(cfg.bench.noise_sigma),
        record_time: clock,
    })
}

/// Standalone single-task file. Paths are relative to the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub id: String,
    pub robot: RobotModel,
    pub camera: Camera,
    #[serde(default)]
    pub render: RenderParams,
    pub scene: String,
    pub q_start: Configuration,
    pub goal_image: String,
    /// Ground truth, used for scoring and by the rrt / rrt-star planners.
    #[serde(default)]
    pub q_goal: Option<Configuration>,
    #[serde(default)]
    pub seed: u64,
}

struct LoadedTask {
    id: String,
    problem: Problem,
    q_goal: Option<Configuration>,
    seed: u64,
}

fn load_task(task: &str, dataset: Option<&Path>) -> Result<LoadedTask> {
    let as_path = Path::new(task);
    if as_path.extension().is_some_and(|e| e == "json") && as_path.is_file() {
        let text = std::fs::read_to_string(as_path).map_err(|e| Error::io(as_path, e))?;
        let tf: TaskFile = serde_json::from_str(&text).map_err(|e| Error::parse(as_path, e))?;
        let base = as_path.parent().unwrap_or(Path::new("."));
        let scene = Scene::load(base.join(&tf.scene))?;
        let image = read_pgm(base.join(&tf.goal_image))?;
        return Ok(LoadedTask {
            id: tf.id,
            problem: Problem {
                scene,
                model: tf.robot,
                camera: tf.camera,
                render: tf.render,
                start: tf.q_start,
                goal: GoalSpec::visual(image),
            },
            q_goal: tf.q_goal,
            seed: tf.seed,
        });
    }
    let dir = dataset.map(Path::to_path_buf).unwrap_or_else(|| out_dir().join("dataset"));
    let ds = Dataset::load(&dir)?;
    let t = ds
        .tasks
        .iter()
        .find(|t| t.id == task)
        .ok_or_else(|| Error::InvalidParam(format!("no task '{task}' in {}", dir.display())))?;
    let scenes = ds.load_scenes(&dir)?;
    Ok(LoadedTask {
        id: t.id.clone(),
        problem: ds.problem(&dir, &scenes, t)?,
        q_goal: Some(t.q_goal.clone()),
        seed: t.seed,
    })
}

#[derive(Debug, Serialize)]
struct PlanOutput<'a> {
    task: &'a str,
    planner: &'a str,
    seed: u64,
    metrics: Option<Metrics>,
    result: &'a PlanResult,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn attach_noise(problem: &mut Problem, sigma: Option<f64>, q_goal: Option<&Configuration>, seed: u64) -> Result<()> {
    let Some(sigma) = sigma else {
        return Ok(());
    };
    let q_goal = q_goal.ok_or_else(|| Error::InvalidParam("--noise-sigma needs a task with q_goal".into()))?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(crate::bench::derive_seed(
        seed,
        sigma.to_bits(),
    ));
    problem.goal.noisy = Some(NoisyGoal::perturb(&problem.model, q_goal, sigma, &mut rng)?);
    Ok(())
}

fn cmd_plan(a: &PlanArgs) -> Result<()> {
    let cfg = load_config(a.common.config.as_deref())?;
    let r = resolve_planner(&a.planner, &a.common, &cfg)?;
    let mut task = load_task(&a.task, a.dataset.as_deref())?;
    attach_noise(&mut task.problem, r.noise_sigma, task.q_goal.as_ref(), task.seed)?;
    let mut result = run_planner(r.kind, &task.problem, &r.params, &r.rrt, task.q_goal.as_ref())?;
    if !r.record_time {
        result.wall_time_s = 0.0;
    }
    let metrics = match &task.q_goal {
        Some(g) => {
            let p = &task.problem;
            Some(evaluate(&result, g, &p.model, &p.camera, &p.render, &p.goal.image)?)
        }
        None => None,
    };
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| out_dir().join(format!("plan_{}_{}.json", task.id, r.kind)));
    let doc = PlanOutput {
        task: &task.id,
        planner: r.kind.name(),
        seed: r.params.seed,
        metrics,
        result: &result,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::parse(&out, e))?;
    write_text(&out, &(text + "\n"))?;
    match &doc.metrics {
        Some(m) => println!(
            "{}: success={} joint_error={:.4} path_length={:.4} iterations={} -> {}",
            r.kind,
            m.success,
            m.joint_error,
            m.path_length,
            result.iterations,
            out.display()
        ),
        None => println!(
            "{}: best_loss={:.6} iterations={} -> {}",
            r.kind,
            result.best_loss,
            result.iterations,
            out.display()
        ),
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = load_config(a.common.config.as_deref())?;
    let r = resolve_planner(&a.planner, &a.common, &cfg)?;
    let dir = a.dataset.clone().unwrap_or_else(|| out_dir().join("dataset"));
    let ds = Dataset::load(&dir)?;
    let names = a.planners.clone().unwrap_or_else(|| cfg.bench.planners.clone());
    let mut specs = Vec::new();
    for n in &names {
        let kind: PlannerKind = n.parse()?;
        let mut spec = RunSpec::new(kind, r.params.clone());
        spec.rrt = r.rrt.clone();
        spec.noise_sigma = r.noise_sigma;
        specs.push(spec);
    }
    let bins = a.bins.clone().or_else(|| cfg.bench.bins.clone());
    let tasks: Vec<_> = match &bins {
        Some(b) => ds
            .tasks
            .iter()
            .filter(|t| b.iter().any(|x| (x - t.bin).abs() < 1e-9))
            .cloned()
            .collect(),
        None => ds.tasks.clone(),
    };
    let opts = BenchOptions {
        workers: a.workers.unwrap_or(cfg.bench.workers).max(1),
        record_time: r.record_time,
    };
    let report = run_benchmark(&ds, &dir, &tasks, &specs, &opts)?;
    let out = a.out.clone().unwrap_or_else(|| out_dir().join("bench"));
    report.write(&out)?;
    print!("{}", crate::bench::summary_csv(&report.summary));
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_gen_scenes(a: &GenScenesArgs) -> Result<()> {
    let cfg = load_config(a.common.config.as_deref())?;
    let model = robot_model(&a.robot, &cfg)?;
    let mut sc = cfg.scenes.clone();
    if let Some(s) = a.common.seed.or(cfg.seed) {
        sc.seed = s;
    }
    if let Some(v) = a.count {
        sc.count = v;
    }
    if let Some(v) = a.min_obstacles {
        sc.obstacles[0] = v;
    }
    if let Some(v) = a.max_obstacles {
        sc.obstacles[1] = v;
    }
    if let Some(v) = a.size_min {
        sc.size[0] = v;
    }
    if let Some(v) = a.size_max {
        sc.size[1] = v;
    }
    let scenes = generate_scenes(&model, &sc)?;
    let dir = a.out.clone().unwrap_or_else(|| out_dir().join("dataset"));
    let paths = write_scenes(&dir, &scenes)?;
    println!("wrote {} scenes to {}", paths.len(), dir.join(crate::bench::SCENE_DIR).display());
    Ok(())
}

fn cmd_gen_tasks(a: &GenTasksArgs) -> Result<()> {
    let cfg = load_config(a.common.config.as_deref())?;
    let model = robot_model(&a.robot, &cfg)?;
    let (w, h, render_params) = image_settings(&a.image, &cfg);
    render_params.validate()?;
    let camera = Camera::for_model(&model, w, h)?;
    let mut tc = cfg.tasks.clone();
    if let Some(s) = a.common.seed.or(cfg.seed) {
        tc.seed = s;
    }
    if let Some(v) = &a.bins {
        tc.bins = v.clone();
    }
    if let Some(v) = a.band {
        tc.band = v;
    }
    if let Some(v) = a.per_bin {
        tc.per_bin = v;
    }
    if let Some(v) = a.rrt_budget {
        tc.rrt_budget = v;
    }
    let dir = a.dataset.clone().unwrap_or_else(|| out_dir().join("dataset"));
    let (scene_paths, scenes) = read_scene_dir(&dir)?;
    let tasks = generate_tasks_parallel(&model, &scenes, &tc, a.workers.unwrap_or(cfg.bench.workers))?;
    let ds = Dataset {
        robot: model,
        camera,
        render: render_params,
        bins: tc.bins.clone(),
        band: tc.band,
        scenes: scene_paths,
        tasks,
    };
    ds.save(&dir)?;
    println!("wrote {} tasks to {}", ds.tasks.len(), dir.join(crate::bench::MANIFEST).display());
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let cfg = load_config(a.common.config.as_deref())?;
    let model = robot_model(&a.robot, &cfg)?;
    let (w, h, render_params) = image_settings(&a.image, &cfg);
    render_params.validate()?;
    let camera = Camera::for_model(&model, w, h)?;
    let q = Configuration::new(a.q.clone());
    let img = render(&model, &q, &camera, &render_params)?;
    let out = a.out.clone().unwrap_or_else(|| out_dir().join("render.pgm"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let format = if a.ascii { PgmFormat::Ascii } else { PgmFormat::Binary };
    write_pgm(&out, &img, format)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let cfg = load_config(a.common.config.as_deref())?;
    let size = a.size.unwrap_or(cfg.gradcheck.size);
    let gc = GradcheckConfig {
        cases: a.cases.unwrap_or(cfg.gradcheck.cases),
        width: size,
        height: size,
        step: a.step.unwrap_or(cfg.gradcheck.step),
        seed: a.common.seed.or(cfg.seed).unwrap_or(0),
    };
    let tol = a.tolerance.unwrap_or(cfg.gradcheck.tolerance);
    let report = gradcheck::run(&gc)?;
    println!("cases: {}", report.cases.len());
    println!("mean relative error: {:.3e}", report.mean_rel_error);
    println!("max relative error: {:.3e}", report.max_rel_error);
    let ok = report.max_rel_error <= tol;
    println!("{} (tolerance {tol:e})", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn cmd_viz(a: &VizArgs) -> Result<()> {
    let cfg = load_config(a.common.config.as_deref())?;
    let r = resolve_planner(&a.planner, &a.common, &cfg)?;
    let mut task = load_task(&a.task, a.dataset.as_deref())?;
    attach_noise(&mut task.problem, r.noise_sigma, task.q_goal.as_ref(), task.seed)?;
    let mut planner = Vrrt::new(&task.problem, &r.params)?;
    let result = planner.run()?;
    let mode = match a.mode {
        VizMode::Pca => SvgMode::Pca,
        VizMode::Workspace => SvgMode::Workspace,
    };
    let color = match a.color {
        VizColor::Frontier => ColorBy::Frontier,
        VizColor::OptSteps => ColorBy::OptSteps,
    };
    let svg = export_tree_svg(
        mode,
        planner.tree(),
        &task.problem.model,
        &task.problem.scene,
        planner.frontier().ranked(),
        color,
        std::slice::from_ref(&result.path),
    )?;
    let name = match a.mode {
        VizMode::Pca => "pca",
        VizMode::Workspace => "workspace",
    };
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| out_dir().join(format!("viz_{}_{name}.svg", task.id)));
    write_text(&out, &svg)?;
    if let Some(csv) = &a.tree_csv {
        write_text(csv, &planner.tree().to_csv())?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code: 0 on success, 1 on runtime or file
/// errors, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let outcome = match &cli.command {
        Command::GenScenes(a) => cmd_gen_scenes(a).map(|_| true),
        Command::GenTasks(a) => cmd_gen_tasks(a).map(|_| true),
        Command::Plan(a) => cmd_plan(a).map(|_| true),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Render(a) => cmd_render(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Viz(a) => cmd_viz(a).map(|_| true),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
