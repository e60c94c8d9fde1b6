use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{derive_seed, parallel_map};
use crate::baselines::{rrt_plan, RrtParams};
use crate::collision::{Aabb, Scene};
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};
use crate::planner::{GoalSpec, Problem};
use crate::renderer::{read_pgm, render, write_pgm, Camera, PgmFormat, RenderParams};

pub const MANIFEST: &str = "dataset.json";
pub const SCENE_DIR: &str = "scenes";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub count: usize,
    /// Inclusive range of obstacle counts per scene.
    pub obstacles: [usize; 2],
    /// Range of box side lengths.
    pub size: [f64; 2],
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            count: 6,
            obstacles: [3, 5],
            size: [0.1, 0.4],
            seed: 0,
            max_retries: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Bin centres (rad).
    pub bins: Vec<f64>,
    /// Half-width of each bin (rad).
    pub band: f64,
    pub per_bin: usize,
    /// Iteration cap of the RRT reachability check.
    pub rrt_budget: usize,
    pub seed: u64,
    /// Candidate goals tried per emitted task before giving up.
    pub attempts_per_task: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            bins: vec![0.5, 1.0, 1.5, 2.0, 2.5],
            band: 0.1,
            per_bin: 50,
            rrt_budget: 20_000,
            seed: 0,
            attempts_per_task: 200,
        }
    }
}

/// One benchmark query. The goal configuration is stored for scoring only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchTask {
    pub id: String,
    pub scene: usize,
    pub q_start: Configuration,
    pub q_goal: Configuration,
    /// Goal image path relative to the dataset directory.
    pub image: String,
    pub bin: f64,
    pub seed: u64,
}

/// Places `n_obstacles` boxes: the first half next to links of the
/// canonical (all-zero) pose, the rest uniformly in the workspace. No box
/// touches the canonical pose.
pub fn generate_scene(
    model: &RobotModel,
    seed: u64,
    n_obstacles: usize,
    size: [f64; 2],
    max_retries: usize,
) -> Result<Scene> {
    if !(size[0] > 0.0 && size[0] <= size[1]) {
        return Err(Error::InvalidParam(format!("obstacle size range {size:?} is invalid")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::empty_for(model);
    let canonical = Configuration::zeros(model.dof());
    let frames = model.forward_kinematics(&canonical)?.frames().to_vec();
    let ws = scene.workspace;
    let near = n_obstacles.div_ceil(2);
    for k in 0..n_obstacles {
        let mut placed = false;
        for _ in 0..max_retries.max(1) {
            let w = rng.random_range(size[0]..=size[1]);
            let h = rng.random_range(size[0]..=size[1]);
            let center = if k < near {
                let i = rng.random_range(0..frames.len() - 1);
                let t: f64 = rng.random();
                let (a, b) = (frames[i], frames[i + 1]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = (dx * dx + dy * dy).sqrt().max(1e-12);
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let gap = rng.random_range(0.05..0.3) + 0.5 * w.max(h);
                [
                    a[0] + t * dx - side * gap * dy / len,
                    a[1] + t * dy + side * gap * dx / len,
                ]
            } else {
                [
                    rng.random_range(ws.min[0]..ws.max[0]),
                    rng.random_range(ws.min[1]..ws.max[1]),
                ]
            };
            let Ok(b) = Aabb::from_center(center, [w, h]) else {
                continue;
            };
            if !ws.contains_box(&b) {
                continue;
            }
            scene.obstacles.push(b);
            if scene.config_in_collision(model, &canonical) {
                scene.obstacles.pop();
                continue;
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place obstacle {k} of scene (seed {seed}) after {max_retries} tries"
            )));
        }
    }
    Ok(scene)
}

pub fn generate_scenes(model: &RobotModel, cfg: &SceneConfig) -> Result<Vec<Scene>> {
    if cfg.obstacles[0] > cfg.obstacles[1] {
        return Err(Error::InvalidParam(format!("obstacle count range {:?} is empty", cfg.obstacles)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|i| {
            let n = rng.random_range(cfg.obstacles[0]..=cfg.obstacles[1]);
            generate_scene(model, derive_seed(cfg.seed, i as u64), n, cfg.size, cfg.max_retries)
        })
        .collect()
}

/// Feasibility checks applied to every emitted task. Returns a reason on
/// failure.
pub fn check_task(
    model: &RobotModel,
    scene: &Scene,
    task: &BenchTask,
    band: f64,
    rrt_budget: usize,
) -> std::result::Result<(), String> {
    let dist = task.q_start.distance(&task.q_goal);
    if (dist - task.bin).abs() > band + 1e-12 {
        return Err(format!("distance {dist:.4} is outside bin {} ± {band}", task.bin));
    }
    if !scene.config_feasible(model, &task.q_goal) {
        return Err("goal is infeasible".into());
    }
    let params = RrtParams {
        max_iters: rrt_budget,
        seed: task.seed,
        ..RrtParams::default()
    };
    match rrt_plan(scene, model, &task.q_start, &task.q_goal, &params) {
        Ok(r) if r.reached_goal == Some(true) => Ok(()),
        Ok(_) => Err(format!("RRT did not reach the goal in {rrt_budget} iterations")),
        Err(e) => Err(e.to_string()),
    }
}

/// Exactly `per_bin` tasks per bin per scene, all starting at the canonical
/// pose.
pub fn generate_tasks(model: &RobotModel, scenes: &[Scene], cfg: &TaskConfig) -> Result<Vec<BenchTask>> {
    generate_tasks_parallel(model, scenes, cfg, 1)
}

/// [`generate_tasks`] spread over `workers` threads. Every (scene, bin) pair
/// has its own random stream, so the output does not depend on `workers`.
pub fn generate_tasks_parallel(
    model: &RobotModel,
    scenes: &[Scene],
    cfg: &TaskConfig,
    workers: usize,
) -> Result<Vec<BenchTask>> {
    if cfg.per_bin > 0 && cfg.bins.is_empty() {
        return Err(Error::InvalidParam("no distance bins".into()));
    }
    let nb = cfg.bins.len();
    let groups = parallel_map(scenes.len() * nb, workers, |j| {
        let (s, b) = (j / nb, j % nb);
        generate_bin(model, &scenes[s], s, b, cfg)
    });
    let mut tasks = Vec::with_capacity(scenes.len() * nb * cfg.per_bin);
    for g in groups {
        tasks.extend(g?);
    }
    Ok(tasks)
}

fn generate_bin(model: &RobotModel, scene: &Scene, s: usize, b: usize, cfg: &TaskConfig) -> Result<Vec<BenchTask>> {
    let bin = cfg.bins[b];
    let d = model.dof();
    let start = Configuration::zeros(d);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, s as u64), b as u64));
    let budget = cfg.attempts_per_task.max(1) * cfg.per_bin;
    let mut attempts = 0;
    let mut rejected = [0usize; 3];
    let mut tasks = Vec::with_capacity(cfg.per_bin);
    while tasks.len() < cfg.per_bin {
        let k = tasks.len();
        if attempts >= budget {
            return Err(Error::Generation(format!(
                "scene {s}, bin {bin}: only {k} of {} goals after {attempts} candidates \
                 (out of limits: {}, in collision: {}, RRT failed: {})",
                cfg.per_bin, rejected[0], rejected[1], rejected[2]
            )));
        }
        attempts += 1;
        let radius = rng.random_range(bin - cfg.band..=bin + cfg.band).max(0.0);
        let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let q_goal = Configuration::new(
            start.0.iter().zip(&dir).map(|(c, u)| c + radius * u / norm).collect(),
        );
        if !model.within_limits(&q_goal) {
            rejected[0] += 1;
            continue;
        }
        if scene.config_in_collision(model, &q_goal) {
            rejected[1] += 1;
            continue;
        }
        let id = format!("s{s:02}_b{b}_{k:03}");
        let task = BenchTask {
            image: format!("{IMAGE_DIR}/{id}.pgm"),
            id,
            scene: s,
            q_start: start.clone(),
            q_goal,
            bin,
            seed: rng.random(),
        };
        if check_task(model, scene, &task, cfg.band, cfg.rrt_budget).is_err() {
            rejected[2] += 1;
            continue;
        }
        tasks.push(task);
    }
    log::debug!("scene {s}, bin {bin}: {attempts} candidates, rejected {rejected:?}");
    Ok(tasks)
}

/// Dataset manifest. Scene and image paths are relative to the dataset
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub robot: RobotModel,
    pub camera: Camera,
    pub render: RenderParams,
    pub bins: Vec<f64>,
    pub band: f64,
    pub scenes: Vec<String>,
    pub tasks: Vec<BenchTask>,
}

pub fn scene_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(SCENE_DIR).join(format!("scene_{index:02}.toml"))
}

/// Writes `scenes/scene_XX.toml` and returns the relative paths.
pub fn write_scenes(dir: &Path, scenes: &[Scene]) -> Result<Vec<String>> {
    let sd = dir.join(SCENE_DIR);
    std::fs::create_dir_all(&sd).map_err(|e| Error::io(&sd, e))?;
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.save(scene_path(dir, i))?;
            Ok(format!("{SCENE_DIR}/scene_{i:02}.toml"))
        })
        .collect()
}

/// Reads every `scenes/scene_XX.toml` in index order.
pub fn read_scene_dir(dir: &Path) -> Result<(Vec<String>, Vec<Scene>)> {
    let sd = dir.join(SCENE_DIR);
    let mut names: Vec<String> = std::fs::read_dir(&sd)
        .map_err(|e| Error::io(&sd, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("scene_") && n.ends_with(".toml"))
        .collect();
    names.sort();
    let rel: Vec<String> = names.iter().map(|n| format!("{SCENE_DIR}/{n}")).collect();
    let scenes = rel.iter().map(|r| Scene::load(dir.join(r))).collect::<Result<_>>()?;
    Ok((rel, scenes))
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ds: Dataset = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
        ds.camera.validate().map_err(|e| Error::parse(&path, e))?;
        ds.render.validate().map_err(|e| Error::parse(&path, e))?;
        Ok(ds)
    }

    /// Writes the manifest and renders every goal image.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let images = dir.join(IMAGE_DIR);
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        for t in &self.tasks {
            let img = render(&self.robot, &t.q_goal, &self.camera, &self.render)?;
            write_pgm(dir.join(&t.image), &img, PgmFormat::Binary)?;
        }
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load_scenes(&self, dir: &Path) -> Result<Vec<Scene>> {
        self.scenes.iter().map(|s| Scene::load(dir.join(s))).collect()
    }

    pub fn tasks_in_bin(&self, bin: f64) -> Vec<BenchTask> {
        self.tasks
            .iter()
            .filter(|t| (t.bin - bin).abs() < 1e-9)
            .cloned()
            .collect()
    }

    /// The planning query for `task`, reading its goal image from disk.
    pub fn problem(&self, dir: &Path, scenes: &[Scene], task: &BenchTask) -> Result<Problem> {
        let scene = scenes.get(task.scene).ok_or_else(|| {
            Error::InvalidParam(format!("task {} refers to missing scene {}", task.id, task.scene))
        })?;
        let image = read_pgm(dir.join(&task.image))?;
        Ok(Problem {
            scene: scene.clone(),
            model: self.robot.clone(),
            camera: self.camera,
            render: self.render,
            start: task.q_start.clone(),
            goal: GoalSpec::visual(image),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_when_no_obstacles() {
        let m = RobotModel::default();
        let s = generate_scene(&m, 1, 0, [0.1, 0.4], 100).unwrap();
        assert!(s.obstacles.is_empty());
    }

    #[test]
    fn canonical_pose_is_free() {
        let m = RobotModel::default();
        let q0 = Configuration::zeros(5);
        for seed in 0..100 {
            let s = generate_scene(&m, seed, 5, [0.1, 0.4], 1000).unwrap();
            assert_eq!(s.obstacles.len(), 5);
            assert!(!s.config_in_collision(&m, &q0));
            s.validate().unwrap();
        }
    }

    #[test]
    fn scenes_are_deterministic() {
        let m = RobotModel::default();
        let cfg = SceneConfig { seed: 11, ..Default::default() };
        assert_eq!(generate_scenes(&m, &cfg).unwrap(), generate_scenes(&m, &cfg).unwrap());
    }

    #[test]
    fn zero_per_bin_is_empty() {
        let m = RobotModel::default();
        let scenes = vec![Scene::empty_for(&m)];
        let cfg = TaskConfig { per_bin: 0, ..Default::default() };
        assert!(generate_tasks(&m, &scenes, &cfg).unwrap().is_empty());
    }

    #[test]
    fn tasks_pass_independent_checks() {
        let m = RobotModel::default();
        let scenes = generate_scenes(&m, &SceneConfig { count: 2, seed: 3, ..Default::default() }).unwrap();
        let cfg = TaskConfig { per_bin: 2, bins: vec![0.5, 1.5], seed: 5, ..Default::default() };
        let tasks = generate_tasks(&m, &scenes, &cfg).unwrap();
        assert_eq!(tasks.len(), 2 * 2 * 2);
        for t in &tasks {
            let d = t.q_start.distance(&t.q_goal);
            assert!((d - t.bin).abs() <= 0.1 + 1e-12);
            assert!(scenes[t.scene].config_feasible(&m, &t.q_goal));
            check_task(&m, &scenes[t.scene], t, 0.1, 20_000).unwrap();
        }
        assert_eq!(tasks, generate_tasks(&m, &scenes, &cfg).unwrap());
    }
}
