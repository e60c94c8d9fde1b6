//! Comparison planners: plain gradient descent on the render loss, a
//! two-stage estimate-then-plan pipeline, and RRT / RRT* to a known goal.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collision::{Scene, DEFAULT_EDGE_RESOLUTION};
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};
use crate::optimizer::{fresh_state, step, Strategy};
use crate::planner::{
    path_length, plan, random_steer, shortcut_path, PlanResult, PlannerParams, Problem, Termination,
};
use crate::tree::SearchTree;

/// Planner selector used by the CLI and the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Vrrt,
    Gd,
    TwoStage,
    Rrt,
    RrtStar,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 5] = [
        PlannerKind::Vrrt,
        PlannerKind::Gd,
        PlannerKind::TwoStage,
        PlannerKind::Rrt,
        PlannerKind::RrtStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Vrrt => "vrrt",
            PlannerKind::Gd => "gd",
            PlannerKind::TwoStage => "two-stage",
            PlannerKind::Rrt => "rrt",
            PlannerKind::RrtStar => "rrt-star",
        }
    }

    /// Whether the planner needs the ground-truth goal configuration.
    pub fn needs_goal_config(self) -> bool {
        matches!(self, PlannerKind::Rrt | PlannerKind::RrtStar)
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown planner '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrtParams {
    pub epsilon: f64,
    /// Probability of sampling the goal instead of a uniform target.
    pub goal_bias: f64,
    pub max_iters: usize,
    /// Extra iterations after the goal is first connected (RRT* only).
    pub refine_iters: usize,
    /// `3 * epsilon` when unset.
    pub rewire_radius: Option<f64>,
    pub edge_resolution: f64,
    pub seed: u64,
    pub shortcut_attempts: usize,
}

impl Default for RrtParams {
    fn default() -> Self {
        RrtParams {
            epsilon: 0.04,
            goal_bias: 0.05,
            max_iters: 20_000,
            refine_iters: 0,
            rewire_radius: None,
            edge_resolution: DEFAULT_EDGE_RESOLUTION,
            seed: 0,
            shortcut_attempts: 200,
        }
    }
}

impl RrtParams {
    /// Steering, collision and shortcut settings shared with a vRRT run.
    pub fn from_planner(p: &PlannerParams, max_iters: usize) -> Self {
        RrtParams {
            epsilon: p.epsilon,
            max_iters,
            rewire_radius: p.rewire_radius,
            edge_resolution: p.edge_resolution,
            seed: p.seed,
            shortcut_attempts: p.shortcut_attempts,
            ..RrtParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParam(format!("epsilon = {} must be positive", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::InvalidParam(format!("goal_bias = {} must lie in [0, 1]", self.goal_bias)));
        }
        if !(self.edge_resolution.is_finite() && self.edge_resolution > 0.0) {
            return Err(Error::InvalidParam("edge_resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Follows the optimizer from the start configuration until the loss
/// plateaus. Collisions are not avoided, only reported.
pub fn gradient_only_plan(problem: &Problem, params: &PlannerParams) -> Result<PlanResult> {
    params.validate()?;
    problem.validate()?;
    let t0 = Instant::now();
    let (scene, model) = (&problem.scene, &problem.model);
    let opt = params.optimizer_params();
    let mut q = problem.start.clone();
    let mut state = fresh_state(params.optimizer, model.dof());
    let first = problem.loss_grad(&q)?;
    let mut loss = first.loss;
    let mut grad = first.grad;
    let mut path = vec![q.clone()];
    let mut trace = Vec::new();
    let mut collision_free = true;
    let mut flat = 0usize;
    let mut termination = Termination::MaxIters;
    let mut best = (loss, 0usize);
    for _ in 0..params.max_iters {
        let (next, next_state) = step(&opt, model, &q, &grad, &state)?;
        if next != q {
            if scene.config_in_collision(model, &next)
                || !scene.edge_collision_free(model, &q, &next, params.edge_resolution)
            {
                collision_free = false;
            }
            path.push(next.clone());
        }
        let lg = problem.loss_grad(&next)?;
        let change = (loss - lg.loss).abs();
        q = next;
        state = next_state;
        loss = lg.loss;
        grad = lg.grad;
        if loss < best.0 {
            best = (loss, path.len() - 1);
        }
        trace.push(loss);
        if change < params.plateau_eps {
            flat += 1;
        } else {
            flat = 0;
        }
        if flat >= params.plateau_iters {
            termination = Termination::Plateau;
            break;
        }
    }
    let best_config = path[best.1].clone();
    Ok(PlanResult {
        best_loss: problem.loss(path.last().expect("path holds the start"))?,
        best_config: path.last().cloned().unwrap_or(best_config),
        iterations: trace.len(),
        node_count: path.len(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        trace,
        termination,
        collision_free,
        reached_goal: None,
        raw_path_length: path_length(&path),
        path,
    })
}

/// Estimates the goal with collision-unaware gradient descent, then plans
/// to the estimate with RRT*.
pub fn two_stage_plan(problem: &Problem, params: &PlannerParams, rrt: &RrtParams) -> Result<PlanResult> {
    let t0 = Instant::now();
    let free = Problem {
        scene: Scene {
            workspace: problem.scene.workspace,
            obstacles: Vec::new(),
        },
        ..problem.clone()
    };
    let estimate = gradient_only_plan(&free, params)?;
    let q_hat = estimate.final_config().clone();
    problem.validate()?;
    let mut result = if problem.scene.config_feasible(&problem.model, &q_hat) {
        rrt_star_plan(&problem.scene, &problem.model, &problem.start, &q_hat, rrt)?
    } else {
        failed_result(&problem.start)
    };
    let final_q = result.final_config().clone();
    result.best_loss = problem.loss(&final_q)?;
    result.best_config = final_q;
    result.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(result)
}

fn failed_result(start: &Configuration) -> PlanResult {
    PlanResult {
        path: vec![start.clone()],
        best_loss: f64::INFINITY,
        best_config: start.clone(),
        iterations: 0,
        node_count: 1,
        wall_time_s: 0.0,
        trace: Vec::new(),
        termination: Termination::Budget,
        collision_free: true,
        reached_goal: Some(false),
        raw_path_length: 0.0,
    }
}

/// RRT with goal biasing.
pub fn rrt_plan(
    scene: &Scene,
    model: &RobotModel,
    q_start: &Configuration,
    q_goal: &Configuration,
    params: &RrtParams,
) -> Result<PlanResult> {
    grow(scene, model, q_start, q_goal, params, false)
}

/// RRT* with choose-parent, rewiring and shortcutting.
pub fn rrt_star_plan(
    scene: &Scene,
    model: &RobotModel,
    q_start: &Configuration,
    q_goal: &Configuration,
    params: &RrtParams,
) -> Result<PlanResult> {
    grow(scene, model, q_start, q_goal, params, true)
}

fn grow(
    scene: &Scene,
    model: &RobotModel,
    q_start: &Configuration,
    q_goal: &Configuration,
    params: &RrtParams,
    star: bool,
) -> Result<PlanResult> {
    params.validate()?;
    model.check_dim(q_start)?;
    model.check_dim(q_goal)?;
    if !scene.config_feasible(model, q_start) {
        return Err(Error::InfeasibleStart("start configuration is infeasible".into()));
    }
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let res = params.edge_resolution;
    let radius = params.rewire_radius.unwrap_or(3.0 * params.epsilon);
    let zero = fresh_state(Strategy::Adam, model.dof());
    let mut tree = SearchTree::new(model.dof());
    tree.insert(q_start.clone(), None, q_start.distance(q_goal), zero.clone())?;
    let goal_ok = scene.config_feasible(model, q_goal);
    let mut goal_id = (q_start == q_goal).then_some(0);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut since_goal = 0;
    while goal_ok && iterations < params.max_iters {
        if goal_id.is_some() {
            if !star || since_goal >= params.refine_iters {
                break;
            }
            since_goal += 1;
        }
        iterations += 1;
        let target = if rng.random::<f64>() < params.goal_bias {
            q_goal.clone()
        } else {
            model.sample_uniform(&mut rng)
        };
        let parent = tree.nearest(&target)?;
        let pq = tree.nodes()[parent].q.clone();
        let child = random_steer(model, &pq, &target, params.epsilon);
        if child != pq && scene.edge_collision_free(model, &pq, &child, res) {
            let id = tree.insert(child.clone(), Some(parent), child.distance(q_goal), zero.clone())?;
            if star {
                let near = tree.near_radius(&child, radius);
                tree.rewire_in_scene(id, &near, scene, model, res)?;
            }
            if goal_id.is_none() {
                if child == *q_goal {
                    goal_id = Some(id);
                } else if child.distance(q_goal) <= params.epsilon
                    && scene.edge_collision_free(model, &child, q_goal, res)
                {
                    let g = tree.insert(q_goal.clone(), Some(id), 0.0, zero.clone())?;
                    if star {
                        let near = tree.near_radius(q_goal, radius);
                        tree.rewire_in_scene(g, &near, scene, model, res)?;
                    }
                    goal_id = Some(g);
                }
            }
        }
        trace.push(match goal_id {
            Some(g) => tree.nodes()[g].cost,
            None => f64::INFINITY,
        });
    }
    let (end, reached) = match goal_id {
        Some(g) => (g, true),
        None => {
            let closest = tree
                .nodes()
                .iter()
                .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.id.cmp(&b.id)))
                .map(|n| n.id)
                .ok_or(Error::EmptyTree)?;
            (closest, false)
        }
    };
    let raw = tree.path_to_root(end)?;
    let raw_path_length = path_length(&raw);
    let path = if star {
        shortcut_path(&raw, scene, model, res, params.shortcut_attempts, &mut rng)
    } else {
        raw
    };
    let last = path.last().cloned().expect("path holds the start");
    Ok(PlanResult {
        best_loss: last.distance(q_goal),
        best_config: last,
        path,
        iterations,
        node_count: tree.len(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        trace,
        termination: if reached { Termination::GoalReached } else { Termination::Budget },
        collision_free: true,
        reached_goal: Some(reached),
        raw_path_length,
    })
}

/// Runs the selected planner. `q_goal` is required by the planners that
/// plan to a known configuration and ignored by the others.
pub fn run_planner(
    kind: PlannerKind,
    problem: &Problem,
    params: &PlannerParams,
    rrt: &RrtParams,
    q_goal: Option<&Configuration>,
) -> Result<PlanResult> {
    match kind {
        PlannerKind::Vrrt => plan(problem, params),
        PlannerKind::Gd => gradient_only_plan(problem, params),
        PlannerKind::TwoStage => two_stage_plan(problem, params, rrt),
        PlannerKind::Rrt | PlannerKind::RrtStar => {
            let goal = q_goal.ok_or_else(|| {
                Error::InvalidParam(format!("planner {kind} needs the goal configuration"))
            })?;
            problem.validate()?;
            let f = if kind == PlannerKind::Rrt { rrt_plan } else { rrt_star_plan };
            let mut r = f(&problem.scene, &problem.model, &problem.start, goal, rrt)?;
            r.best_loss = problem.loss(&r.best_config)?;
            Ok(r)
        }
    }
}

/// Sum of joint-space segment lengths of a result path.
pub fn result_path_length(r: &PlanResult) -> f64 {
    path_length(&r.path)
}
