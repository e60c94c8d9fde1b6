//! Visual-goal RRT: batched tree growth mixing random steering with
//! gradient steps on the render loss, anchored on a loss-ranked frontier.

mod shortcut;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::collision::{Scene, DEFAULT_EDGE_RESOLUTION};
use crate::error::{Error, Result};
use crate::frontier::{FrontierPolicy, FrontierSet};
use crate::kinematics::{Configuration, RobotModel};
use crate::optimizer::{fresh_state, step, OptimizerParams, Strategy};
use crate::renderer::{render_loss, render_loss_grad, Camera, Image, LossGrad, RenderParams};
use crate::tree::SearchTree;

pub use shortcut::{path_length, shortcut_path};

/// Frontier rank distribution selector, flattened for config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierKind {
    #[default]
    TruncGeometric,
    Uniform,
    TopK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Random steering step (rad).
    pub epsilon: f64,
    pub optimizer: Strategy,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    /// Momentum coefficient for the heavy-ball and Lion strategies.
    pub mu: f64,
    pub kappa: f64,
    /// Frontier capacity.
    pub frontier_size: usize,
    pub frontier_policy: FrontierKind,
    /// Rank cut-off for the top-k policy.
    pub top_k: usize,
    /// Exploration ball radius (rad).
    pub rho: f64,
    /// Probability that an attempt explores rather than exploits.
    pub explore_ratio: f64,
    /// Probability that an attempt is anchored on the frontier.
    pub frontier_ratio: f64,
    pub batch: usize,
    pub plateau_eps: f64,
    pub plateau_iters: usize,
    pub max_iters: usize,
    pub rewire: bool,
    /// Neighbourhood radius for rewiring; `3 * epsilon` when unset.
    pub rewire_radius: Option<f64>,
    pub edge_resolution: f64,
    pub seed: u64,
    pub shortcut_attempts: usize,
    /// Fraction of exploit attempts that steer toward the noisy goal
    /// configuration instead, when one is given.
    pub noisy_goal_fraction: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            epsilon: 0.04,
            optimizer: Strategy::Adam,
            alpha: 0.04,
            beta1: 0.9,
            beta2: 0.9,
            delta: 1e-8,
            mu: 0.9,
            kappa: 0.9,
            frontier_size: 200,
            frontier_policy: FrontierKind::TruncGeometric,
            top_k: 10,
            rho: 0.7,
            explore_ratio: 0.3,
            frontier_ratio: 0.7,
            batch: 32,
            plateau_eps: 1e-4,
            plateau_iters: 100,
            max_iters: 1000,
            rewire: true,
            rewire_radius: None,
            edge_resolution: DEFAULT_EDGE_RESOLUTION,
            seed: 0,
            shortcut_attempts: 200,
            noisy_goal_fraction: 0.25,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon = {} must be positive", self.epsilon));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad(format!("rho = {} must be positive", self.rho));
        }
        for (name, v) in [
            ("explore_ratio", self.explore_ratio),
            ("frontier_ratio", self.frontier_ratio),
            ("noisy_goal_fraction", self.noisy_goal_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return bad(format!("kappa = {} must lie in [0, 1)", self.kappa));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if self.frontier_size == 0 {
            return bad("frontier_size must be at least 1".into());
        }
        if !(self.plateau_eps.is_finite() && self.plateau_eps > 0.0) {
            return bad(format!("plateau_eps = {} must be positive", self.plateau_eps));
        }
        if self.plateau_iters == 0 {
            return bad("plateau_iters must be at least 1".into());
        }
        if !(self.edge_resolution.is_finite() && self.edge_resolution > 0.0) {
            return bad(format!("edge_resolution = {} must be positive", self.edge_resolution));
        }
        if let Some(r) = self.rewire_radius {
            if !(r.is_finite() && r >= 0.0) {
                return bad(format!("rewire_radius = {r} must be non-negative"));
            }
        }
        self.optimizer_params().validate()
    }

    pub fn optimizer_params(&self) -> OptimizerParams {
        OptimizerParams {
            strategy: self.optimizer,
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            delta: self.delta,
            mu: self.mu,
        }
    }

    pub fn frontier(&self) -> FrontierPolicy {
        match self.frontier_policy {
            FrontierKind::TruncGeometric => FrontierPolicy::TruncGeometric { kappa: self.kappa },
            FrontierKind::Uniform => FrontierPolicy::Uniform,
            FrontierKind::TopK => FrontierPolicy::TopK { k: self.top_k },
        }
    }

    pub fn rewire_radius(&self) -> f64 {
        self.rewire_radius.unwrap_or(3.0 * self.epsilon)
    }
}

/// A prior guess of the goal configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyGoal {
    pub config: Configuration,
    /// Standard deviation of the perturbation that produced `config` (rad).
    pub sigma: f64,
}

impl NoisyGoal {
    /// `q_goal + N(0, sigma^2 I)`, clamped to joint limits.
    pub fn perturb<R: Rng + ?Sized>(
        model: &RobotModel,
        q_goal: &Configuration,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParam(format!("noise sigma {sigma} must be non-negative")));
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidParam(format!("noise sigma {sigma}: {e}")))?;
        let mut config = Configuration::new(q_goal.0.iter().map(|x| x + normal.sample(rng)).collect());
        model.clamp(&mut config);
        Ok(NoisyGoal { config, sigma })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpec {
    pub image: Image,
    pub noisy: Option<NoisyGoal>,
}

impl GoalSpec {
    pub fn visual(image: Image) -> Self {
        GoalSpec { image, noisy: None }
    }
}

/// Everything a planner needs to know about one query.
#[derive(Debug, Clone)]
pub struct Problem {
    pub scene: Scene,
    pub model: RobotModel,
    pub camera: Camera,
    pub render: RenderParams,
    pub start: Configuration,
    pub goal: GoalSpec,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.model.check_dim(&self.start)?;
        self.camera.validate()?;
        if self.goal.image.width() != self.camera.width || self.goal.image.height() != self.camera.height {
            return Err(Error::DimensionMismatch {
                expected: self.camera.num_pixels(),
                got: self.goal.image.data().len(),
            });
        }
        if let Some(n) = &self.goal.noisy {
            self.model.check_dim(&n.config)?;
        }
        if !self.scene.config_feasible(&self.model, &self.start) {
            return Err(Error::InfeasibleStart(
                "start configuration is outside the joint limits or in collision".into(),
            ));
        }
        Ok(())
    }

    pub fn loss(&self, q: &Configuration) -> Result<f64> {
        render_loss(&self.model, q, &self.goal.image, &self.camera, &self.render)
    }

    pub fn loss_grad(&self, q: &Configuration) -> Result<LossGrad> {
        render_loss_grad(&self.model, q, &self.goal.image, &self.camera, &self.render)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Plateau,
    MaxIters,
    GoalReached,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    /// Root first.
    pub path: Vec<Configuration>,
    pub best_loss: f64,
    pub best_config: Configuration,
    pub iterations: usize,
    pub node_count: usize,
    pub wall_time_s: f64,
    /// Best loss after each iteration.
    pub trace: Vec<f64>,
    pub termination: Termination,
    /// Whether every path vertex and edge passed the collision check.
    pub collision_free: bool,
    /// For planners given an explicit goal configuration: whether it was
    /// connected. `None` for image-goal planners.
    pub reached_goal: Option<bool>,
    /// Length of the path before shortcutting.
    pub raw_path_length: f64,
}

impl PlanResult {
    pub fn final_config(&self) -> &Configuration {
        self.path.last().unwrap_or(&self.best_config)
    }

    pub fn path_length(&self) -> f64 {
        path_length(&self.path)
    }
}

/// `q_p` moved by at most `eps` toward `target`, clamped to joint limits.
pub fn random_steer(
    model: &RobotModel,
    q_p: &Configuration,
    target: &Configuration,
    eps: f64,
) -> Configuration {
    let dist = q_p.distance(target);
    if dist == 0.0 {
        return q_p.clone();
    }
    let mut out = if dist <= eps {
        target.clone()
    } else {
        let s = eps / dist;
        Configuration::new(
            q_p.0
                .iter()
                .zip(&target.0)
                .map(|(a, b)| a + s * (b - a))
                .collect(),
        )
    };
    model.clamp(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Expansion {
    Explore,
    Gradient,
    NoisyGoal,
}

/// Planner state for one query. Use [`plan`] for the common case.
pub struct Vrrt<'a> {
    problem: &'a Problem,
    params: PlannerParams,
    opt: OptimizerParams,
    tree: SearchTree,
    frontier: FrontierSet,
    grads: Vec<Option<Vec<f64>>>,
    gradient_used: Vec<bool>,
    goal_steered: Vec<bool>,
    rng: ChaCha8Rng,
}

impl<'a> Vrrt<'a> {
    pub fn new(problem: &'a Problem, params: &PlannerParams) -> Result<Self> {
        params.validate()?;
        problem.validate()?;
        let d = problem.model.dof();
        let mut tree = SearchTree::new(d);
        let loss = problem.loss(&problem.start)?;
        tree.insert(problem.start.clone(), None, loss, fresh_state(params.optimizer, d))?;
        let mut frontier = FrontierSet::new(params.frontier_size, params.frontier());
        frontier.update(&tree);
        Ok(Vrrt {
            problem,
            params: params.clone(),
            opt: params.optimizer_params(),
            tree,
            frontier,
            grads: vec![None],
            gradient_used: vec![false],
            goal_steered: vec![false],
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn frontier(&self) -> &FrontierSet {
        &self.frontier
    }

    pub fn best_loss(&self) -> f64 {
        self.frontier.best_loss().unwrap_or(f64::INFINITY)
    }

    fn gradient(&mut self, id: usize) -> Result<Vec<f64>> {
        if let Some(g) = &self.grads[id] {
            return Ok(g.clone());
        }
        let g = self.problem.loss_grad(&self.tree.nodes()[id].q)?.grad;
        self.grads[id] = Some(g.clone());
        Ok(g)
    }

    fn anchor(&mut self, from_frontier: bool) -> Result<usize> {
        if from_frontier {
            self.frontier.sample(&mut self.rng)
        } else {
            let target = self.problem.model.sample_uniform(&mut self.rng);
            self.tree.nearest(&target)
        }
    }

    /// Draws one expansion; `None` when the attempt produces no candidate.
    fn propose(&mut self) -> Result<Option<(usize, Configuration, Expansion)>> {
        let explore = self.rng.random::<f64>() < self.params.explore_ratio;
        let from_frontier = self.rng.random::<f64>() < self.params.frontier_ratio;
        let model = &self.problem.model;
        if explore {
            let target = if from_frontier {
                let a = self.frontier.sample(&mut self.rng)?;
                model.sample_ball(&self.tree.nodes()[a].q, self.params.rho, &mut self.rng)
            } else {
                model.sample_uniform(&mut self.rng)
            };
            let parent = self.tree.nearest(&target)?;
            let child = random_steer(model, &self.tree.nodes()[parent].q, &target, self.params.epsilon);
            return Ok(Some((parent, child, Expansion::Explore)));
        }
        if let Some(noisy) = &self.problem.goal.noisy {
            if self.params.noisy_goal_fraction > 0.0
                && self.rng.random::<f64>() < self.params.noisy_goal_fraction
            {
                // classic goal biasing: extend the node closest to the hint
                let parent = self.tree.nearest(&noisy.config)?;
                if self.goal_steered[parent] {
                    return Ok(None);
                }
                self.goal_steered[parent] = true;
                let child =
                    random_steer(model, &self.tree.nodes()[parent].q, &noisy.config, self.params.epsilon);
                return Ok(Some((parent, child, Expansion::NoisyGoal)));
            }
        }
        let parent = self.anchor(from_frontier)?;
        // a gradient step from a node is deterministic: repeating it would
        // only duplicate the existing child
        if self.gradient_used[parent] {
            return Ok(None);
        }
        self.gradient_used[parent] = true;
        let grad = self.gradient(parent)?;
        let node = &self.tree.nodes()[parent];
        let (child, _) = step(&self.opt, model, &node.q, &grad, &node.opt)?;
        Ok(Some((parent, child, Expansion::Gradient)))
    }

    /// One batch of expansion attempts. Returns the ids of inserted nodes.
    pub fn expand_iteration(&mut self) -> Result<Vec<usize>> {
        let mut candidates = Vec::with_capacity(self.params.batch);
        for _ in 0..self.params.batch {
            if let Some(c) = self.propose()? {
                candidates.push(c);
            }
        }
        let problem = self.problem;
        let (scene, model) = (&problem.scene, &problem.model);
        let res = self.params.edge_resolution;
        let mut inserted = Vec::new();
        for (parent, child, kind) in candidates {
            let pq = &self.tree.nodes()[parent].q;
            // an exact copy of an existing node adds nothing but would crowd
            // the frontier with equal-loss twins
            if *pq == child || self.tree.nodes()[self.tree.nearest(&child)?].q == child {
                continue;
            }
            if scene.config_in_collision(model, &child) || !scene.edge_collision_free(model, pq, &child, res) {
                continue;
            }
            let opt = match kind {
                Expansion::Gradient => {
                    let grad = self.gradient(parent)?;
                    step(&self.opt, model, &self.tree.nodes()[parent].q, &grad, &self.tree.nodes()[parent].opt)?.1
                }
                Expansion::Explore | Expansion::NoisyGoal => fresh_state(self.params.optimizer, model.dof()),
            };
            let loss = problem.loss(&child)?;
            let id = self.tree.insert(child, Some(parent), loss, opt)?;
            self.grads.push(None);
            self.gradient_used.push(false);
            self.goal_steered.push(false);
            if self.params.rewire {
                let near = self.tree.near_radius(&self.tree.nodes()[id].q, self.params.rewire_radius());
                self.tree.rewire_in_scene(id, &near, scene, model, res)?;
            }
            inserted.push(id);
        }
        self.frontier.update(&self.tree);
        Ok(inserted)
    }

    /// Runs until the best loss plateaus or the iteration cap is reached.
    pub fn run(&mut self) -> Result<PlanResult> {
        let t0 = Instant::now();
        let mut trace = Vec::new();
        let mut prev = self.best_loss();
        let mut flat = 0usize;
        let mut termination = Termination::MaxIters;
        for _ in 0..self.params.max_iters {
            self.expand_iteration()?;
            let best = self.best_loss();
            trace.push(best);
            if (prev - best).abs() < self.params.plateau_eps {
                flat += 1;
            } else {
                flat = 0;
            }
            prev = best;
            if flat >= self.params.plateau_iters {
                termination = Termination::Plateau;
                break;
            }
        }
        let best = self.frontier.best().ok_or(Error::EmptyTree)?;
        let raw = self.tree.path_to_root(best)?;
        let path = shortcut_path(
            &raw,
            &self.problem.scene,
            &self.problem.model,
            self.params.edge_resolution,
            self.params.shortcut_attempts,
            &mut self.rng,
        );
        let node = &self.tree.nodes()[best];
        Ok(PlanResult {
            raw_path_length: path_length(&raw),
            path,
            best_loss: node.loss,
            best_config: node.q.clone(),
            iterations: trace.len(),
            node_count: self.tree.len(),
            wall_time_s: t0.elapsed().as_secs_f64(),
            trace,
            termination,
            collision_free: true,
            reached_goal: None,
        })
    }
}

/// Plans from `problem.start` toward the goal image.
pub fn plan(problem: &Problem, params: &PlannerParams) -> Result<PlanResult> {
    let t0 = Instant::now();
    let mut planner = Vrrt::new(problem, params)?;
    let mut result = planner.run()?;
    result.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(result)
}
