//! Helpers shared by the integration tests and the acceptance binary.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrrt::optimizer::{fresh_state, OptState, Strategy};
use vrrt::planner::{GoalSpec, PlannerParams, Problem, Vrrt};
use vrrt::renderer::{render, Camera, RenderParams};
use vrrt::tree::SearchTree;
use vrrt::{Configuration, RobotModel};

pub fn q(v: &[f64]) -> Configuration {
    Configuration::new(v.to_vec())
}

/// Empty-scene problem whose goal image is rendered from `goal`.
pub fn visual_problem(model: RobotModel, start: Configuration, goal: &Configuration) -> Problem {
    let camera = Camera::for_model(&model, 64, 64).unwrap();
    let render_params = RenderParams::default();
    let image = render(&model, goal, &camera, &render_params).unwrap();
    Problem {
        scene: vrrt::collision::Scene::empty_for(&model),
        model,
        camera,
        render: render_params,
        start,
        goal: GoalSpec::visual(image),
    }
}

pub struct TreeStats {
    pub ops: usize,
    pub nodes: usize,
    pub reparented: usize,
    pub parent_changes: usize,
}

// symmetric pseudo-obstacle: blocks edges whose midpoint falls in a band
fn edge_ok(a: &Configuration, b: &Configuration) -> bool {
    let m: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| 0.5 * (x + y)).collect();
    (37.0 * m[0]).sin() + (53.0 * m[1]).cos() < 1.2
}

fn check_structure(t: &SearchTree) -> Result<(), String> {
    let nodes = t.nodes();
    for n in nodes {
        if n.id != 0 && n.parent.is_none() {
            return Err(format!("node {} has no parent but is not the root", n.id));
        }
        let mut cost = 0.0;
        let mut cur = n.id;
        let mut steps = 0;
        while let Some(p) = nodes[cur].parent {
            cost += nodes[p].q.distance(&nodes[cur].q);
            cur = p;
            steps += 1;
            if steps > nodes.len() {
                return Err(format!("cycle through node {}", n.id));
            }
        }
        if cur != 0 {
            return Err(format!("node {} does not reach the root", n.id));
        }
        if (cost - n.cost).abs() > 1e-9 {
            return Err(format!("node {}: cached cost {} vs path sum {cost}", n.id, n.cost));
        }
    }
    if nodes[0].parent.is_some() {
        return Err("root has a parent".into());
    }
    Ok(())
}

/// Random inserts and rewires on a 3-D tree with a blocking edge predicate.
/// After every operation: no cost increased, no optimizer state moved, and
/// the choose-parent cost equals the brute-force minimum over the
/// admissible neighbours. Structure (single root, acyclic, cost sums) is
/// re-verified every 500 operations and at the end.
pub fn tree_property_run(ops: usize, seed: u64) -> Result<TreeStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = SearchTree::new(3);
    let root_state = fresh_state(Strategy::Adam, 3);
    t.insert(q(&[0.5, 0.5, 0.5]), None, 0.0, root_state).map_err(|e| e.to_string())?;
    let radius = 0.15;
    let mut stats = TreeStats {
        ops,
        nodes: 0,
        reparented: 0,
        parent_changes: 0,
    };
    for op in 0..ops {
        let target = if rng.random::<f64>() < 0.7 || t.len() < 2 {
            let p = q(&[rng.random(), rng.random(), rng.random()]);
            let parent = t.nearest(&p).map_err(|e| e.to_string())?;
            let mut state = OptState {
                strategy: Strategy::Adam,
                m: vec![rng.random(); 3],
                v: vec![rng.random(); 3],
                i: rng.random_range(0..50),
            };
            state.v[0] = state.v[0].abs();
            t.insert(p, Some(parent), rng.random(), state).map_err(|e| e.to_string())?
        } else {
            rng.random_range(1..t.len())
        };
        let q_t = t.nodes()[target].q.clone();
        let near = t.near_radius(&q_t, radius);
        let before_cost: Vec<f64> = t.nodes().iter().map(|n| n.cost).collect();
        let before_opt: Vec<OptState> = t.nodes().iter().map(|n| n.opt.clone()).collect();
        let old_parent = t.nodes()[target].parent;

        // brute-force choose-parent over the same candidates
        let nodes = t.nodes();
        let mut best = before_cost[target];
        for &c in &near {
            if c == target || t.is_ancestor(target, c) || !edge_ok(&nodes[c].q, &q_t) {
                continue;
            }
            best = best.min(nodes[c].cost + nodes[c].q.distance(&q_t));
        }

        let r = t.rrt_star_rewire(target, &near, edge_ok).map_err(|e| e.to_string())?;
        let nodes = t.nodes();
        if (nodes[target].cost - best).abs() > 1e-9 {
            return Err(format!(
                "op {op}: choose-parent cost {} but brute force finds {best}",
                nodes[target].cost
            ));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.cost > before_cost[i] + 1e-12 {
                return Err(format!("op {op}: node {i} cost rose {} -> {}", before_cost[i], n.cost));
            }
            if n.opt != before_opt[i] {
                return Err(format!("op {op}: node {i} optimizer state changed"));
            }
        }
        stats.reparented += r.reparented.len();
        if Some(r.parent) != old_parent {
            stats.parent_changes += 1;
        }
        if op % 500 == 499 || op + 1 == ops {
            check_structure(&t).map_err(|e| format!("op {op}: {e}"))?;
        }
    }
    stats.nodes = t.len();
    Ok(stats)
}

/// Independent Adam on a fixed gradient oracle, clamped to joint limits.
pub fn reference_adam(
    model: &RobotModel,
    start: &Configuration,
    steps: usize,
    params: &PlannerParams,
    grad: impl Fn(&Configuration) -> Vec<f64>,
) -> Vec<Configuration> {
    let d = start.dim();
    let (mut m, mut v) = (vec![0.0; d], vec![0.0; d]);
    let mut x = start.clone();
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = grad(&x);
        let mut next = x.0.clone();
        for j in 0..d {
            m[j] = params.beta1 * m[j] + (1.0 - params.beta1) * g[j];
            v[j] = params.beta2 * v[j] + (1.0 - params.beta2) * g[j] * g[j];
            let mh = m[j] / (1.0 - params.beta1.powi(t as i32));
            let vh = v[j] / (1.0 - params.beta2.powi(t as i32));
            next[j] = (x.0[j] - params.alpha * mh / (vh.sqrt() + params.delta))
                .clamp(model.joint_lower()[j], model.joint_upper()[j]);
        }
        x = Configuration::new(next);
        out.push(x.clone());
    }
    out
}

pub struct ChainReport {
    pub steps: usize,
    pub max_abs_err: f64,
    pub monotone: bool,
}

/// Greedy exploit reduction: with r=0, η=1, κ=0, batch=1, no rewiring and
/// an empty scene, the inserted nodes must be exactly a plain Adam descent.
/// The reduction needs every Adam step to lower the loss (otherwise the best
/// node stays put); `monotone` reports that precondition.
pub fn adam_chain_check(steps: usize) -> ChainReport {
    let model = RobotModel::uniform(3, 0.45, PI, 6);
    let start = q(&[0.0, 0.0, 0.0]);
    let problem = visual_problem(model.clone(), start.clone(), &q(&[0.35, -0.25, 0.3]));
    let params = PlannerParams {
        explore_ratio: 0.0,
        frontier_ratio: 1.0,
        kappa: 0.0,
        batch: 1,
        rewire: false,
        alpha: 0.001,
        ..Default::default()
    };
    let reference = reference_adam(&model, &start, steps, &params, |x| {
        problem.loss_grad(x).unwrap().grad.as_slice().to_vec()
    });
    let mut losses = vec![problem.loss(&start).unwrap()];
    losses.extend(reference.iter().map(|x| problem.loss(x).unwrap()));
    let monotone = losses.windows(2).all(|w| w[1] < w[0]);

    let mut planner = Vrrt::new(&problem, &params).unwrap();
    let mut max_abs_err: f64 = 0.0;
    for (k, expected) in reference.iter().enumerate() {
        let ids = planner.expand_iteration().unwrap();
        if ids.len() != 1 {
            return ChainReport {
                steps: k,
                max_abs_err: f64::INFINITY,
                monotone,
            };
        }
        let node = &planner.tree().nodes()[ids[0]];
        if node.parent != Some(ids[0] - 1) {
            max_abs_err = f64::INFINITY;
        }
        for (a, b) in node.q.0.iter().zip(&expected.0) {
            max_abs_err = max_abs_err.max((a - b).abs());
        }
    }
    ChainReport {
        steps,
        max_abs_err,
        monotone,
    }
}
