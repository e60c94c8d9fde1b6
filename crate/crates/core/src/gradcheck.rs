//! Finite-difference check of the analytic render-loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kinematics::{Configuration, RobotModel};
use crate::renderer::{render, render_loss, render_loss_grad, Camera, RenderParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub cases: usize,
    pub width: usize,
    pub height: usize,
    /// Central-difference step (rad).
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            cases: 100,
            width: 64,
            height: 64,
            step: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub dof: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `max_j |a_j - n_j| / max(max_j |n_j|, 1e-8)`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub cases: Vec<CaseReport>,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// Central differences of the render loss in every joint.
pub fn numeric_gradient(
    model: &RobotModel,
    q: &Configuration,
    goal: &crate::renderer::Image,
    cam: &Camera,
    params: &RenderParams,
    h: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(q.dim());
    for j in 0..q.dim() {
        let mut plus = q.clone();
        let mut minus = q.clone();
        plus.0[j] += h;
        minus.0[j] -= h;
        let lp = render_loss(model, &plus, goal, cam, params)?;
        let lm = render_loss(model, &minus, goal, cam, params)?;
        out.push((lp - lm) / (2.0 * h));
    }
    Ok(out)
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Random arm, random pose, and a goal rendered from a nearby pose so that
/// the residual overlaps the arm.
fn random_case<R: Rng + ?Sized>(rng: &mut R) -> (RobotModel, Configuration, Configuration) {
    let dof = rng.random_range(2..=6);
    let lengths: Vec<f64> = (0..dof).map(|_| rng.random_range(0.2..0.6)).collect();
    let blobs = rng.random_range(2..=8);
    let model = RobotModel::new(
        lengths,
        vec![-std::f64::consts::PI; dof],
        vec![std::f64::consts::PI; dof],
        blobs,
    )
    .expect("valid random model");
    let q = Configuration::new((0..dof).map(|_| rng.random_range(-2.5..2.5)).collect());
    let goal = Configuration::new(q.0.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect());
    (model, q, goal)
}

pub fn run(config: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = RenderParams::default();
    let mut cases = Vec::with_capacity(config.cases);
    for _ in 0..config.cases {
        let (model, q, goal_q) = random_case(&mut rng);
        let cam = Camera::for_model(&model, config.width, config.height)?;
        let goal = render(&model, &goal_q, &cam, &params)?;
        let analytic = render_loss_grad(&model, &q, &goal, &cam, &params)?.grad;
        let numeric = numeric_gradient(&model, &q, &goal, &cam, &params, config.step)?;
        cases.push(CaseReport {
            dof: model.dof(),
            rel_error: relative_error(&analytic, &numeric),
            analytic,
            numeric,
        });
    }
    let max_rel_error = cases.iter().fold(0.0f64, |m, c| m.max(c.rel_error));
    let mean_rel_error = if cases.is_empty() {
        0.0
    } else {
        cases.iter().map(|c| c.rel_error).sum::<f64>() / cases.len() as f64
    };
    Ok(GradcheckReport {
        cases,
        max_rel_error,
        mean_rel_error,
    })
}
