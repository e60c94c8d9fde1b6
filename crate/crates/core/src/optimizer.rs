//! Per-node optimizer states for gradient-steered tree expansion.
//!
//! A child created by a gradient step copies its parent's state, advances it
//! with the gradient evaluated at the parent, and stores the result. Chains
//! of such children therefore reproduce a single optimizer trajectory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Adam,
    /// Plain `q - alpha * g`.
    Naive,
    /// Polyak momentum with coefficient `mu`; velocity kept in `m`.
    Momentum,
    Adagrad,
    Rmsprop,
    Lion,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Adam,
        Strategy::Naive,
        Strategy::Momentum,
        Strategy::Adagrad,
        Strategy::Rmsprop,
        Strategy::Lion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Adam => "adam",
            Strategy::Naive => "naive",
            Strategy::Momentum => "momentum",
            Strategy::Adagrad => "adagrad",
            Strategy::Rmsprop => "rmsprop",
            Strategy::Lion => "lion",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::InvalidParam(format!(
                    "unknown optimizer {s:?} (expected adam|naive|momentum|adagrad|rmsprop|lion)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub strategy: Strategy,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    pub mu: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            strategy: Strategy::Adam,
            alpha: 0.04,
            beta1: 0.9,
            beta2: 0.9,
            delta: 1e-8,
            mu: 0.9,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!("{name} = {v} must lie in [0, 1)")))
            }
        };
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParam(format!("alpha = {} must be positive", self.alpha)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidParam(format!("delta = {} must be positive", self.delta)));
        }
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("mu", self.mu)
    }
}

/// Optimizer memory carried by a tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub strategy: Strategy,
    /// First moment (Adam, Lion) or velocity (momentum).
    pub m: Vec<f64>,
    /// Second moment / accumulated squared gradients. Entrywise non-negative.
    pub v: Vec<f64>,
    /// Number of gradient steps taken along the branch.
    pub i: u64,
}

impl OptState {
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

pub fn fresh_state(strategy: Strategy, d: usize) -> OptState {
    OptState {
        strategy,
        m: vec![0.0; d],
        v: vec![0.0; d],
        i: 0,
    }
}

/// One inherited optimizer step from `q` using the gradient at `q`.
/// The new configuration is clamped to the model's joint limits.
pub fn step(
    params: &OptimizerParams,
    model: &RobotModel,
    q: &Configuration,
    grad: &[f64],
    state: &OptState,
) -> Result<(Configuration, OptState)> {
    let d = q.dim();
    if grad.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: grad.len(),
        });
    }
    if state.m.len() != d || state.v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: state.m.len(),
        });
    }
    if state.strategy != params.strategy {
        return Err(Error::InvalidParam(format!(
            "state was produced by {} but the step uses {}",
            state.strategy, params.strategy
        )));
    }
    if !q.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("optimizer input"));
    }

    let alpha = params.alpha;
    let mut next = OptState {
        strategy: state.strategy,
        m: state.m.clone(),
        v: state.v.clone(),
        i: state.i + 1,
    };
    let mut out = q.clone();
    match params.strategy {
        Strategy::Adam => {
            let (b1, b2) = (params.beta1, params.beta2);
            let t = next.i as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for j in 0..d {
                let g = grad[j];
                next.m[j] = b1 * state.m[j] + (1.0 - b1) * g;
                next.v[j] = b2 * state.v[j] + (1.0 - b2) * g * g;
                let m_hat = next.m[j] / c1;
                let v_hat = next.v[j] / c2;
                out.0[j] -= alpha * m_hat / (v_hat.sqrt() + params.delta);
            }
        }
        Strategy::Naive => {
            for j in 0..d {
                out.0[j] -= alpha * grad[j];
            }
        }
        Strategy::Momentum => {
            let mu = params.mu;
            for j in 0..d {
                next.m[j] = mu * state.m[j] + (1.0 - mu) * grad[j];
                out.0[j] -= alpha * next.m[j];
            }
        }
        Strategy::Adagrad => {
            for j in 0..d {
                next.v[j] = state.v[j] + grad[j] * grad[j];
                out.0[j] -= alpha * grad[j] / (next.v[j].sqrt() + params.delta);
            }
        }
        Strategy::Rmsprop => {
            let b2 = params.beta2;
            for j in 0..d {
                next.v[j] = b2 * state.v[j] + (1.0 - b2) * grad[j] * grad[j];
                out.0[j] -= alpha * grad[j] / (next.v[j].sqrt() + params.delta);
            }
        }
        Strategy::Lion => {
            let (b1, b2) = (params.beta1, params.beta2);
            for j in 0..d {
                let c = b1 * state.m[j] + (1.0 - b1) * grad[j];
                out.0[j] -= alpha * sign(c);
                next.m[j] = b2 * state.m[j] + (1.0 - b2) * grad[j];
            }
        }
    }
    model.clamp(&mut out);
    Ok((out, next))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
