//! Visual-goal motion planning for planar serial manipulators.
//!
//! The planner grows an RRT*-style tree in joint space and biases growth with
//! the gradient of an image loss between a rendered pose and a goal image.
//! Each gradient-steered node carries optimizer moments inherited from its
//! parent, so every branch follows its own momentum-consistent descent.
//!
//! Module map:
//! - [`kinematics`]: planar arm model, forward kinematics, Jacobians, sampling
//! - [`renderer`]: differentiable Gaussian-blob rasterizer, loss, gradient, PSNR, PGM I/O
//! - [`collision`]: box obstacles and configuration/edge feasibility
//! - [`tree`]: search tree with choose-parent and rewiring
//! - [`frontier`]: loss-ranked frontier and rank sampling
//! - [`optimizer`]: per-node optimizer states (Adam and alternatives)
//! - [`planner`]: the visual RRT main loop and path shortcutting
//! - [`baselines`]: gradient-only, two-stage, RRT and RRT* planners
//! - [`bench`]: dataset generation, metrics, benchmark runner, SVG export
//! - [`cli`]: the `vrrt` command-line front end

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod collision;
mod error;
pub mod frontier;
pub mod gradcheck;
pub mod kinematics;
pub mod optimizer;
pub mod planner;
pub mod renderer;
pub mod tree;

pub use error::{Error, Result};
pub use kinematics::{Configuration, RobotModel};
