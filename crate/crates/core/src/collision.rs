//! Box obstacles in the plane and feasibility checks for configurations and
//! straight joint-space edges. Links are zero-width segments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};

/// Default joint-space spacing for edge checks, radians.
pub const DEFAULT_EDGE_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let b = Aabb { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn from_center(center: [f64; 2], size: [f64; 2]) -> Result<Self> {
        Aabb::new(
            [center[0] - size[0] / 2.0, center[1] - size[1] / 2.0],
            [center[0] + size[0] / 2.0, center[1] + size[1] / 2.0],
        )
    }

    fn validate(&self) -> Result<()> {
        for axis in 0..2 {
            if !(self.min[axis].is_finite() && self.max[axis].is_finite()) {
                return Err(Error::NonFinite("box corner"));
            }
            if self.min[axis] >= self.max[axis] {
                return Err(Error::InvalidParam(format!(
                    "box min {:?} is not below max {:?}",
                    self.min, self.max
                )));
            }
        }
        Ok(())
    }

    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains_point(other.min) && self.contains_point(other.max)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min[0] <= other.max[0]
            && other.min[0] <= self.max[0]
            && self.min[1] <= other.max[1]
            && other.min[1] <= self.max[1]
    }

    /// Closed segment vs closed box, slab method.
    pub fn intersects_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for axis in 0..2 {
            let d = b[axis] - a[axis];
            if d.abs() < 1e-15 {
                if a[axis] < self.min[axis] || a[axis] > self.max[axis] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut tn = (self.min[axis] - a[axis]) * inv;
            let mut tf = (self.max[axis] - a[axis]) * inv;
            if tn > tf {
                std::mem::swap(&mut tn, &mut tf);
            }
            t0 = t0.max(tn);
            t1 = t1.min(tf);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub workspace: Aabb,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
}

impl Scene {
    pub fn new(workspace: Aabb, obstacles: Vec<Aabb>) -> Result<Self> {
        let scene = Scene {
            workspace,
            obstacles,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Obstacle-free scene whose workspace is the square `[-half, half]^2`.
    pub fn empty(half_extent: f64) -> Self {
        Scene {
            workspace: Aabb {
                min: [-half_extent, -half_extent],
                max: [half_extent, half_extent],
            },
            obstacles: Vec::new(),
        }
    }

    /// Obstacle-free scene large enough for the whole arm.
    pub fn empty_for(model: &RobotModel) -> Self {
        Scene::empty(1.1 * model.reach())
    }

    pub fn validate(&self) -> Result<()> {
        self.workspace.validate()?;
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate()?;
            if !self.workspace.contains_box(o) {
                return Err(Error::InvalidParam(format!("obstacle {i} leaves the workspace")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Scene = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        scene.validate().map_err(|e| Error::parse(path, e))?;
        Ok(scene)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// True if any link segment touches an obstacle or any joint frame lies
    /// outside the workspace.
    pub fn config_in_collision(&self, model: &RobotModel, q: &Configuration) -> bool {
        let Ok(skel) = model.forward_kinematics(q) else {
            return true;
        };
        let frames = skel.frames();
        if frames.iter().any(|p| !self.workspace.contains_point(*p)) {
            return true;
        }
        frames.windows(2).any(|seg| {
            self.obstacles
                .iter()
                .any(|o| o.intersects_segment(seg[0], seg[1]))
        })
    }

    /// True if every sample along the straight joint-space segment from `q1`
    /// to `q2` is within joint limits and collision-free.
    ///
    /// The segment is split into a power-of-two number of pieces no longer
    /// than `resolution`, so halving the resolution only adds samples. The
    /// endpoints are put in a canonical order first, which makes the result
    /// exactly symmetric in its arguments.
    pub fn edge_collision_free(
        &self,
        model: &RobotModel,
        q1: &Configuration,
        q2: &Configuration,
        resolution: f64,
    ) -> bool {
        debug_assert!(resolution > 0.0);
        if !(model.within_limits(q1) && model.within_limits(q2)) {
            return false;
        }
        let (a, b) = if lexicographic_le(q1, q2) { (q1, q2) } else { (q2, q1) };
        let len = a.distance(b);
        let resolution = resolution.max(1e-12);
        let mut pieces: u64 = 1;
        while len / pieces as f64 > resolution {
            pieces *= 2;
        }
        (0..=pieces).all(|k| {
            let q = a.lerp(b, k as f64 / pieces as f64);
            !self.config_in_collision(model, &q)
        })
    }

    /// Valid start/goal: within limits and collision-free.
    pub fn config_feasible(&self, model: &RobotModel, q: &Configuration) -> bool {
        model.within_limits(q) && !self.config_in_collision(model, q)
    }
}

fn lexicographic_le(a: &Configuration, b: &Configuration) -> bool {
    for (x, y) in a.0.iter().zip(&b.0) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}
