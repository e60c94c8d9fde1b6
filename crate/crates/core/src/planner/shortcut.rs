use rand::Rng;

use crate::collision::Scene;
use crate::kinematics::{Configuration, RobotModel};

/// Sum of joint-space segment lengths.
pub fn path_length(path: &[Configuration]) -> f64 {
    path.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Random shortcutting: pick `i < j`, and if the straight edge between them
/// is collision-free and no longer than the sub-path it replaces, splice it
/// in. Endpoints never move.
pub fn shortcut_path<R: Rng + ?Sized>(
    path: &[Configuration],
    scene: &Scene,
    model: &RobotModel,
    resolution: f64,
    attempts: usize,
    rng: &mut R,
) -> Vec<Configuration> {
    let mut path = path.to_vec();
    for _ in 0..attempts {
        if path.len() < 3 {
            break;
        }
        let a = rng.random_range(0..path.len());
        let b = rng.random_range(0..path.len());
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if j - i < 2 {
            continue;
        }
        let direct = path[i].distance(&path[j]);
        if direct > path_length(&path[i..=j]) {
            continue;
        }
        if scene.edge_collision_free(model, &path[i], &path[j], resolution) {
            path.drain(i + 1..j);
        }
    }
    path
}
