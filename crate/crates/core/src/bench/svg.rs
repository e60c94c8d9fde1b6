use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::collision::Scene;
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};
use crate::tree::SearchTree;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvgMode {
    /// Arm poses along the paths, drawn over the obstacles.
    Workspace,
    /// Tree nodes projected on the top two principal components.
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorBy {
    /// Highlight the given frontier ids.
    Frontier,
    /// Shade by the number of inherited optimizer steps.
    OptSteps,
}

/// Projection onto two orthonormal axes through the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    /// True when the data spans fewer than two directions and the axes fell
    /// back to the first coordinates.
    pub degenerate: bool,
}

impl Projection {
    pub fn project(&self, q: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (o, axis) in out.iter_mut().zip(&self.axes) {
            *o = q.iter().zip(&self.mean).zip(axis).map(|((x, m), a)| (x - m) * a).sum();
        }
        out
    }
}

/// Principal axes of `points` (rows). Falls back to the first two
/// coordinate axes when the covariance has rank below two.
pub fn pca_2d(points: &[&[f64]]) -> Result<Projection> {
    let n = points.len();
    let d = points.first().map(|p| p.len()).ok_or(Error::EmptyTree)?;
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: points.iter().map(|p| p.len()).max().unwrap_or(0) });
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(*p) {
            *m += x / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in points {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    cov /= n.max(1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > 1e-12 * top.max(1e-300))
        .count();
    let unit = |k: usize| -> Vec<f64> { (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    if rank < 2 || d < 2 {
        return Ok(Projection {
            mean,
            axes: [unit(0), if d > 1 { unit(1) } else { vec![0.0; d] }],
            degenerate: true,
        });
    }
    let axis = |k: usize| -> Vec<f64> { eig.eigenvectors.column(order[k]).iter().copied().collect() };
    Ok(Projection {
        mean,
        axes: [axis(0), axis(1)],
        degenerate: false,
    })
}

/// Maps data coordinates into the square drawing area, y up.
struct Frame {
    min: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        if !min[0].is_finite() {
            return Frame { min: [0.0, 0.0], scale: 1.0 };
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1e-9);
        Frame {
            min,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, width: f64) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
        coords.join(" ")
    );
}

/// Tree nodes and edges in the PCA plane of the node configurations.
/// Returns the document and whether the projection was degenerate.
pub fn tree_pca_svg(
    tree: &SearchTree,
    color_by: ColorBy,
    frontier: &[usize],
    paths: &[Vec<Configuration>],
) -> Result<(String, bool)> {
    let coords: Vec<&[f64]> = tree.nodes().iter().map(|n| n.q.as_slice()).collect();
    let proj = pca_2d(&coords)?;
    if proj.degenerate {
        log::warn!("tree configurations span fewer than two directions; plotting the first two joints");
    }
    let pts: Vec<[f64; 2]> = coords.iter().map(|q| proj.project(q)).collect();
    let frame = Frame::fit(pts.iter().copied());
    let max_i = tree.nodes().iter().map(|n| n.opt.i).max().unwrap_or(0).max(1);
    let mut out = String::new();
    header(&mut out);
    for n in tree.nodes() {
        if let Some(p) = n.parent {
            let (x1, y1) = frame.map(pts[p]);
            let (x2, y2) = frame.map(pts[n.id]);
            let _ = writeln!(
                out,
                r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#bbbbbb" stroke-width="0.5"/>"##
            );
        }
    }
    for n in tree.nodes() {
        let (x, y) = frame.map(pts[n.id]);
        let color = match color_by {
            ColorBy::Frontier if frontier.contains(&n.id) => "#d62728".to_string(),
            ColorBy::Frontier => "#1f77b4".to_string(),
            ColorBy::OptSteps => {
                let t = n.opt.i as f64 / max_i as f64;
                format!("rgb({},{},{})", (255.0 * t) as u8, 64, (255.0 * (1.0 - t)) as u8)
            }
        };
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.8" fill="{color}"/>"#);
    }
    for path in paths {
        let mapped: Vec<(f64, f64)> = path.iter().map(|q| frame.map(proj.project(q.as_slice()))).collect();
        polyline(&mut out, &mapped, "#2ca02c", 2.0);
    }
    out.push_str("</svg>\n");
    Ok((out, proj.degenerate))
}

/// Obstacles plus the arm drawn at up to `poses` evenly spaced
/// configurations of each path.
pub fn workspace_svg(
    model: &RobotModel,
    scene: &Scene,
    paths: &[Vec<Configuration>],
    poses: usize,
) -> Result<String> {
    let ws = scene.workspace;
    let frame = Frame::fit([ws.min, ws.max].into_iter());
    let mut out = String::new();
    header(&mut out);
    let (x0, y0) = frame.map([ws.min[0], ws.max[1]]);
    let (x1, y1) = frame.map([ws.max[0], ws.min[1]]);
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    for o in &scene.obstacles {
        let (x0, y0) = frame.map([o.min[0], o.max[1]]);
        let (x1, y1) = frame.map([o.max[0], o.min[1]]);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#555555"/>"##,
            x1 - x0,
            y1 - y0
        );
    }
    for path in paths {
        if path.is_empty() {
            continue;
        }
        let k = poses.clamp(1, path.len());
        for s in 0..k {
            let idx = if k == 1 { path.len() - 1 } else { s * (path.len() - 1) / (k - 1) };
            let skel = model.forward_kinematics(&path[idx])?;
            let pts: Vec<(f64, f64)> = skel.frames().iter().map(|p| frame.map(*p)).collect();
            let t = if k == 1 { 1.0 } else { s as f64 / (k - 1) as f64 };
            let color = format!("rgb({},{},{})", (200.0 * t) as u8, 80, (200.0 * (1.0 - t)) as u8);
            polyline(&mut out, &pts, &color, 2.0);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Either view of a planning run.
pub fn export_tree_svg(
    mode: SvgMode,
    tree: &SearchTree,
    model: &RobotModel,
    scene: &Scene,
    frontier: &[usize],
    color_by: ColorBy,
    paths: &[Vec<Configuration>],
) -> Result<String> {
    match mode {
        SvgMode::Pca => Ok(tree_pca_svg(tree, color_by, frontier, paths)?.0),
        SvgMode::Workspace => workspace_svg(model, scene, paths, 8),
    }
}
