//! Planar N-link serial arm.
//!
//! Joint space is treated as an axis-aligned box (no angle wrap-around) and
//! distances between configurations are plain Euclidean norms.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in joint space, radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<f64>);

impl Configuration {
    pub fn new(joints: Vec<f64>) -> Self {
        Configuration(joints)
    }

    pub fn zeros(d: usize) -> Self {
        Configuration(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Configuration) -> f64 {
        distance(&self.0, &other.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `self + t * (other - self)`.
    pub fn lerp(&self, other: &Configuration, t: f64) -> Configuration {
        Configuration(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for Configuration {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for Configuration {
    fn from(v: Vec<f64>) -> Self {
        Configuration(v)
    }
}

/// Euclidean distance between two joint vectors of equal length.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotFile", into = "RobotFile")]
pub struct RobotModel {
    link_lengths: Vec<f64>,
    joint_lower: Vec<f64>,
    joint_upper: Vec<f64>,
    blobs_per_link: usize,
}

/// On-disk schema: `link_lengths`, `joint_limits` (one `[lower, upper]` pair
/// per joint) and `blobs_per_link`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    link_lengths: Vec<f64>,
    joint_limits: Vec<[f64; 2]>,
    blobs_per_link: usize,
}

impl TryFrom<RobotFile> for RobotModel {
    type Error = Error;
    fn try_from(f: RobotFile) -> Result<Self> {
        let (lower, upper) = f.joint_limits.iter().map(|l| (l[0], l[1])).unzip();
        RobotModel::new(f.link_lengths, lower, upper, f.blobs_per_link)
    }
}

impl From<RobotModel> for RobotFile {
    fn from(m: RobotModel) -> Self {
        RobotFile {
            joint_limits: m
                .joint_lower
                .iter()
                .zip(&m.joint_upper)
                .map(|(&l, &u)| [l, u])
                .collect(),
            link_lengths: m.link_lengths,
            blobs_per_link: m.blobs_per_link,
        }
    }
}

impl Default for RobotModel {
    /// Desk-scale arm: five links of length 0.4, limits of ±π, eight blobs per link.
    fn default() -> Self {
        RobotModel::uniform(5, 0.4, PI, 8)
    }
}

impl RobotModel {
    pub fn new(
        link_lengths: Vec<f64>,
        joint_lower: Vec<f64>,
        joint_upper: Vec<f64>,
        blobs_per_link: usize,
    ) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(Error::InvalidModel("no links".into()));
        }
        if joint_lower.len() != link_lengths.len() || joint_upper.len() != link_lengths.len() {
            return Err(Error::InvalidModel(format!(
                "{} links but {} lower / {} upper limits",
                link_lengths.len(),
                joint_lower.len(),
                joint_upper.len()
            )));
        }
        if let Some(l) = link_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidModel(format!("link length {l} is not positive")));
        }
        for (i, (lo, hi)) in joint_lower.iter().zip(&joint_upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidModel(format!(
                    "joint {i}: limits [{lo}, {hi}] are not an interval"
                )));
            }
        }
        if blobs_per_link == 0 {
            return Err(Error::InvalidModel("blobs_per_link must be at least 1".into()));
        }
        Ok(RobotModel {
            link_lengths,
            joint_lower,
            joint_upper,
            blobs_per_link,
        })
    }

    /// `n` identical links with symmetric limits `±limit`.
    pub fn uniform(n: usize, length: f64, limit: f64, blobs_per_link: usize) -> Self {
        RobotModel::new(
            vec![length; n],
            vec![-limit; n],
            vec![limit; n],
            blobs_per_link,
        )
        .expect("uniform robot parameters are valid")
    }

    /// Builds a model without the `lower < upper` check. Used to express
    /// degenerate sampling boxes.
    #[doc(hidden)]
    pub fn with_limits_unchecked(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), self.dof());
        assert_eq!(upper.len(), self.dof());
        self.joint_lower = lower;
        self.joint_upper = upper;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Degrees of freedom.
    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn joint_lower(&self) -> &[f64] {
        &self.joint_lower
    }

    pub fn joint_upper(&self) -> &[f64] {
        &self.joint_upper
    }

    pub fn blobs_per_link(&self) -> usize {
        self.blobs_per_link
    }

    /// Total arm length.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn check_dim(&self, q: &Configuration) -> Result<()> {
        if q.dim() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                got: q.dim(),
            });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &Configuration) -> bool {
        q.dim() == self.dof()
            && q.0
                .iter()
                .zip(self.joint_lower.iter().zip(&self.joint_upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn clamp(&self, q: &mut Configuration) {
        for (x, (lo, hi)) in q.0.iter_mut().zip(self.joint_lower.iter().zip(&self.joint_upper)) {
            *x = x.max(*lo).min(*hi);
        }
    }

    pub fn forward_kinematics(&self, q: &Configuration) -> Result<SkeletonPoints> {
        self.check_dim(q)?;
        let d = self.dof();
        let b = self.blobs_per_link;
        let mut points = Vec::with_capacity(d + 1 + d * b);
        let mut blobs = Vec::with_capacity(d * b);
        let (mut x, mut y, mut theta) = (0.0f64, 0.0f64, 0.0f64);
        points.push([x, y]);
        for (len, angle) in self.link_lengths.iter().zip(&q.0) {
            theta += angle;
            let (s, c) = theta.sin_cos();
            for k in 1..=b {
                let t = len * k as f64 / b as f64;
                blobs.push([x + t * c, y + t * s]);
            }
            x += len * c;
            y += len * s;
            points.push([x, y]);
        }
        points.extend(blobs);
        Ok(SkeletonPoints {
            points,
            dof: d,
            blobs_per_link: b,
        })
    }

    /// Partial derivatives of every skeleton point with respect to every joint.
    pub fn fk_jacobian(&self, q: &Configuration) -> Result<SkeletonJacobian> {
        let skel = self.forward_kinematics(q)?;
        Ok(SkeletonJacobian::from_skeleton(&skel))
    }

    /// Each joint uniform on its limits.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        Configuration(
            self.joint_lower
                .iter()
                .zip(&self.joint_upper)
                .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
        )
    }

    /// `center + u` with `u` uniform in the `d`-ball of radius `rho`, clamped
    /// to joint limits.
    pub fn sample_ball<R: Rng + ?Sized>(
        &self,
        center: &Configuration,
        rho: f64,
        rng: &mut R,
    ) -> Configuration {
        let u = ball_offset(center.dim(), rho, rng);
        let mut q = Configuration(center.0.iter().zip(&u).map(|(c, o)| c + o).collect());
        self.clamp(&mut q);
        q
    }
}

/// Uniform sample from the `d`-ball of radius `rho` centred at the origin:
/// Gaussian direction, radius `rho * U^(1/d)`.
pub fn ball_offset<R: Rng + ?Sized>(d: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    if d == 0 || rho <= 0.0 {
        return vec![0.0; d];
    }
    loop {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let radius = rho * rng.random::<f64>().powf(1.0 / d as f64);
        return dir.into_iter().map(|x| x / norm * radius).collect();
    }
}

/// Joint frames (base first, then the end of each link) followed by the blob
/// centres of every link in order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonPoints {
    points: Vec<[f64; 2]>,
    dof: usize,
    blobs_per_link: usize,
}

impl SkeletonPoints {
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn frames(&self) -> &[[f64; 2]] {
        &self.points[..=self.dof]
    }

    pub fn blobs(&self) -> &[[f64; 2]] {
        &self.points[self.dof + 1..]
    }

    pub fn end_effector(&self) -> [f64; 2] {
        self.points[self.dof]
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// Number of leading joints that move point `k`.
    fn driving_joints(&self, k: usize) -> usize {
        if k <= self.dof {
            k
        } else {
            (k - self.dof - 1) / self.blobs_per_link + 1
        }
    }
}

/// Per-point 2×d blocks of partial derivatives.
#[derive(Debug, Clone)]
pub struct SkeletonJacobian {
    dof: usize,
    // per point: d entries of d/dq for x, then d entries for y
    data: Vec<f64>,
}

impl SkeletonJacobian {
    pub(crate) fn from_skeleton(skel: &SkeletonPoints) -> Self {
        let d = skel.dof;
        let frames = skel.frames();
        let mut data = vec![0.0; skel.points.len() * 2 * d];
        for (k, p) in skel.points.iter().enumerate() {
            let row = &mut data[k * 2 * d..(k + 1) * 2 * d];
            for j in 0..skel.driving_joints(k) {
                let pivot = frames[j];
                row[j] = -(p[1] - pivot[1]);
                row[d + j] = p[0] - pivot[0];
            }
        }
        SkeletonJacobian { dof: d, data }
    }

    pub fn num_points(&self) -> usize {
        self.data.len() / (2 * self.dof)
    }

    /// d(x_k)/dq
    pub fn dx(&self, k: usize) -> &[f64] {
        let d = self.dof;
        &self.data[k * 2 * d..k * 2 * d + d]
    }

    /// d(y_k)/dq
    pub fn dy(&self, k: usize) -> &[f64] {
        let d = self.dof;
        &self.data[k * 2 * d + d..(k + 1) * 2 * d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn one_link_zero_angle() {
        let m = RobotModel::uniform(1, 1.0, PI, 4);
        let s = m.forward_kinematics(&Configuration::zeros(1)).unwrap();
        assert!(close(s.end_effector(), [1.0, 0.0]));
        assert_eq!(s.points().len(), 2 + 4);
    }

    #[test]
    fn two_link_quarter_turn() {
        let m = RobotModel::uniform(2, 1.0, PI, 2);
        let s = m
            .forward_kinematics(&Configuration::new(vec![PI / 2.0, 0.0]))
            .unwrap();
        assert!(close(s.frames()[1], [0.0, 1.0]));
        assert!(close(s.frames()[2], [0.0, 2.0]));
        // blob centres: half and full length of each link
        assert!(close(s.blobs()[0], [0.0, 0.5]));
        assert!(close(s.blobs()[1], [0.0, 1.0]));
        assert!(close(s.blobs()[3], [0.0, 2.0]));
    }

    #[test]
    fn zero_configuration_is_collinear() {
        let m = RobotModel::default();
        let s = m.forward_kinematics(&Configuration::zeros(5)).unwrap();
        assert_eq!(s.points().len(), 6 + 5 * 8);
        assert_eq!(s.points()[0], [0.0, 0.0]);
        for p in s.points() {
            assert_eq!(p[1], 0.0);
            assert!(p[0] >= 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = RobotModel::default();
        assert!(matches!(
            m.forward_kinematics(&Configuration::zeros(3)),
            Err(Error::DimensionMismatch { expected: 5, got: 3 })
        ));
        assert!(m.fk_jacobian(&Configuration::zeros(6)).is_err());
    }

    #[test]
    fn one_link_jacobian() {
        let m = RobotModel::uniform(1, 1.0, PI, 1);
        let j = m.fk_jacobian(&Configuration::zeros(1)).unwrap();
        // point 1 is the end effector
        assert_eq!(j.dx(1), &[0.0]);
        assert_eq!(j.dy(1), &[1.0]);
        // base is fixed
        assert_eq!(j.dx(0), &[0.0]);
        assert_eq!(j.dy(0), &[0.0]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for case in 0..120 {
            let d = 1 + case % 6;
            let lengths: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
            let m = RobotModel::new(lengths, vec![-PI; d], vec![PI; d], 1 + case % 4).unwrap();
            let q = m.sample_uniform(&mut rng);
            let jac = m.fk_jacobian(&q).unwrap();
            let mut max_err = 0.0f64;
            let mut scale = 0.0f64;
            for j in 0..d {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp.0[j] += h;
                qm.0[j] -= h;
                let sp = m.forward_kinematics(&qp).unwrap();
                let sm = m.forward_kinematics(&qm).unwrap();
                for k in 0..jac.num_points() {
                    let fx = (sp.points()[k][0] - sm.points()[k][0]) / (2.0 * h);
                    let fy = (sp.points()[k][1] - sm.points()[k][1]) / (2.0 * h);
                    max_err = max_err.max((fx - jac.dx(k)[j]).abs());
                    max_err = max_err.max((fy - jac.dy(k)[j]).abs());
                    scale = scale.max(fx.abs()).max(fy.abs());
                }
            }
            assert!(max_err <= 1e-6 * scale.max(1.0), "case {case}: {max_err}");
        }
    }

    #[test]
    fn degenerate_limits_sample_to_the_point() {
        let m = RobotModel::uniform(3, 0.4, PI, 2).with_limits_unchecked(vec![0.0; 3], vec![0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(m.sample_uniform(&mut rng), Configuration::zeros(3));
    }

    #[test]
    fn uniform_sampling_mean_is_midpoint() {
        let m = RobotModel::new(vec![1.0; 2], vec![-1.0, 0.5], vec![3.0, 0.7], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let q = m.sample_uniform(&mut rng);
            assert!(m.within_limits(&q));
            sum[0] += q[0];
            sum[1] += q[1];
        }
        for j in 0..2 {
            let (lo, hi) = (m.joint_lower()[j], m.joint_upper()[j]);
            let sigma = (hi - lo) / 12f64.sqrt() / (n as f64).sqrt();
            let mean = sum[j] / n as f64;
            assert!((mean - (lo + hi) / 2.0).abs() < 3.0 * sigma, "joint {j}: {mean}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = RobotModel::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| {
                    let c = m.sample_uniform(&mut rng);
                    m.sample_ball(&c, 0.7, &mut rng)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn zero_radius_ball_returns_center() {
        let m = RobotModel::default();
        let c = Configuration::new(vec![0.1, -0.2, 0.3, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.sample_ball(&c, 0.0, &mut rng), c);
    }

    #[test]
    fn ball_area_ratio_in_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let rho = 0.7;
        let mut inner = 0usize;
        for _ in 0..n {
            let u = ball_offset(2, rho, &mut rng);
            let r = (u[0] * u[0] + u[1] * u[1]).sqrt();
            assert!(r <= rho);
            if r <= rho / 2.0 {
                inner += 1;
            }
        }
        let p = inner as f64 / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((p - 0.25).abs() < 3.0 * sigma, "{p}");
    }

    #[test]
    fn ball_radial_cdf_matches_power_law() {
        for d in [1usize, 3, 5] {
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            let n = 100_000;
            let mut radii: Vec<f64> = (0..n)
                .map(|_| {
                    let u = ball_offset(d, 1.0, &mut rng);
                    u.iter().map(|x| x * x).sum::<f64>().sqrt()
                })
                .collect();
            radii.sort_by(f64::total_cmp);
            let mut ks = 0.0f64;
            for (i, r) in radii.iter().enumerate() {
                assert!(*r <= 1.0);
                let cdf = r.powi(d as i32);
                ks = ks
                    .max((cdf - i as f64 / n as f64).abs())
                    .max((cdf - (i + 1) as f64 / n as f64).abs());
            }
            assert!(ks < 0.01, "d={d}: KS {ks}");
        }
    }

    #[test]
    fn robot_file_round_trip_and_unknown_keys() {
        let m = RobotModel::default();
        let text = toml::to_string(&m).unwrap();
        assert!(text.contains("joint_limits"));
        let back: RobotModel = toml::from_str(&text).unwrap();
        assert_eq!(back, m);
        let bad = format!("{text}\nextra = 1\n");
        assert!(toml::from_str::<RobotModel>(&bad).is_err());
        let inverted = "link_lengths = [1.0]\njoint_limits = [[1.0, -1.0]]\nblobs_per_link = 2\n";
        assert!(toml::from_str::<RobotModel>(inverted).is_err());
    }
}
