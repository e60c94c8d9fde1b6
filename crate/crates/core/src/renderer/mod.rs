//! Differentiable Gaussian-blob rasterizer.
//!
//! Every blob centre produced by forward kinematics is splatted additively
//! (no opacity, no clamping) so the image is a smooth function of the joint
//! angles and the loss gradient can be formed exactly by the chain rule.
//!
//! Each kernel is cut off at `CUTOFF_SIGMAS * sigma` and shifted by its
//! tangent line at the cutoff, so both the value and the slope reach zero
//! there. The image is therefore C1 in the blob positions and finite
//! differences do not see jumps when pixels enter or leave a blob footprint.

mod pgm;

use serde::{Deserialize, Serialize};

pub use pgm::{read_pgm, write_pgm, PgmFormat};

use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};

/// Kernel support radius in units of `blob_sigma`.
pub const CUTOFF_SIGMAS: f64 = 6.0;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Axis-aligned world-to-pixel map. Pixel `(col, row)` has its centre at
/// pixel coordinates `(col, row)`; rows grow downwards, world `y` grows upwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub scale: f64,
    pub offset: [f64; 2],
}

impl Camera {
    pub fn new(width: usize, height: usize, scale: f64, offset: [f64; 2]) -> Result<Self> {
        let cam = Camera {
            width,
            height,
            scale,
            offset,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidParam(format!(
                "camera must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParam(format!("camera scale {} must be positive", self.scale)));
        }
        if !(self.offset[0].is_finite() && self.offset[1].is_finite()) {
            return Err(Error::NonFinite("camera offset"));
        }
        Ok(())
    }

    /// Centred camera showing the square `[-half_extent, half_extent]^2`.
    pub fn framing(width: usize, height: usize, half_extent: f64) -> Result<Self> {
        let span = (width.min(height) as f64 - 1.0).max(1.0);
        Camera::new(
            width,
            height,
            span / (2.0 * half_extent),
            [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
        )
    }

    /// Centred camera with 10% margin around the arm's reach.
    pub fn for_model(model: &RobotModel, width: usize, height: usize) -> Result<Self> {
        Camera::framing(width, height, 1.1 * model.reach())
    }

    pub fn world_to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.scale * p[0] + self.offset[0],
            self.offset[1] - self.scale * p[1],
        ]
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderParams {
    /// Gaussian standard deviation, pixels.
    pub blob_sigma: f64,
    /// Peak intensity of a single blob.
    pub blob_weight: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            blob_sigma: 1.0,
            blob_weight: 0.2,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blob_sigma.is_finite() && self.blob_sigma > 0.0) {
            return Err(Error::InvalidParam("blob_sigma must be positive".into()));
        }
        if !(self.blob_weight.is_finite() && self.blob_weight > 0.0) {
            return Err(Error::InvalidParam("blob_weight must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn flipped_vertically(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width).rev() {
            data.extend_from_slice(row);
        }
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: self.width * self.height,
                got: other.width * other.height,
            });
        }
        Ok(())
    }

    /// Mean squared pixel difference.
    pub fn mse(&self, other: &Image) -> Result<f64> {
        self.check_same_shape(other)?;
        let sse: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sse / self.data.len().max(1) as f64)
    }
}

/// Loss value together with its gradient in joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Precomputed kernel constants.
struct Kernel {
    weight: f64,
    inv_two_var: f64,
    radius: f64,
    radius_sq: f64,
    tail: f64,
    /// `exp(-2 inv_two_var)`.
    ratio_step: f64,
}

impl Kernel {
    fn new(params: &RenderParams) -> Self {
        let var = params.blob_sigma * params.blob_sigma;
        let radius = CUTOFF_SIGMAS * params.blob_sigma;
        let radius_sq = radius * radius;
        Kernel {
            weight: params.blob_weight,
            inv_two_var: 0.5 / var,
            radius,
            radius_sq,
            tail: (-radius_sq * 0.5 / var).exp(),
            ratio_step: (-1.0 / var).exp(),
        }
    }

    /// Tapered kernel at squared distance `s` given `g = exp(-s / 2 var)`.
    #[inline]
    fn value(&self, g: f64, s: f64) -> f64 {
        self.weight * (g - self.tail + self.tail * self.inv_two_var * (s - self.radius_sq))
    }

    /// Pixel window `[lo, hi]` along one axis, or `None` if empty.
    fn window(&self, c: f64, len: usize) -> Option<(usize, usize)> {
        let lo = (c - self.radius).ceil().max(0.0);
        let hi = (c + self.radius).floor().min(len as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }
}

/// Per-blob separable factors over its pixel window. The buffers are reused
/// from blob to blob.
#[derive(Default)]
struct Footprint {
    x0: usize,
    y0: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
    ex: Vec<f64>,
    ey: Vec<f64>,
}

impl Footprint {
    /// Fills the window for centre `c`; false if it misses the image.
    fn set(&mut self, kernel: &Kernel, c: [f64; 2], cam: &Camera) -> bool {
        let (Some((x0, x1)), Some((y0, y1))) =
            (kernel.window(c[0], cam.width), kernel.window(c[1], cam.height))
        else {
            return false;
        };
        self.x0 = x0;
        self.y0 = y0;
        fill_axis(kernel, c[0], x0, x1, &mut self.dx, &mut self.ex);
        fill_axis(kernel, c[1], y0, y1, &mut self.dy, &mut self.ey);
        true
    }
}

/// Offsets `p - c` and Gaussian factors over `lo..=hi`. Uses
/// `e(v + 1) = e(v) exp(-(2v + 1) a)` with the ratio itself updated by the
/// constant `exp(-2a)`, so only three exponentials are evaluated per axis.
fn fill_axis(kernel: &Kernel, c: f64, lo: usize, hi: usize, d: &mut Vec<f64>, e: &mut Vec<f64>) {
    d.clear();
    e.clear();
    let a = kernel.inv_two_var;
    let v0 = lo as f64 - c;
    let mut g = (-v0 * v0 * a).exp();
    let mut ratio = (-(2.0 * v0 + 1.0) * a).exp();
    let step = kernel.ratio_step;
    for p in lo..=hi {
        d.push(p as f64 - c);
        e.push(g);
        g *= ratio;
        ratio *= step;
    }
}

fn pixel_centers(model: &RobotModel, q: &Configuration, cam: &Camera) -> Result<Vec<[f64; 2]>> {
    let skel = model.forward_kinematics(q)?;
    let centers: Vec<[f64; 2]> = skel.blobs().iter().map(|p| cam.world_to_pixel(*p)).collect();
    if centers.iter().any(|c| !(c[0].is_finite() && c[1].is_finite())) {
        return Err(Error::NonFinite("blob centres"));
    }
    Ok(centers)
}

/// Splats blobs at the given pixel-space centres.
pub fn render_points(centers: &[[f64; 2]], cam: &Camera, params: &RenderParams) -> Image {
    let kernel = Kernel::new(params);
    let mut img = Image::zeros(cam.width, cam.height);
    let mut fp = Footprint::default();
    for c in centers {
        if !fp.set(&kernel, *c, cam) {
            continue;
        }
        for (j, (dy, ey)) in fp.dy.iter().zip(&fp.ey).enumerate() {
            let row = (fp.y0 + j) * cam.width + fp.x0;
            let out = &mut img.data[row..row + fp.dx.len()];
            for (o, (dx, ex)) in out.iter_mut().zip(fp.dx.iter().zip(&fp.ex)) {
                let s = dx * dx + dy * dy;
                if s < kernel.radius_sq {
                    *o += kernel.value(ex * ey, s);
                }
            }
        }
    }
    img
}

pub fn render(
    model: &RobotModel,
    q: &Configuration,
    cam: &Camera,
    params: &RenderParams,
) -> Result<Image> {
    let centers = pixel_centers(model, q, cam)?;
    Ok(render_points(&centers, cam, params))
}

fn check_goal(goal: &Image, cam: &Camera) -> Result<()> {
    if goal.width != cam.width || goal.height != cam.height {
        return Err(Error::DimensionMismatch {
            expected: cam.num_pixels(),
            got: goal.width * goal.height,
        });
    }
    Ok(())
}

/// Sum of squared per-pixel differences between `render(q)` and `goal`.
pub fn render_loss(
    model: &RobotModel,
    q: &Configuration,
    goal: &Image,
    cam: &Camera,
    params: &RenderParams,
) -> Result<f64> {
    check_goal(goal, cam)?;
    let img = render(model, q, cam, params)?;
    let loss: f64 = img
        .data
        .iter()
        .zip(&goal.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if !loss.is_finite() {
        return Err(Error::NonFinite("render loss"));
    }
    Ok(loss)
}

/// Loss and its analytic gradient with respect to the joint angles.
pub fn render_loss_grad(
    model: &RobotModel,
    q: &Configuration,
    goal: &Image,
    cam: &Camera,
    params: &RenderParams,
) -> Result<LossGrad> {
    check_goal(goal, cam)?;
    let skel = model.forward_kinematics(q)?;
    let jac = crate::kinematics::SkeletonJacobian::from_skeleton(&skel);
    let centers: Vec<[f64; 2]> = skel.blobs().iter().map(|p| cam.world_to_pixel(*p)).collect();
    if centers.iter().any(|c| !(c[0].is_finite() && c[1].is_finite())) {
        return Err(Error::NonFinite("blob centres"));
    }
    let img = render_points(&centers, cam, params);

    // residual r = 2 (I - G); loss = sum (I - G)^2
    let mut loss = 0.0;
    let residual: Vec<f64> = img
        .data
        .iter()
        .zip(&goal.data)
        .map(|(a, b)| {
            let e = a - b;
            loss += e * e;
            2.0 * e
        })
        .collect();

    let kernel = Kernel::new(params);
    let d = model.dof();
    let first_blob = d + 1;
    let mut grad = vec![0.0; d];
    let inv_var = 2.0 * kernel.inv_two_var;
    let mut fp = Footprint::default();
    for (b, c) in centers.iter().enumerate() {
        if !fp.set(&kernel, *c, cam) {
            continue;
        }
        // dL/d(centre), pixel coordinates
        let (mut gx, mut gy) = (0.0, 0.0);
        for (j, (dy, ey)) in fp.dy.iter().zip(&fp.ey).enumerate() {
            let row = (fp.y0 + j) * cam.width + fp.x0;
            let res = &residual[row..row + fp.dx.len()];
            for (r, (dx, ex)) in res.iter().zip(fp.dx.iter().zip(&fp.ex)) {
                let s = dx * dx + dy * dy;
                if s < kernel.radius_sq {
                    let f = r * kernel.weight * (ex * ey - kernel.tail) * inv_var;
                    gx += f * dx;
                    gy += f * dy;
                }
            }
        }
        // pixel -> world: u = s x + ox, v = oy - s y
        let wx = gx * cam.scale;
        let wy = -gy * cam.scale;
        let k = first_blob + b;
        for ((g, jx), jy) in grad.iter_mut().zip(jac.dx(k)).zip(jac.dy(k)) {
            *g += wx * jx + wy * jy;
        }
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("render loss gradient"));
    }
    Ok(LossGrad { loss, grad })
}

/// Peak signal-to-noise ratio in dB for intensities in `[0, 1]`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = a.mse(b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn default_setup() -> (RobotModel, Camera, RenderParams) {
        let model = RobotModel::default();
        let cam = Camera::for_model(&model, 64, 64).unwrap();
        (model, cam, RenderParams::default())
    }

    #[test]
    fn empty_blob_set_renders_black() {
        let cam = Camera::framing(16, 16, 1.0).unwrap();
        let img = render_points(&[], &cam, &RenderParams::default());
        assert!(img.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_blob_peak_is_weight() {
        let cam = Camera::framing(32, 32, 1.0).unwrap();
        let params = RenderParams {
            blob_sigma: 1.5,
            blob_weight: 1.0,
        };
        let img = render_points(&[[10.0, 12.0]], &cam, &params);
        assert!((img.get(10, 12) - 1.0).abs() < 1e-6);
        assert_eq!(img.max_value(), img.get(10, 12));
        // untapered gaussian one pixel away, up to the taper shift
        let expected = (-0.5f64 / 2.25).exp();
        assert!((img.get(11, 12) - expected).abs() < 1e-6);
    }

    #[test]
    fn mirrored_configuration_mirrors_image() {
        let (model, cam, params) = default_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let q = model.sample_uniform(&mut rng);
            let mirrored = Configuration::new(q.0.iter().map(|x| -x).collect());
            let a = render(&model, &q, &cam, &params).unwrap();
            let b = render(&model, &mirrored, &cam, &params).unwrap();
            let flipped = a.flipped_vertically();
            for (x, y) in flipped.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_is_zero_against_own_render() {
        let (model, cam, params) = default_setup();
        let q = Configuration::new(vec![0.3, -0.5, 1.0, 0.2, -0.1]);
        let goal = render(&model, &q, &cam, &params).unwrap();
        assert_eq!(render_loss(&model, &q, &goal, &cam, &params).unwrap(), 0.0);
        let lg = render_loss_grad(&model, &q, &goal, &cam, &params).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn loss_of_single_unit_pixel_difference() {
        let a = Image::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Image::zeros(2, 2);
        assert_eq!(a.mse(&b).unwrap() * 4.0, 1.0);
    }

    #[test]
    fn loss_rejects_mismatched_goal() {
        let (model, cam, params) = default_setup();
        let q = Configuration::zeros(5);
        let goal = Image::zeros(32, 64);
        assert!(render_loss(&model, &q, &goal, &cam, &params).is_err());
        assert!(render_loss_grad(&model, &q, &goal, &cam, &params).is_err());
    }

    #[test]
    fn loss_is_continuous() {
        let (model, cam, params) = default_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let q = model.sample_uniform(&mut rng);
            let goal = render(&model, &model.sample_uniform(&mut rng), &cam, &params).unwrap();
            let l0 = render_loss(&model, &q, &goal, &cam, &params).unwrap();
            let dq: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dq.iter().map(|x| x * x).sum::<f64>().sqrt();
            let q1 = Configuration::new(q.0.iter().zip(&dq).map(|(a, b)| a + 1e-6 * b / norm).collect());
            let l1 = render_loss(&model, &q1, &goal, &cam, &params).unwrap();
            assert!(l0 >= 0.0);
            assert!((l1 - l0).abs() <= 1e-3);
        }
    }

    #[test]
    fn gradient_vanishes_for_out_of_frame_joint() {
        // Only the first link is inside the frame; the rest of the arm lies
        // far outside, so the last joints cannot change the image.
        let model = RobotModel::new(vec![0.5, 20.0, 1.0], vec![-PI; 3], vec![PI; 3], 6).unwrap();
        let cam = Camera::framing(64, 64, 1.0).unwrap();
        let params = RenderParams::default();
        let q = Configuration::new(vec![0.2, 0.1, 0.4]);
        let goal = render(&model, &Configuration::new(vec![0.5, 0.0, 0.0]), &cam, &params).unwrap();
        let lg = render_loss_grad(&model, &q, &goal, &cam, &params).unwrap();
        assert!(lg.grad[0].abs() > 1e-3);
        assert!(lg.grad[2].abs() < 1e-9, "{:?}", lg.grad);
    }

    #[test]
    fn render_is_bit_stable() {
        let (model, cam, params) = default_setup();
        let q = Configuration::new(vec![0.1, 0.2, -0.3, 0.4, -0.5]);
        let a = render(&model, &q, &cam, &params).unwrap();
        let b = render(&model, &q, &cam, &params).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Image::zeros(10, 10);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let b = Image::from_vec(10, 10, vec![0.1; 100]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-12);
        let c = Image::from_vec(10, 10, vec![1.0; 100]).unwrap();
        assert_eq!(psnr(&a, &c).unwrap(), 0.0);
        assert!(psnr(&a, &Image::zeros(5, 20)).is_err());
    }

    #[test]
    fn default_arm_stays_in_unit_intensity_range() {
        let (model, cam, params) = default_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let q = model.sample_uniform(&mut rng);
            let img = render(&model, &q, &cam, &params).unwrap();
            assert!(img.data().iter().all(|v| *v >= 0.0));
        }
        let straight = render(&model, &Configuration::zeros(5), &cam, &params).unwrap();
        assert!(straight.max_value() < 1.0);
    }
}
