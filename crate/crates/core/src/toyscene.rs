//! Analytic planar scene: renders latent frames from poses via the
//! plane-induced homography, synthesizes motion blur and events, and emits
//! ground-truth optical flow.
//!
//! The scene stands in for a learned scene representation so that every
//! downstream quantity (blur, events, flow) has a closed-form reference.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, ExposureWindow};
use crate::geometry::{pose_at, BezierTrajectory, SE3Pose};
use crate::grid::{Grid, Image};

/// Homogeneous w below this is treated as "plane behind camera".
const MIN_HOMOGENEOUS_W: f64 = 1e-9;

/// Value sampled outside the texture. A mid-gray border avoids spurious
/// border events dominating losses.
pub const BORDER_VALUE: f64 = 0.5;

/// Latent planar scene: texture on the plane n.X = d seen through a pinhole.
#[derive(Debug, Clone)]
pub struct PlanarScene {
    texture: Image,
    plane_normal: Vector3<f64>,
    plane_depth: f64,
    /// (fx, fy, cx, cy) in pixels.
    intrinsics: (f64, f64, f64, f64),
    /// Added to intensities before any logarithm.
    intensity_floor: f64,
    width: usize,
    height: usize,
}

impl PlanarScene {
    pub fn new(
        texture: Image,
        plane_normal: Vector3<f64>,
        plane_depth: f64,
        intrinsics: (f64, f64, f64, f64),
        intensity_floor: f64,
        sensor_width: usize,
        sensor_height: usize,
    ) -> Result<Self> {
        if texture.min() < 0.0 || texture.max() > 1.0 {
            return Err(Error::Param(format!(
                "texture values must lie in [0, 1], got [{}, {}]",
                texture.min(),
                texture.max()
            )));
        }
        if !(plane_depth > 0.0) {
            return Err(Error::Param(format!(
                "plane depth must be positive, got {}",
                plane_depth
            )));
        }
        if !(intrinsics.0 > 0.0 && intrinsics.1 > 0.0) {
            return Err(Error::Param("focal lengths must be positive".into()));
        }
        if !(intensity_floor > 0.0) {
            return Err(Error::Param(format!(
                "intensity floor must be positive, got {}",
                intensity_floor
            )));
        }
        let norm = plane_normal.norm();
        if norm < 1e-12 {
            return Err(Error::Param("plane normal must be nonzero".into()));
        }
        Ok(PlanarScene {
            texture,
            plane_normal: plane_normal / norm,
            plane_depth,
            intrinsics,
            intensity_floor,
            width: sensor_width,
            height: sensor_height,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn texture(&self) -> &Image {
        &self.texture
    }

    #[inline]
    pub fn intensity_floor(&self) -> f64 {
        self.intensity_floor
    }

    #[inline]
    pub fn intrinsics(&self) -> (f64, f64, f64, f64) {
        self.intrinsics
    }

    #[inline]
    pub fn plane(&self) -> (Vector3<f64>, f64) {
        (self.plane_normal, self.plane_depth)
    }

    fn k_matrix(&self) -> Matrix3<f64> {
        let (fx, fy, cx, cy) = self.intrinsics;
        Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0)
    }

    fn k_inv(&self) -> Matrix3<f64> {
        let (fx, fy, cx, cy) = self.intrinsics;
        Matrix3::new(
            1.0 / fx,
            0.0,
            -cx / fx,
            0.0,
            1.0 / fy,
            -cy / fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Plane-induced homography H = K (R - t n^T / d) K^-1 mapping sensor
    /// pixels of `pose` to texture coordinates.
    pub fn homography(&self, pose: &SE3Pose) -> Result<Matrix3<f64>> {
        let r = pose.rotation_matrix();
        let m = r - pose.translation() * self.plane_normal.transpose() / self.plane_depth;
        let h = self.k_matrix() * m * self.k_inv();
        if h.determinant().abs() < 1e-12 {
            return Err(Error::Geometry(format!(
                "degenerate homography, |det| = {:.3e}",
                h.determinant().abs()
            )));
        }
        Ok(h)
    }
}

#[inline]
fn project(h: &Matrix3<f64>, x: f64, y: f64) -> (f64, f64, f64) {
    let px = h[(0, 0)] * x + h[(0, 1)] * y + h[(0, 2)];
    let py = h[(1, 0)] * x + h[(1, 1)] * y + h[(1, 2)];
    let pw = h[(2, 0)] * x + h[(2, 1)] * y + h[(2, 2)];
    (px, py, pw)
}

/// Renders the scene from `pose` by bilinear sampling of the texture through
/// the plane-induced homography. Out-of-texture pixels take [`BORDER_VALUE`].
pub fn render(scene: &PlanarScene, pose: &SE3Pose) -> Result<Image> {
    let h = scene.homography(pose)?;
    render_with_homography(scene, &h)
}

fn render_with_homography(scene: &PlanarScene, h: &Matrix3<f64>) -> Result<Image> {
    let mut out = Image::zeros(scene.width(), scene.height());
    for y in 0..scene.height() {
        for x in 0..scene.width() {
            let (px, py, pw) = project(h, x as f64, y as f64);
            if pw <= MIN_HOMOGENEOUS_W {
                return Err(Error::Geometry(format!(
                    "plane behind camera at pixel ({}, {}), w = {:.3e}",
                    x, y, pw
                )));
            }
            *out.at_mut(x, y) = scene.texture.sample_bilinear(px / pw, py / pw, BORDER_VALUE);
        }
    }
    Ok(out)
}

/// Per-pixel displacement field in pixels, valid over `interval_ns`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    u: Grid,
    v: Grid,
    interval_ns: i64,
}

impl FlowField {
    pub fn new(u: Grid, v: Grid, interval_ns: i64) -> Result<Self> {
        u.check_same_shape(&v, "flow components")?;
        if interval_ns <= 0 {
            return Err(Error::Param(format!(
                "flow reference interval must be positive, got {}",
                interval_ns
            )));
        }
        if !u.all_finite() || !v.all_finite() {
            return Err(Error::Param("flow contains non-finite values".into()));
        }
        Ok(FlowField { u, v, interval_ns })
    }

    pub fn zero(width: usize, height: usize, interval_ns: i64) -> Self {
        FlowField {
            u: Grid::zeros(width, height),
            v: Grid::zeros(width, height),
            interval_ns,
        }
    }

    pub fn uniform(width: usize, height: usize, du: f64, dv: f64, interval_ns: i64) -> Self {
        FlowField {
            u: Grid::filled(width, height, du),
            v: Grid::filled(width, height, dv),
            interval_ns,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.u.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.u.height()
    }

    #[inline]
    pub fn interval_ns(&self) -> i64 {
        self.interval_ns
    }

    #[inline]
    pub fn u(&self) -> &Grid {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &Grid {
        &self.v
    }

    /// Displacement at integer pixel, in pixels over the reference interval.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (self.u.at(x, y), self.v.at(x, y))
    }

    /// Fraction rescaling a stored displacement to a `dt_ns` horizon.
    #[inline]
    pub fn scale_for(&self, dt_ns: i64) -> f64 {
        dt_ns as f64 / self.interval_ns as f64
    }

    pub fn negated(&self) -> FlowField {
        FlowField {
            u: self.u.scale(-1.0),
            v: self.v.scale(-1.0),
            interval_ns: self.interval_ns,
        }
    }
}

/// Ground-truth displacement from the image at `pose_a` to the image at
/// `pose_b`: flow(x) = H_b^-1(H_a(x)) - x, exact for the planar scene.
pub fn gt_flow(
    scene: &PlanarScene,
    pose_a: &SE3Pose,
    pose_b: &SE3Pose,
    interval_ns: i64,
) -> Result<FlowField> {
    let ha = scene.homography(pose_a)?;
    let hb = scene.homography(pose_b)?;
    let hb_inv = hb.try_inverse().ok_or_else(|| {
        Error::Geometry("homography of pose_b is not invertible".into())
    })?;
    let m = hb_inv * ha;
    let mut u = Grid::zeros(scene.width(), scene.height());
    let mut v = Grid::zeros(scene.width(), scene.height());
    for y in 0..scene.height() {
        for x in 0..scene.width() {
            let (px, py, pw) = project(&m, x as f64, y as f64);
            if pw.abs() < MIN_HOMOGENEOUS_W {
                return Err(Error::Geometry(format!(
                    "flow undefined at pixel ({}, {}), w = {:.3e}",
                    x, y, pw
                )));
            }
            *u.at_mut(x, y) = px / pw - x as f64;
            *v.at_mut(x, y) = py / pw - y as f64;
        }
    }
    FlowField::new(u, v, interval_ns)
}

/// Motion-blurred frame: running mean of renders at the midpoints of
/// `substeps` equal sub-intervals of the exposure.
pub fn synth_blur(
    scene: &PlanarScene,
    traj: &BezierTrajectory,
    substeps: usize,
) -> Result<Image> {
    if substeps < 2 {
        return Err(Error::Param(format!(
            "blur quadrature needs at least 2 substeps, got {}",
            substeps
        )));
    }
    let nodes = traj.exposure().midpoint_nodes(substeps);
    let mut mean = Grid::zeros(scene.width(), scene.height());
    for (k, &t) in nodes.iter().enumerate() {
        let frame = render(scene, &pose_at(traj, t)?)?;
        let inv = 1.0 / (k + 1) as f64;
        for (m, f) in mean.values_mut().iter_mut().zip(frame.values()) {
            *m += (f - *m) * inv;
        }
    }
    Ok(mean)
}

/// Event synthesis parameters.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Positive contrast threshold.
    pub theta_pos: f64,
    /// Negative contrast threshold (magnitude).
    pub theta_neg: f64,
    /// Per-pixel dead time after an emitted event, nanoseconds.
    pub refractory_ns: i64,
    /// Uniform background noise, events per pixel per second.
    pub noise_rate: f64,
    /// Latent-frame samples per exposure for threshold tracking.
    pub substep_count: usize,
    pub rng_seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_pos > 0.0 && self.theta_neg > 0.0) {
            return Err(Error::Param(format!(
                "contrast thresholds must be positive, got {} / {}",
                self.theta_pos, self.theta_neg
            )));
        }
        if self.refractory_ns < 0 {
            return Err(Error::Param("refractory time must be non-negative".into()));
        }
        if self.noise_rate < 0.0 {
            return Err(Error::Param("noise rate must be non-negative".into()));
        }
        if self.substep_count < 2 {
            return Err(Error::Param(format!(
                "event synthesis needs at least 2 substeps, got {}",
                self.substep_count
            )));
        }
        Ok(())
    }

    pub fn min_theta(&self) -> f64 {
        self.theta_pos.min(self.theta_neg)
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            theta_pos: 0.08,
            theta_neg: 0.08,
            refractory_ns: 0,
            noise_rate: 0.0,
            substep_count: 512,
            rng_seed: 0,
        }
    }
}

/// Synthesizes the event stream triggered by the camera motion.
///
/// Per pixel, tracks L(t) = log(I(t) + eps) on the substep grid and emits an
/// event at each linearly interpolated threshold-level crossing. Background
/// noise is drawn per pixel from an independent, deterministically derived
/// RNG stream, then everything is merge-sorted by (t, y, x, p).
pub fn synth_events(
    scene: &PlanarScene,
    traj: &BezierTrajectory,
    cfg: &SynthConfig,
) -> Result<EventStream> {
    cfg.validate()?;
    let exposure = *traj.exposure();
    let (w, h) = (scene.width(), scene.height());
    let n_px = w * h;
    let floor = scene.intensity_floor();
    let max_step = 4.0 * cfg.min_theta();

    // Sample times: substep_count + 1 fence posts covering the exposure.
    let times: Vec<i64> = (0..=cfg.substep_count)
        .map(|s| {
            exposure.t_open()
                + ((s as f64) * exposure.duration() as f64 / cfg.substep_count as f64).round()
                    as i64
        })
        .collect();

    let log_frame = |t: i64| -> Result<Vec<f64>> {
        let img = render(scene, &pose_at(traj, t)?)?;
        Ok(img.values().iter().map(|v| (v + floor).ln()).collect())
    };

    let mut prev = log_frame(times[0])?;
    let mut level: Vec<f64> = prev.clone();
    let mut last_emit: Vec<i64> = vec![i64::MIN / 2; n_px];
    let mut events: Vec<Event> = Vec::new();

    for s in 0..cfg.substep_count {
        let (ta, tb) = (times[s], times[s + 1]);
        let cur = log_frame(tb)?;
        let dt = (tb - ta) as f64;
        for idx in 0..n_px {
            let (la, lb) = (prev[idx], cur[idx]);
            let delta = lb - la;
            if delta.abs() >= max_step {
                return Err(Error::Sampling(format!(
                    "undersampled motion at pixel ({}, {}), substep {}: |dL| = {:.4} >= {:.4}; \
                     increase substep_count",
                    idx % w,
                    idx / w,
                    s,
                    delta.abs(),
                    max_step
                )));
            }
            if delta == 0.0 {
                continue;
            }
            let (x, y) = ((idx % w) as u16, (idx / w) as u16);
            loop {
                let lref = level[idx];
                let (next, pol, theta) = if delta > 0.0 {
                    (lref + cfg.theta_pos, 1i8, cfg.theta_pos)
                } else {
                    (lref - cfg.theta_neg, -1i8, cfg.theta_neg)
                };
                let _ = theta;
                let crossed = if delta > 0.0 { lb >= next } else { lb <= next };
                if !crossed {
                    break;
                }
                let frac = (next - la) / delta;
                let t_cross = ta + (frac * dt).round() as i64;
                let t_cross = t_cross.clamp(exposure.t_open(), exposure.t_close() - 1);
                level[idx] = next;
                if t_cross - last_emit[idx] >= cfg.refractory_ns {
                    events.push(Event::new(t_cross, x, y, pol));
                    last_emit[idx] = t_cross;
                }
            }
        }
        prev = cur;
    }

    // Background noise: one Poisson-distributed batch per pixel, each pixel
    // on its own RNG stream so results are order-independent.
    if cfg.noise_rate > 0.0 {
        let lambda = cfg.noise_rate * exposure.duration() as f64 * 1e-9;
        if lambda > 0.0 {
            let poisson = Poisson::new(lambda)
                .map_err(|e| Error::Param(format!("invalid noise rate: {}", e)))?;
            for idx in 0..n_px {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
                rng.set_stream(1 + idx as u64);
                let count = poisson.sample(&mut rng) as u64;
                let (x, y) = ((idx % w) as u16, (idx / w) as u16);
                for _ in 0..count {
                    let t = rng.gen_range(exposure.t_open()..exposure.t_close());
                    let p = if rng.gen_bool(0.5) { 1 } else { -1 };
                    events.push(Event::new(t, x, y, p));
                }
            }
        }
    }

    EventStream::from_unsorted(events, w, h, exposure.t_open(), exposure.t_close())
}

/// Smooth random texture: clamped sum of seeded Gaussian blobs. Values stay
/// inside [lo, hi] so log-intensity remains tame for event synthesis.
pub fn procedural_blobs(width: usize, height: usize, seed: u64, lo: f64, hi: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blobs = 12;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            (
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
                rng.gen_range(width as f64 / 16.0..width as f64 / 5.0),
                rng.gen_range(-0.45..0.45),
            )
        })
        .collect();
    Image::from_fn(width, height, |x, y| {
        let mut v = 0.55;
        for &(cx, cy, sigma, amp) in &blobs {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
        }
        v.clamp(lo, hi)
    })
}

/// Background ramp plus soft-edged discs: crisp, band-limited structure.
/// Edges a pixel or two wide give event streams enough spatial detail for
/// threshold calibration and deblurring demos, while staying smooth enough
/// for threshold-crossing synthesis.
pub fn procedural_shapes(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_discs = 9;
    let discs: Vec<(f64, f64, f64, f64, f64)> = (0..n_discs)
        .map(|_| {
            (
                rng.gen_range(0.12 * width as f64..0.88 * width as f64),
                rng.gen_range(0.12 * height as f64..0.88 * height as f64),
                rng.gen_range(width as f64 / 14.0..width as f64 / 5.0),
                rng.gen_range(-0.55..0.55),
                rng.gen_range(1.0..1.8),
            )
        })
        .collect();
    Image::from_fn(width, height, |x, y| {
        let mut v = 0.35 + 0.3 * (x as f64 / width as f64) + 0.12 * (y as f64 / height as f64);
        for &(cx, cy, r, amp, soft) in &discs {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            v += amp * 0.5 * (1.0 - ((d - r) / soft).tanh());
        }
        v.clamp(0.12, 0.95)
    })
}

/// Soft horizontal step edge (tanh profile), for translating-edge tests.
pub fn soft_edge(width: usize, height: usize, center_x: f64, softness: f64, lo: f64, hi: f64) -> Image {
    Image::from_fn(width, height, |x, _| {
        lo + (hi - lo) * 0.5 * (1.0 + ((x as f64 - center_x) / softness).tanh())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::delta_log;
    use crate::geometry::{se3_exp, TangentVector};
    use approx::assert_relative_eq;

    fn test_scene(texture: Image) -> PlanarScene {
        let (w, h) = (texture.width(), texture.height());
        PlanarScene::new(
            texture,
            Vector3::new(0.0, 0.0, 1.0),
            1.0,
            (70.0, 70.0, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
            1e-3,
            w,
            h,
        )
        .unwrap()
    }

    fn x_translation(tx: f64) -> SE3Pose {
        se3_exp(&TangentVector::new(
            Vector3::zeros(),
            Vector3::new(tx, 0.0, 0.0),
        ))
    }

    fn exposure() -> ExposureWindow {
        ExposureWindow::new(0, 120_000_000).unwrap()
    }

    /// Linear pure-translation trajectory moving `px` pixels along +x over
    /// the exposure (fx = 70, d = 1).
    fn linear_x_trajectory(px: f64) -> BezierTrajectory {
        let total = px / 70.0;
        let cps: Vec<SE3Pose> = (0..9).map(|j| x_translation(total * j as f64 / 8.0)).collect();
        BezierTrajectory::new(cps.try_into().unwrap(), exposure())
    }

    #[test]
    fn identity_pose_renders_texture() {
        let tex = procedural_blobs(32, 32, 5, 0.15, 0.95);
        let scene = test_scene(tex.clone());
        let img = render(&scene, &SE3Pose::identity()).unwrap();
        for (a, b) in img.values().iter().zip(tex.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn x_translation_shifts_texture() {
        let tex = soft_edge(32, 32, 15.5, 3.0, 0.2, 0.8);
        let scene = test_scene(tex.clone());
        let tx = 0.05; // fx*tx/d = 3.5 px shift
        let img = render(&scene, &x_translation(tx)).unwrap();
        let shift = 70.0 * tx;
        for y in 0..32 {
            for x in 8..24 {
                let want = tex.sample_bilinear(x as f64 - shift, y as f64, BORDER_VALUE);
                assert_relative_eq!(img.at(x, y), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn pose_behind_plane_is_geometry_error() {
        let scene = test_scene(procedural_blobs(16, 16, 1, 0.15, 0.95));
        let behind = se3_exp(&TangentVector::new(
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 2.0),
        ));
        assert!(matches!(render(&scene, &behind), Err(Error::Geometry(_))));
    }

    #[test]
    fn gt_flow_zero_for_equal_poses() {
        let scene = test_scene(procedural_blobs(16, 16, 2, 0.15, 0.95));
        let p = x_translation(0.01);
        let f = gt_flow(&scene, &p, &p, 1000).unwrap();
        assert!(f.u().values().iter().all(|&v| v.abs() < 1e-12));
        assert!(f.v().values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn gt_flow_uniform_for_x_translation() {
        let scene = test_scene(procedural_blobs(16, 16, 3, 0.15, 0.95));
        let tx = 0.03;
        let f = gt_flow(&scene, &SE3Pose::identity(), &x_translation(tx), 1000).unwrap();
        let want = 70.0 * tx;
        for &u in f.u().values() {
            assert_relative_eq!(u, want, epsilon = 1e-9);
        }
        for &v in f.v().values() {
            assert_relative_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gt_flow_matches_per_pixel_homography_oracle() {
        let scene = test_scene(procedural_blobs(24, 24, 4, 0.15, 0.95));
        let a = se3_exp(&TangentVector::new(
            Vector3::new(0.002, -0.004, 0.01),
            Vector3::new(0.02, -0.01, 0.015),
        ));
        let b = se3_exp(&TangentVector::new(
            Vector3::new(-0.003, 0.002, -0.008),
            Vector3::new(-0.015, 0.02, -0.01),
        ));
        let f = gt_flow(&scene, &a, &b, 1000).unwrap();
        let ha = scene.homography(&a).unwrap();
        let hb_inv = scene.homography(&b).unwrap().try_inverse().unwrap();
        for y in (0..24).step_by(5) {
            for x in (0..24).step_by(5) {
                let (px, py, pw) = project(&ha, x as f64, y as f64);
                let (qx, qy, qw) = project(&hb_inv, px / pw, py / pw);
                let (u, v) = f.at(x, y);
                assert_relative_eq!(u, qx / qw - x as f64, epsilon = 1e-9);
                assert_relative_eq!(v, qy / qw - y as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn warping_by_gt_flow_reproduces_other_view() {
        let tex = procedural_blobs(48, 48, 6, 0.15, 0.95);
        let scene = test_scene(tex);
        let a = SE3Pose::identity();
        let b = x_translation(0.04); // 2.8 px
        let img_a = render(&scene, &a).unwrap();
        let img_b = render(&scene, &b).unwrap();
        let back = gt_flow(&scene, &b, &a, 1000).unwrap();
        // Gather: b_rec(x) = a(x + flow_{b->a}(x)); compare away from borders.
        let mut se = 0.0;
        let mut n = 0usize;
        for y in 6..42 {
            for x in 6..42 {
                let (u, v) = back.at(x, y);
                let rec = img_a.sample_bilinear(x as f64 + u, y as f64 + v, BORDER_VALUE);
                let d = rec - img_b.at(x, y);
                se += d * d;
                n += 1;
            }
        }
        let psnr = -10.0 * (se / n as f64).log10();
        assert!(psnr >= 40.0, "flow-consistency PSNR {:.2} dB", psnr);
    }

    #[test]
    fn constant_trajectory_blur_equals_render() {
        let scene = test_scene(procedural_blobs(24, 24, 7, 0.15, 0.95));
        let traj = BezierTrajectory::constant(SE3Pose::identity(), exposure());
        let blur = synth_blur(&scene, &traj, 16).unwrap();
        let sharp = render(&scene, &SE3Pose::identity()).unwrap();
        // Identity logs are exactly zero, so every sampled pose is bit-equal
        // and the running mean collapses exactly.
        assert_eq!(blur, sharp);

        let q = se3_exp(&TangentVector::new(
            Vector3::new(0.001, 0.002, -0.001),
            Vector3::new(0.01, -0.02, 0.005),
        ));
        let traj = BezierTrajectory::constant(q, exposure());
        let blur = synth_blur(&scene, &traj, 16).unwrap();
        let sharp = render(&scene, &pose_at(&traj, 60_000_000).unwrap()).unwrap();
        for (a, b) in blur.values().iter().zip(sharp.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_quadrature_converges_monotonically() {
        let scene = test_scene(procedural_blobs(32, 32, 8, 0.15, 0.95));
        let traj = linear_x_trajectory(5.0);
        let reference = synth_blur(&scene, &traj, 200).unwrap();
        let mut last_psnr = 0.0;
        for substeps in [2, 8, 32] {
            let b = synth_blur(&scene, &traj, substeps).unwrap();
            let mse = b.sub(&reference).mean_square();
            let psnr = -10.0 * mse.log10();
            assert!(
                psnr > last_psnr,
                "substeps {}: PSNR {:.2} did not improve on {:.2}",
                substeps,
                psnr,
                last_psnr
            );
            last_psnr = psnr;
        }
    }

    #[test]
    fn blurred_step_edge_matches_box_filter_oracle() {
        // A linear shift of a step-edge texture makes the blur the box filter
        // of the (bilinearly reconstructed) edge profile; evaluate that 1D
        // convolution with a dense independent quadrature as the oracle.
        let (w, h) = (48, 16);
        let (c, soft, lo, hi) = (23.5, 1.5, 0.2, 0.8);
        let tex = soft_edge(w, h, c, soft, lo, hi);
        let scene = test_scene(tex.clone());
        let px_shift = 6.0;
        let traj = linear_x_trajectory(px_shift);
        let blur = synth_blur(&scene, &traj, 400).unwrap();
        for x in 10..38 {
            // Box filter: average of profile(x - s) for s uniform over
            // [0, px_shift], on the reconstructed texture row.
            let n = 40_000;
            let mut acc = 0.0;
            for k in 0..n {
                let s = (k as f64 + 0.5) / n as f64 * px_shift;
                acc += tex.sample_bilinear(x as f64 - s, 8.0, BORDER_VALUE);
            }
            let want = acc / n as f64;
            assert!(
                (blur.at(x, 8) - want).abs() < 1e-4,
                "x = {}: blur {:.6} vs oracle {:.6}",
                x,
                blur.at(x, 8),
                want
            );
        }
    }

    #[test]
    fn static_trajectory_emits_no_events() {
        let scene = test_scene(procedural_blobs(16, 16, 9, 0.15, 0.95));
        let traj = BezierTrajectory::constant(SE3Pose::identity(), exposure());
        let stream = synth_events(&scene, &traj, &SynthConfig::default()).unwrap();
        assert!(stream.is_empty());
    }

    #[test]
    fn event_counts_match_quantized_log_change() {
        let scene = test_scene(soft_edge(32, 32, 15.5, 2.0, 0.2, 0.8));
        let traj = linear_x_trajectory(4.0);
        let cfg = SynthConfig {
            theta_pos: 0.1,
            theta_neg: 0.1,
            substep_count: 600,
            ..SynthConfig::default()
        };
        let stream = synth_events(&scene, &traj, &cfg).unwrap();
        assert!(!stream.is_empty());

        // Dense-substep oracle: 10x oversampled per-pixel count.
        let oracle_cfg = SynthConfig {
            substep_count: 6000,
            ..cfg.clone()
        };
        let oracle = synth_events(&scene, &traj, &oracle_cfg).unwrap();
        let m = delta_log(&stream, 0, 120_000_000, 1.0).unwrap();
        let mo = delta_log(&oracle, 0, 120_000_000, 1.0).unwrap();
        // Signed counts may differ by at most one crossing per pixel between
        // the two samplings.
        for (a, b) in m.values().iter().zip(mo.values()) {
            assert!((a - b).abs() <= 1.0, "count {} vs oracle {}", a, b);
        }
    }

    #[test]
    fn egm_consistency_bound() {
        let scene = test_scene(procedural_blobs(32, 32, 10, 0.15, 0.95));
        let traj = linear_x_trajectory(5.0);
        let theta = 0.08;
        let cfg = SynthConfig {
            theta_pos: theta,
            theta_neg: theta,
            substep_count: 800,
            ..SynthConfig::default()
        };
        let stream = synth_events(&scene, &traj, &cfg).unwrap();
        let dl = delta_log(&stream, 0, 120_000_000, theta).unwrap();
        let open = render(&scene, &pose_at(&traj, 0).unwrap()).unwrap();
        let close = render(&scene, &pose_at(&traj, 120_000_000).unwrap()).unwrap();
        let floor = scene.intensity_floor();
        let mut max_err: f64 = 0.0;
        for i in 0..dl.len() {
            let truth = (close.values()[i] + floor).ln() - (open.values()[i] + floor).ln();
            max_err = max_err.max((dl.values()[i] - truth).abs());
        }
        assert!(
            max_err <= theta + 1e-9,
            "EGM quantization bound violated: {} > {}",
            max_err,
            theta
        );
    }

    #[test]
    fn undersampled_motion_is_reported() {
        let scene = test_scene(soft_edge(32, 32, 15.5, 0.6, 0.05, 0.95));
        let traj = linear_x_trajectory(10.0);
        let cfg = SynthConfig {
            theta_pos: 0.05,
            theta_neg: 0.05,
            substep_count: 2,
            ..SynthConfig::default()
        };
        match synth_events(&scene, &traj, &cfg) {
            Err(Error::Sampling(msg)) => assert!(msg.contains("substep")),
            other => panic!("expected sampling error, got {:?}", other.map(|s| s.len())),
        }
    }

    #[test]
    fn noise_events_are_deterministic_and_uniformish() {
        let scene = test_scene(procedural_blobs(16, 16, 11, 0.15, 0.95));
        let traj = BezierTrajectory::constant(SE3Pose::identity(), exposure());
        let cfg = SynthConfig {
            noise_rate: 20.0,
            rng_seed: 99,
            ..SynthConfig::default()
        };
        let a = synth_events(&scene, &traj, &cfg).unwrap();
        let b = synth_events(&scene, &traj, &cfg).unwrap();
        assert_eq!(a.events(), b.events());
        // Expected 20 ev/px/s * 0.12 s * 256 px = 614 events.
        assert!(a.len() > 400 && a.len() < 900, "noise count {}", a.len());
    }

    #[test]
    fn three_threshold_crossings_three_events() {
        // Single bright blob sliding onto one pixel; engineered so one pixel
        // rises by just over 3 theta.
        let (w, h) = (8, 8);
        let tex = Image::from_fn(w, h, |x, _| if x >= 4 { 0.9 } else { 0.3 });
        // Soften the edge so substep changes stay under the sampling bound.
        let tex = {
            let mut t = Image::zeros(w, h);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    let mut norm = 0.0;
                    for k in -2i32..=2 {
                        let xx = (x as i32 + k).clamp(0, w as i32 - 1) as usize;
                        let wgt = 1.0 / (1.0 + k.abs() as f64);
                        acc += tex.at(xx, y) * wgt;
                        norm += wgt;
                    }
                    *t.at_mut(x, y) = acc / norm;
                }
            }
            t
        };
        let scene = test_scene(tex.clone());
        let traj = linear_x_trajectory(2.0);
        // Pick theta from the actual log swing of pixel (4, 4) / 3 crossings.
        let open = render(&scene, &pose_at(&traj, 0).unwrap()).unwrap();
        let close = render(&scene, &pose_at(&traj, 120_000_000).unwrap()).unwrap();
        let swing = (close.at(4, 4) + 1e-3).ln() - (open.at(4, 4) + 1e-3).ln();
        assert!(swing.abs() > 0.05);
        let theta = swing.abs() / 3.2; // exactly 3 crossings fit
        let cfg = SynthConfig {
            theta_pos: theta,
            theta_neg: theta,
            substep_count: 512,
            ..SynthConfig::default()
        };
        let stream = synth_events(&scene, &traj, &cfg).unwrap();
        let count: f64 = stream
            .events()
            .iter()
            .filter(|e| e.x == 4 && e.y == 4)
            .map(|e| e.p as f64)
            .sum();
        assert_eq!(count, 3.0 * swing.signum());
    }
}
