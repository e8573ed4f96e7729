//! SE(3) Lie-group arithmetic and the nine-control-point Bézier pose
//! trajectory.
//!
//! Tangent vectors are ordered (omega, v): rotation first. Perturbations are
//! right-multiplicative throughout: `T' = T * exp(eta)`.

use nalgebra::{Matrix3, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::event::ExposureWindow;

const SMALL_ANGLE: f64 = 1e-6;

/// Binomial coefficients C(8, j) of the degree-8 Bernstein basis.
const BINOMIAL_8: [f64; 9] = [1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0];

/// Rigid transform: unit quaternion plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl SE3Pose {
    pub fn identity() -> Self {
        SE3Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        SE3Pose {
            rotation,
            translation,
        }
    }

    pub fn from_parts(qw: f64, qx: f64, qy: f64, qz: f64, tx: f64, ty: f64, tz: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(qw, qx, qy, qz));
        SE3Pose::new(q, Vector3::new(tx, ty, tz))
    }

    #[inline]
    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Composition (self then... applied to points: self * other maps
    /// x -> R_self (R_other x + t_other) + t_self). The quaternion is
    /// re-normalized after the product.
    pub fn compose(&self, other: &SE3Pose) -> SE3Pose {
        let q = UnitQuaternion::new_normalize(
            self.rotation.into_inner() * other.rotation.into_inner(),
        );
        let t = self.rotation * other.translation + self.translation;
        SE3Pose::new(q, t)
    }

    pub fn inverse(&self) -> SE3Pose {
        let qinv = self.rotation.inverse();
        SE3Pose::new(qinv, -(qinv * self.translation))
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// 6x6 adjoint: Ad(T) (omega, v) = (R omega, [t]x R omega + R v).
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation_matrix();
        let tr = skew(&self.translation) * r;
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&tr);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }
}

/// Element of the Lie algebra se(3): rotation part `omega` (radians),
/// translation part `v` (scene units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl TangentVector {
    pub fn zero() -> Self {
        TangentVector {
            omega: Vector3::zeros(),
            v: Vector3::zeros(),
        }
    }

    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        TangentVector { omega, v }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        TangentVector {
            omega: Vector3::new(s[0], s[1], s[2]),
            v: Vector3::new(s[3], s[4], s[5]),
        }
    }

    pub fn to_vector6(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        )
    }

    pub fn from_vector6(v: &Vector6<f64>) -> Self {
        TangentVector {
            omega: Vector3::new(v[0], v[1], v[2]),
            v: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        TangentVector {
            omega: self.omega * c,
            v: self.v * c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

#[inline]
fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Closed-form SE(3) exponential. Series expansions take over below a
/// rotation angle of 1e-6 rad.
pub fn se3_exp(xi: &TangentVector) -> SE3Pose {
    let theta2 = xi.omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(&xi.omega);
    let w2 = w * w;

    // Rotation quaternion: (cos(theta/2), sin(theta/2)/theta * omega).
    let (re, im) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
    } else {
        ((theta / 2.0).cos(), (theta / 2.0).sin() / theta)
    };
    let q = UnitQuaternion::new_normalize(Quaternion::from_parts(re, xi.omega * im));

    // V matrix: I + a [w]x + b [w]x^2.
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let v_mat = Matrix3::identity() + w * a + w2 * b;
    SE3Pose::new(q, v_mat * xi.v)
}

/// Principal-branch SE(3) logarithm. Errors for rotation angles at or past
/// `pi - 1e-6`.
pub fn se3_log(pose: &SE3Pose) -> Result<TangentVector> {
    let mut q = pose.rotation.into_inner();
    if q.w < 0.0 {
        q = -q;
    }
    let vec_norm = q.imag().norm();
    let theta = 2.0 * vec_norm.atan2(q.w);
    if theta >= std::f64::consts::PI - 1e-6 {
        return Err(Error::Branch(format!(
            "rotation angle {:.9} rad too close to pi for the principal log branch",
            theta
        )));
    }
    let omega = if theta < SMALL_ANGLE {
        // theta/sin(theta/2) * imag/2 with sin(x)/x series.
        q.imag() * (2.0 + theta * theta / 12.0)
    } else {
        q.imag() * (theta / vec_norm)
    };

    let w = skew(&omega);
    let w2 = w * w;
    let theta2 = theta * theta;
    let vinv_c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        (1.0 - theta * (1.0 + theta.cos()) / (2.0 * theta.sin())) / theta2
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w2 * vinv_c;
    Ok(TangentVector::new(omega, v_inv * pose.translation))
}

/// Geodesic rotation angle (radians) and Euclidean translation distance.
pub fn pose_distance(a: &SE3Pose, b: &SE3Pose) -> (f64, f64) {
    let rel = a.rotation.inverse() * b.rotation;
    let q = rel.into_inner();
    let rot = 2.0 * q.imag().norm().atan2(q.w.abs());
    let trans = (a.translation - b.translation).norm();
    (rot, trans)
}

/// Left Jacobian of SO(3): J_l = I + a [w]x + b [w]x^2 with
/// a = (1-cos)/t^2, b = (t-sin)/t^3.
fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let w2 = w * w;
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + w * a + w2 * b
}

fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let w2 = w * w;
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        (1.0 - theta * (1.0 + theta.cos()) / (2.0 * theta.sin())) / theta2
    };
    Matrix3::identity() - w * 0.5 + w2 * c
}

/// Coupling block Q of the SE(3) left Jacobian (rotation perturbation into
/// translation rows).
fn se3_q_matrix(omega: &Vector3<f64>, v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let p = skew(v);
    let wp = w * p;
    let pw = p * w;
    let wpw = wp * w;

    let (c2, c3, c4) = if theta < 1e-3 {
        (
            1.0 / 6.0 - theta2 / 120.0,
            1.0 / 24.0 - theta2 / 720.0,
            1.0 / 120.0 - theta2 / 2520.0,
        )
    } else {
        let (s, c) = (theta.sin(), theta.cos());
        let t3 = theta2 * theta;
        let t4 = theta2 * theta2;
        let t5 = t4 * theta;
        (
            (theta - s) / t3,
            (theta2 + 2.0 * c - 2.0) / (2.0 * t4),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t5),
        )
    };

    p * 0.5
        + (wp + pw + wpw) * c2
        + (w * wp + pw * w - wpw * 3.0) * c3
        + (wpw * w + w * wpw) * c4
}

/// SE(3) left Jacobian in (omega, v) ordering.
fn se3_left_jacobian(xi: &TangentVector) -> Matrix6<f64> {
    let jl = so3_left_jacobian(&xi.omega);
    let q = se3_q_matrix(&xi.omega, &xi.v);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    m
}

fn se3_left_jacobian_inv(xi: &TangentVector) -> Matrix6<f64> {
    let jli = so3_left_jacobian_inv(&xi.omega);
    let q = se3_q_matrix(&xi.omega, &xi.v);
    let coupling = -jli * q * jli;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jli);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&coupling);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jli);
    m
}

/// Right Jacobian: exp(xi + d) = exp(xi) * exp(J_r(xi) d) + O(d^2).
pub fn se3_right_jacobian(xi: &TangentVector) -> Matrix6<f64> {
    se3_left_jacobian(&xi.scaled(-1.0))
}

pub fn se3_right_jacobian_inv(xi: &TangentVector) -> Matrix6<f64> {
    se3_left_jacobian_inv(&xi.scaled(-1.0))
}

/// Bernstein basis weights C(8,j) (1-tau)^(8-j) tau^j.
pub fn bernstein_weights(tau: f64) -> [f64; 9] {
    let mut w = [0.0; 9];
    for (j, wj) in w.iter_mut().enumerate() {
        *wj = BINOMIAL_8[j] * (1.0 - tau).powi(8 - j as i32) * tau.powi(j as i32);
    }
    w
}

/// Camera trajectory over an exposure: nine SE(3) control points blended by
/// the degree-8 Bernstein basis in the tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierTrajectory {
    control_points: [SE3Pose; 9],
    exposure: ExposureWindow,
}

impl BezierTrajectory {
    pub fn new(control_points: [SE3Pose; 9], exposure: ExposureWindow) -> Self {
        BezierTrajectory {
            control_points,
            exposure,
        }
    }

    /// All control points equal: a static camera.
    pub fn constant(pose: SE3Pose, exposure: ExposureWindow) -> Self {
        BezierTrajectory::new([pose; 9], exposure)
    }

    #[inline]
    pub fn control_points(&self) -> &[SE3Pose; 9] {
        &self.control_points
    }

    #[inline]
    pub fn exposure(&self) -> &ExposureWindow {
        &self.exposure
    }

    fn tau(&self, t: i64) -> f64 {
        (t - self.exposure.t_open()) as f64 / self.exposure.duration() as f64
    }

    /// Tangent logs of the nine control points. Shared by evaluation and the
    /// Jacobian; errors if any control point sits on the log branch cut.
    pub fn control_logs(&self) -> Result<[TangentVector; 9]> {
        let mut logs = [TangentVector::zero(); 9];
        for (j, cp) in self.control_points.iter().enumerate() {
            logs[j] = se3_log(cp).map_err(|e| {
                Error::Branch(format!("control point {}: {}", j, e))
            })?;
        }
        Ok(logs)
    }
}

/// Evaluates P(t) = prod_{j=0..8} exp(w_j(tau) log(T_j)), factors composed in
/// ascending j. The product order is fixed here because the factors do not
/// commute in general.
pub fn pose_at(traj: &BezierTrajectory, t: i64) -> Result<SE3Pose> {
    traj.exposure().check_contains(t)?;
    let logs = traj.control_logs()?;
    Ok(pose_from_logs(&logs, traj.tau(t)))
}

fn pose_from_logs(logs: &[TangentVector; 9], tau: f64) -> SE3Pose {
    let weights = bernstein_weights(tau);
    let mut pose = SE3Pose::identity();
    for (j, xi) in logs.iter().enumerate() {
        pose = pose.compose(&se3_exp(&xi.scaled(weights[j])));
    }
    pose
}

/// Derivative of `pose_at` with respect to right-multiplicative increments of
/// each control point: for T_j -> T_j * exp(eta_j), the right-tangent
/// perturbation of P(t) is `sum_j jac[j] * eta_j`.
pub fn pose_at_jacobian(traj: &BezierTrajectory, t: i64) -> Result<[Matrix6<f64>; 9]> {
    traj.exposure().check_contains(t)?;
    let logs = traj.control_logs()?;
    let weights = bernstein_weights(traj.tau(t));

    let factors: Vec<SE3Pose> = (0..9)
        .map(|j| se3_exp(&logs[j].scaled(weights[j])))
        .collect();

    // Tails G_j = F_{j+1} ... F_8, built right to left.
    let mut tails = [SE3Pose::identity(); 9];
    for j in (0..8).rev() {
        tails[j] = factors[j + 1].compose(&tails[j + 1]);
    }

    let mut jac = [Matrix6::zeros(); 9];
    for j in 0..9 {
        // d xi_j = Jr^-1(xi_j) eta_j; d exp(w xi) right-tangent =
        // w Jr(w xi_j) d xi_j; transported through the tail by Ad(G_j^-1).
        let inner = se3_right_jacobian(&logs[j].scaled(weights[j])) * weights[j]
            * se3_right_jacobian_inv(&logs[j]);
        jac[j] = tails[j].inverse().adjoint() * inner;
    }
    Ok(jac)
}

/// Optimizable trajectory state: base control poses plus a flat vector of
/// 9 x 6 local tangent increments (T_j = base_j * exp(delta_j)).
///
/// `refresh` folds the increments into the bases and zeroes them, keeping
/// every log evaluation on the principal branch during long optimizations.
#[derive(Debug, Clone)]
pub struct TrajectoryParams {
    bases: [SE3Pose; 9],
    exposure: ExposureWindow,
}

impl TrajectoryParams {
    pub const DOF: usize = 54;

    pub fn new(bases: [SE3Pose; 9], exposure: ExposureWindow) -> Self {
        TrajectoryParams { bases, exposure }
    }

    pub fn from_trajectory(traj: &BezierTrajectory) -> Self {
        TrajectoryParams {
            bases: *traj.control_points(),
            exposure: *traj.exposure(),
        }
    }

    #[inline]
    pub fn bases(&self) -> &[SE3Pose; 9] {
        &self.bases
    }

    #[inline]
    pub fn exposure(&self) -> &ExposureWindow {
        &self.exposure
    }

    /// Materialize the trajectory for increment coordinates `deltas`
    /// (length 54, control-point-major, (omega, v) per point).
    pub fn trajectory(&self, deltas: &[f64]) -> BezierTrajectory {
        assert_eq!(deltas.len(), Self::DOF);
        let mut cps = self.bases;
        for (j, cp) in cps.iter_mut().enumerate() {
            let xi = TangentVector::from_slice(&deltas[6 * j..6 * j + 6]);
            *cp = cp.compose(&se3_exp(&xi));
        }
        BezierTrajectory::new(cps, self.exposure)
    }

    /// Fold `deltas` into the bases; the caller zeroes its delta vector.
    pub fn refresh(&mut self, deltas: &[f64]) {
        let traj = self.trajectory(deltas);
        self.bases = *traj.control_points();
    }

    /// Per-control-point 6x6 maps from delta coordinates to right increments
    /// of the control poses: eta_j = Jr(delta_j) d delta_j.
    pub fn delta_to_increment(&self, deltas: &[f64]) -> [Matrix6<f64>; 9] {
        let mut maps = [Matrix6::zeros(); 9];
        for (j, m) in maps.iter_mut().enumerate() {
            let xi = TangentVector::from_slice(&deltas[6 * j..6 * j + 6]);
            *m = se3_right_jacobian(&xi);
        }
        maps
    }
}
