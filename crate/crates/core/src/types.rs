//! Shared value types: planar pose, body twist, robot constants and gains.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Determinant magnitude below which a 2x2 matrix is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

fn check_finite(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::validation(field, format!("must be finite, got {value}")))
    }
}

/// Wraps an angle into the half-open interval (-pi, pi].
pub fn normalize_angle(a: f64) -> Result<f64> {
    check_finite("angle", a)?;
    Ok(wrap(a))
}

// Infallible variant for internal arithmetic on values already known finite.
pub(crate) fn wrap(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Signed shortest rotation from `b` to `a`, in (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> Result<f64> {
    check_finite("angle", a)?;
    check_finite("angle", b)?;
    Ok(wrap(a - b))
}

/// Planar configuration `[x, y, theta]`; theta is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2D {
    x: f64,
    y: f64,
    theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        check_finite("pose.x", x)?;
        check_finite("pose.y", y)?;
        check_finite("pose.theta", theta)?;
        Ok(Self {
            x,
            y,
            theta: wrap(theta),
        })
    }

    pub(crate) fn from_parts(x: f64, y: f64, theta: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite() && theta.is_finite());
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Rigid-body composition: `self` applied on top of `other` (frame `self` expressed in world).
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::from_parts(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }
}

impl TryFrom<[f64; 3]> for Pose2D {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Pose2D::new(v[0], v[1], v[2])
    }
}

impl From<Pose2D> for [f64; 3] {
    fn from(p: Pose2D) -> Self {
        [p.x, p.y, p.theta]
    }
}

/// Body-frame velocity pair `v = [v_x, omega]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct BodyTwist {
    pub v_x: f64,
    pub omega: f64,
}

impl BodyTwist {
    pub const ZERO: BodyTwist = BodyTwist { v_x: 0.0, omega: 0.0 };

    pub fn new(v_x: f64, omega: f64) -> Self {
        Self { v_x, omega }
    }

    pub fn validated(self) -> Result<Self> {
        check_finite("twist.v_x", self.v_x)?;
        check_finite("twist.omega", self.omega)?;
        Ok(self)
    }

    pub fn as_vec(&self) -> Vec2 {
        Vec2::new(self.v_x, self.omega)
    }

    pub fn from_vec(v: &Vec2) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.v_x.is_finite() && self.omega.is_finite()
    }
}

impl From<[f64; 2]> for BodyTwist {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<BodyTwist> for [f64; 2] {
    fn from(t: BodyTwist) -> Self {
        [t.v_x, t.omega]
    }
}

/// Physical constants of the reduced dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Body mass, kg.
    pub mass: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Wheel separation parameter `L` of the input matrix, m.
    pub wheel_separation: f64,
    /// Yaw inertia, kg m^2.
    pub inertia: f64,
    /// Centre-of-mass offset ahead of the wheel axle, m.
    #[serde(default)]
    pub com_offset: f64,
    /// Linear speed limit applied to commands, m/s.
    pub max_speed: f64,
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("robot.mass", self.mass),
            ("robot.wheel_radius", self.wheel_radius),
            ("robot.wheel_separation", self.wheel_separation),
            ("robot.inertia", self.inertia),
            ("robot.max_speed", self.max_speed),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(field, format!("must be > 0, got {v}")));
            }
        }
        if !(self.com_offset.is_finite() && self.com_offset >= 0.0) {
            return Err(Error::validation(
                "robot.com_offset",
                format!("must be >= 0, got {}", self.com_offset),
            ));
        }
        Ok(())
    }
}

/// Velocity-loop gains `Lambda = diag(lambda)` and pose-feedback gains `k1, k2, k3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    pub lambda: [f64; 2],
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl GainSet {
    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("lambda[0]", self.lambda[0]),
            ("lambda[1]", self.lambda[1]),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
        ];
        for (name, v) in entries {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    format!("GainSet.{name}"),
                    format!("gains must be strictly positive, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn lambda_matrix(&self) -> Mat2 {
        Mat2::new(self.lambda[0], 0.0, 0.0, self.lambda[1])
    }
}

/// Inverse of a 2x2 matrix, refusing near-singular input.
pub fn invert(m: &Mat2, context: &str) -> Result<Mat2> {
    let det = m.determinant();
    if !(det.abs() > SINGULAR_DET) {
        return Err(Error::SingularMatrix {
            context: context.to_string(),
            det,
        });
    }
    Ok(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!((normalize_angle(1.5 * PI).unwrap() + PI / 2.0).abs() < EPS);
        assert_eq!(normalize_angle(-PI).unwrap(), PI);
        assert_eq!(normalize_angle(PI).unwrap(), PI);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn angle_diff_examples() {
        assert_eq!(angle_diff(0.1, 0.1).unwrap(), 0.0);
        assert!((angle_diff(PI - 0.1, -PI + 0.1).unwrap() + 0.2).abs() < EPS);
        assert!((angle_diff(0.5, 0.2).unwrap() - 0.3).abs() < EPS);
        assert!(angle_diff(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn pose_rejects_non_finite() {
        assert!(Pose2D::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(Pose2D::new(0.0, 0.0, f64::NEG_INFINITY).is_err());
        assert_eq!(Pose2D::new(1.0, 2.0, 3.0 * PI).unwrap().theta(), PI);
    }

    #[test]
    fn gains_must_be_positive() {
        let mut g = GainSet {
            lambda: [3.0, 3.0],
            k1: 0.5,
            k2: 1.0,
            k3: 1.5,
        };
        assert!(g.validate().is_ok());
        g.lambda[0] = 0.0;
        let err = g.validate().unwrap_err().to_string();
        assert!(err.contains("GainSet"), "{err}");
    }

    #[test]
    fn singular_inverse_rejected() {
        let m = Mat2::new(1.0, 2.0, 2.0, 4.0);
        assert!(matches!(invert(&m, "test"), Err(Error::SingularMatrix { .. })));
        let inv = invert(&Mat2::new(2.0, 1.0, 1.0, 3.0), "test").unwrap();
        assert!((inv * Mat2::new(2.0, 1.0, 1.0, 3.0) - Mat2::identity()).norm() < EPS);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_in_range(a in -1e4f64..1e4) {
            let n = normalize_angle(a).unwrap();
            prop_assert!(n > -PI && n <= PI);
            prop_assert_eq!(normalize_angle(n).unwrap(), n);
            // congruent modulo 2 pi
            let k = ((a - n) / TAU).round();
            prop_assert!((a - n - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn angle_diff_is_antisymmetric(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let ab = angle_diff(a, b).unwrap();
            let ba = angle_diff(b, a).unwrap();
            prop_assume!(ab != PI && ba != PI);
            prop_assert!((ab + ba).abs() < 1e-12);
        }

        #[test]
        fn pose_theta_always_normalized(theta in -1e3f64..1e3) {
            let p = Pose2D::new(0.0, 0.0, theta).unwrap();
            prop_assert!(p.theta() > -PI && p.theta() <= PI);
        }
    }
}
