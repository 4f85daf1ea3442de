//! Reference paths sampled into pose, feedforward velocities and acceleration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Pose2D, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub pose: Pose2D,
    pub v_d: f64,
    pub omega_d: f64,
    pub v_r_dot: Vec2,
}

/// Path definitions selectable from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathConfig {
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
        /// Angular rate along the circle, rad/s; negative runs clockwise.
        rate: f64,
    },
    Line {
        #[serde(default)]
        start: [f64; 2],
        #[serde(default)]
        heading: f64,
        speed: f64,
    },
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PathConfig::Circle {
                center,
                radius,
                rate,
            } => {
                check_circle(radius, rate)?;
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::validation("path.center", "must be finite"));
                }
            }
            PathConfig::Line {
                start,
                heading,
                speed,
            } => {
                if start.iter().chain([heading, speed].iter()).any(|v| !v.is_finite()) {
                    return Err(Error::validation("path", "line parameters must be finite"));
                }
            }
        }
        Ok(())
    }

    /// One reference period for periodic paths.
    pub fn period(&self) -> Option<f64> {
        match *self {
            PathConfig::Circle { rate, .. } => Some(std::f64::consts::TAU / rate.abs()),
            PathConfig::Line { .. } => None,
        }
    }
}

fn check_circle(r: f64, omega: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::validation("path.radius", format!("must be > 0, got {r}")));
    }
    if !(omega.is_finite() && omega != 0.0) {
        return Err(Error::validation("path.rate", format!("must be non-zero, got {omega}")));
    }
    Ok(())
}

/// Point on the circle `(cx + r cos wt, cy + r sin wt)` heading along the tangent.
pub fn circle(t: f64, cx: f64, cy: f64, r: f64, omega: f64) -> Result<ReferenceSample> {
    check_circle(r, omega)?;
    let (s, c) = (omega * t).sin_cos();
    let xdot = -r * omega * s;
    let ydot = r * omega * c;
    Ok(ReferenceSample {
        pose: Pose2D::new(cx + r * c, cy + r * s, ydot.atan2(xdot))?,
        v_d: (r * omega).abs(),
        omega_d: omega,
        v_r_dot: Vec2::zeros(),
    })
}

pub fn line(t: f64, start: [f64; 2], heading: f64, speed: f64) -> Result<ReferenceSample> {
    let (s, c) = heading.sin_cos();
    Ok(ReferenceSample {
        pose: Pose2D::new(start[0] + speed * t * c, start[1] + speed * t * s, heading)?,
        v_d: speed,
        omega_d: 0.0,
        v_r_dot: Vec2::zeros(),
    })
}

pub fn sample_reference(path: &PathConfig, t: f64) -> Result<ReferenceSample> {
    if !(t >= 0.0) {
        return Err(Error::validation("t", format!("reference time must be >= 0, got {t}")));
    }
    match *path {
        PathConfig::Circle {
            center,
            radius,
            rate,
        } => circle(t, center[0], center[1], radius, rate),
        PathConfig::Line {
            start,
            heading,
            speed,
        } => line(t, start, heading, speed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::angle_diff;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    #[test]
    fn circle_at_start() {
        let s = circle(0.0, 0.0, 0.0, 1.0, 0.4).unwrap();
        assert!((s.pose.x() - 1.0).abs() < 1e-15);
        assert!(s.pose.y().abs() < 1e-15);
        assert!((s.pose.theta() - FRAC_PI_2).abs() < 1e-15);
        assert!((s.v_d - 0.4).abs() < 1e-15);
        assert_eq!(s.omega_d, 0.4);
        assert_eq!(s.v_r_dot, Vec2::zeros());
    }

    #[test]
    fn experiment_circles_stay_under_speed_limit() {
        let sim = circle(3.0, 0.0, 0.0, 1.0, 0.4).unwrap();
        assert!((sim.v_d - 0.4).abs() < 1e-15);
        let hw = circle(3.0, 0.0, 0.0, 0.5, 0.5).unwrap();
        assert!((hw.v_d - 0.25).abs() < 1e-15);
        assert!(hw.v_d <= 0.46);
    }

    #[test]
    fn circle_rejects_bad_geometry() {
        assert!(circle(0.0, 0.0, 0.0, 0.0, 0.4).is_err());
        assert!(circle(0.0, 0.0, 0.0, -1.0, 0.4).is_err());
        assert!(circle(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn clockwise_circle_heads_backwards_along_tangent() {
        let s = circle(0.0, 0.0, 0.0, 1.0, -0.5).unwrap();
        assert!((s.pose.theta() + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(s.v_d, 0.5);
        assert_eq!(s.omega_d, -0.5);
    }

    #[test]
    fn circle_is_periodic() {
        for &t in &[0.0, 1.3, 7.9] {
            let a = circle(t, 0.5, -0.2, 1.0, 0.4).unwrap();
            let b = circle(t + TAU / 0.4, 0.5, -0.2, 1.0, 0.4).unwrap();
            assert!((a.pose.x() - b.pose.x()).abs() < 1e-12);
            assert!((a.pose.y() - b.pose.y()).abs() < 1e-12);
            assert!(angle_diff(a.pose.theta(), b.pose.theta()).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn line_dispatch() {
        let path = PathConfig::Line {
            start: [0.0, 0.0],
            heading: 0.3,
            speed: 0.3,
        };
        let s = sample_reference(&path, 10.0).unwrap();
        assert!((s.pose.position().norm() - 3.0).abs() < 1e-12);
        assert!((s.pose.y().atan2(s.pose.x()) - 0.3).abs() < 1e-12);
        assert_eq!((s.v_d, s.omega_d), (0.3, 0.0));
    }

    #[test]
    fn circle_dispatch_matches_direct_call() {
        let path = PathConfig::Circle {
            center: [1.0, 2.0],
            radius: 0.5,
            rate: 0.5,
        };
        assert_eq!(
            sample_reference(&path, 4.2).unwrap(),
            circle(4.2, 1.0, 2.0, 0.5, 0.5).unwrap()
        );
        assert!(sample_reference(&path, -0.1).is_err());
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let r: std::result::Result<PathConfig, _> = toml::from_str("kind = \"spiral\"\nradius = 1.0");
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn circle_radius_is_exact(t in 0.0f64..200.0, r in 0.1f64..5.0, w in 0.05f64..2.0) {
            let s = circle(t, 0.3, -0.7, r, w).unwrap();
            let dist = (s.pose.position() - Vec2::new(0.3, -0.7)).norm();
            prop_assert!((dist - r).abs() < 1e-12 * r.max(1.0) * 10.0);
        }

        #[test]
        fn numerical_derivative_recovers_feedforward(t in 0.01f64..100.0, r in 0.2f64..3.0, w in 0.1f64..1.0) {
            let h = 1e-4;
            let a = circle(t - h, 0.0, 0.0, r, w).unwrap();
            let b = circle(t + h, 0.0, 0.0, r, w).unwrap();
            let speed = (b.pose.position() - a.pose.position()).norm() / (2.0 * h);
            let yaw_rate = angle_diff(b.pose.theta(), a.pose.theta()).unwrap() / (2.0 * h);
            let s = circle(t, 0.0, 0.0, r, w).unwrap();
            prop_assert!((speed - s.v_d).abs() < 1e-6);
            prop_assert!((yaw_rate - s.omega_d).abs() < 1e-6);
        }
    }
}
