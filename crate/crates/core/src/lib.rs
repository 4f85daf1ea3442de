//! Deterministic simulation workbench for differential-drive trajectory tracking.
//!
//! The crate pairs a reduced-order plant with an adaptive RBF feedback-linearizing
//! controller, Kanayama pose feedback and an EKF that fuses simulated wheel, IMU,
//! lidar and visual odometry. Scenarios are plain TOML files; every run is
//! reproducible from its seed.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod plant;
pub mod sensors;
pub mod trajectory;
pub mod types;

pub use error::{Error, Result};
pub use types::{BodyTwist, GainSet, Pose2D, RobotParams};
