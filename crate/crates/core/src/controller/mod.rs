//! Adaptive tracking controller.
//!
//! Three layers run at every control tick:
//!
//! 1. a pose-feedback law turns the body-frame pose error into a velocity command `v_c`;
//! 2. two RBF networks (one per velocity channel) estimate the lumped disturbance
//!    `d_hat` and adapt online with `w' = eta * v_tilde * phi`;
//! 3. a feedback-linearising torque law
//!    `tau = B^-1 C v + B^-1 M (v_r' - Lambda v_tilde - d_hat)`
//!    imposes `v_tilde' + Lambda v_tilde = d - d_hat` on the velocity error.
//!
//! The disturbance enters in acceleration units, `d = -M^-1 tau_d`.

mod rbf;

pub use rbf::RbfLayer;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{coriolis_matrix, input_matrix_inverse, mass_matrix};
use crate::trajectory::ReferenceSample;
use crate::types::{wrap, BodyTwist, GainSet, Pose2D, RobotParams, Vec2};

pub const DEFAULT_CENTERS: [f64; 6] = [-1.0, -0.5, -0.25, 0.25, 0.5, 1.0];
pub const DEFAULT_WIDTHS: [f64; 6] = [0.3, 0.2, 0.1, 0.1, 0.2, 0.3];
pub const DEFAULT_MAX_ANGULAR_SPEED: f64 = 1.9;

/// Which velocity the torque law regulates to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorqueReference {
    /// `v_tilde = v - v_c`, the pose-feedback command.
    #[default]
    Command,
    /// `v_tilde = v - (v_d, omega_d)`, the raw trajectory feedforward.
    Trajectory,
}

/// Error signal fed to the learning rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationSignal {
    /// Same error the torque law regulates.
    #[default]
    Tracking,
    /// `v_c - (v_d, omega_d)`, the pose-feedback correction.
    PoseCorrection,
}

fn default_centers() -> Vec<f64> {
    DEFAULT_CENTERS.to_vec()
}

fn default_widths() -> Vec<f64> {
    DEFAULT_WIDTHS.to_vec()
}

fn default_true() -> bool {
    true
}

fn default_max_angular() -> f64 {
    DEFAULT_MAX_ANGULAR_SPEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub gains: GainSet,
    /// Learning rate per channel; zero reduces to plain feedback linearisation.
    pub eta: [f64; 2],
    #[serde(default = "default_centers")]
    pub centers: Vec<f64>,
    #[serde(default = "default_widths")]
    pub widths: Vec<f64>,
    #[serde(default = "default_true")]
    pub pose_feedback: bool,
    /// When false the RBF path is skipped entirely and `d_hat = 0`.
    #[serde(default = "default_true")]
    pub adaptive: bool,
    #[serde(default = "default_max_angular")]
    pub max_angular_speed: f64,
    #[serde(default)]
    pub torque_reference: TorqueReference,
    #[serde(default)]
    pub adaptation_signal: AdaptationSignal,
    /// Weights the logged Lyapunov surrogate is measured against (zero when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov_reference: Option<[Vec<f64>; 2]>,
}

impl ControllerConfig {
    pub fn with_gains(gains: GainSet, eta: [f64; 2]) -> Self {
        Self {
            gains,
            eta,
            centers: default_centers(),
            widths: default_widths(),
            pose_feedback: true,
            adaptive: true,
            max_angular_speed: DEFAULT_MAX_ANGULAR_SPEED,
            torque_reference: TorqueReference::default(),
            adaptation_signal: AdaptationSignal::default(),
            lyapunov_reference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if !(self.max_angular_speed.is_finite() && self.max_angular_speed > 0.0) {
            return Err(Error::validation("controller.max_angular_speed", "must be > 0"));
        }
        if let Some(refs) = &self.lyapunov_reference {
            if refs.iter().any(|r| r.len() != self.centers.len()) {
                return Err(Error::validation(
                    "controller.lyapunov_reference",
                    "each channel needs one weight per neuron",
                ));
            }
        }
        for eta in self.eta {
            RbfLayer::zeroed(self.centers.clone(), self.widths.clone(), eta)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub layers: [RbfLayer; 2],
    pub last_command: BodyTwist,
    pub gains: GainSet,
}

impl ControllerState {
    pub fn new(config: &ControllerConfig) -> Result<Self> {
        config.validate()?;
        let layer = |eta| RbfLayer::zeroed(config.centers.clone(), config.widths.clone(), eta);
        Ok(Self {
            layers: [layer(config.eta[0])?, layer(config.eta[1])?],
            last_command: BodyTwist::ZERO,
            gains: config.gains,
        })
    }
}

/// State the controller closes the loop on (ground truth or fused estimate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub pose: Pose2D,
    pub twist: BodyTwist,
}

/// Everything one control tick produces, including internals for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub tau: Vec2,
    pub twist_cmd: BodyTwist,
    pub v_c: BodyTwist,
    pub pose_error: Vector3<f64>,
    /// Error entering the torque law.
    pub v_tilde: Vec2,
    /// `v - v_c`.
    pub tracking_error: Vec2,
    /// `v_c - v_r`.
    pub pose_correction: Vec2,
    pub d_hat: Vec2,
    pub phi_norm: [f64; 2],
    /// Per-channel `0.5 v_tilde^2 + |w - w_ref|^2 / (2 eta)` before this tick's adaptation.
    pub lyapunov: [f64; 2],
}

/// Feedback-linearising torque for the reduced dynamics.
pub fn fbl_torque(
    params: &RobotParams,
    v: &BodyTwist,
    v_r: &BodyTwist,
    v_r_dot: &Vec2,
    gains: &GainSet,
    d_hat: &Vec2,
) -> Result<Vec2> {
    let b_inv = input_matrix_inverse(params)?;
    let v_tilde = v.as_vec() - v_r.as_vec();
    let accel = v_r_dot - gains.lambda_matrix() * v_tilde - d_hat;
    let c = coriolis_matrix(params, v.omega);
    Ok(b_inv * (c * v.as_vec() + mass_matrix(params) * accel))
}

/// Pose error `[e_x, e_y, e_theta]` expressed in the robot frame.
pub fn kanayama_error(q_r: &Pose2D, q: &Pose2D) -> Vector3<f64> {
    let (s, c) = q.theta().sin_cos();
    let dx = q_r.x() - q.x();
    let dy = q_r.y() - q.y();
    // same as angle_diff; both thetas are finite by the Pose2D invariant
    let e_theta = wrap(q_r.theta() - q.theta());
    Vector3::new(c * dx + s * dy, -s * dx + c * dy, e_theta)
}

/// `v_c = [v_d cos e_th + k1 e_x, omega_d + k2 v_d e_y + k3 v_d sin e_th]`.
pub fn kanayama_velocity(v_d: f64, omega_d: f64, e: &Vector3<f64>, gains: &GainSet) -> BodyTwist {
    BodyTwist::new(
        v_d * e[2].cos() + gains.k1 * e[0],
        omega_d + gains.k2 * v_d * e[1] + gains.k3 * v_d * e[2].sin(),
    )
}

/// Symmetric saturation; values already inside the bounds pass through untouched.
pub fn saturate(t: BodyTwist, max_speed: f64, max_angular: f64) -> BodyTwist {
    BodyTwist::new(t.v_x.clamp(-max_speed, max_speed), t.omega.clamp(-max_angular, max_angular))
}

/// One control tick: pure transition from `state` to the returned state.
pub fn command(
    state: &ControllerState,
    config: &ControllerConfig,
    params: &RobotParams,
    feedback: &Feedback,
    reference: &ReferenceSample,
    dt: f64,
) -> Result<(Command, ControllerState)> {
    if !(dt > 0.0) {
        return Err(Error::validation("control dt", format!("must be > 0, got {dt}")));
    }
    let v = feedback.twist.validated()?;
    let gains = &state.gains;
    let v_r = BodyTwist::new(reference.v_d, reference.omega_d);

    let pose_error = kanayama_error(&reference.pose, &feedback.pose);
    let v_c = if config.pose_feedback {
        kanayama_velocity(reference.v_d, reference.omega_d, &pose_error, gains)
    } else {
        v_r
    };
    let v_c = saturate(v_c, params.max_speed, config.max_angular_speed);

    let tracking_error = v.as_vec() - v_c.as_vec();
    let pose_correction = v_c.as_vec() - v_r.as_vec();
    let torque_ref = match config.torque_reference {
        TorqueReference::Command => v_c,
        TorqueReference::Trajectory => v_r,
    };
    let v_tilde = v.as_vec() - torque_ref.as_vec();
    let adapt_error = match config.adaptation_signal {
        AdaptationSignal::Tracking => v_tilde,
        AdaptationSignal::PoseCorrection => pose_correction,
    };

    let mut next = state.clone();
    let mut d_hat = Vec2::zeros();
    let mut phi_norm = [0.0; 2];
    let mut lyapunov = [0.0; 2];
    let inputs = [v.v_x, v.omega];
    for i in 0..2 {
        lyapunov[i] = 0.5 * adapt_error[i] * adapt_error[i];
        if !config.adaptive {
            continue;
        }
        let layer = &state.layers[i];
        let phi = layer.activations(inputs[i]);
        phi_norm[i] = phi.iter().map(|p| p * p).sum::<f64>().sqrt();
        d_hat[i] = layer.estimate_with(&phi);
        if layer.eta() > 0.0 {
            let w_err = match &config.lyapunov_reference {
                Some(refs) => layer.weight_error_sq(&refs[i]),
                None => layer.weights().iter().map(|w| w * w).sum(),
            };
            lyapunov[i] += w_err / (2.0 * layer.eta());
        }
        next.layers[i] = layer
            .adapt(adapt_error[i], &phi, dt)
            .map_err(|_| Error::AdaptationDiverged { channel: i })?;
    }

    let tau = fbl_torque(params, &v, &torque_ref, &reference.v_r_dot, gains, &d_hat)?;
    let accel = reference.v_r_dot - gains.lambda_matrix() * v_tilde - d_hat;
    let twist_cmd = saturate(
        BodyTwist::from_vec(&(state.last_command.as_vec() + accel * dt)),
        params.max_speed,
        config.max_angular_speed,
    );
    if !(tau.iter().all(|t| t.is_finite()) && twist_cmd.is_finite()) {
        return Err(Error::validation("controller output", "non-finite command"));
    }
    next.last_command = twist_cmd;

    Ok((
        Command {
            tau,
            twist_cmd,
            v_c,
            pose_error,
            v_tilde,
            tracking_error,
            pose_correction,
            d_hat,
            phi_norm,
            lyapunov,
        },
        next,
    ))
}

/// Owns the controller state and threads it through [`command`].
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    params: RobotParams,
    state: ControllerState,
}

impl Controller {
    pub fn new(config: ControllerConfig, params: RobotParams) -> Result<Self> {
        params.validate()?;
        let state = ControllerState::new(&config)?;
        Ok(Self {
            config,
            params,
            state,
        })
    }

    /// Seed the integrated twist command, e.g. with the robot's initial velocity.
    pub fn with_initial_command(mut self, twist: BodyTwist) -> Self {
        self.state.last_command = twist;
        self
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn command(&mut self, feedback: &Feedback, reference: &ReferenceSample, dt: f64) -> Result<Command> {
        let (cmd, next) = command(&self.state, &self.config, &self.params, feedback, reference, dt)?;
        self.state = next;
        Ok(cmd)
    }
}
