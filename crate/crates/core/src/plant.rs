//! Ground-truth differential-drive model.
//!
//! The reduced dynamics in body velocities `v = [v_x, omega]` are
//!
//! ```text
//! M v' + C(theta') v + tau_d = B tau
//! ```
//!
//! with `M = diag(m, I_z + m d^2)`, `C = [[0, -2 m d theta'], [2 m d theta', 0]]` and
//! `B = (1/R) [[1, 1], [L, -L]]`. The centre-of-mass pose follows the nonholonomic
//! kinematics. Both are advanced together with a fixed-step RK4.

use nalgebra::{Vector3, Vector5};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{invert, BodyTwist, Mat2, Pose2D, RobotParams, Vec2};

pub const MAX_PLANT_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub pose: Pose2D,
    pub twist: BodyTwist,
    pub time: f64,
}

/// A torque pulse active on `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipEvent {
    pub start: f64,
    pub duration: f64,
    pub torque: [f64; 2],
}

impl SlipEvent {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

/// Generalised disturbance `tau_d` in the reduced coordinates (N, N m).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceModel {
    pub viscous: [f64; 2],
    pub coulomb: [f64; 2],
    /// Always-on offset.
    pub constant: [f64; 2],
    pub slip_events: Vec<SlipEvent>,
    pub noise_std: [f64; 2],
}

impl DisturbanceModel {
    pub fn validate(&self) -> Result<()> {
        for (name, arr) in [
            ("disturbance.viscous", self.viscous),
            ("disturbance.coulomb", self.coulomb),
            ("disturbance.noise_std", self.noise_std),
        ] {
            if arr.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::validation(name, "entries must be finite and >= 0"));
            }
        }
        if self.constant.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("disturbance.constant", "entries must be finite"));
        }
        for (i, ev) in self.slip_events.iter().enumerate() {
            let ok = ev.start.is_finite()
                && ev.duration.is_finite()
                && ev.duration >= 0.0
                && ev.torque.iter().all(|v| v.is_finite());
            if !ok {
                return Err(Error::validation(
                    format!("disturbance.slip_events[{i}]"),
                    "start/torque must be finite and duration >= 0",
                ));
            }
        }
        Ok(())
    }

    pub fn slip_active(&self, t: f64) -> bool {
        self.slip_events.iter().any(|e| e.active(t))
    }

    /// Noise-free part of the disturbance at body twist `twist` and time `t`.
    pub fn deterministic(&self, twist: &BodyTwist, t: f64) -> Vec2 {
        let v = [twist.v_x, twist.omega];
        let mut tau = Vec2::new(self.constant[0], self.constant[1]);
        for i in 0..2 {
            tau[i] += self.viscous[i] * v[i] + self.coulomb[i] * sign(v[i]);
        }
        for ev in self.slip_events.iter().filter(|e| e.active(t)) {
            tau += Vec2::new(ev.torque[0], ev.torque[1]);
        }
        tau
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let mut n = Vec2::zeros();
        for i in 0..2 {
            if self.noise_std[i] > 0.0 {
                // std validated >= 0 and finite
                n[i] = Normal::new(0.0, self.noise_std[i]).unwrap().sample(rng);
            }
        }
        n
    }
}

// sign(0) = 0 so Coulomb friction vanishes at rest.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mass_matrix(params: &RobotParams) -> Mat2 {
    let d = params.com_offset;
    Mat2::new(params.mass, 0.0, 0.0, params.inertia + params.mass * d * d)
}

pub fn coriolis_matrix(params: &RobotParams, theta_dot: f64) -> Mat2 {
    let c = 2.0 * params.mass * params.com_offset * theta_dot;
    Mat2::new(0.0, -c, c, 0.0)
}

pub fn input_matrix(params: &RobotParams) -> Mat2 {
    let r = params.wheel_radius;
    let l = params.wheel_separation;
    Mat2::new(1.0, 1.0, l, -l) / r
}

pub fn input_matrix_inverse(params: &RobotParams) -> Result<Mat2> {
    invert(&input_matrix(params), "input matrix B")
}

/// Centre-of-mass pose rate `[x', y', theta']` for body twist `twist`.
pub fn forward_kinematics(pose: &Pose2D, twist: &BodyTwist, d: f64) -> Vector3<f64> {
    kinematics(pose.theta(), twist, d)
}

fn kinematics(theta: f64, twist: &BodyTwist, d: f64) -> Vector3<f64> {
    let (s, c) = theta.sin_cos();
    Vector3::new(
        twist.v_x * c - d * twist.omega * s,
        twist.v_x * s + d * twist.omega * c,
        twist.omega,
    )
}

/// Violation of the no-slip constraint `y' cos(theta) - x' sin(theta) - d theta'`.
pub fn constraint_residual(pose_rate: &Vector3<f64>, theta: f64, d: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    pose_rate[1] * c - pose_rate[0] * s - d * pose_rate[2]
}

/// Full disturbance sample: deterministic terms plus one Gaussian noise draw.
pub fn disturbance_torque<R: Rng + ?Sized>(
    model: &DisturbanceModel,
    twist: &BodyTwist,
    t: f64,
    rng: &mut R,
) -> Vec2 {
    model.deterministic(twist, t) + model.noise(rng)
}

/// What drives the plant over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Actuation {
    /// Wheel torques `(tau_right, tau_left)`.
    Torque(Vec2),
    /// First-order velocity following `v' = (cmd - v) / time_constant`, disturbance still applied.
    Twist { command: BodyTwist, time_constant: f64 },
}

/// Advances the plant under wheel torques.
pub fn step<R: Rng + ?Sized>(
    state: &PlantState,
    tau: Vec2,
    model: &DisturbanceModel,
    params: &RobotParams,
    dt: f64,
    rng: &mut R,
) -> Result<PlantState> {
    step_with(state, Actuation::Torque(tau), model, params, dt, rng)
}

pub fn step_with<R: Rng + ?Sized>(
    state: &PlantState,
    actuation: Actuation,
    model: &DisturbanceModel,
    params: &RobotParams,
    dt: f64,
    rng: &mut R,
) -> Result<PlantState> {
    if !(dt > 0.0 && dt <= MAX_PLANT_DT) {
        return Err(Error::validation("plant dt", format!("must lie in (0, {MAX_PLANT_DT}], got {dt}")));
    }
    let m_inv = invert(&mass_matrix(params), "mass matrix M")?;
    let b = input_matrix(params);
    let d = params.com_offset;
    let noise = model.noise(rng);
    let t0 = state.time;

    // s = [v_x, omega, x, y, theta]; theta left unwrapped inside the stages
    let deriv = |t: f64, s: &Vector5<f64>| -> Vector5<f64> {
        let twist = BodyTwist::new(s[0], s[1]);
        let v = twist.as_vec();
        let tau_d = model.deterministic(&twist, t) + noise;
        let accel = match actuation {
            Actuation::Torque(tau) => {
                m_inv * (b * tau - coriolis_matrix(params, twist.omega) * v - tau_d)
            }
            Actuation::Twist {
                command,
                time_constant,
            } => (command.as_vec() - v) / time_constant - m_inv * tau_d,
        };
        let rate = kinematics(s[4], &twist, d);
        Vector5::new(accel[0], accel[1], rate[0], rate[1], rate[2])
    };

    let s0 = Vector5::new(
        state.twist.v_x,
        state.twist.omega,
        state.pose.x(),
        state.pose.y(),
        state.pose.theta(),
    );
    let k1 = deriv(t0, &s0);
    let k2 = deriv(t0 + 0.5 * dt, &(s0 + k1 * (0.5 * dt)));
    let k3 = deriv(t0 + 0.5 * dt, &(s0 + k2 * (0.5 * dt)));
    let k4 = deriv(t0 + dt, &(s0 + k3 * dt));
    let s1 = s0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let time = t0 + dt;
    for (i, name) in ["v_x", "omega", "x", "y", "theta"].iter().enumerate() {
        if !s1[i].is_finite() {
            return Err(Error::IntegrationDiverged {
                quantity: (*name).to_string(),
                time,
            });
        }
    }
    Ok(PlantState {
        pose: Pose2D::from_parts(s1[2], s1[3], s1[4]),
        twist: BodyTwist::new(s1[0], s1[1]),
        time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) fn sim_params() -> RobotParams {
        RobotParams {
            mass: 0.10054,
            wheel_radius: 0.034,
            wheel_separation: 0.17,
            inertia: 0.003,
            com_offset: 0.0,
            max_speed: 0.46,
        }
    }

    fn params(m: f64, iz: f64, d: f64) -> RobotParams {
        RobotParams {
            mass: m,
            inertia: iz,
            com_offset: d,
            ..sim_params()
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn mass_matrix_examples() {
        assert_eq!(mass_matrix(&sim_params()), Mat2::new(0.10054, 0.0, 0.0, 0.003));
        assert_eq!(mass_matrix(&params(1.0, 1.0, 0.0)), Mat2::identity());
        assert_eq!(mass_matrix(&params(2.0, 1.0, 1.0)), Mat2::new(2.0, 0.0, 0.0, 3.0));
    }

    #[test]
    fn coriolis_examples() {
        assert_eq!(coriolis_matrix(&params(2.0, 1.0, 0.1), 0.0), Mat2::zeros());
        assert_eq!(coriolis_matrix(&sim_params(), 3.0), Mat2::zeros());
        let c = coriolis_matrix(&params(2.0, 1.0, 0.1), 1.0);
        assert!((c - Mat2::new(0.0, -0.4, 0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn input_matrix_examples() {
        let b = input_matrix(&sim_params());
        let expect = Mat2::new(29.411764705882355, 29.411764705882355, 5.0, -5.0);
        assert!((b - expect).norm() < 1e-9);
        let unit = RobotParams {
            wheel_radius: 1.0,
            wheel_separation: 1.0,
            ..sim_params()
        };
        assert_eq!(input_matrix(&unit), Mat2::new(1.0, 1.0, 1.0, -1.0));
        // closed form (R/2) [[1, 1/L], [1, -1/L]]
        let inv = input_matrix_inverse(&sim_params()).unwrap();
        let closed = Mat2::new(0.017, 0.1, 0.017, -0.1);
        assert!((inv - closed).norm() < 1e-12);
        assert!((b * inv - Mat2::identity()).norm() < 1e-12);
    }

    #[test]
    fn kinematics_examples() {
        let p0 = Pose2D::new(0.0, 0.0, 0.0).unwrap();
        let r = forward_kinematics(&p0, &BodyTwist::new(1.0, 0.5), 0.0);
        assert_eq!(r, Vector3::new(1.0, 0.0, 0.5));
        let p90 = Pose2D::new(0.0, 0.0, FRAC_PI_2).unwrap();
        let r = forward_kinematics(&p90, &BodyTwist::new(1.0, 0.0), 0.0);
        assert!((r - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let r = forward_kinematics(&p0, &BodyTwist::new(0.0, 1.0), 0.1);
        assert!((r - Vector3::new(0.0, 0.1, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn constraint_examples() {
        assert_eq!(constraint_residual(&Vector3::new(0.0, 1.0, 0.0), 0.0, 0.0), 1.0);
        assert!(constraint_residual(&Vector3::new(1.0, 0.1, 1.0), 0.0, 0.1).abs() < 1e-15);
    }

    #[test]
    fn disturbance_examples() {
        let mut r = rng();
        let zero = DisturbanceModel::default();
        assert_eq!(
            disturbance_torque(&zero, &BodyTwist::new(0.7, -0.3), 1.0, &mut r),
            Vec2::zeros()
        );
        let visc = DisturbanceModel {
            viscous: [0.1, 0.0],
            ..Default::default()
        };
        let tau = disturbance_torque(&visc, &BodyTwist::new(1.0, 0.0), 0.0, &mut r);
        assert!((tau - Vec2::new(0.1, 0.0)).norm() < 1e-15);
        let coul = DisturbanceModel {
            coulomb: [0.2, 0.0],
            ..Default::default()
        };
        let tau = disturbance_torque(&coul, &BodyTwist::new(-0.5, 0.0), 0.0, &mut r);
        assert_eq!(tau, Vec2::new(-0.2, 0.0));
        // sign(0) = 0
        let tau = disturbance_torque(&coul, &BodyTwist::ZERO, 0.0, &mut r);
        assert_eq!(tau, Vec2::zeros());
    }

    #[test]
    fn slip_events_are_half_open() {
        let m = DisturbanceModel {
            slip_events: vec![SlipEvent {
                start: 1.0,
                duration: 0.5,
                torque: [0.3, -0.1],
            }],
            ..Default::default()
        };
        assert!(!m.slip_active(0.999));
        assert!(m.slip_active(1.0));
        assert!(!m.slip_active(1.5));
        assert_eq!(m.deterministic(&BodyTwist::ZERO, 1.2), Vec2::new(0.3, -0.1));
    }

    #[test]
    fn invalid_disturbance_rejected() {
        let m = DisturbanceModel {
            viscous: [-0.1, 0.0],
            ..Default::default()
        };
        assert!(m.validate().is_err());
        let m = DisturbanceModel {
            slip_events: vec![SlipEvent {
                start: 0.0,
                duration: -1.0,
                torque: [0.0, 0.0],
            }],
            ..Default::default()
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn equilibrium_at_rest() {
        let s = PlantState::default();
        let next = step(&s, Vec2::zeros(), &DisturbanceModel::default(), &sim_params(), 0.01, &mut rng()).unwrap();
        assert_eq!(next.pose, s.pose);
        assert_eq!(next.twist, s.twist);
        assert_eq!(next.time, 0.01);
    }

    #[test]
    fn one_step_equal_torques() {
        let p = sim_params();
        let s = PlantState::default();
        let next = step(&s, Vec2::new(0.01, 0.01), &DisturbanceModel::default(), &p, 0.01, &mut rng()).unwrap();
        let expect = (1.0 / p.mass) * (2.0 / p.wheel_radius) * 0.01 * 0.01;
        assert!((next.twist.v_x - expect).abs() < 1e-12);
        assert!((next.twist.v_x - 0.0585).abs() < 1e-4);
        assert_eq!(next.twist.omega, 0.0);
        let rate = forward_kinematics(&next.pose, &next.twist, p.com_offset);
        assert!(constraint_residual(&rate, next.pose.theta(), p.com_offset).abs() < 1e-9);
    }

    #[test]
    fn dt_out_of_range_rejected() {
        let s = PlantState::default();
        let m = DisturbanceModel::default();
        assert!(step(&s, Vec2::zeros(), &m, &sim_params(), 0.0, &mut rng()).is_err());
        assert!(step(&s, Vec2::zeros(), &m, &sim_params(), 0.2, &mut rng()).is_err());
    }

    #[test]
    fn divergence_names_quantity() {
        let s = PlantState::default();
        let err = step(&s, Vec2::new(f64::MAX, f64::MAX), &DisturbanceModel::default(), &sim_params(), 0.1, &mut rng())
            .unwrap_err();
        match err {
            Error::IntegrationDiverged { quantity, .. } => assert_eq!(quantity, "v_x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn free_motion_keeps_twist_constant() {
        let p = sim_params();
        let mut s = PlantState {
            pose: Pose2D::new(0.3, -0.2, 1.0).unwrap(),
            twist: BodyTwist::new(0.35, -0.7),
            time: 0.0,
        };
        let v0 = s.twist.as_vec();
        let zero = DisturbanceModel::default();
        let mut r = rng();
        for _ in 0..1000 {
            s = step(&s, Vec2::zeros(), &zero, &p, 0.01, &mut r).unwrap();
        }
        assert!((s.twist.as_vec() - v0).norm() <= 1e-9);
        assert!((s.time - 10.0).abs() < 1e-9);
    }

    #[test]
    fn twist_mode_follows_command() {
        let p = sim_params();
        let mut s = PlantState::default();
        let act = Actuation::Twist {
            command: BodyTwist::new(0.3, 0.2),
            time_constant: 0.1,
        };
        let mut r = rng();
        for _ in 0..200 {
            s = step_with(&s, act, &DisturbanceModel::default(), &p, 0.01, &mut r).unwrap();
        }
        assert!((s.twist.v_x - 0.3).abs() < 1e-6);
        assert!((s.twist.omega - 0.2).abs() < 1e-6);
    }

    #[test]
    fn noise_is_deterministic_under_seed() {
        let m = DisturbanceModel {
            noise_std: [0.01, 0.002],
            ..Default::default()
        };
        let run = || {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            let mut s = PlantState::default();
            let mut out = Vec::new();
            for _ in 0..50 {
                s = step(&s, Vec2::new(0.01, 0.02), &m, &sim_params(), 0.01, &mut r).unwrap();
                out.push((s.pose, s.twist));
            }
            out
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn coriolis_is_skew(theta_dot in -20.0f64..20.0, m in 0.01f64..10.0, d in 0.0f64..0.5) {
            let c = coriolis_matrix(&params(m, 1.0, d), theta_dot);
            prop_assert_eq!(c + c.transpose(), Mat2::zeros());
        }

        #[test]
        fn input_matrix_inverts(r in 0.005f64..0.5, l in 0.01f64..1.0) {
            let p = RobotParams { wheel_radius: r, wheel_separation: l, ..sim_params() };
            let inv = input_matrix_inverse(&p).unwrap();
            prop_assert!((input_matrix(&p) * inv - Mat2::identity()).abs().max() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn kinematics_satisfies_constraint(
            x in -10.0f64..10.0, y in -10.0f64..10.0, th in -4.0f64..4.0,
            v in -2.0f64..2.0, w in -3.0f64..3.0, d in 0.0f64..0.5,
        ) {
            let pose = Pose2D::new(x, y, th).unwrap();
            let rate = forward_kinematics(&pose, &BodyTwist::new(v, w), d);
            prop_assert!(constraint_residual(&rate, pose.theta(), d).abs() < 1e-12);
        }
    }
}
