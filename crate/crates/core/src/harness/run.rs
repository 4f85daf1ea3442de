//! Closed-loop rollout: plant, sensors, EKF and controller on a shared clock.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controller::{Command, Controller, Feedback};
use crate::error::{Error, Result};
use crate::estimation::{Ekf, EkfState, MeasurementConfig};
use crate::plant::{step_with, Actuation, PlantState};
use crate::sensors::{OdometryDifferencer, Sensor, SensorKind, SensorSample};
use crate::trajectory::{sample_reference, ReferenceSample};
use crate::types::{angle_diff, wrap, Pose2D};

use super::config::{FeedbackSource, MetricsConfig, PlantInput, ScenarioConfig};

// sensor stamps within this of a plant step count as on the step
const TIME_EPS: f64 = 1e-9;

/// Everything recorded at one control tick, before the plant is advanced.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub truth: PlantState,
    /// Fused state `[x, y, theta, v_x, v_y, omega]`.
    pub ekf: [f64; 6],
    pub ekf_p_trace: f64,
    /// Largest innovation norm per sensor since the previous tick, indexed by [`SensorKind::index`].
    pub innovation: [Option<f64>; 4],
    pub feedback: Feedback,
    pub reference: ReferenceSample,
    pub command: Command,
    pub slipping: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    /// Raw sensor stream in generation order.
    pub samples: Vec<SensorSample>,
    pub transient: f64,
    pub metrics: MetricsConfig,
}

impl RunLog {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

/// Truth between two plant steps; exact at the endpoints.
fn interpolate(a: &PlantState, b: &PlantState, t: f64) -> PlantState {
    if (t - b.time).abs() <= TIME_EPS {
        return *b;
    }
    if (t - a.time).abs() <= TIME_EPS {
        return *a;
    }
    let s = (t - a.time) / (b.time - a.time);
    let lerp = |p: f64, q: f64| p + s * (q - p);
    let dtheta = angle_diff(b.pose.theta(), a.pose.theta()).unwrap_or(0.0);
    PlantState {
        pose: Pose2D::from_parts(
            lerp(a.pose.x(), b.pose.x()),
            lerp(a.pose.y(), b.pose.y()),
            wrap(a.pose.theta() + s * dtheta),
        ),
        twist: crate::types::BodyTwist::new(lerp(a.twist.v_x, b.twist.v_x), lerp(a.twist.omega, b.twist.omega)),
        time: t,
    }
}

struct Channel {
    sensor: Sensor,
    measurement: MeasurementConfig,
    differencer: Option<OdometryDifferencer>,
}

struct Fusion {
    channels: Vec<Channel>,
    ekf: Ekf,
    pending: Vec<SensorSample>,
    innovation: [Option<f64>; 4],
}

impl Fusion {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let noise = config.ekf.noise()?;
        let start = EkfState::new(&config.initial.pose, &config.initial.twist, noise.p0, 0.0);
        let mut channels = Vec::new();
        for (kind, spec) in config.sensors.enabled() {
            let sensor = Sensor::new(kind, spec.clone(), config.seed)?;
            let differencer = kind
                .is_pose_sensor()
                .then(|| OdometryDifferencer::new(sensor.rate(), config.ekf.differencing));
            channels.push(Channel {
                measurement: spec.measurement_config(kind)?,
                sensor,
                differencer,
            });
        }
        Ok(Self {
            channels,
            ekf: Ekf::new(start, noise, config.ekf.gate_sigma),
            pending: Vec::new(),
            innovation: [None; 4],
        })
    }

    /// Sample every sensor due in `(prev.time, next.time]`, or at `next.time` when `prev` is `None`.
    fn sample(&mut self, prev: Option<&PlantState>, next: &PlantState, config: &ScenarioConfig, out: &mut Vec<SensorSample>) {
        for ch in &mut self.channels {
            while ch.sensor.next_stamp() <= next.time + TIME_EPS {
                let stamp = ch.sensor.next_stamp();
                let truth = match prev {
                    Some(p) => interpolate(p, next, stamp),
                    None => *next,
                };
                let slipping = config.disturbance.slip_active(stamp);
                if let Some(s) = ch.sensor.sample(&truth, slipping) {
                    self.pending.push(s);
                    out.push(s);
                }
            }
        }
    }

    fn drain(&mut self) -> Result<()> {
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by(|a, b| a.stamp.total_cmp(&b.stamp).then(a.kind.cmp(&b.kind)));
        for s in pending {
            let ch = self
                .channels
                .iter_mut()
                .find(|c| c.sensor.kind() == s.kind)
                .expect("sample from a configured sensor");
            let z = match s.kind {
                SensorKind::Wheel => DVector::from_column_slice(&s.values),
                SensorKind::Imu => DVector::from_element(1, s.values[2]),
                SensorKind::Lidar | SensorKind::Vo => {
                    let pose = Pose2D::new(s.values[0], s.values[1], s.values[2])?;
                    let heading = self.ekf.state().x[crate::estimation::THETA];
                    let diff = ch.differencer.as_mut().expect("pose sensors carry a differencer");
                    match diff.push(s.stamp, pose, heading)? {
                        Some(v) => DVector::from_column_slice(v.as_slice()),
                        None => continue,
                    }
                }
            };
            let outcome = self.ekf.process(s.stamp, &z, &ch.measurement)?;
            // gated updates still report their innovation
            let norm = outcome.innovation().norm();
            let slot = &mut self.innovation[s.kind.index()];
            *slot = Some(slot.map_or(norm, |m: f64| m.max(norm)));
        }
        Ok(())
    }
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::Validation { field, reason } => Error::Validation {
            field,
            reason: format!("{reason} (at t = {t:.4} s)"),
        },
        Error::SingularInnovation { sensor } => Error::FilterDiverged {
            reason: format!("innovation covariance for '{sensor}' is singular"),
            time: t,
        },
        Error::AdaptationDiverged { channel } => Error::IntegrationDiverged {
            quantity: format!("RBF weights on channel {channel}"),
            time: t,
        },
        other => other,
    }
}

/// Deterministic closed-loop rollout of `config`; one log row per control tick.
pub fn run(config: &ScenarioConfig) -> Result<RunLog> {
    config.validate()?;
    let plant_dt = config.timing.plant_dt;
    let substeps = config.timing.substeps();
    let control_dt = plant_dt * substeps as f64;
    let n_ticks = (config.duration / control_dt + TIME_EPS).floor() as usize;

    let mut plant_rng = ChaCha8Rng::seed_from_u64(config.seed);
    plant_rng.set_stream(0);
    let mut controller = Controller::new(config.controller.clone(), config.robot)?.with_initial_command(config.initial.twist);
    let mut fusion = Fusion::new(config)?;

    let mut truth = PlantState {
        pose: config.initial.pose,
        twist: config.initial.twist,
        time: 0.0,
    };
    let mut rows = Vec::with_capacity(n_ticks);
    let mut samples = Vec::new();
    if n_ticks > 0 {
        fusion.sample(None, &truth, config, &mut samples);
    }

    for k in 0..n_ticks {
        let t = (k * substeps) as f64 * plant_dt;
        fusion.drain().map_err(|e| with_time(e, t))?;
        fusion.ekf.predict_to(t).map_err(|e| with_time(e, t))?;
        let est = fusion.ekf.state().clone();

        let reference = sample_reference(&config.path, t)?;
        let feedback = match config.feedback {
            FeedbackSource::Truth => Feedback {
                pose: truth.pose,
                twist: truth.twist,
            },
            FeedbackSource::Ekf => Feedback {
                pose: est.pose(),
                twist: est.twist(),
            },
        };
        let command = controller
            .command(&feedback, &reference, control_dt)
            .map_err(|e| with_time(e, t))?;

        rows.push(LogRow {
            t,
            truth,
            ekf: std::array::from_fn(|i| est.x[i]),
            ekf_p_trace: est.p.trace(),
            innovation: std::mem::take(&mut fusion.innovation),
            feedback,
            reference,
            slipping: config.disturbance.slip_active(t),
            command,
        });

        let actuation = match config.plant_input {
            PlantInput::Torque => Actuation::Torque(command.tau),
            PlantInput::Twist => Actuation::Twist {
                command: command.twist_cmd,
                time_constant: config.plant.twist_time_constant,
            },
        };
        for j in 0..substeps {
            let prev = truth;
            truth = step_with(&prev, actuation, &config.disturbance, &config.robot, plant_dt, &mut plant_rng)?;
            // pin the clock to the grid so long runs do not accumulate rounding
            truth.time = (k * substeps + j + 1) as f64 * plant_dt;
            fusion.sample(Some(&prev), &truth, config, &mut samples);
        }
    }

    Ok(RunLog {
        rows,
        samples,
        transient: config.transient(),
        metrics: config.metrics,
    })
}
