//! Simulated wheel odometry, IMU yaw rate, lidar odometry and visual odometry.
//!
//! Each sensor samples ground truth at `k / rate` seconds and corrupts it with
//! its own seeded noise stream, so enabling one sensor never perturbs another.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{pose_to_velocity, pose_to_velocity_world, MeasurementConfig, VELOCITY_MASK, YAW_RATE_MASK};
use crate::plant::PlantState;
use crate::types::{wrap, Pose2D};

// keeps reported covariances positive definite when a sensor is noise-free
const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Wheel,
    Imu,
    Lidar,
    Vo,
}

impl SensorKind {
    pub const ALL: [SensorKind; 4] = [SensorKind::Wheel, SensorKind::Imu, SensorKind::Lidar, SensorKind::Vo];

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Wheel => "wheel",
            SensorKind::Imu => "imu",
            SensorKind::Lidar => "lidar",
            SensorKind::Vo => "vo",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// RNG stream id; stream 0 belongs to the plant.
    pub fn stream(self) -> u64 {
        self as u64 + 1
    }

    /// Pose sensors are differenced into velocity pseudo-measurements.
    pub fn is_pose_sensor(self) -> bool {
        matches!(self, SensorKind::Lidar | SensorKind::Vo)
    }

    pub fn default_rate(self) -> f64 {
        match self {
            SensorKind::Wheel => 50.0,
            SensorKind::Imu => 100.0,
            SensorKind::Lidar => 10.0,
            SensorKind::Vo => 15.0,
        }
    }
}

/// Half-open outage window `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: f64,
    pub duration: f64,
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

/// Noise, bias and timing of one simulated sensor.
///
/// Channels are `(v_x, v_y, omega)` for velocity sensors and `(x, y, theta)` for
/// pose sensors. The IMU only uses channel 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    /// Sample rate in Hz; defaults per sensor kind.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub noise_std: [f64; 3],
    /// Initial bias.
    #[serde(default)]
    pub bias: [f64; 3],
    /// Bias random-walk density, units per sqrt(s).
    #[serde(default)]
    pub bias_walk: [f64; 3],
    /// Pose drift per second (lidar, VO).
    #[serde(default)]
    pub drift_rate: [f64; 3],
    /// Wheel reading scale error while a slip event is active.
    #[serde(default)]
    pub slip_scale: f64,
    /// Variances reported to the filter; derived from the noise when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<[f64; 3]>,
    /// Overrides the scenario seed for this sensor's stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Outage windows (VO).
    #[serde(default)]
    pub dropouts: Vec<Window>,
    /// Std of the rigid frame jump applied when VO re-initialises after an outage.
    #[serde(default)]
    pub reinit_std: [f64; 3],
}

fn enabled_default() -> bool {
    true
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            rate: None,
            noise_std: [0.0; 3],
            bias: [0.0; 3],
            bias_walk: [0.0; 3],
            drift_rate: [0.0; 3],
            slip_scale: 0.0,
            covariance: None,
            seed: None,
            dropouts: Vec::new(),
            reinit_std: [0.0; 3],
        }
    }
}

impl SensorSpec {
    pub fn rate_for(&self, kind: SensorKind) -> f64 {
        self.rate.unwrap_or_else(|| kind.default_rate())
    }

    pub fn validate(&self, kind: SensorKind) -> Result<()> {
        let name = kind.name();
        let field = |f: &str| format!("sensors.{name}.{f}");
        let rate = self.rate_for(kind);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::validation(field("rate"), format!("must be > 0, got {rate}")));
        }
        for (f, arr) in [
            ("noise_std", self.noise_std),
            ("bias_walk", self.bias_walk),
            ("reinit_std", self.reinit_std),
        ] {
            if arr.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::validation(field(f), "entries must be finite and >= 0"));
            }
        }
        for (f, arr) in [("bias", self.bias), ("drift_rate", self.drift_rate)] {
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(field(f), "entries must be finite"));
            }
        }
        if !self.slip_scale.is_finite() || self.slip_scale <= -1.0 {
            return Err(Error::validation(field("slip_scale"), "must be finite and > -1"));
        }
        if let Some(cov) = self.covariance {
            if cov.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::validation(field("covariance"), "entries must be finite and > 0"));
            }
        }
        let mut windows = self.dropouts.clone();
        if windows.iter().any(|w| !(w.start.is_finite() && w.duration.is_finite() && w.duration > 0.0)) {
            return Err(Error::validation(field("dropouts"), "windows need finite start and duration > 0"));
        }
        windows.sort_by(|a, b| a.start.total_cmp(&b.start));
        if windows.windows(2).any(|p| p[0].start + p[0].duration > p[1].start) {
            return Err(Error::validation(field("dropouts"), "windows must not overlap"));
        }
        Ok(())
    }

    /// Variances handed to the filter for this sensor's measurement channels.
    pub fn reported_variances(&self, kind: SensorKind) -> [f64; 3] {
        if let Some(cov) = self.covariance {
            return cov;
        }
        let rate = self.rate_for(kind);
        std::array::from_fn(|i| {
            let s = self.noise_std[i];
            if kind.is_pose_sensor() {
                // difference of two independent samples, divided by the period
                2.0 * s * s * rate * rate + self.drift_rate[i] * self.drift_rate[i]
            } else {
                s * s + self.bias[i] * self.bias[i]
            }
        })
        .map(|v| v + VARIANCE_FLOOR)
    }

    /// Filter measurement model for this sensor.
    pub fn measurement_config(&self, kind: SensorKind) -> Result<MeasurementConfig> {
        let var = self.reported_variances(kind);
        match kind {
            SensorKind::Imu => MeasurementConfig::diagonal(YAW_RATE_MASK, &var[2..], kind.name()),
            _ => MeasurementConfig::diagonal(VELOCITY_MASK, &var, kind.name()),
        }
    }

    pub fn in_outage(&self, t: f64) -> bool {
        self.dropouts.iter().any(|w| w.contains(t))
    }
}

/// Optional sensors of a scenario; absent sections are disabled.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSuite {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheel: Option<SensorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imu: Option<SensorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lidar: Option<SensorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vo: Option<SensorSpec>,
}

impl SensorSuite {
    pub fn get(&self, kind: SensorKind) -> Option<&SensorSpec> {
        match kind {
            SensorKind::Wheel => self.wheel.as_ref(),
            SensorKind::Imu => self.imu.as_ref(),
            SensorKind::Lidar => self.lidar.as_ref(),
            SensorKind::Vo => self.vo.as_ref(),
        }
    }

    /// Enabled sensors in fixed processing order.
    pub fn enabled(&self) -> Vec<(SensorKind, &SensorSpec)> {
        SensorKind::ALL
            .iter()
            .filter_map(|k| self.get(*k).filter(|s| s.enabled).map(|s| (*k, s)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for kind in SensorKind::ALL {
            if let Some(spec) = self.get(kind) {
                spec.validate(kind)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub kind: SensorKind,
    pub stamp: f64,
    /// `(v_x, v_y, omega)` or `(x, y, theta)` depending on the sensor.
    pub values: [f64; 3],
}

/// Stateful generator for one sensor: sample clock, noise stream, bias and VO frame.
#[derive(Debug, Clone)]
pub struct Sensor {
    kind: SensorKind,
    spec: SensorSpec,
    rate: f64,
    rng: ChaCha8Rng,
    bias: [f64; 3],
    next_index: u64,
    frame: Pose2D,
    was_out: bool,
}

impl Sensor {
    pub fn new(kind: SensorKind, spec: SensorSpec, scenario_seed: u64) -> Result<Self> {
        spec.validate(kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(scenario_seed));
        rng.set_stream(kind.stream());
        Ok(Self {
            kind,
            rate: spec.rate_for(kind),
            bias: spec.bias,
            spec,
            rng,
            next_index: 0,
            frame: Pose2D::default(),
            was_out: false,
        })
    }

    pub fn kind(&self) -> SensorKind {
        self.kind
    }

    pub fn spec(&self) -> &SensorSpec {
        &self.spec
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn next_stamp(&self) -> f64 {
        self.next_index as f64 / self.rate
    }

    fn gaussian(&mut self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for v in &mut out {
            *v = StandardNormal.sample(&mut self.rng);
        }
        out
    }

    /// Produce the reading due at [`Sensor::next_stamp`] from `truth` sampled at that
    /// instant, then advance the clock. Returns `None` during a VO outage.
    pub fn sample(&mut self, truth: &PlantState, slipping: bool) -> Option<SensorSample> {
        let stamp = self.next_stamp();
        let first = self.next_index == 0;
        self.next_index += 1;

        let walk = self.gaussian();
        if !first {
            let sq = (1.0 / self.rate).sqrt();
            for ((b, bw), w) in self.bias.iter_mut().zip(self.spec.bias_walk).zip(walk) {
                *b += bw * sq * w;
            }
        }
        let n = self.gaussian();
        let noise: [f64; 3] = std::array::from_fn(|i| self.spec.noise_std[i] * n[i]);

        let values = match self.kind {
            SensorKind::Wheel => {
                let scale = if slipping { 1.0 + self.spec.slip_scale } else { 1.0 };
                let v = [truth.twist.v_x, 0.0, truth.twist.omega];
                std::array::from_fn(|i| v[i] * scale + self.bias[i] + noise[i])
            }
            SensorKind::Imu => [0.0, 0.0, truth.twist.omega + self.bias[2] + noise[2]],
            SensorKind::Lidar | SensorKind::Vo => {
                if self.kind == SensorKind::Vo && self.spec.in_outage(stamp) {
                    self.was_out = true;
                    return None;
                }
                if self.was_out {
                    self.was_out = false;
                    let j = self.gaussian();
                    let s = self.spec.reinit_std;
                    let jump = Pose2D::from_parts(s[0] * j[0], s[1] * j[1], wrap(s[2] * j[2]));
                    self.frame = jump.compose(&self.frame);
                }
                let d = self.spec.drift_rate;
                let raw = Pose2D::from_parts(
                    truth.pose.x() + d[0] * stamp + noise[0],
                    truth.pose.y() + d[1] * stamp + noise[1],
                    wrap(truth.pose.theta() + d[2] * stamp + noise[2]),
                );
                let p = self.frame.compose(&raw);
                [p.x(), p.y(), p.theta()]
            }
        };
        Some(SensorSample {
            kind: self.kind,
            stamp,
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferencingFrame {
    /// Relative motion expressed in the previous sensor pose.
    #[default]
    Body,
    /// World-frame difference rotated by the current heading estimate.
    World,
}

/// Turns successive odometry poses into velocity pseudo-measurements.
///
/// A pair further apart than `max_gap` (for example across a VO outage) is
/// discarded so a frame re-initialisation never shows up as a velocity spike.
#[derive(Debug, Clone)]
pub struct OdometryDifferencer {
    prev: Option<(f64, Pose2D)>,
    max_gap: f64,
    frame: DifferencingFrame,
}

impl OdometryDifferencer {
    pub fn new(rate: f64, frame: DifferencingFrame) -> Self {
        Self {
            prev: None,
            max_gap: 1.5 / rate,
            frame,
        }
    }

    pub fn push(&mut self, stamp: f64, pose: Pose2D, heading: f64) -> Result<Option<Vector3<f64>>> {
        let out = match self.prev {
            Some((t0, p0)) if stamp - t0 <= self.max_gap && stamp > t0 => Some(match self.frame {
                DifferencingFrame::Body => pose_to_velocity(&p0, &pose, stamp - t0)?,
                DifferencingFrame::World => pose_to_velocity_world(&p0, &pose, stamp - t0, heading)?,
            }),
            _ => None,
        };
        self.prev = Some((stamp, pose));
        Ok(out)
    }
}
