//! Planar EKF over `[x, y, theta, v_x, v_y, omega]` with masked partial updates.
//!
//! Prediction uses a constant-velocity unicycle model; corrections use the Joseph
//! form so the covariance stays symmetric positive semi-definite.

use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::types::{angle_diff, wrap, BodyTwist, Pose2D};

pub const X: usize = 0;
pub const Y: usize = 1;
pub const THETA: usize = 2;
pub const VX: usize = 3;
pub const VY: usize = 4;
pub const OMEGA: usize = 5;

/// Mask selecting the three velocity components.
pub const VELOCITY_MASK: [bool; 6] = [false, false, false, true, true, true];
pub const YAW_RATE_MASK: [bool; 6] = [false, false, false, false, false, true];

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    pub time: f64,
}

impl EkfState {
    pub fn new(pose: &Pose2D, twist: &BodyTwist, p0: Matrix6<f64>, time: f64) -> Self {
        Self {
            x: Vector6::new(pose.x(), pose.y(), pose.theta(), twist.v_x, 0.0, twist.omega),
            p: p0,
            time,
        }
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::from_parts(self.x[X], self.x[Y], self.x[THETA])
    }

    pub fn twist(&self) -> BodyTwist {
        BodyTwist::new(self.x[VX], self.x[OMEGA])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub q: Matrix6<f64>,
    pub p0: Matrix6<f64>,
}

impl NoiseConfig {
    pub fn diagonal(p0: [f64; 6], q: [f64; 6]) -> Result<Self> {
        let cfg = Self {
            q: Matrix6::from_diagonal(&Vector6::from(q)),
            p0: Matrix6::from_diagonal(&Vector6::from(p0)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("ekf.process_noise", &self.q), ("ekf.initial_covariance", &self.p0)] {
            if !is_symmetric_psd(m) {
                return Err(Error::validation(name, "must be symmetric positive semi-definite"));
            }
        }
        Ok(())
    }
}

fn is_symmetric_psd(m: &Matrix6<f64>) -> bool {
    if m.iter().any(|v| !v.is_finite()) || (m - m.transpose()).abs().max() > 1e-12 {
        return false;
    }
    m.symmetric_eigenvalues().min() >= -1e-12
}

/// Which state components a sensor corrects, and with what covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementConfig {
    mask: [bool; 6],
    r: DMatrix<f64>,
    label: String,
}

impl MeasurementConfig {
    pub fn new(mask: [bool; 6], r: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        let dim = mask.iter().filter(|m| **m).count();
        if dim == 0 {
            return Err(Error::validation(format!("{label}.mask"), "at least one component must be selected"));
        }
        if r.nrows() != dim || r.ncols() != dim {
            return Err(Error::validation(
                format!("{label}.covariance"),
                format!("expected {dim}x{dim}, got {}x{}", r.nrows(), r.ncols()),
            ));
        }
        if r.iter().any(|v| !v.is_finite()) || (&r - r.transpose()).abs().max() > 1e-12 || r.clone().cholesky().is_none() {
            return Err(Error::validation(format!("{label}.covariance"), "must be symmetric positive definite"));
        }
        Ok(Self { mask, r, label })
    }

    pub fn diagonal(mask: [bool; 6], variances: &[f64], label: impl Into<String>) -> Result<Self> {
        Self::new(mask, DMatrix::from_diagonal(&DVector::from_column_slice(variances)), label)
    }

    pub fn dim(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn mask(&self) -> &[bool; 6] {
        &self.mask
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn indices(&self) -> Vec<usize> {
        (0..6).filter(|i| self.mask[*i]).collect()
    }

    /// Selection matrix `H` built from the mask.
    pub fn observation_matrix(&self) -> DMatrix<f64> {
        let idx = self.indices();
        let mut h = DMatrix::zeros(idx.len(), 6);
        for (row, col) in idx.iter().enumerate() {
            h[(row, *col)] = 1.0;
        }
        h
    }

    pub fn with_scaled_covariance(&self, factor: f64) -> Result<Self> {
        Self::new(self.mask, &self.r * factor, self.label.clone())
    }
}

pub fn process_model(x: &Vector6<f64>, dt: f64) -> Vector6<f64> {
    let (s, c) = x[THETA].sin_cos();
    let mut out = *x;
    out[X] += (x[VX] * c - x[VY] * s) * dt;
    out[Y] += (x[VX] * s + x[VY] * c) * dt;
    out[THETA] = wrap(x[THETA] + x[OMEGA] * dt);
    out
}

pub fn process_jacobian(x: &Vector6<f64>, dt: f64) -> Matrix6<f64> {
    let (s, c) = x[THETA].sin_cos();
    let mut f = Matrix6::identity();
    f[(X, THETA)] = (-x[VX] * s - x[VY] * c) * dt;
    f[(X, VX)] = c * dt;
    f[(X, VY)] = -s * dt;
    f[(Y, THETA)] = (x[VX] * c - x[VY] * s) * dt;
    f[(Y, VX)] = s * dt;
    f[(Y, VY)] = c * dt;
    f[(THETA, OMEGA)] = dt;
    f
}

fn symmetrize(p: &Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

/// Time update: `x <- f(x)`, `P <- F P F^T + Q`.
pub fn predict(state: &EkfState, noise: &NoiseConfig, dt: f64) -> Result<EkfState> {
    if !(dt > 0.0) {
        return Err(Error::validation("predict dt", format!("must be > 0, got {dt}")));
    }
    let f = process_jacobian(&state.x, dt);
    let p = symmetrize(&(f * state.p * f.transpose() + noise.q));
    let time = state.time + dt;
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::FilterDiverged {
            reason: "non-finite covariance after predict".into(),
            time,
        });
    }
    Ok(EkfState {
        x: process_model(&state.x, dt),
        p,
        time,
    })
}

/// Result of one measurement correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub residual: DVector<f64>,
    /// `sqrt(y^T S^-1 y)`.
    pub mahalanobis: f64,
}

impl Innovation {
    pub fn norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Measurement update with Joseph-form covariance correction.
pub fn update(state: &EkfState, z: &DVector<f64>, cfg: &MeasurementConfig) -> Result<(EkfState, Innovation)> {
    let m = cfg.dim();
    if z.len() != m {
        return Err(Error::validation(
            format!("{}.measurement", cfg.label),
            format!("expected {m} values, got {}", z.len()),
        ));
    }
    let h = cfg.observation_matrix();
    let p = DMatrix::from_column_slice(6, 6, state.p.as_slice());
    let x = DVector::from_column_slice(state.x.as_slice());

    let mut y = z - &h * &x;
    for (row, idx) in cfg.indices().iter().enumerate() {
        if *idx == THETA {
            y[row] = angle_diff(z[row], x[THETA]).map_err(|_| Error::validation(format!("{}.theta", cfg.label), "non-finite"))?;
        }
    }

    let s = &h * &p * h.transpose() + &cfg.r;
    let s_inv = s
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularInnovation {
            sensor: cfg.label.clone(),
        })?;
    let k = &p * h.transpose() * &s_inv;
    let x_new = &x + &k * &y;
    let i_kh = DMatrix::identity(6, 6) - &k * &h;
    let p_new = &i_kh * &p * i_kh.transpose() + &k * &cfg.r * k.transpose();

    let mut x_out = Vector6::from_column_slice(x_new.as_slice());
    x_out[THETA] = wrap(x_out[THETA]);
    let p_out = symmetrize(&Matrix6::from_column_slice(p_new.as_slice()));
    if x_out.iter().chain(p_out.iter()).any(|v| !v.is_finite()) {
        return Err(Error::FilterDiverged {
            reason: format!("non-finite state after '{}' update", cfg.label),
            time: state.time,
        });
    }
    let mahalanobis = (y.transpose() * &s_inv * &y)[(0, 0)].max(0.0).sqrt();
    Ok((
        EkfState {
            x: x_out,
            p: p_out,
            time: state.time,
        },
        Innovation {
            residual: y,
            mahalanobis,
        },
    ))
}

/// Body-frame velocity `(v_x, v_y, omega)` that carries `prev` to `curr` in `dt` seconds.
///
/// The planar displacement is rotated into the previous body frame and passed through
/// the SE(2) logarithm, so a constant twist is recovered exactly, including on arcs.
pub fn pose_to_velocity(prev: &Pose2D, curr: &Pose2D, dt: f64) -> Result<Vector3<f64>> {
    if !(dt > 0.0) {
        return Err(Error::validation("dt", format!("must be > 0, got {dt}")));
    }
    let dtheta = angle_diff(curr.theta(), prev.theta())?;
    let (s, c) = prev.theta().sin_cos();
    let dx = curr.x() - prev.x();
    let dy = curr.y() - prev.y();
    let bx = c * dx + s * dy;
    let by = -s * dx + c * dy;

    // V^-1 for V = [[a, -b], [b, a]], a = sin(t)/t, b = (1 - cos(t))/t
    let (a, b) = if dtheta.abs() < 1e-6 {
        (1.0 - dtheta * dtheta / 6.0, 0.5 * dtheta)
    } else {
        (dtheta.sin() / dtheta, (1.0 - dtheta.cos()) / dtheta)
    };
    let n = a * a + b * b;
    let vx = (a * bx + b * by) / n;
    let vy = (-b * bx + a * by) / n;
    Ok(Vector3::new(vx, vy, dtheta) / dt)
}

/// World-frame finite difference rotated into the body frame at `heading`.
pub fn pose_to_velocity_world(prev: &Pose2D, curr: &Pose2D, dt: f64, heading: f64) -> Result<Vector3<f64>> {
    if !(dt > 0.0) {
        return Err(Error::validation("dt", format!("must be > 0, got {dt}")));
    }
    let (s, c) = heading.sin_cos();
    let vx = (curr.x() - prev.x()) / dt;
    let vy = (curr.y() - prev.y()) / dt;
    Ok(Vector3::new(
        c * vx + s * vy,
        -s * vx + c * vy,
        angle_diff(curr.theta(), prev.theta())? / dt,
    ))
}

/// Outcome of feeding one measurement to [`Ekf::process`].
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOutcome {
    Applied(Innovation),
    Gated(Innovation),
}

impl UpdateOutcome {
    pub fn innovation(&self) -> &Innovation {
        match self {
            UpdateOutcome::Applied(i) | UpdateOutcome::Gated(i) => i,
        }
    }
}

/// Stateful wrapper that advances the filter to each measurement stamp.
#[derive(Debug, Clone)]
pub struct Ekf {
    state: EkfState,
    noise: NoiseConfig,
    gate_sigma: Option<f64>,
}

// stamps closer than this are treated as simultaneous
const STAMP_EPS: f64 = 1e-9;

impl Ekf {
    pub fn new(state: EkfState, noise: NoiseConfig, gate_sigma: Option<f64>) -> Self {
        Self {
            state,
            noise,
            gate_sigma,
        }
    }

    pub fn state(&self) -> &EkfState {
        &self.state
    }

    pub fn predict_to(&mut self, t: f64) -> Result<()> {
        let dt = t - self.state.time;
        if dt > STAMP_EPS {
            self.state = predict(&self.state, &self.noise, dt)?;
            self.state.time = t;
        }
        Ok(())
    }

    pub fn process(&mut self, stamp: f64, z: &DVector<f64>, cfg: &MeasurementConfig) -> Result<UpdateOutcome> {
        if stamp < self.state.time - STAMP_EPS {
            return Err(Error::OutOfOrder {
                sensor: cfg.label().to_string(),
                stamp,
                filter_time: self.state.time,
            });
        }
        self.predict_to(stamp)?;
        let (next, innovation) = update(&self.state, z, cfg)?;
        if let Some(gate) = self.gate_sigma {
            if innovation.mahalanobis > gate {
                return Ok(UpdateOutcome::Gated(innovation));
            }
        }
        self.state = next;
        Ok(UpdateOutcome::Applied(innovation))
    }
}
