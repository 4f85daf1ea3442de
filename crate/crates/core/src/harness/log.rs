//! CSV serialization of run logs.
//!
//! Columns are grouped by prefix: `truth.` ground truth, `ekf.` fused state and
//! per-sensor innovation norms, `ref.` reference sample, `ctl.` controller
//! internals, `cmd.` actuator outputs. Empty cells mean "no value this tick".

use std::io::Write;

use crate::error::Result;
use crate::sensors::SensorKind;

use super::run::{LogRow, RunLog};

pub const LOG_COLUMNS: [&str; 44] = [
    "t",
    "truth.x",
    "truth.y",
    "truth.theta",
    "truth.v_x",
    "truth.omega",
    "ekf.x",
    "ekf.y",
    "ekf.theta",
    "ekf.v_x",
    "ekf.v_y",
    "ekf.omega",
    "ekf.p_trace",
    "ekf.innov.wheel",
    "ekf.innov.imu",
    "ekf.innov.lidar",
    "ekf.innov.vo",
    "ref.x",
    "ref.y",
    "ref.theta",
    "ref.v_d",
    "ref.omega_d",
    "ctl.e_x",
    "ctl.e_y",
    "ctl.e_theta",
    "ctl.v_c.v_x",
    "ctl.v_c.omega",
    "ctl.v_tilde.v_x",
    "ctl.v_tilde.omega",
    "ctl.track_err.v_x",
    "ctl.track_err.omega",
    "ctl.pose_corr.v_x",
    "ctl.pose_corr.omega",
    "ctl.d_hat.v_x",
    "ctl.d_hat.omega",
    "ctl.phi_norm.v_x",
    "ctl.phi_norm.omega",
    "ctl.lyap.v_x",
    "ctl.lyap.omega",
    "cmd.tau_r",
    "cmd.tau_l",
    "cmd.v_x",
    "cmd.omega",
    "dist.slip",
];

fn cells(r: &LogRow) -> Vec<String> {
    let c = &r.command;
    let mut out: Vec<f64> = vec![
        r.t,
        r.truth.pose.x(),
        r.truth.pose.y(),
        r.truth.pose.theta(),
        r.truth.twist.v_x,
        r.truth.twist.omega,
    ];
    out.extend_from_slice(&r.ekf);
    out.push(r.ekf_p_trace);
    let mut cells: Vec<String> = out.iter().map(f64::to_string).collect();
    cells.extend(r.innovation.iter().map(|i| i.map(|v| v.to_string()).unwrap_or_default()));
    let rest = [
        r.reference.pose.x(),
        r.reference.pose.y(),
        r.reference.pose.theta(),
        r.reference.v_d,
        r.reference.omega_d,
        c.pose_error[0],
        c.pose_error[1],
        c.pose_error[2],
        c.v_c.v_x,
        c.v_c.omega,
        c.v_tilde[0],
        c.v_tilde[1],
        c.tracking_error[0],
        c.tracking_error[1],
        c.pose_correction[0],
        c.pose_correction[1],
        c.d_hat[0],
        c.d_hat[1],
        c.phi_norm[0],
        c.phi_norm[1],
        c.lyapunov[0],
        c.lyapunov[1],
        c.tau[0],
        c.tau[1],
        c.twist_cmd.v_x,
        c.twist_cmd.omega,
    ];
    cells.extend(rest.iter().map(f64::to_string));
    cells.push(u8::from(r.slipping).to_string());
    cells
}

pub fn write_log_csv<W: Write>(log: &RunLog, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LOG_COLUMNS)?;
    for row in &log.rows {
        out.write_record(cells(row))?;
    }
    out.flush()?;
    Ok(())
}

/// Raw sensor readings: `(v_x, v_y, omega)` for wheel/IMU, `(x, y, theta)` for lidar/VO.
pub fn write_sense_csv<W: Write>(log: &RunLog, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sense.t", "sense.sensor", "sense.c0", "sense.c1", "sense.c2"])?;
    for s in &log.samples {
        let mut rec = vec![s.stamp.to_string(), s.kind.name().to_string()];
        rec.extend(s.values.iter().enumerate().map(|(i, v)| {
            if s.kind == SensorKind::Imu && i < 2 {
                String::new()
            } else {
                v.to_string()
            }
        }));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}
