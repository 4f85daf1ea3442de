//! Steady-state RMSE reports and baseline comparisons.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::types::angle_diff;

use super::config::{MetricSource, MetricsConfig, VelocityErrorRef};
use super::run::RunLog;

pub const METRIC_NAMES: [&str; 5] = ["E_x", "E_y", "E_theta", "E_v", "E_omega"];

/// Root-mean-square tracking errors over the steady-state window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    pub e_x: f64,
    pub e_y: f64,
    pub e_theta: f64,
    pub e_v: f64,
    pub e_omega: f64,
}

impl ErrorReport {
    pub fn values(&self) -> [f64; 5] {
        [self.e_x, self.e_y, self.e_theta, self.e_v, self.e_omega]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            e_x: v[0],
            e_y: v[1],
            e_theta: v[2],
            e_v: v[3],
            e_omega: v[4],
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "value"])?;
        for (name, v) in METRIC_NAMES.iter().zip(self.values()) {
            out.write_record([name.to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8} {:>12}\n", "metric", "value");
        for (name, v) in METRIC_NAMES.iter().zip(self.values()) {
            let _ = writeln!(s, "{name:<8} {v:>12.6}");
        }
        s
    }
}

/// RMS errors over rows with `t >= transient`, using the log's metric options.
pub fn steady_state_rmse(log: &RunLog, transient: f64) -> Result<ErrorReport> {
    rmse_with(log, transient, log.metrics)
}

pub fn rmse_with(log: &RunLog, transient: f64, opts: MetricsConfig) -> Result<ErrorReport> {
    let mut sums = [0.0; 5];
    let mut n = 0usize;
    for row in log.rows.iter().filter(|r| r.t >= transient) {
        let (pose, twist) = match opts.source {
            MetricSource::Truth => (row.truth.pose, row.truth.twist),
            MetricSource::Feedback => (row.feedback.pose, row.feedback.twist),
        };
        let (v_ref, w_ref) = match opts.velocity_error {
            VelocityErrorRef::Command => (row.command.v_c.v_x, row.command.v_c.omega),
            VelocityErrorRef::Reference => (row.reference.v_d, row.reference.omega_d),
        };
        let r = &row.reference.pose;
        let e = [
            r.x() - pose.x(),
            r.y() - pose.y(),
            angle_diff(r.theta(), pose.theta())?,
            v_ref - twist.v_x,
            w_ref - twist.omega,
        ];
        for i in 0..5 {
            sums[i] += e[i] * e[i];
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::validation(
            "transient",
            format!("no log rows at or after t = {transient} s"),
        ));
    }
    Ok(ErrorReport::from_values(sums.map(|s| (s / n as f64).sqrt())))
}

/// `(baseline - candidate) / baseline * 100`; positive means the candidate improved.
pub fn percent_change(baseline: f64, candidate: f64) -> f64 {
    if baseline == candidate {
        0.0
    } else {
        (baseline - candidate) / baseline * 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub baseline: ErrorReport,
    pub candidate: ErrorReport,
    pub change: [f64; 5],
}

pub fn compare(baseline: &ErrorReport, candidate: &ErrorReport) -> Comparison {
    let a = baseline.values();
    let b = candidate.values();
    Comparison {
        baseline: *baseline,
        candidate: *candidate,
        change: std::array::from_fn(|i| percent_change(a[i], b[i])),
    }
}

impl Comparison {
    pub fn all_improved(&self) -> bool {
        self.change.iter().all(|c| *c > 0.0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "baseline", "candidate", "change_pct"])?;
        let (a, b) = (self.baseline.values(), self.candidate.values());
        for i in 0..5 {
            out.write_record([
                METRIC_NAMES[i].to_string(),
                a[i].to_string(),
                b[i].to_string(),
                self.change[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8} {:>12} {:>12} {:>11}\n", "metric", "baseline", "candidate", "change (%)");
        let (a, b) = (self.baseline.values(), self.candidate.values());
        for i in 0..5 {
            let change = if self.change[i].is_finite() {
                format!("{:.2}", self.change[i])
            } else {
                "n/a".to_string()
            };
            let _ = writeln!(s, "{:<8} {:>12.6} {:>12.6} {:>11}", METRIC_NAMES[i], a[i], b[i], change);
        }
        s
    }
}
