use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-input Gaussian RBF network estimating one disturbance channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfLayer {
    centers: Vec<f64>,
    widths: Vec<f64>,
    weights: Vec<f64>,
    eta: f64,
}

impl RbfLayer {
    pub fn new(centers: Vec<f64>, widths: Vec<f64>, weights: Vec<f64>, eta: f64) -> Result<Self> {
        let n = centers.len();
        if n == 0 {
            return Err(Error::validation("rbf.centers", "at least one neuron is required"));
        }
        if widths.len() != n || weights.len() != n {
            return Err(Error::validation(
                "rbf",
                format!(
                    "centers, widths and weights must have equal length (got {}, {}, {})",
                    n,
                    widths.len(),
                    weights.len()
                ),
            ));
        }
        if centers.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::validation("rbf", "centers and weights must be finite"));
        }
        if widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::validation("rbf.widths", "widths must be finite and > 0"));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::validation("rbf.eta", format!("learning rate must be >= 0, got {eta}")));
        }
        Ok(Self {
            centers,
            widths,
            weights,
            eta,
        })
    }

    /// Zero-initialised weights.
    pub fn zeroed(centers: Vec<f64>, widths: Vec<f64>, eta: f64) -> Result<Self> {
        let n = centers.len();
        Self::new(centers, widths, vec![0.0; n], eta)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `phi_j = exp(-(v - c_j)^2 / (2 sigma_j^2))`.
    pub fn activations(&self, v: f64) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, s)| {
                let z = v - c;
                (-(z * z) / (2.0 * s * s)).exp()
            })
            .collect()
    }

    pub fn estimate_with(&self, phi: &[f64]) -> f64 {
        self.weights.iter().zip(phi).map(|(w, p)| w * p).sum()
    }

    /// Disturbance estimate `w . phi(v)`.
    pub fn estimate_disturbance(&self, v: f64) -> f64 {
        self.estimate_with(&self.activations(v))
    }

    /// Forward-Euler step of the learning rule `w' = eta * v_tilde * phi`.
    pub fn adapt(&self, v_tilde: f64, phi: &[f64], dt: f64) -> Result<RbfLayer> {
        if !(dt > 0.0) {
            return Err(Error::validation("dt", format!("must be > 0, got {dt}")));
        }
        if phi.len() != self.len() {
            return Err(Error::validation("phi", "activation vector length mismatch"));
        }
        let gain = self.eta * v_tilde * dt;
        let weights: Vec<f64> = self.weights.iter().zip(phi).map(|(w, p)| w + gain * p).collect();
        if weights.iter().any(|w| !w.is_finite()) {
            // channel is filled in by the caller
            return Err(Error::AdaptationDiverged { channel: 0 });
        }
        Ok(RbfLayer {
            weights,
            ..self.clone()
        })
    }

    /// Squared distance of the weights from a reference set.
    pub fn weight_error_sq(&self, reference: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(reference)
            .map(|(w, r)| (w - r) * (w - r))
            .sum()
    }
}
