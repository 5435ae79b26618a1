//! Diagonal Gaussian over a small vector — the unit of every stochastic
//! prediction in the pipeline (latent posteriors and velocity commands).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianVec {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianVec {
    pub fn new(mu: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mu.len() != var.len() {
            return Err(Error::ShapeMismatch {
                what: "GaussianVec",
                expected: mu.len(),
                got: var.len(),
            });
        }
        let g = GaussianVec { mu, var };
        g.validate()?;
        Ok(g)
    }

    /// Point prediction stored with the zero-variance sentinel.
    pub fn point(mu: Vec<f64>) -> Self {
        let var = vec![0.0; mu.len()];
        GaussianVec { mu, var }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.iter().chain(self.var.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("GaussianVec"));
        }
        if self.var.iter().any(|&v| v < 0.0) {
            return Err(Error::contract("GaussianVec variance must be >= 0"));
        }
        Ok(())
    }
}
