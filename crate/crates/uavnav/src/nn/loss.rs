//! Loss functions for training the pipeline's networks.
//!
//! Both losses operate on a (mean, log-variance) parameterization; variance
//! is always `exp(log_var)`, which keeps predicted variances positive
//! without constraints on the raw network output.

use crate::error::{Error, Result};

fn check_finite(name: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

fn check_len(name: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what: name,
            expected,
            got,
        })
    }
}

/// Gaussian negative log-likelihood with predicted per-dimension variance:
/// `sum_d [ 0.5*exp(-s_d)*(y_d - mu_d)^2 + 0.5*s_d ]` with `s = log var`.
/// Constant terms are dropped; callers average over a batch.
pub fn heteroscedastic_nll(mu: &[f64], log_var: &[f64], target: &[f64]) -> Result<f64> {
    check_len("heteroscedastic_nll log_var", mu.len(), log_var.len())?;
    check_len("heteroscedastic_nll target", mu.len(), target.len())?;
    check_finite("heteroscedastic_nll mu", mu)?;
    check_finite("heteroscedastic_nll log_var", log_var)?;
    check_finite("heteroscedastic_nll target", target)?;
    let mut loss = 0.0;
    for d in 0..mu.len() {
        let r = target[d] - mu[d];
        loss += 0.5 * (-log_var[d]).exp() * r * r + 0.5 * log_var[d];
    }
    Ok(loss)
}

/// Gradients of [`heteroscedastic_nll`] w.r.t. `mu` and `log_var`.
pub fn heteroscedastic_nll_grad(
    mu: &[f64],
    log_var: &[f64],
    target: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("heteroscedastic_nll log_var", mu.len(), log_var.len())?;
    check_len("heteroscedastic_nll target", mu.len(), target.len())?;
    let mut d_mu = Vec::with_capacity(mu.len());
    let mut d_s = Vec::with_capacity(mu.len());
    for d in 0..mu.len() {
        let r = target[d] - mu[d];
        let inv_var = (-log_var[d]).exp();
        d_mu.push(-inv_var * r);
        d_s.push(0.5 - 0.5 * inv_var * r * r);
    }
    Ok((d_mu, d_s))
}

/// KL divergence of a diagonal Gaussian to the standard normal:
/// `0.5 * sum_d (exp(s_d) + mu_d^2 - 1 - s_d)`.
pub fn kl_to_standard_normal(mu: &[f64], log_var: &[f64]) -> Result<f64> {
    check_len("kl_to_standard_normal log_var", mu.len(), log_var.len())?;
    check_finite("kl_to_standard_normal mu", mu)?;
    check_finite("kl_to_standard_normal log_var", log_var)?;
    let mut kl = 0.0;
    for d in 0..mu.len() {
        kl += 0.5 * (log_var[d].exp() + mu[d] * mu[d] - 1.0 - log_var[d]);
    }
    Ok(kl)
}

/// Gradients of [`kl_to_standard_normal`] w.r.t. `mu` and `log_var`.
pub fn kl_to_standard_normal_grad(mu: &[f64], log_var: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("kl_to_standard_normal log_var", mu.len(), log_var.len())?;
    let d_mu = mu.to_vec();
    let d_s: Vec<f64> = log_var.iter().map(|&s| 0.5 * (s.exp() - 1.0)).collect();
    Ok((d_mu, d_s))
}

/// Sum of squared errors; gradient is `2*(pred - target)`.
pub fn sum_squared_error(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("sum_squared_error target", pred.len(), target.len())?;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

pub fn sum_squared_error_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_len("sum_squared_error target", pred.len(), target.len())?;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| 2.0 * (p - t))
        .collect())
}
