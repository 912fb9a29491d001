//! Entropy against the integrated upper exponent.

use serde::{Deserialize, Serialize};

use super::{flow_entropy, EntropyEstimate, EntropyOptions, PartitionGrid};
use crate::dynamics::{IntegratorOptions, VectorField};
use crate::error::Result;
use crate::lyapunov::{integrated_exponent, IntegratedExponent, DEFAULT_RENORM};
use crate::sampling::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PesinConfig {
    pub entropy: EntropyOptions,
    pub time_step: f64,
    pub resolution: Vec<usize>,
    pub lyapunov_samples: usize,
    pub lyapunov_horizon: f64,
    pub renorm_interval: f64,
}

impl Default for PesinConfig {
    fn default() -> Self {
        Self {
            entropy: EntropyOptions::default(),
            time_step: 1.0,
            resolution: Vec::new(),
            lyapunov_samples: 32,
            lyapunov_horizon: 200.0,
            renorm_interval: DEFAULT_RENORM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesinReport {
    pub h_est: f64,
    pub lambda_est: f64,
    pub difference: f64,
    /// `sqrt(se_h^2 + se_lambda^2)`
    pub combined_stderr: f64,
    pub bias_bound: f64,
    /// `3 (combined_stderr + bias_bound)`
    pub tolerance: f64,
    /// Set when `h_est > lambda_est + tolerance`.
    pub violation: bool,
    pub entropy: EntropyEstimate,
    pub exponent: IntegratedExponent,
}

/// Compares the partition entropy of the flow with `int lambda^+ dmu`.
/// The two estimates use independent substreams of `seed`.
pub fn pesin_report(
    field: &dyn VectorField,
    cfg: &PesinConfig,
    seed: u64,
    opts: &IntegratorOptions,
) -> Result<PesinReport> {
    let grid = PartitionGrid::over(field.domain(), cfg.resolution.clone())?;
    let entropy = flow_entropy(
        field,
        &grid,
        cfg.time_step,
        &cfg.entropy,
        derive_seed(seed, 1),
        opts,
    )?;
    let exponent = integrated_exponent(
        field,
        cfg.lyapunov_samples,
        cfg.lyapunov_horizon,
        cfg.renorm_interval,
        derive_seed(seed, 2),
        opts,
    )?;
    let combined_stderr = entropy.stderr.hypot(exponent.stderr);
    let tolerance = 3.0 * (combined_stderr + entropy.bias_bound);
    Ok(PesinReport {
        h_est: entropy.value,
        lambda_est: exponent.value,
        difference: entropy.value - exponent.value,
        combined_stderr,
        bias_bound: entropy.bias_bound,
        tolerance,
        violation: entropy.value > exponent.value + tolerance,
        entropy,
        exponent,
    })
}
