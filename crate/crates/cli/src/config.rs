//! Experiment configuration: loaded from `--config`, then overridden by flags.

use std::path::PathBuf;

use clap::ValueEnum;
use pesin_lab::dynamics::IntegratorOptions;
use pesin_lab::entropy::{EntropyOptions, PesinConfig};
use pesin_lab::hamiltonian::LevelOptions;
use pesin_lab::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: Option<String>,
    pub seed: u64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub integrator: IntegratorOptions,
    pub simulate: SimulateConfig,
    pub lyapunov: LyapunovConfig,
    pub dominate: DominateConfig,
    pub suspend: SuspendConfig,
    pub entropy: EntropyConfig,
    pub pesin: PesinConfig,
    pub hamiltonian: HamiltonianConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: None,
            seed: 0,
            format: OutputFormat::Json,
            out: None,
            integrator: IntegratorOptions::default(),
            simulate: SimulateConfig::default(),
            lyapunov: LyapunovConfig::default(),
            dominate: DominateConfig::default(),
            suspend: SuspendConfig::default(),
            entropy: EntropyConfig::default(),
            pesin: PesinConfig::default(),
            hamiltonian: HamiltonianConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Start point; drawn from the seed when absent.
    pub point: Option<Vec<f64>>,
    pub t: f64,
    /// Number of recorded intervals along the trajectory.
    pub record: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            point: None,
            t: 10.0,
            record: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    /// Single-orbit spectrum at this point instead of a Monte-Carlo average.
    pub point: Option<Vec<f64>>,
    pub t: f64,
    pub samples: usize,
    pub renorm: f64,
    /// Depths for the finite-time operator-norm estimator.
    pub finite_n: Vec<u32>,
    pub finite_n_samples: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            point: None,
            t: 1000.0,
            samples: 16,
            renorm: 0.5,
            finite_n: Vec::new(),
            finite_n_samples: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominateConfig {
    pub point: Option<Vec<f64>>,
    pub ell: f64,
    pub horizon: f64,
}

impl Default for DominateConfig {
    fn default() -> Self {
        Self {
            point: None,
            ell: 1.0,
            horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuspendConfig {
    pub base: String,
    pub ceiling: String,
    pub time_step: f64,
    pub base_resolution: usize,
    /// Cells along the height axis; `ceil(max h / time_step)` when absent.
    pub height_resolution: Option<usize>,
    pub lifted_samples: usize,
    /// Base entropy for the Abramov prediction; the closed form when absent.
    pub base_entropy: Option<f64>,
    pub delta: f64,
    pub pairs: usize,
    pub probe_horizon: usize,
    pub entropy: EntropyOptions,
}

impl Default for SuspendConfig {
    fn default() -> Self {
        Self {
            base: "cat".into(),
            ceiling: "const:1".into(),
            time_step: 1.0,
            base_resolution: 16,
            height_resolution: None,
            lifted_samples: 1000,
            base_entropy: None,
            delta: 0.1,
            pairs: 200,
            probe_horizon: 50,
            entropy: EntropyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    /// Discrete base map to use instead of `system`.
    pub base: Option<String>,
    /// With `base`: estimate the suspension under this ceiling.
    pub ceiling: Option<String>,
    pub resolution: Option<Vec<usize>>,
    pub time_step: f64,
    pub options: EntropyOptions,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            base: None,
            ceiling: None,
            resolution: None,
            time_step: 1.0,
            options: EntropyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianConfig {
    /// `builtin:NAME` or a JSON system file; `system` when absent.
    pub h: Option<String>,
    /// `a:b:k` (k evenly spaced levels) or a comma-separated list.
    pub levels: String,
    pub samples: usize,
    pub t: f64,
    pub renorm: f64,
    pub level: LevelOptions,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self {
            h: None,
            levels: "1:10:4".into(),
            samples: 16,
            t: 100.0,
            renorm: 0.5,
            level: LevelOptions::default(),
        }
    }
}

/// Parses `a:b:k` or `e1,e2,...`.
pub fn parse_levels(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Invalid(format!("bad level specification `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, k] => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let k: usize = k.trim().parse().map_err(|_| bad())?;
            match k {
                0 => Err(bad()),
                1 => Ok(vec![a]),
                _ => Ok((0..k)
                    .map(|i| a + (b - a) * i as f64 / (k - 1) as f64)
                    .collect()),
            }
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect(),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels() {
        assert_eq!(parse_levels("1:3:3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_levels("0.5,2").unwrap(), vec![0.5, 2.0]);
        assert_eq!(parse_levels("4:9:1").unwrap(), vec![4.0]);
        assert!(parse_levels("1:2").is_err());
        assert!(parse_levels("1:2:0").is_err());
    }

    #[test]
    fn config_round_trip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 9}"#).is_err());
    }
}
