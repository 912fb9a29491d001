//! Lyapunov spectra by QR re-orthonormalization, the integrated upper
//! exponent and the finite-time operator-norm estimator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{transport, IntegratorOptions, VectorField, SINGULAR_SPEED};
use crate::error::{Error, Result};
use crate::linalg;
use crate::poincare::linear_poincare;
use crate::sampling::{mean_stderr, par_map_indexed, substream};

/// Orbits whose speed falls below this (without starting at a zero of the
/// field) are treated as passing through a singularity.
pub const SINGULAR_APPROACH: f64 = 1e-9;

/// Default QR renormalization interval.
pub const DEFAULT_RENORM: f64 = 0.5;

/// Fresh draws allowed per Monte-Carlo sample after rejections.
pub const RESAMPLE_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    /// Descending.
    pub exponents: Vec<f64>,
    pub t_total: f64,
    pub renorm_interval: f64,
    /// `|sum of exponents|`.
    pub residual_sum: f64,
    /// Index (into `exponents`) of the exponent matched to the flow
    /// direction; `None` when the orbit starts at a zero of the field.
    pub flow_exponent_index: Option<usize>,
    /// Angle in degrees between `X` at the final point and the span of the
    /// frame vectors up to the flow index.
    pub flow_alignment_deg: Option<f64>,
    pub min_speed: f64,
    pub final_point: Vec<f64>,
}

impl LyapunovSpectrum {
    pub fn lambda_plus(&self) -> f64 {
        self.exponents.first().copied().unwrap_or(0.0).max(0.0)
    }
}

/// Benettin spectrum along the orbit of `x`.
pub fn spectrum(
    field: &dyn VectorField,
    x: &[f64],
    t_total: f64,
    renorm_interval: f64,
    opts: &IntegratorOptions,
) -> Result<LyapunovSpectrum> {
    if !(t_total > 0.0 && t_total.is_finite()) {
        return Err(Error::Invalid(format!(
            "t_total must be positive, got {t_total}"
        )));
    }
    if !(renorm_interval > 0.0) {
        return Err(Error::Invalid(format!(
            "renorm_interval must be positive, got {renorm_interval}"
        )));
    }
    let d = field.dim();
    let steps = (t_total / renorm_interval).round().max(1.0) as usize;
    let dt = t_total / steps as f64;
    let mut y = field.domain().canonical(x);
    let stationary = field.speed(&y) < SINGULAR_SPEED;
    let mut min_speed = field.speed(&y);
    let mut q = DMatrix::identity(d, d);
    let mut sums = vec![0.0; d];
    for _ in 0..steps {
        let (end, m, _) = transport(field, &y, &q, dt, opts)?;
        let (qn, r) = linalg::qr_positive(&m);
        for (s, rv) in sums.iter_mut().zip(&r) {
            *s += rv.ln();
        }
        if sums.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteState {
                t: dt * steps as f64,
            });
        }
        q = qn;
        y = end;
        min_speed = min_speed.min(field.speed(&y));
    }
    let raw: Vec<f64> = sums.iter().map(|s| s / t_total).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| raw[b].partial_cmp(&raw[a]).unwrap().then(a.cmp(&b)));
    let exponents: Vec<f64> = order.iter().map(|&i| raw[i]).collect();

    let (flow_exponent_index, flow_alignment_deg) = if stationary {
        (None, None)
    } else {
        let k = (0..d)
            .min_by(|&a, &b| exponents[a].abs().partial_cmp(&exponents[b].abs()).unwrap())
            .unwrap();
        let v = field.eval(&y);
        let angle = if v.norm() > 0.0 {
            let u = v.normalize();
            let proj: f64 = order[..=k]
                .iter()
                .map(|&c| q.column(c).dot(&u).powi(2))
                .sum::<f64>()
                .sqrt();
            Some(proj.min(1.0).acos().to_degrees())
        } else {
            None
        };
        (Some(k), angle)
    };
    Ok(LyapunovSpectrum {
        residual_sum: exponents.iter().sum::<f64>().abs(),
        exponents,
        t_total,
        renorm_interval,
        flow_exponent_index,
        flow_alignment_deg,
        min_speed,
        final_point: y,
    })
}

/// `max_i |lambda_i + lambda_{d-1-i}|`, including `|lambda_mid|` for odd
/// `d`; zero for spectra that pair up as volume preservation requires.
pub fn pairing_check(s: &LyapunovSpectrum) -> f64 {
    pairing_residual(&s.exponents)
}

/// [`pairing_check`] on a bare descending list of exponents.
pub fn pairing_residual(exponents: &[f64]) -> f64 {
    let d = exponents.len();
    (0..d.div_ceil(2))
        .map(|i| {
            let j = d - 1 - i;
            if i == j {
                exponents[i].abs()
            } else {
                (exponents[i] + exponents[j]).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMethod {
    QrAverage,
    FiniteNInf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSample {
    pub index: usize,
    pub point: Vec<f64>,
    /// Full spectrum for `qr_average`; the single value `(1/n) log |P^n|`
    /// for `finite_n_inf`.
    pub exponents: Vec<f64>,
    pub value: f64,
    pub rejected_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedExponent {
    pub value: f64,
    pub n_samples: usize,
    pub n_rejected: usize,
    pub t_horizon: f64,
    pub stderr: f64,
    pub method: ExponentMethod,
    pub samples: Vec<ExponentSample>,
}

/// Draws from substream `i` until `eval` accepts a point, at most
/// [`RESAMPLE_ATTEMPTS`] times.
fn sample_with_rejection<F>(
    field: &dyn VectorField,
    seed: u64,
    i: usize,
    eval: F,
) -> (Option<ExponentSample>, usize)
where
    F: Fn(&[f64]) -> Option<(Vec<f64>, f64)>,
{
    let mut rng = substream(seed, i as u64);
    let mut rejected = 0;
    for _ in 0..RESAMPLE_ATTEMPTS {
        let x = field.domain().sample_uniform(&mut rng);
        match eval(&x) {
            Some((exponents, value)) => {
                return (
                    Some(ExponentSample {
                        index: i,
                        point: x,
                        exponents,
                        value,
                        rejected_draws: rejected,
                    }),
                    rejected,
                )
            }
            None => rejected += 1,
        }
    }
    (None, rejected)
}

fn collect(
    results: Vec<(Option<ExponentSample>, usize)>,
    t_horizon: f64,
    method: ExponentMethod,
) -> Result<IntegratedExponent> {
    let n_rejected = results.iter().map(|r| r.1).sum();
    let samples: Vec<ExponentSample> = results.into_iter().filter_map(|r| r.0).collect();
    if samples.is_empty() {
        return Err(Error::AllSamplesRejected(n_rejected));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let (value, stderr) = mean_stderr(&values);
    Ok(IntegratedExponent {
        value,
        n_samples: samples.len(),
        n_rejected,
        t_horizon,
        stderr,
        method,
        samples,
    })
}

/// Monte-Carlo average of `lambda^+ = max(lambda_1, 0)` over volume samples.
pub fn integrated_exponent(
    field: &dyn VectorField,
    n_samples: usize,
    t_horizon: f64,
    renorm_interval: f64,
    seed: u64,
    opts: &IntegratorOptions,
) -> Result<IntegratedExponent> {
    if n_samples == 0 {
        return Err(Error::Invalid("n_samples must be at least 1".into()));
    }
    opts.validate()?;
    let results = par_map_indexed(n_samples, |i| {
        sample_with_rejection(field, seed, i, |x| {
            let s = spectrum(field, x, t_horizon, renorm_interval, opts).ok()?;
            let stationary = s.flow_exponent_index.is_none();
            if !stationary && s.min_speed < SINGULAR_APPROACH {
                return None;
            }
            let lp = s.lambda_plus();
            Some((s.exponents, lp))
        })
    });
    collect(results, t_horizon, ExponentMethod::QrAverage)
}

/// `(1/n) log |P^n_X(x)|`; at zeros of the field the whole tangent space
/// stands in for the normal space.
pub fn finite_n_value(
    field: &dyn VectorField,
    x: &[f64],
    n: u32,
    opts: &IntegratorOptions,
) -> Result<f64> {
    let t = n as f64;
    let x = field.domain().canonical(x);
    if field.speed(&x) < SINGULAR_SPEED {
        let d = field.dim();
        let (_, m, _) = transport(field, &x, &DMatrix::identity(d, d), t, opts)?;
        return Ok(linalg::spectral_norm(&m).ln() / t);
    }
    let p = linear_poincare(field, &x, t, opts)?;
    if field.speed(&p.end.base) < SINGULAR_APPROACH {
        return Err(Error::SingularPoint {
            point: p.end.base.clone(),
            speed: field.speed(&p.end.base),
        });
    }
    Ok(p.norm().ln() / t)
}

/// Monte-Carlo estimate of `(1/n) int log |P^n_X| dmu`.
pub fn finite_n_estimator(
    field: &dyn VectorField,
    n: u32,
    n_samples: usize,
    seed: u64,
    opts: &IntegratorOptions,
) -> Result<IntegratedExponent> {
    if n == 0 {
        return Err(Error::Invalid("n must be at least 1".into()));
    }
    if n_samples == 0 {
        return Err(Error::Invalid("n_samples must be at least 1".into()));
    }
    opts.validate()?;
    let results = par_map_indexed(n_samples, |i| {
        sample_with_rejection(field, seed, i, |x| {
            let v = finite_n_value(field, x, n, opts).ok()?;
            Some((vec![v], v))
        })
    });
    collect(results, n as f64, ExponentMethod::FiniteNInf)
}
