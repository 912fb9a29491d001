//! Dormand–Prince 5(4) embedded pair with adaptive step control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Largest step magnitude.
    pub h_max: f64,
    /// Steps smaller than this abort with `StepUnderflow`.
    pub h_min: f64,
    pub max_steps: u64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            atol: 1e-9,
            rtol: 1e-9,
            h_max: 1.0,
            h_min: 1e-13,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            atol: tol,
            rtol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.atol > 0.0
            && self.rtol >= 0.0
            && self.h_max > 0.0
            && self.h_min >= 0.0
            && self.h_min < self.h_max
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad integrator options {self:?}")))
        }
    }
}

/// An autonomous ODE `y' = f(y)` on a flat buffer.
pub trait OdeSystem {
    fn len(&self) -> usize;

    fn rhs(&self, y: &[f64], dy: &mut [f64]);

    /// Maps the state back to its canonical chart after an accepted step.
    /// Returns true when the right-hand side must be re-evaluated (a gluing
    /// changed more than a periodic shift).
    fn canonicalize(&self, _y: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
}

// autonomous systems only, so the node times c_i are not needed
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// b - b*, fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Integrates `sys` from `y` over a signed time span `t`, in place.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    y: &mut [f64],
    t: f64,
    opts: &IntegratorOptions,
) -> Result<StepStats> {
    let n = sys.len();
    assert_eq!(y.len(), n, "state length mismatch");
    let mut stats = StepStats::default();
    if t == 0.0 {
        return Ok(stats);
    }
    if !t.is_finite() {
        return Err(Error::Invalid(format!("non-finite time span {t}")));
    }
    check_finite(y, 0.0)?;

    let dir = t.signum();
    let span = t.abs();

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    sys.rhs(y, &mut k1);
    let mut h = initial_step(sys, y, &k1, dir, opts).min(span);
    let mut done = 0.0f64;
    let mut last_rejected = false;

    loop {
        let remaining = span - done;
        if remaining <= 0.0 {
            break;
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < opts.h_min && !last {
            return Err(Error::StepUnderflow { t: dir * done, h });
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t: dir * done, h });
        }
        let hs = dir * h;

        for i in 0..n {
            tmp[i] = y[i] + hs * A21 * k1[i];
        }
        sys.rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(&tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(&tmp, &mut k5);
        for i in 0..n {
            tmp[i] =
                y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(&tmp, &mut k6);
        for i in 0..n {
            y_new[i] =
                y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(&y_new, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            check_finite(&y_new, dir * (done + h))?;
            // finite state but overflowing error: shrink hard
            h *= FAC_MIN;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            check_finite(&y_new, dir * (done + h))?;
            y.copy_from_slice(&y_new);
            done = if last { span } else { done + h };
            if sys.canonicalize(y) {
                sys.rhs(y, &mut k1);
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(opts.h_max);
            if last {
                break;
            }
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
        }
    }
    Ok(stats)
}

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t })
    }
}

// Hairer–Nørsett–Wanner starting step heuristic.
fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    opts: &IntegratorOptions,
) -> f64 {
    let n = y.len();
    let scale: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(opts.h_max);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + dir * h0 * b).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.h_max).max(opts.h_min)
}
