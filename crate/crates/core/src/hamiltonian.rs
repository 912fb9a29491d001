//! Hamiltonian systems on R^4 with the standard symplectic form.
//!
//! Coordinates are ordered `(q1, p1, q2, p2)`, `J` is block diagonal with
//! blocks `[[0, 1], [-1, 0]]` and `X_H = J grad H`, so that
//! `omega(X_H, v) = X_H^T J v = DH v`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Domain, Field, IntegratorOptions, Polynomial, VectorField, SINGULAR_SPEED};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lyapunov::IntegratedExponent;
use crate::poincare::{complement_frame, projected_cocycle, NormalFrame, PoincareCocycle};
use crate::sampling::{derive_seed, par_map_indexed, substream, weighted_mean_stderr};

/// Gradient norm below which a point counts as critical.
pub const CRITICAL_GRAD: f64 = 1e-8;

/// Runs whose energy drifts by more than this are rejected.
pub const ENERGY_DRIFT_TOL: f64 = 1e-6;

const J: [[f64; 4]; 4] = [
    [0.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
];

#[derive(Debug, Clone)]
pub struct HamiltonianSystem {
    name: String,
    h: Polynomial,
    grad: Vec<Polynomial>,
    hess: Vec<Vec<Polynomial>>,
    domain: Domain,
}

fn quadratic_terms() -> Vec<(Vec<u32>, f64)> {
    (0..4)
        .map(|i| {
            let mut e = vec![0; 4];
            e[i] = 2;
            (e, 0.5)
        })
        .collect()
}

impl HamiltonianSystem {
    /// `harmonic4`: `H = (q1^2 + p1^2 + q2^2 + p2^2) / 2`.
    /// `coupled_quartic4`: the same plus `q1^2 q2^2`.
    pub fn builtin(name: &str) -> Result<Self> {
        let mut terms = quadratic_terms();
        match name {
            "harmonic4" => {}
            "coupled_quartic4" => terms.push((vec![2, 0, 2, 0], 1.0)),
            other => return Err(Error::UnknownSystem(other.to_string())),
        }
        Self::from_polynomial(
            name,
            Polynomial::from_pairs(4, terms)?,
            Domain::euclidean(4, 2.0),
        )
    }

    pub fn from_polynomial(name: &str, h: Polynomial, domain: Domain) -> Result<Self> {
        if h.nvars() != 4 && !h.terms().is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: h.nvars(),
            });
        }
        if domain.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: domain.dim(),
            });
        }
        domain.validate()?;
        let h = if h.terms().is_empty() {
            Polynomial::zero(4)
        } else {
            h
        };
        let grad: Vec<Polynomial> = (0..4).map(|i| h.derivative(i)).collect();
        let hess = grad
            .iter()
            .map(|g| (0..4).map(|j| g.derivative(j)).collect())
            .collect();
        Ok(Self {
            name: name.to_string(),
            h,
            grad,
            hess,
            domain,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hamiltonian(&self) -> &Polynomial {
        &self.h
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        self.h.eval(x)
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(4, self.grad.iter().map(|g| g.eval(x)))
    }

    pub fn symplectic_form() -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |i, j| J[i][j])
    }

    /// `omega(u, v) = u^T J v`.
    pub fn omega(u: &[f64], v: &[f64]) -> f64 {
        (0..4)
            .map(|i| (0..4).map(|j| u[i] * J[i][j] * v[j]).sum::<f64>())
            .sum()
    }

    /// `max_i |omega(X_H(x), e_i) - DH(x) e_i|` over the canonical basis.
    pub fn omega_residual(&self, x: &[f64]) -> f64 {
        let f = self.field();
        let xh = f.eval(x);
        let g = self.grad(x);
        (0..4)
            .map(|i| {
                let mut e = [0.0; 4];
                e[i] = 1.0;
                (Self::omega(xh.as_slice(), &e) - g[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn field(&self) -> Field {
        Arc::new(HamiltonianField {
            name: self.name.clone(),
            grad: self.grad.clone(),
            hess: self.hess.clone(),
            domain: self.domain.clone(),
        })
    }
}

#[derive(Debug, Clone)]
struct HamiltonianField {
    name: String,
    grad: Vec<Polynomial>,
    hess: Vec<Vec<Polynomial>>,
    domain: Domain,
}

impl VectorField for HamiltonianField {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let g: Vec<f64> = self.grad.iter().map(|p| p.eval(x)).collect();
        out[0] = g[1];
        out[1] = -g[0];
        out[2] = g[3];
        out[3] = -g[2];
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let h: Vec<Vec<f64>> = self
            .hess
            .iter()
            .map(|row| row.iter().map(|p| p.eval(x)).collect())
            .collect();
        for j in 0..4 {
            out[j] = h[1][j];
            out[4 + j] = -h[0][j];
            out[8 + j] = h[3][j];
            out[12 + j] = -h[2][j];
        }
    }

    fn divergence_free(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelOptions {
    pub level_tol: f64,
    pub newton_steps: usize,
    /// Box seeds tried per requested point before giving up on it.
    pub attempts: usize,
}

impl Default for LevelOptions {
    fn default() -> Self {
        Self {
            level_tol: 1e-9,
            newton_steps: 100,
            attempts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevelSample {
    pub energy: f64,
    pub points: Vec<Vec<f64>>,
    /// Coarea weights `1 / |grad H|`.
    pub weights: Vec<f64>,
    pub regular: bool,
    /// Requested points for which no seed could be projected.
    pub failed: usize,
    pub measure: String,
}

/// Damped Newton iteration along `grad H` onto `H = e`.
fn project_to_level(sys: &HamiltonianSystem, x: &mut [f64], e: f64, opts: &LevelOptions) -> bool {
    let mut r = sys.energy(x) - e;
    // keep polishing past the tolerance while Newton still makes progress
    for _ in 0..opts.newton_steps {
        if r.abs() <= opts.level_tol * 1e-3 {
            return true;
        }
        let g = sys.grad(x);
        let g2 = g.norm_squared();
        if g2 < CRITICAL_GRAD * CRITICAL_GRAD {
            return r.abs() <= opts.level_tol;
        }
        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = (0..4).map(|i| x[i] - damping * r * g[i] / g2).collect();
            let rt = sys.energy(&trial) - e;
            if rt.abs() < r.abs() {
                x.copy_from_slice(&trial);
                r = rt;
                break;
            }
            damping *= 0.5;
            if damping < 1e-10 {
                return r.abs() <= opts.level_tol;
            }
        }
    }
    r.abs() <= opts.level_tol
}

/// Points on `H = e` obtained by projecting box-uniform seeds.
pub fn sample_level(
    sys: &HamiltonianSystem,
    e: f64,
    count: usize,
    seed: u64,
    opts: &LevelOptions,
) -> Result<EnergyLevelSample> {
    if count == 0 {
        return Err(Error::Invalid("count must be positive".into()));
    }
    let found: Vec<Option<Vec<f64>>> = par_map_indexed(count, |i| {
        let mut rng = substream(seed, i as u64);
        for _ in 0..opts.attempts {
            let mut x = sys.domain.sample_uniform(&mut rng);
            if project_to_level(sys, &mut x, e, opts) {
                return Some(x);
            }
        }
        None
    });
    let points: Vec<Vec<f64>> = found.iter().flatten().cloned().collect();
    if points.is_empty() {
        return Err(Error::EmptyLevel(e));
    }
    let norms: Vec<f64> = points.iter().map(|x| sys.grad(x).norm()).collect();
    let regular = norms.iter().all(|&g| g >= CRITICAL_GRAD);
    Ok(EnergyLevelSample {
        energy: e,
        weights: norms
            .iter()
            .map(|&g| if g > 0.0 { 1.0 / g } else { 0.0 })
            .collect(),
        failed: count - points.len(),
        points,
        regular,
        measure: "Newton projection of box-uniform seeds, weighted by 1/|grad H|".into(),
    })
}

/// Orthonormal frame of the plane orthogonal to `X_H(x)` and `grad H(x)`,
/// oriented so that `omega(f1, f2) > 0`.
pub fn transversal_frame(sys: &HamiltonianSystem, x: &[f64]) -> Result<NormalFrame> {
    let g = sys.grad(x);
    let gn = g.norm();
    if gn < SINGULAR_SPEED {
        return Err(Error::SingularPoint {
            point: x.to_vec(),
            speed: gn,
        });
    }
    if gn < CRITICAL_GRAD {
        return Err(Error::CriticalLevel(vec![sys.energy(x)]));
    }
    let u = &g / gn;
    let xh = DVector::from_iterator(4, (0..4).map(|i| (0..4).map(|j| J[i][j] * u[j]).sum()));
    let mut f = complement_frame(4, &[xh, u]);
    let f1: Vec<f64> = f.column(0).iter().cloned().collect();
    let f2: Vec<f64> = f.column(1).iter().cloned().collect();
    if HamiltonianSystem::omega(&f1, &f2) < 0.0 {
        f.column_mut(1).neg_mut();
    }
    Ok(NormalFrame {
        base: x.to_vec(),
        vectors: f,
    })
}

/// Transversal linear Poincaré cocycle on the energy level through `x`.
pub fn transversal_poincare(
    sys: &HamiltonianSystem,
    x: &[f64],
    t: f64,
    opts: &IntegratorOptions,
) -> Result<PoincareCocycle> {
    let field = sys.field();
    let start = transversal_frame(sys, x)?;
    projected_cocycle(
        field.as_ref(),
        x,
        t,
        &start.vectors,
        |y| transversal_frame(sys, y),
        opts,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    pub point: Vec<f64>,
    pub weight: f64,
    /// Top exponent of the transversal cocycle, `None` when rejected.
    pub exponent: Option<f64>,
    pub energy_drift: f64,
    pub rejection: Option<String>,
}

/// Top transversal exponent along the orbit of `x` by QR renormalization.
/// Returns `(exponents, energy drift)`.
pub fn transversal_exponents(
    sys: &HamiltonianSystem,
    x: &[f64],
    t_horizon: f64,
    renorm_interval: f64,
    opts: &IntegratorOptions,
) -> Result<([f64; 2], f64)> {
    if !(renorm_interval > 0.0 && t_horizon > 0.0) {
        return Err(Error::Invalid(
            "horizon and renorm interval must be positive".into(),
        ));
    }
    let steps = (t_horizon / renorm_interval).round().max(1.0) as usize;
    let dt = t_horizon / steps as f64;
    let e0 = sys.energy(x);
    let mut y = x.to_vec();
    let mut q = DMatrix::identity(2, 2);
    let mut sums = [0.0; 2];
    for _ in 0..steps {
        let p = transversal_poincare(sys, &y, dt, opts)?;
        let (qn, r) = linalg::qr_positive(&(&p.matrix * &q));
        sums[0] += r[0].ln();
        sums[1] += r[1].ln();
        q = qn;
        y = p.end.base;
    }
    let drift = (sys.energy(&y) - e0).abs();
    Ok(([sums[0] / t_horizon, sums[1] / t_horizon], drift))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelExponent {
    pub energy: f64,
    pub estimate: IntegratedExponent,
    pub runs: Vec<LevelRun>,
    pub n_rejected: usize,
    pub regular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub n_samples: usize,
    pub t_horizon: f64,
    pub renorm_interval: f64,
    pub level: LevelOptions,
}

impl Default for LevelConfig {
    fn default() -> Self {
        Self {
            n_samples: 16,
            t_horizon: 100.0,
            renorm_interval: 0.5,
            level: LevelOptions::default(),
        }
    }
}

/// Weighted average of `max(lambda_1, 0)` of the transversal cocycle over
/// samples of the level `H = e`.
pub fn level_exponent(
    sys: &HamiltonianSystem,
    e: f64,
    cfg: &LevelConfig,
    seed: u64,
    opts: &IntegratorOptions,
) -> Result<LevelExponent> {
    let sample = sample_level(sys, e, cfg.n_samples, seed, &cfg.level)?;
    if !sample.regular {
        return Err(Error::CriticalLevel(vec![e]));
    }
    let runs: Vec<LevelRun> = par_map_indexed(sample.points.len(), |i| {
        let x = &sample.points[i];
        let (exponent, drift, rejection) =
            match transversal_exponents(sys, x, cfg.t_horizon, cfg.renorm_interval, opts) {
                Ok((l, drift)) if drift <= ENERGY_DRIFT_TOL => (Some(l[0].max(0.0)), drift, None),
                Ok((_, drift)) => (None, drift, Some("energy drift".to_string())),
                Err(err) => (None, f64::NAN, Some(err.kind().to_string())),
            };
        LevelRun {
            point: x.clone(),
            weight: sample.weights[i],
            exponent,
            energy_drift: drift,
            rejection,
        }
    });
    let (vals, ws): (Vec<f64>, Vec<f64>) = runs
        .iter()
        .filter_map(|r| r.exponent.map(|v| (v, r.weight)))
        .unzip();
    if vals.is_empty() {
        return Err(Error::AllSamplesRejected(runs.len()));
    }
    let (value, stderr) = weighted_mean_stderr(&vals, &ws);
    let n_rejected = runs.len() - vals.len() + sample.failed;
    Ok(LevelExponent {
        energy: e,
        estimate: IntegratedExponent {
            value,
            n_samples: vals.len(),
            n_rejected,
            t_horizon: cfg.t_horizon,
            stderr,
            method: crate::lyapunov::ExponentMethod::QrAverage,
            samples: Vec::new(),
        },
        runs,
        n_rejected,
        regular: sample.regular,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelIntegral {
    pub value: f64,
    pub stderr: f64,
    pub levels: Vec<LevelExponent>,
    pub quadrature: String,
}

/// Trapezoid quadrature in `e` of the level exponents over `e_grid`.
pub fn integrated_level_entropy(
    sys: &HamiltonianSystem,
    e_grid: &[f64],
    cfg: &LevelConfig,
    seed: u64,
    opts: &IntegratorOptions,
) -> Result<LevelIntegral> {
    if e_grid.is_empty() {
        return Err(Error::Invalid("empty energy grid".into()));
    }
    if e_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid(
            "energy grid must be strictly increasing".into(),
        ));
    }
    let mut levels = Vec::with_capacity(e_grid.len());
    let mut critical = Vec::new();
    for (j, &e) in e_grid.iter().enumerate() {
        match level_exponent(sys, e, cfg, derive_seed(seed, j as u64), opts) {
            Ok(l) => levels.push(l),
            Err(Error::CriticalLevel(_)) => critical.push(e),
            Err(err) => return Err(err),
        }
    }
    if !critical.is_empty() {
        return Err(Error::CriticalLevel(critical));
    }
    let n = e_grid.len();
    let mut value = 0.0;
    let mut var = 0.0;
    for j in 0..n {
        let left = if j > 0 {
            e_grid[j] - e_grid[j - 1]
        } else {
            0.0
        };
        let right = if j + 1 < n {
            e_grid[j + 1] - e_grid[j]
        } else {
            0.0
        };
        let w = 0.5 * (left + right);
        value += w * levels[j].estimate.value;
        var += (w * levels[j].estimate.stderr).powi(2);
    }
    Ok(LevelIntegral {
        value,
        stderr: var.sqrt(),
        levels,
        quadrature: "trapezoid in e".into(),
    })
}

/// Uniform random point in the sampling box, for spot checks.
pub fn random_point<R: Rng + ?Sized>(sys: &HamiltonianSystem, rng: &mut R) -> Vec<f64> {
    sys.domain.sample_uniform(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::flow;

    #[test]
    fn harmonic_rotation_convention() {
        let sys = HamiltonianSystem::builtin("harmonic4").unwrap();
        let f = sys.field();
        let t = 0.7;
        let x = [1.0, 0.5, -0.3, 0.2];
        let y = flow(f.as_ref(), &x, t, &IntegratorOptions::default())
            .unwrap()
            .position;
        let (s, c) = f64::sin_cos(t);
        let q1 = x[0] * c + x[1] * s;
        let p1 = -x[0] * s + x[1] * c;
        assert!((y[0] - q1).abs() < 1e-8 && (y[1] - p1).abs() < 1e-8);
    }

    #[test]
    fn omega_identity() {
        let sys = HamiltonianSystem::builtin("coupled_quartic4").unwrap();
        let mut rng = substream(3, 0);
        for _ in 0..100 {
            let x = random_point(&sys, &mut rng);
            assert!(sys.omega_residual(&x) <= 1e-10);
        }
    }

    #[test]
    fn jacobian_is_j_times_hessian() {
        let sys = HamiltonianSystem::builtin("coupled_quartic4").unwrap();
        let f = sys.field();
        let x = [0.3, -0.2, 0.8, 0.5];
        let jac = f.jacobian(&x);
        for k in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            let col = (f.eval(&xp) - f.eval(&xm)) / 2e-6;
            for i in 0..4 {
                assert!((jac[(i, k)] - col[i]).abs() < 1e-7);
            }
        }
        assert!(f.divergence(&x).abs() < 1e-14);
    }

    #[test]
    fn harmonic_level_is_sphere() {
        let sys = HamiltonianSystem::builtin("harmonic4").unwrap();
        let s = sample_level(&sys, 1.0, 50, 1, &LevelOptions::default()).unwrap();
        assert!(s.regular);
        assert_eq!(s.points.len(), 50);
        for x in &s.points {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            assert!((r2 / 2.0 - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn level_below_minimum_is_empty() {
        let sys = HamiltonianSystem::builtin("harmonic4").unwrap();
        let opts = LevelOptions {
            attempts: 2,
            ..LevelOptions::default()
        };
        assert_eq!(
            sample_level(&sys, -1.0, 4, 1, &opts).unwrap_err(),
            Error::EmptyLevel(-1.0)
        );
    }

    #[test]
    fn quartic_level_ten_is_regular() {
        let sys = HamiltonianSystem::builtin("coupled_quartic4").unwrap();
        let s = sample_level(&sys, 10.0, 30, 2, &LevelOptions::default()).unwrap();
        assert!(s.regular);
    }

    #[test]
    fn transversal_frame_is_oriented_and_orthogonal() {
        let sys = HamiltonianSystem::builtin("coupled_quartic4").unwrap();
        let x = [0.4, 0.1, -0.7, 0.9];
        let fr = transversal_frame(&sys, &x).unwrap();
        let g = sys.grad(&x);
        let xh = sys.field().eval(&x);
        for c in 0..2 {
            assert!(fr.vectors.column(c).dot(&g).abs() < 1e-12);
            assert!(fr.vectors.column(c).dot(&xh).abs() < 1e-12);
        }
        let f1: Vec<f64> = fr.vectors.column(0).iter().cloned().collect();
        let f2: Vec<f64> = fr.vectors.column(1).iter().cloned().collect();
        assert!((HamiltonianSystem::omega(&f1, &f2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transversal_cocycle_properties() {
        let opts = IntegratorOptions::default();
        let h = HamiltonianSystem::builtin("harmonic4").unwrap();
        let x = [1.0, 0.2, -0.4, 0.6];
        let p = transversal_poincare(&h, &x, 3.0, &opts).unwrap();
        for s in p.singular_values() {
            assert!((s - 1.0).abs() < 1e-8);
        }
        let p0 = transversal_poincare(&h, &x, 0.0, &opts).unwrap();
        assert!((p0.matrix - DMatrix::identity(2, 2)).norm() < 1e-14);

        let q = HamiltonianSystem::builtin("coupled_quartic4").unwrap();
        let p = transversal_poincare(&q, &[0.9, 0.3, 1.1, -0.5], 5.0, &opts).unwrap();
        assert!((p.matrix.determinant() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn critical_point_rejected() {
        let h = HamiltonianSystem::builtin("harmonic4").unwrap();
        assert!(transversal_frame(&h, &[0.0; 4]).is_err());
        assert!(matches!(
            transversal_frame(&h, &[1e-10, 0.0, 0.0, 0.0]),
            Err(Error::CriticalLevel(_))
        ));
    }

    #[test]
    fn single_level_grid_integrates_to_zero() {
        let q = HamiltonianSystem::builtin("coupled_quartic4").unwrap();
        let cfg = LevelConfig {
            n_samples: 2,
            t_horizon: 5.0,
            ..LevelConfig::default()
        };
        let r =
            integrated_level_entropy(&q, &[5.0], &cfg, 1, &IntegratorOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(
            integrated_level_entropy(&q, &[2.0, 1.0], &cfg, 1, &IntegratorOptions::default())
                .is_err()
        );
    }
}
