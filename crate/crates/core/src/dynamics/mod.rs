//! Vector fields on flat model manifolds, their flows and tangent flows.
//!
//! A field lives on a [`Domain`]: a product of circles (periodic axes) and
//! real lines, optionally with one axis closed up by a linear toral gluing
//! so that mapping tori of toral automorphisms can be represented in a
//! single flat chart. Integration happens in the chart; after every accepted
//! step the state is mapped back to its canonical representative and the
//! tangent part is transported through the gluing.

pub mod integrator;
pub mod polynomial;
pub mod system_file;
pub mod systems;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use integrator::{IntegratorOptions, OdeSystem, StepStats};
pub use polynomial::Polynomial;
pub use systems::{builtin, BUILTIN_NAMES};

/// `|X(x)|` below this marks `x` as a singularity.
pub const SINGULAR_SPEED: f64 = 1e-12;

/// Normalized distance to the gluing section below which a point is snapped
/// onto it.
const SECTION_SNAP: f64 = 1e-12;

/// Gluing of the chart boundary `axis = upper` to `axis = lower` through an
/// integer unimodular matrix acting on two periodic fibre axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Glue {
    pub axis: usize,
    pub fiber: [usize; 2],
    pub matrix: [[i64; 2]; 2],
}

impl Glue {
    fn inverse(&self) -> [[i64; 2]; 2] {
        let [[a, b], [c, d]] = self.matrix;
        let det = a * d - b * c;
        // unimodular: inverse is the adjugate times det (= +-1)
        [[d * det, -b * det], [-c * det, a * det]]
    }

    /// `matrix^k` for any integer `k`.
    pub fn power(&self, k: i64) -> [[f64; 2]; 2] {
        let base = if k >= 0 { self.matrix } else { self.inverse() };
        let mut acc = [[1i64, 0], [0, 1]];
        for _ in 0..k.unsigned_abs() {
            acc = mul2(acc, base);
        }
        acc.map(|r| r.map(|v| v as f64))
    }
}

fn mul2(a: [[i64; 2]; 2], b: [[i64; 2]; 2]) -> [[i64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Flat model manifold: per-axis bounds, periodic flags and an optional
/// gluing. Bounds on non-periodic axes are only used for sampling and
/// partitioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub periodic: Vec<bool>,
    #[serde(default)]
    pub glue: Option<Glue>,
}

impl Domain {
    pub fn torus(dim: usize, length: f64) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![length; dim],
            periodic: vec![true; dim],
            glue: None,
        }
    }

    /// Unbounded euclidean space, with `[-half_width, half_width]^dim` as
    /// the sampling box.
    pub fn euclidean(dim: usize, half_width: f64) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
            periodic: vec![false; dim],
            glue: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.upper.len() != d || self.periodic.len() != d {
            return Err(Error::Invalid("domain arrays differ in length".into()));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && u > l))
        {
            return Err(Error::Invalid(
                "domain bounds must satisfy lower < upper".into(),
            ));
        }
        if let Some(g) = &self.glue {
            let ok = g.axis < d
                && g.fiber
                    .iter()
                    .all(|&f| f < d && f != g.axis && self.periodic[f])
                && g.fiber[0] != g.fiber[1];
            let [[a, b], [c, e]] = g.matrix;
            if !ok || (a * e - b * c).abs() != 1 {
                return Err(Error::Invalid("invalid gluing".into()));
            }
        }
        Ok(())
    }

    fn length(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    /// Maps `x` to its canonical representative in place. When `tangent` is
    /// given (row-major, `dim` rows) it is transported through any gluing.
    /// Returns true if a gluing was crossed.
    pub fn canonicalize(&self, x: &mut [f64], tangent: Option<(&mut [f64], usize)>) -> bool {
        let mut glued = false;
        if let Some(g) = &self.glue {
            let lo = self.lower[g.axis];
            let len = self.length(g.axis);
            let v = (x[g.axis] - lo) / len;
            let mut k = v.floor();
            let mut r = v - k;
            if 1.0 - r < SECTION_SNAP {
                k += 1.0;
                r = 0.0;
            }
            if k != 0.0 {
                glued = true;
                let k = k as i64;
                x[g.axis] = lo + r * len;
                let p = g.power(k);
                let [f0, f1] = g.fiber;
                let (l0, l1) = (self.length(f0), self.length(f1));
                let u0 = (x[f0] - self.lower[f0]) / l0;
                let u1 = (x[f1] - self.lower[f1]) / l1;
                x[f0] = self.lower[f0] + l0 * (p[0][0] * u0 + p[0][1] * u1);
                x[f1] = self.lower[f1] + l1 * (p[1][0] * u0 + p[1][1] * u1);
                if let Some((m, cols)) = tangent {
                    // physical jacobian of the gluing: diag(L) P diag(1/L)
                    let g00 = p[0][0];
                    let g01 = p[0][1] * l0 / l1;
                    let g10 = p[1][0] * l1 / l0;
                    let g11 = p[1][1];
                    for c in 0..cols {
                        let a = m[f0 * cols + c];
                        let b = m[f1 * cols + c];
                        m[f0 * cols + c] = g00 * a + g01 * b;
                        m[f1 * cols + c] = g10 * a + g11 * b;
                    }
                }
            }
        }
        for i in 0..self.dim() {
            if self.periodic[i] {
                let len = self.length(i);
                let mut r = (x[i] - self.lower[i]).rem_euclid(len);
                if r >= len {
                    r = 0.0;
                }
                x[i] = self.lower[i] + r;
            }
        }
        glued
    }

    pub fn canonical(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.canonicalize(&mut y, None);
        y
    }

    /// Uniform point of the (sampling box of the) domain.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lower[i] + rng.random::<f64>() * self.length(i))
            .collect()
    }

    /// Chart displacement `b - a` using the shortest representative on
    /// periodic axes.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let d = b[i] - a[i];
                if self.periodic[i] {
                    let len = self.length(i);
                    d - len * (d / len).round()
                } else {
                    d
                }
            })
            .collect()
    }
}

/// A smooth vector field with analytic Jacobian on a flat domain.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn domain(&self) -> &Domain;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// Row-major `dim x dim` Jacobian.
    fn jacobian_into(&self, x: &[f64], out: &mut [f64]);

    /// Whether the field is declared (and validated) to be divergence-free.
    fn divergence_free(&self) -> bool;

    fn eval(&self, x: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        DVector::from_vec(out)
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        self.jacobian_into(x, &mut out);
        linalg::from_row_major(d, d, &out)
    }

    fn divergence(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut j = vec![0.0; d * d];
        self.jacobian_into(x, &mut j);
        (0..d).map(|i| j[i * d + i]).sum()
    }

    fn speed(&self, x: &[f64]) -> f64 {
        self.eval(x).norm()
    }

    fn is_singular(&self, x: &[f64]) -> bool {
        self.speed(x) < SINGULAR_SPEED
    }
}

pub type Field = Arc<dyn VectorField>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub position: Vec<f64>,
    pub time: f64,
}

/// `DX^t` at `base`, together with the endpoint `X^t(base)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleSegment {
    pub base: TrajectoryPoint,
    pub t: f64,
    pub end: Vec<f64>,
    pub matrix: DMatrix<f64>,
    /// `int_0^t div X(X^s x) ds`
    pub divergence_integral: f64,
}

struct FlowOde<'a> {
    field: &'a dyn VectorField,
}

impl OdeSystem for FlowOde<'_> {
    fn len(&self) -> usize {
        self.field.dim()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        self.field.eval_into(y, dy);
    }

    fn canonicalize(&self, y: &mut [f64]) -> bool {
        self.field.domain().canonicalize(y, None)
    }
}

/// State, a `dim x cols` tangent block and the running divergence integral.
struct TangentOde<'a> {
    field: &'a dyn VectorField,
    cols: usize,
}

impl OdeSystem for TangentOde<'_> {
    fn len(&self) -> usize {
        let d = self.field.dim();
        d + d * self.cols + 1
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let d = self.field.dim();
        let c = self.cols;
        let (x, rest) = y.split_at(d);
        let m = &rest[..d * c];
        self.field.eval_into(x, &mut dy[..d]);
        let mut jac = [0.0; 16];
        let jac = if d <= 4 {
            &mut jac[..d * d]
        } else {
            unreachable!("fields of dimension > 4 are not supported")
        };
        self.field.jacobian_into(x, jac);
        let dm = &mut dy[d..d + d * c];
        for i in 0..d {
            for k in 0..c {
                let mut s = 0.0;
                for j in 0..d {
                    s += jac[i * d + j] * m[j * c + k];
                }
                dm[i * c + k] = s;
            }
        }
        dy[d + d * c] = (0..d).map(|i| jac[i * d + i]).sum();
    }

    fn canonicalize(&self, y: &mut [f64]) -> bool {
        let d = self.field.dim();
        let (x, rest) = y.split_at_mut(d);
        self.field
            .domain()
            .canonicalize(x, Some((&mut rest[..d * self.cols], self.cols)))
    }
}

fn check_point(field: &dyn VectorField, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("non-finite point {x:?}")));
    }
    Ok(field.domain().canonical(x))
}

/// `X^t(x)`; negative `t` integrates backwards.
pub fn flow(
    field: &dyn VectorField,
    x: &[f64],
    t: f64,
    opts: &IntegratorOptions,
) -> Result<TrajectoryPoint> {
    opts.validate()?;
    let mut y = check_point(field, x)?;
    integrator::integrate(&FlowOde { field }, &mut y, t, opts)?;
    Ok(TrajectoryPoint {
        position: y,
        time: t,
    })
}

/// Transports the columns of `frame` (`dim x k`) by `DX^t_x`. Returns the
/// endpoint, the transported block and the divergence integral.
pub fn transport(
    field: &dyn VectorField,
    x: &[f64],
    frame: &DMatrix<f64>,
    t: f64,
    opts: &IntegratorOptions,
) -> Result<(Vec<f64>, DMatrix<f64>, f64)> {
    opts.validate()?;
    let d = field.dim();
    if frame.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: frame.nrows(),
        });
    }
    let x = check_point(field, x)?;
    let cols = frame.ncols();
    let mut y = Vec::with_capacity(d + d * cols + 1);
    y.extend_from_slice(&x);
    y.extend(linalg::to_row_major(frame));
    y.push(0.0);
    integrator::integrate(&TangentOde { field, cols }, &mut y, t, opts)?;
    let end = y[..d].to_vec();
    let m = linalg::from_row_major(d, cols, &y[d..d + d * cols]);
    Ok((end, m, y[d + d * cols]))
}

/// `DX^t_x` from the variational equation `M' = DX(X^s x) M`, `M(0) = I`.
pub fn tangent_flow(
    field: &dyn VectorField,
    x: &[f64],
    t: f64,
    opts: &IntegratorOptions,
) -> Result<CocycleSegment> {
    let d = field.dim();
    let x0 = check_point(field, x)?;
    let (end, matrix, divergence_integral) =
        transport(field, &x0, &DMatrix::identity(d, d), t, opts)?;
    Ok(CocycleSegment {
        base: TrajectoryPoint {
            position: x0,
            time: 0.0,
        },
        t,
        end,
        matrix,
        divergence_integral,
    })
}

/// Time between re-orthonormalizations in [`log_det`].
pub const LOG_DET_SEGMENT: f64 = 0.5;

/// `log det DX^t_x` and `int_0^t div X ds`.
///
/// The determinant of a long hyperbolic product cannot be read off the
/// matrix itself (cancellation of entries of size `e^{lambda t}`), so the
/// frame is re-orthonormalized every [`LOG_DET_SEGMENT`] and the log of the
/// `R` diagonals accumulated.
pub fn log_det(
    field: &dyn VectorField,
    x: &[f64],
    t: f64,
    opts: &IntegratorOptions,
) -> Result<(f64, f64)> {
    let d = field.dim();
    let steps = (t.abs() / LOG_DET_SEGMENT).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut y = check_point(field, x)?;
    let mut q = DMatrix::identity(d, d);
    let (mut log_det, mut div) = (0.0, 0.0);
    for _ in 0..steps {
        let (end, m, seg_div) = transport(field, &y, &q, dt, opts)?;
        let (qn, r) = linalg::qr_positive(&m);
        log_det += r.iter().map(|v| v.ln()).sum::<f64>();
        div += seg_div;
        q = qn;
        y = end;
    }
    Ok((log_det, div))
}

/// `|det DX^t_x - exp(int_0^t div X ds)|`, with the determinant from
/// [`log_det`].
pub fn liouville_check(
    field: &dyn VectorField,
    x: &[f64],
    t: f64,
    opts: &IntegratorOptions,
) -> Result<f64> {
    let (ld, div) = log_det(field, x, t, opts)?;
    let expected = if field.divergence_free() { 0.0 } else { div };
    Ok((ld.exp() - expected.exp()).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat_domain() -> Domain {
        Domain {
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
            periodic: vec![true, true, false],
            glue: Some(Glue {
                axis: 2,
                fiber: [0, 1],
                matrix: [[2, 1], [1, 1]],
            }),
        }
    }

    #[test]
    fn periodic_wrap() {
        let d = Domain::torus(2, 1.0);
        assert_eq!(d.canonical(&[1.25, -0.25]), vec![0.25, 0.75]);
        // tiny negative rounds to the lower end, never to `upper`
        let w = d.canonical(&[-1e-18, 0.5]);
        assert!(w[0] >= 0.0 && w[0] < 1.0);
    }

    #[test]
    fn gluing_applies_matrix_and_inverse() {
        let d = cat_domain();
        let mut x = vec![0.1, 0.3, 1.25];
        let mut m = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert!(d.canonicalize(&mut x, Some((&mut m, 3))));
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.4).abs() < 1e-15);
        assert!((x[2] - 0.25).abs() < 1e-15);
        assert_eq!(&m[..6], &[2.0, 1.0, 0.0, 1.0, 1.0, 0.0]);

        let mut back = vec![x[0], x[1], x[2] - 1.0];
        d.canonicalize(&mut back, None);
        assert!((back[0] - 0.1).abs() < 1e-14 && (back[1] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn section_snap() {
        let d = cat_domain();
        let mut x = vec![0.1, 0.3, 1.0 - 1e-15];
        assert!(d.canonicalize(&mut x, None));
        assert_eq!(x[2], 0.0);
    }

    #[test]
    fn glue_power_negative() {
        let g = cat_domain().glue.unwrap();
        assert_eq!(g.power(-1), [[1.0, -1.0], [-1.0, 2.0]]);
        assert_eq!(g.power(2), [[5.0, 3.0], [3.0, 2.0]]);
    }

    #[test]
    fn invalid_domain_rejected() {
        let mut d = cat_domain();
        d.glue.as_mut().unwrap().matrix = [[2, 0], [0, 1]];
        assert!(d.validate().is_err());
        let bad = Domain {
            lower: vec![0.0],
            upper: vec![0.0],
            periodic: vec![true],
            glue: None,
        };
        assert!(bad.validate().is_err());
    }
}
