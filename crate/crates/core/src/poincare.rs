//! Linear Poincaré flow on the normal bundle and the dominated-splitting test.
//!
//! At a regular point `x` the normal space `N_x = X(x)^perp` is given a
//! deterministic orthonormal frame; `P^t_X(x) = Pi_{X^t x} DX^t_x` is then a
//! `(d-1) x (d-1)` matrix between the frames at `x` and `X^t(x)`. Because
//! frames depend only on the base point, the matrices compose as a cocycle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{transport, IntegratorOptions, VectorField, SINGULAR_SPEED};
use crate::error::{Error, Result};
use crate::linalg;

/// Singular values closer than this give no well-defined splitting.
pub const SPLITTING_GAP: f64 = 1e-10;

/// Domination threshold on `|P^l|N-| * |P^-l|N+|`.
pub const DOMINATION_BOUND: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFrame {
    pub base: Vec<f64>,
    /// Columns are the frame vectors.
    #[serde(with = "crate::linalg::serde_rows")]
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareCocycle {
    pub start: NormalFrame,
    pub end: NormalFrame,
    pub t: f64,
    #[serde(with = "crate::linalg::serde_rows")]
    pub matrix: DMatrix<f64>,
}

impl PoincareCocycle {
    pub fn singular_values(&self) -> Vec<f64> {
        linalg::svd_sorted(&self.matrix).0
    }

    pub fn norm(&self) -> f64 {
        linalg::spectral_norm(&self.matrix)
    }
}

fn singular(x: &[f64], speed: f64) -> Error {
    Error::SingularPoint {
        point: x.to_vec(),
        speed,
    }
}

/// Orthonormal basis of the complement of `constraints` (assumed
/// orthonormal) built from the canonical basis.
///
/// The `k = constraints.len()` canonical vectors with the largest projection
/// onto the constraint span are skipped (ties: lowest index skipped first)
/// and the rest are Gram–Schmidt orthonormalized in index order. If that
/// selection is numerically dependent, a pivoted selection is used instead.
pub fn complement_frame(dim: usize, constraints: &[DVector<f64>]) -> DMatrix<f64> {
    let k = constraints.len();
    let proj: Vec<f64> = (0..dim)
        .map(|i| constraints.iter().map(|c| c[i] * c[i]).sum())
        .collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| proj[b].partial_cmp(&proj[a]).unwrap().then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[k..].to_vec();
    keep.sort_unstable();

    if let Some(f) = gram_schmidt(dim, constraints, &keep) {
        return f;
    }
    // pivoted fallback: always take the candidate with the largest residual
    let mut basis: Vec<DVector<f64>> = constraints.to_vec();
    let mut remaining: Vec<usize> = (0..dim).collect();
    let mut chosen = Vec::new();
    while chosen.len() < dim - k {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(p, &i)| (p, residual(dim, &basis, i).norm()))
            .fold(
                (0, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        let i = remaining.remove(pos);
        let r = residual(dim, &basis, i);
        basis.push(r.normalize());
        chosen.push(i);
    }
    chosen.sort_unstable();
    gram_schmidt(dim, constraints, &chosen).expect("pivoted selection is independent")
}

fn residual(dim: usize, basis: &[DVector<f64>], i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[i] = 1.0;
    for _ in 0..2 {
        for b in basis {
            let p = b.dot(&v);
            v.axpy(-p, b, 1.0);
        }
    }
    v
}

fn gram_schmidt(dim: usize, constraints: &[DVector<f64>], picks: &[usize]) -> Option<DMatrix<f64>> {
    let mut basis: Vec<DVector<f64>> = constraints.to_vec();
    let mut cols = Vec::with_capacity(picks.len());
    for &i in picks {
        let r = residual(dim, &basis, i);
        let n = r.norm();
        if n < 1e-6 {
            return None;
        }
        let u = r / n;
        basis.push(u.clone());
        cols.push(u);
    }
    Some(DMatrix::from_columns(&cols))
}

/// Frame of `N_x = X(x)^perp`.
pub fn normal_frame(field: &dyn VectorField, x: &[f64]) -> Result<NormalFrame> {
    let v = field.eval(x);
    let speed = v.norm();
    if speed < SINGULAR_SPEED {
        return Err(singular(x, speed));
    }
    Ok(NormalFrame {
        base: x.to_vec(),
        vectors: complement_frame(field.dim(), &[v / speed]),
    })
}

/// Orthogonal projection of `v` onto `N_x`.
pub fn project_normal(field: &dyn VectorField, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
    if v.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: v.len(),
        });
    }
    let u = field.eval(x);
    let speed = u.norm();
    if speed < SINGULAR_SPEED {
        return Err(singular(x, speed));
    }
    let u = u / speed;
    let v = DVector::from_column_slice(v);
    let p = u.dot(&v);
    Ok(v - u * p)
}

/// Projected cocycle between the frames produced by `frame_at` at the two
/// ends of the orbit segment.
pub fn projected_cocycle<F>(
    field: &dyn VectorField,
    x: &[f64],
    t: f64,
    start: &DMatrix<f64>,
    frame_at: F,
    opts: &IntegratorOptions,
) -> Result<PoincareCocycle>
where
    F: Fn(&[f64]) -> Result<NormalFrame>,
{
    let (end, moved, _) = transport(field, x, start, t, opts)?;
    let end_frame = frame_at(&end)?;
    // F_end^T Pi = F_end^T since the end frame spans the projection's range
    let matrix = end_frame.vectors.transpose() * moved;
    Ok(PoincareCocycle {
        start: NormalFrame {
            base: field.domain().canonical(x),
            vectors: start.clone(),
        },
        end: end_frame,
        t,
        matrix,
    })
}

/// `P^t_X(x)` in the canonical normal frames.
pub fn linear_poincare(
    field: &dyn VectorField,
    x: &[f64],
    t: f64,
    opts: &IntegratorOptions,
) -> Result<PoincareCocycle> {
    let x = field.domain().canonical(x);
    let start = normal_frame(field, &x)?;
    projected_cocycle(
        field,
        &x,
        t,
        &start.vectors,
        |y| normal_frame(field, y),
        opts,
    )
}

/// `P^t_X(x)` starting from a caller-supplied orthonormal frame of `N_x`.
pub fn linear_poincare_from_frame(
    field: &dyn VectorField,
    x: &[f64],
    t: f64,
    start: &DMatrix<f64>,
    opts: &IntegratorOptions,
) -> Result<PoincareCocycle> {
    let x = field.domain().canonical(x);
    let u = field.eval(&x);
    if u.norm() < SINGULAR_SPEED {
        return Err(singular(&x, u.norm()));
    }
    if start.nrows() != field.dim() || start.ncols() + 1 != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim() - 1,
            got: start.ncols(),
        });
    }
    projected_cocycle(field, &x, t, start, |y| normal_frame(field, y), opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    /// Finite-time contracting direction at the sample (ambient coordinates).
    pub n_minus: Vec<f64>,
    /// Finite-time expanding direction at the image point.
    pub n_plus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub ell: f64,
    pub horizon: f64,
    pub orbit_samples: usize,
    pub degenerate_samples: usize,
    /// Per-sample `|P^l|N-| * |P^-l|N+|`.
    pub products: Vec<f64>,
    pub max_product: f64,
    /// `None` on samples whose singular values coincide.
    pub splitting: Vec<Option<SplitPair>>,
    pub splitting_proxy: String,
    pub passed: bool,
}

/// Samples the orbit of `x` every `ell` time units over `horizon` and
/// evaluates the domination product of the cocycle returned by `cocycle`.
///
/// On each sample the splitting is approximated by the singular directions
/// of `P^ell`: `N-` is the least expanded right singular vector and `N+` at
/// the image is the left singular vector of the next singular value, so the
/// product equals `s_min / s_next`. Samples with coinciding singular values
/// have product 1 for every choice of splitting; if all samples are like
/// that there is no splitting to report.
pub fn domination_check_with<C>(
    x: &[f64],
    ell: f64,
    horizon: f64,
    cocycle: C,
) -> Result<DominationReport>
where
    C: Fn(&[f64], f64) -> Result<PoincareCocycle>,
{
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::Invalid(format!("ell must be positive, got {ell}")));
    }
    if !(horizon >= ell) {
        return Err(Error::Invalid(format!(
            "horizon {horizon} shorter than ell {ell}"
        )));
    }
    let count = ((horizon / ell) + 1e-9).floor() as usize;
    let mut y = x.to_vec();
    let mut products = Vec::with_capacity(count);
    let mut splitting = Vec::with_capacity(count);
    let mut degenerate = 0;
    for _ in 0..count {
        let p = cocycle(&y, ell)?;
        let m = p.matrix.ncols();
        if m < 2 {
            return Err(Error::DegenerateSplitting);
        }
        let (s, u, v) = linalg::svd_sorted(&p.matrix);
        let (s_min, s_next) = (s[m - 1], s[m - 2]);
        if s_next - s_min < SPLITTING_GAP {
            degenerate += 1;
            products.push(1.0);
            splitting.push(None);
        } else {
            products.push(s_min / s_next);
            let n_minus = &p.start.vectors * v.column(m - 1);
            let n_plus = &p.end.vectors * u.column(m - 2);
            splitting.push(Some(SplitPair {
                n_minus: n_minus.iter().cloned().collect(),
                n_plus: n_plus.iter().cloned().collect(),
            }));
        }
        y = p.end.base.clone();
    }
    if degenerate == count {
        return Err(Error::DegenerateSplitting);
    }
    let max_product = products.iter().cloned().fold(0.0, f64::max);
    Ok(DominationReport {
        ell,
        horizon,
        orbit_samples: count,
        degenerate_samples: degenerate,
        products,
        max_product,
        splitting,
        splitting_proxy: "finite-time singular directions of P^ell".into(),
        passed: max_product <= DOMINATION_BOUND,
    })
}

/// Dominated-splitting test for the linear Poincaré flow along one orbit.
pub fn domination_check(
    field: &dyn VectorField,
    x: &[f64],
    ell: f64,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<DominationReport> {
    let x = field.domain().canonical(x);
    domination_check_with(&x, ell, horizon, |y, t| linear_poincare(field, y, t, opts))
}
