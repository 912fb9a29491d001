//! Small dense helpers for the 2..4 dimensional matrices used throughout.
//!
//! Row-major `&[f64]` buffers are used inside the integrator; public results
//! are `nalgebra` matrices.

use nalgebra::{DMatrix, DVector};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Row-major `rows x cols` buffer to a matrix.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Modified Gram–Schmidt QR with a non-negative diagonal in `R`.
///
/// Returns `(Q, diag(R))`; the columns of `Q` are orthonormal and span the
/// same flag of subspaces as the columns of `m`.
pub fn qr_positive(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (n, k) = m.shape();
    let mut q = m.clone();
    let mut diag = vec![0.0; k];
    for j in 0..k {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            let mut col = q.column_mut(j);
            col.axpy(-proj, &qi, 1.0);
        }
        // second pass keeps orthogonality when columns are nearly dependent
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            let mut col = q.column_mut(j);
            col.axpy(-proj, &qi, 1.0);
        }
        let r = q.column(j).norm();
        diag[j] = r;
        if r > 0.0 {
            q.column_mut(j).scale_mut(1.0 / r);
        }
    }
    debug_assert_eq!(q.nrows(), n);
    (q, diag)
}

/// Singular values (descending) with the matching left and right singular
/// vectors as matrix columns.
pub fn svd_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let v_sorted = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| vt.row(i).transpose())
            .collect::<Vec<_>>(),
    );
    (sv, u_sorted, v_sorted)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn unit(v: &[f64]) -> DVector<f64> {
    let v = DVector::from_column_slice(v);
    let n = v.norm();
    v / n
}

/// Serializes a matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix"));
        }
        let flat: Vec<f64> = rows.concat();
        Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
    }
}
