//! Small dense linear-algebra helpers on top of `ndarray`/LAPACK.

use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{Eigh, JobSvd, SVDDC, UPLO};
use num_complex::Complex64;

use crate::error::Result;

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMatrix {
    Array2::eye(n)
}

/// Conjugate transpose.
pub fn adjoint(a: &ArrayView2<C64>) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// Largest entry modulus.
pub fn max_abs(a: &ArrayView2<C64>) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

pub fn hermiticity_residual(a: &ArrayView2<C64>) -> f64 {
    let n = a.nrows();
    let mut r = 0.0f64;
    for i in 0..n {
        for j in i..n {
            r = r.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    r
}

/// max |A†A - 1| entrywise.
pub fn unitarity_residual(u: &ArrayView2<C64>) -> f64 {
    let g = adjoint(u).dot(u);
    g.indexed_iter()
        .map(|((i, j), z)| if i == j { (z - 1.0).norm() } else { z.norm() })
        .fold(0.0f64, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as columns.
///
/// LAPACK is handed a column-major copy: for row-major complex input the
/// wrapper would otherwise return the conjugated eigenvectors.
pub fn hermitian_eigh(h: &ArrayView2<C64>) -> Result<(Array1<f64>, CMatrix)> {
    let mut f = Array2::<C64>::zeros(h.dim().f());
    f.assign(h);
    Ok(f.eigh(UPLO::Lower)?)
}

/// Polar factor `W V†` of `A = W Σ V†`, together with the singular values
/// (ascending order is not guaranteed; LAPACK returns them descending).
pub fn polar_decomposition(a: &ArrayView2<C64>) -> Result<(CMatrix, Vec<f64>)> {
    let n = a.nrows();
    if n == 1 && a.ncols() == 1 {
        let z = a[[0, 0]];
        let r = z.norm();
        let u = if r > 0.0 { z / r } else { C64::new(1.0, 0.0) };
        return Ok((Array2::from_elem((1, 1), u), vec![r]));
    }
    if n == 2 && a.ncols() == 2 {
        if let Some(r) = polar_2x2(a) {
            return Ok(r);
        }
    }
    let owned = a.to_owned();
    let (w, s, vt) = owned.svddc(JobSvd::All)?;
    let w = w.expect("svddc(All) returns U");
    let vt = vt.expect("svddc(All) returns V^H");
    Ok((w.dot(&vt), s.to_vec()))
}

/// `U = A (A†A)^{-1/2}` with `√P = (P + √det P) / √(tr P + 2√det P)`;
/// `None` when `A` is numerically singular.
fn polar_2x2(a: &ArrayView2<C64>) -> Option<(CMatrix, Vec<f64>)> {
    let p = adjoint(a).dot(a);
    let tr = p[[0, 0]].re + p[[1, 1]].re;
    let s = (a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]]).norm();
    if s <= 1e-10 * tr {
        return None;
    }
    let t = (tr + 2.0 * s).sqrt();
    // (√P)^{-1} = adj(√P) / det √P with det √P = s
    let r00 = (p[[1, 1]] + s) / t;
    let r11 = (p[[0, 0]] + s) / t;
    let r01 = -p[[0, 1]] / t;
    let r10 = -p[[1, 0]] / t;
    let inv = ndarray::array![[r00 / s, r01 / s], [r10 / s, r11 / s]];
    let diff = (tr - 2.0 * s).max(0.0).sqrt();
    Some((a.dot(&inv), vec![(t + diff) / 2.0, (t - diff) / 2.0]))
}

/// Spectral (operator) norm of a small block.
pub fn operator_norm(b: &ArrayView2<C64>) -> f64 {
    match b.dim() {
        (1, 1) => b[[0, 0]].norm(),
        (2, 2) => {
            // largest eigenvalue of the 2x2 Gram matrix B†B
            let g = adjoint(b).dot(b);
            let tr = g[[0, 0]].re + g[[1, 1]].re;
            let det = (g[[0, 0]] * g[[1, 1]] - g[[0, 1]] * g[[1, 0]]).re;
            let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
            (0.5 * tr + disc).max(0.0).sqrt()
        }
        _ => {
            let owned = b.to_owned();
            match owned.svddc(JobSvd::None) {
                Ok((_, s, _)) => s.iter().cloned().fold(0.0, f64::max),
                Err(_) => frobenius(b),
            }
        }
    }
}

pub fn frobenius(b: &ArrayView2<C64>) -> f64 {
    b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Sum of the diagonal entries whose index is listed.
pub fn partial_trace(a: &ArrayView2<C64>, rows: &[usize]) -> C64 {
    rows.iter().map(|&i| a[[i, i]]).sum()
}

/// `Σ_{i ∈ rows} (A B)_{ii}` without forming the product.
pub fn partial_trace_of_product(a: &ArrayView2<C64>, b: &ArrayView2<C64>, rows: &[usize]) -> C64 {
    rows.iter()
        .map(|&i| {
            a.index_axis(Axis(0), i)
                .iter()
                .zip(b.index_axis(Axis(1), i).iter())
                .map(|(x, y)| x * y)
                .sum::<C64>()
        })
        .sum()
}

/// Determinant of a small real square matrix given as rows (partial pivoting).
pub fn real_determinant(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    det
}
