//! Small dense linear-algebra helpers.
//!
//! The systems solved here are tiny (order `p + 1` with `p` the
//! autoregressive order), so everything is delegated to nalgebra in double
//! precision and converted back to the working scalar.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use num_complex::Complex;

use crate::error::{Result, SpharError};
use crate::real::{cast, Real};

fn to_f64_matrix<F: Real>(a: ArrayView2<'_, F>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        a[[i, j]].to_f64().unwrap_or(f64::NAN)
    })
}

/// Solve the dense system `a x = b` with partial-pivot LU.
///
/// Rejects systems whose pivot ratio indicates (near-)singularity, which is
/// how degenerate Yule-Walker systems for near-unit-root rows surface.
pub(crate) fn solve<F: Real>(a: ArrayView2<'_, F>, b: &[F]) -> Result<Vec<F>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(SpharError::Dimension(format!(
            "solve expects a square system, got {}x{} with rhs of length {}",
            n,
            a.ncols(),
            b.len()
        )));
    }
    let lu = to_f64_matrix(a).lu();
    let diag: Vec<f64> = (0..n).map(|i| lu.u()[(i, i)].abs()).collect();
    let max_pivot = diag.iter().cloned().fold(0.0_f64, f64::max);
    let min_pivot = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_pivot == 0.0 || min_pivot <= 1e-12 * max_pivot {
        return Err(SpharError::Singular(format!(
            "pivot ratio {:e} below tolerance",
            if max_pivot == 0.0 {
                0.0
            } else {
                min_pivot / max_pivot
            }
        )));
    }
    let rhs = DVector::from_iterator(n, b.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)));
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| SpharError::Singular("LU back-substitution failed".into()))?;
    Ok(x.iter().map(|&v| cast(v)).collect())
}

/// Roots of `phi(z) = 1 - phi_1 z - ... - phi_p z^p` as eigenvalues of the
/// companion matrix of the effective-degree polynomial.
///
/// Trailing zero coefficients are stripped first; an all-zero row has no
/// roots and yields an empty vector.
pub(crate) fn companion_roots<F: Real>(phi_row: &[F]) -> Vec<Complex<F>> {
    let degree = phi_row
        .iter()
        .rposition(|c| *c != F::zero())
        .map_or(0, |j| j + 1);
    if degree == 0 {
        return Vec::new();
    }
    let coeffs: Vec<f64> = phi_row[..degree]
        .iter()
        .map(|c| c.to_f64().unwrap_or(f64::NAN))
        .collect();
    let lead = coeffs[degree - 1];
    // Monic form: z^d + (phi_{d-1}/phi_d) z^{d-1} + ... + (phi_1/phi_d) z - 1/phi_d.
    let mut monic = vec![0.0_f64; degree];
    monic[0] = -1.0 / lead;
    for k in 1..degree {
        monic[k] = coeffs[k - 1] / lead;
    }
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if j + 1 == degree {
            -monic[i]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex::new(cast(z.re), cast(z.im)))
        .collect()
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_symmetric_eigenvalue<F: Real>(a: ArrayView2<'_, F>) -> F {
    let eig = to_f64_matrix(a).symmetric_eigen();
    cast(
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min),
    )
}
