//! Thomas algorithm for tridiagonal systems.
//!
//! Every matrix assembled in this crate is tridiagonal and either symmetric
//! positive definite or diagonally dominant, so no pivoting is needed.

use crate::{Error, Result};

/// Solves `sub[i-1] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]` in place.
///
/// `sub` and `sup` have length `n - 1`. `rhs` is overwritten by the solution.
pub(crate) fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    debug_assert_eq!(rhs.len(), n);
    debug_assert_eq!(sub.len() + 1, n);
    debug_assert_eq!(sup.len() + 1, n);
    let mut c = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return Err(Error::Singular { row: 0 });
    }
    rhs[0] /= piv;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / piv;
        piv = diag[i] - sub[i - 1] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(Error::Singular { row: i });
        }
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}
