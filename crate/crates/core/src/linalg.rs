//! Small dense solvers for the Newton-type fitters.

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &Array2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag = diag - l[[j, k]] * l[[j, k]];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Scalar>(l: &Array2<T>, b: &Array1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Inverse of an SPD matrix from its Cholesky factor.
pub fn cholesky_inverse<T: Scalar>(l: &Array2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut inv = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<T>::zeros(n);
        e[j] = T::one();
        let col = cholesky_solve(l, &e);
        inv.column_mut(j).assign(&col);
    }
    inv
}

/// Solves the SPD system `a x = b`, adding growing diagonal jitter if the
/// factorization fails. Returns the solution and the jitter that was used.
pub fn solve_spd_with_jitter<T: Scalar>(a: &Array2<T>, b: &Array1<T>) -> Option<(Array1<T>, T)> {
    if let Some(l) = cholesky(a) {
        return Some((cholesky_solve(&l, b), T::zero()));
    }
    let n = a.nrows();
    let scale = (0..n)
        .map(|i| a[[i, i]].abs())
        .fold(T::zero(), T::max)
        .max(T::one());
    let mut jitter = scale * T::lit(1e-10);
    for _ in 0..12 {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[[i, i]] = shifted[[i, i]] + jitter;
        }
        if let Some(l) = cholesky(&shifted) {
            return Some((cholesky_solve(&l, b), jitter));
        }
        jitter = jitter * T::lit(10.0);
    }
    None
}
