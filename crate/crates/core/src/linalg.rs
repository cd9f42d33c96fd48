//! Minimal dense symmetric eigensolver used by PCA and filter learning.

use crate::scalar::{real, Real};

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// `a` is `n`x`n` row-major; only its symmetric part is meaningful. Returns
/// eigenvalues in descending order and the matching eigenvectors as rows.
/// Each eigenvector is sign-normalised so its largest-magnitude entry is
/// positive, which keeps results reproducible across runs.
pub(crate) fn jacobi_eigh<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    // Eigenvector accumulator; columns end up holding the eigenvectors.
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let frob = m.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let tol = T::epsilon() * frob.max(T::one()) * real::<T>(1e-2);

    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol * real::<T>(1e-3) {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (real::<T>(2.0) * apq);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .expect("eigenvalues must be finite")
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = vec![T::zero(); n * n];
    for (row, &col) in order.iter().enumerate() {
        eigenvalues.push(m[col * n + col]);
        let mut max_abs = T::zero();
        let mut flip = false;
        for k in 0..n {
            let e = v[k * n + col];
            if e.abs() > max_abs {
                max_abs = e.abs();
                flip = e < T::zero();
            }
        }
        for k in 0..n {
            let e = v[k * n + col];
            eigenvectors[row * n + k] = if flip { -e } else { e };
        }
    }
    (eigenvalues, eigenvectors)
}
