//! Filter learning: PCA whitening of mean-free patches followed by a
//! symmetric fixed-point ICA iteration with the tanh nonlinearity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::linalg::jacobi_eigh;
use crate::scalar::{real, Real};

pub const MAX_ITERATIONS: usize = 500;
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Learning wants a healthy patch-per-filter ratio before it is worth running.
pub const MIN_PATCHES_PER_FILTER: usize = 50;

/// Inverse square root of a symmetric positive-definite matrix.
fn sym_inv_sqrt<T: Real>(m: &[T], n: usize) -> Result<Vec<T>> {
    let (vals, vecs) = jacobi_eigh(m, n);
    let floor = vals[0].max(T::epsilon()) * real::<T>(1e-12);
    if vals[n - 1] <= floor {
        return Err(Error::Ica(
            "degenerate matrix during symmetric orthogonalisation".into(),
        ));
    }
    let mut out = vec![T::zero(); n * n];
    for k in 0..n {
        let scale = T::one() / vals[k].sqrt();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += scale * vecs[k * n + i] * vecs[k * n + j];
            }
        }
    }
    Ok(out)
}

fn matmul<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    // (n x k) * (k x m)
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        for p in 0..k {
            let aip = a[i * k + p];
            for j in 0..m {
                out[i * m + j] += aip * b[p * m + j];
            }
        }
    }
    out
}

/// Learn `n_filters` square filters from grey patches.
///
/// Each patch is a flattened `l*l` square (row-major); `l` is inferred from
/// the patch length. Patches are made zero-mean individually, the sample is
/// centred and whitened to `n_filters` dimensions, and the ICA rotation is
/// estimated by the symmetric fixed-point iteration. The returned filters are
/// the ICA rows pulled back through the whitening transform, so each one is
/// zero-mean and their responses on the training patches are decorrelated.
pub fn learn_filter_bank<T: Real>(
    patches: &[Vec<T>],
    n_filters: usize,
    seed: u64,
) -> Result<FilterBank<T>> {
    if patches.is_empty() {
        return Err(Error::Ica("no patches supplied".into()));
    }
    let dim = patches[0].len();
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(Error::Ica(format!("patch length {dim} is not a square")));
    }
    if side % 2 == 0 || !(3..=17).contains(&side) {
        return Err(Error::Ica(format!(
            "patch side {side} must be odd and within 3..=17"
        )));
    }
    if n_filters == 0 || n_filters > 12 {
        return Err(Error::Ica(format!(
            "filter count {n_filters} must be within 1..=12"
        )));
    }
    if n_filters > dim - 1 {
        return Err(Error::Ica(format!(
            "cannot learn {n_filters} filters from {dim}-pixel patches (at most {})",
            dim - 1
        )));
    }
    if patches.len() < MIN_PATCHES_PER_FILTER * n_filters {
        return Err(Error::Ica(format!(
            "need at least {} patches for {n_filters} filters, got {}",
            MIN_PATCHES_PER_FILTER * n_filters,
            patches.len()
        )));
    }
    if patches.iter().any(|p| p.len() != dim) {
        return Err(Error::Ica("patches have inconsistent lengths".into()));
    }

    let m = patches.len();
    let inv_m = T::one() / real::<T>(m as f64);

    // Per-patch DC removal, then centre each variable across the sample.
    let mut data = vec![T::zero(); m * dim];
    for (j, patch) in patches.iter().enumerate() {
        let mean = patch.iter().copied().sum::<T>() / real::<T>(dim as f64);
        for (i, &v) in patch.iter().enumerate() {
            data[j * dim + i] = v - mean;
        }
    }
    let mut col_mean = vec![T::zero(); dim];
    for j in 0..m {
        for i in 0..dim {
            col_mean[i] += data[j * dim + i];
        }
    }
    for v in &mut col_mean {
        *v *= inv_m;
    }
    for j in 0..m {
        for i in 0..dim {
            data[j * dim + i] -= col_mean[i];
        }
    }

    // Sample covariance and its top eigenpairs.
    let norm = T::one() / real::<T>((m - 1) as f64);
    let mut cov = vec![T::zero(); dim * dim];
    for j in 0..m {
        let row = &data[j * dim..(j + 1) * dim];
        for a in 0..dim {
            let ra = row[a];
            if ra == T::zero() {
                continue;
            }
            for b in a..dim {
                cov[a * dim + b] += ra * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            let v = cov[a * dim + b] * norm;
            cov[a * dim + b] = v;
            cov[b * dim + a] = v;
        }
    }
    let (eigvals, eigvecs) = jacobi_eigh(&cov, dim);
    let rank_floor = eigvals[0].max(T::epsilon()) * real::<T>(1e-10);
    let rank = eigvals.iter().take_while(|&&v| v > rank_floor).count();
    if rank < n_filters {
        return Err(Error::Ica(format!(
            "whitening rank {rank} is below the requested {n_filters} components"
        )));
    }

    // Whitening rows: eigenvector / sqrt(eigenvalue).
    let mut whiten = vec![T::zero(); n_filters * dim];
    for k in 0..n_filters {
        let scale = T::one() / eigvals[k].sqrt();
        for i in 0..dim {
            whiten[k * dim + i] = eigvecs[k * dim + i] * scale;
        }
    }
    // Whitened data, one column per patch: z[k][j].
    let mut z = vec![T::zero(); n_filters * m];
    for j in 0..m {
        let row = &data[j * dim..(j + 1) * dim];
        for k in 0..n_filters {
            let mut acc = T::zero();
            for i in 0..dim {
                acc += whiten[k * dim + i] * row[i];
            }
            z[k * m + j] = acc;
        }
    }

    // Random orthogonal start for the rotation estimate.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_filters;
    let mut b: Vec<T> = (0..n * n)
        .map(|_| real::<T>(StandardNormal.sample(&mut rng)))
        .collect();
    b = matmul(
        &sym_inv_sqrt(&matmul(&b, &transpose(&b, n, n), n, n, n), n)?,
        &b,
        n,
        n,
        n,
    );

    let tol = real::<T>(CONVERGENCE_TOL);
    let mut converged_at = None;
    for iteration in 0..MAX_ITERATIONS {
        // One fixed-point step: E[z g(b z)] - E[g'(b z)] b, row per filter.
        let mut b_plus = vec![T::zero(); n * n];
        for k in 0..n {
            let mut ezg = vec![T::zero(); n];
            let mut eg_prime = T::zero();
            for j in 0..m {
                let mut y = T::zero();
                for i in 0..n {
                    y += b[k * n + i] * z[i * m + j];
                }
                let g = y.tanh();
                eg_prime += T::one() - g * g;
                for i in 0..n {
                    ezg[i] += z[i * m + j] * g;
                }
            }
            eg_prime *= inv_m;
            for i in 0..n {
                b_plus[k * n + i] = ezg[i] * inv_m - eg_prime * b[k * n + i];
            }
        }
        let b_new = matmul(
            &sym_inv_sqrt(&matmul(&b_plus, &transpose(&b_plus, n, n), n, n, n), n)?,
            &b_plus,
            n,
            n,
            n,
        );
        let mut delta = T::zero();
        for k in 0..n {
            let mut d = T::zero();
            for i in 0..n {
                d += b_new[k * n + i] * b[k * n + i];
            }
            delta = delta.max((T::one() - d.abs()).abs());
        }
        b = b_new;
        if delta < tol {
            converged_at = Some(iteration + 1);
            break;
        }
    }
    let iterations = converged_at.ok_or_else(|| {
        Error::Ica(format!(
            "fixed-point iteration did not converge within {MAX_ITERATIONS} iterations"
        ))
    })?;

    let filters: Vec<Vec<T>> = (0..n)
        .map(|k| {
            (0..dim)
                .map(|i| {
                    let mut acc = T::zero();
                    for p in 0..n {
                        acc += b[k * n + p] * whiten[p * dim + i];
                    }
                    acc
                })
                .collect()
        })
        .collect();

    FilterBank::new(
        filters,
        side,
        format!("ica seed={seed} patches={m} iterations={iterations}"),
        Some(seed),
    )
}

fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sinusoid_patches(count: usize, side: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let phase_x: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let amp: f64 = rng.gen_range(0.5..1.5);
                let mut patch = Vec::with_capacity(side * side);
                for _row in 0..side {
                    for col in 0..side {
                        patch.push(amp * (1.9 * col as f64 + phase_x).sin());
                    }
                }
                patch
            })
            .collect()
    }

    #[test]
    fn learns_zero_mean_decorrelated_filters() {
        let patches = sinusoid_patches(600, 3, 11);
        let bank = learn_filter_bank(&patches, 2, 99).unwrap();
        assert_eq!(bank.n_filters(), 2);
        assert_eq!(bank.size(), 3);
        for k in 0..2 {
            let mean: f64 = bank.filter(k).iter().sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-8, "filter {k} mean {mean}");
        }

        // Responses on the training patches must decorrelate. Zero-mean
        // filters ignore the per-patch DC term, so raw patches suffice.
        let m = patches.len();
        let respond =
            |k: usize, p: &[f64]| -> f64 { bank.filter(k).iter().zip(p).map(|(w, x)| w * x).sum() };
        let mut r = [vec![0.0; m], vec![0.0; m]];
        for (j, p) in patches.iter().enumerate() {
            r[0][j] = respond(0, p);
            r[1][j] = respond(1, p);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / m as f64;
        let (m0, m1) = (mean(&r[0]), mean(&r[1]));
        let mut c00 = 0.0;
        let mut c01 = 0.0;
        let mut c11 = 0.0;
        for j in 0..m {
            c00 += (r[0][j] - m0) * (r[0][j] - m0);
            c01 += (r[0][j] - m0) * (r[1][j] - m1);
            c11 += (r[1][j] - m1) * (r[1][j] - m1);
        }
        let n1 = (m - 1) as f64;
        let (c00, c01, c11) = (c00 / n1, c01 / n1, c11 / n1);
        assert!((c00 - 1.0).abs() < 1e-6);
        assert!((c11 - 1.0).abs() < 1e-6);
        assert!(c01.abs() < 1e-6, "off-diagonal covariance {c01}");
    }

    #[test]
    fn same_seed_reproduces_the_same_bank() {
        let patches = sinusoid_patches(400, 3, 5);
        let a = learn_filter_bank(&patches, 2, 7).unwrap();
        let b = learn_filter_bank(&patches, 2, 7).unwrap();
        for k in 0..2 {
            for (x, y) in a.filter(k).iter().zip(b.filter(k)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn too_few_patches_is_rejected() {
        let patches = sinusoid_patches(60, 3, 1);
        match learn_filter_bank(&patches, 2, 0) {
            Err(Error::Ica(msg)) => assert!(msg.contains("patches")),
            other => panic!("expected learning error, got {other:?}"),
        }
    }

    #[test]
    fn filter_count_beyond_patch_rank_is_rejected() {
        let patches = sinusoid_patches(900, 3, 2);
        assert!(learn_filter_bank(&patches, 9, 0).is_err()); // 9 > l*l - 1 = 8
                                                             // Rank-2 data cannot support 5 components.
        assert!(matches!(
            learn_filter_bank(&patches, 5, 0),
            Err(Error::Ica(msg)) if msg.contains("rank")
        ));
    }
}
