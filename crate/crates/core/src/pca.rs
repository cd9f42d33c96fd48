//! PCA reduction of local descriptors.

use crate::error::{Error, Result};
use crate::linalg::jacobi_eigh;
use crate::sampling::subsample_indices;
use crate::scalar::{real, Real};

/// Fitting never looks at more than this many descriptors.
pub const DEFAULT_SAMPLE_CAP: usize = 1_000_000;
/// Reported when `retained_variance_fraction` falls below this target.
pub const VARIANCE_TARGET: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct PcaModel<T: Real> {
    mean: Vec<T>,
    /// `out_dim` x `in_dim`, row-major; rows are orthonormal principal
    /// directions, sorted by descending eigenvalue.
    basis: Vec<T>,
    eigenvalues: Vec<T>,
    retained_variance_fraction: T,
    in_dim: usize,
    out_dim: usize,
}

impl<T: Real> PcaModel<T> {
    pub fn from_parts(
        mean: Vec<T>,
        basis: Vec<T>,
        eigenvalues: Vec<T>,
        retained_variance_fraction: T,
    ) -> Result<Self> {
        let in_dim = mean.len();
        let out_dim = eigenvalues.len();
        if in_dim == 0 || out_dim == 0 || basis.len() != in_dim * out_dim {
            return Err(Error::DimensionMismatch {
                context: "pca basis".into(),
                expected: in_dim * out_dim,
                found: basis.len(),
            });
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "pca eigenvalues must be sorted descending".into(),
            ));
        }
        Ok(PcaModel {
            mean,
            basis,
            eigenvalues,
            retained_variance_fraction,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn basis(&self) -> &[T] {
        &self.basis
    }

    pub fn basis_row(&self, k: usize) -> &[T] {
        &self.basis[k * self.in_dim..(k + 1) * self.in_dim]
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn retained_variance_fraction(&self) -> T {
        self.retained_variance_fraction
    }

    /// True when the retained variance misses the 95% target.
    pub fn variance_warning(&self) -> bool {
        self.retained_variance_fraction < real::<T>(VARIANCE_TARGET)
    }

    /// Project one descriptor: `basis * (x - mean)`.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "pca projection input".into(),
                expected: self.in_dim,
                found: x.len(),
            });
        }
        let centred: Vec<T> = x.iter().zip(&self.mean).map(|(a, m)| *a - *m).collect();
        Ok((0..self.out_dim)
            .map(|k| {
                let row = self.basis_row(k);
                let mut acc = T::zero();
                for (w, v) in row.iter().zip(&centred) {
                    acc += *w * *v;
                }
                acc
            })
            .collect())
    }
}

/// Streaming covariance accumulator so fitting never needs every descriptor
/// in memory at once. Partial accumulators from parallel workers are merged
/// in a fixed order by the caller.
#[derive(Debug, Clone)]
pub struct CovAccumulator<T: Real> {
    dim: usize,
    count: u64,
    sum: Vec<T>,
    /// Upper triangle (row-major, `i <= j`) of the raw second moment.
    cross: Vec<T>,
}

impl<T: Real> CovAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        CovAccumulator {
            dim,
            count: 0,
            sum: vec![T::zero(); dim],
            cross: vec![T::zero(); dim * (dim + 1) / 2],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn add(&mut self, x: &[T]) {
        debug_assert_eq!(x.len(), self.dim);
        self.count += 1;
        let mut idx = 0;
        for i in 0..self.dim {
            self.sum[i] += x[i];
            let xi = x[i];
            for j in i..self.dim {
                self.cross[idx] += xi * x[j];
                idx += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &CovAccumulator<T>) {
        assert_eq!(self.dim, other.dim);
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += *b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += *b;
        }
    }

    /// Finish the fit: eigendecompose the sample covariance (n-1 normalised)
    /// and keep the top `out_dim` components.
    pub fn finish(&self, out_dim: usize) -> Result<PcaModel<T>> {
        let dim = self.dim;
        let n = self.count as usize;
        if n <= out_dim {
            return Err(Error::InsufficientSamples {
                have: n,
                need: out_dim + 1,
            });
        }
        let n_t = real::<T>(n as f64);
        let mean: Vec<T> = self.sum.iter().map(|s| *s / n_t).collect();
        let norm = T::one() / real::<T>((n - 1) as f64);
        let mut cov = vec![T::zero(); dim * dim];
        let mut idx = 0;
        for i in 0..dim {
            for j in i..dim {
                let c = (self.cross[idx] - n_t * mean[i] * mean[j]) * norm;
                cov[i * dim + j] = c;
                cov[j * dim + i] = c;
                idx += 1;
            }
        }
        let trace: T = (0..dim).map(|i| cov[i * dim + i]).sum();
        let (eigvals, eigvecs) = jacobi_eigh(&cov, dim);

        let floor = eigvals[0].max(T::epsilon()) * real::<T>(1e-10);
        let rank = eigvals.iter().take_while(|&&v| v > floor).count();
        if rank < out_dim {
            return Err(Error::RankDeficient {
                achieved: rank,
                requested: out_dim,
            });
        }
        let eigenvalues: Vec<T> = eigvals[..out_dim].to_vec();
        let basis: Vec<T> = eigvecs[..out_dim * dim].to_vec();
        let retained = if trace > T::zero() {
            eigenvalues.iter().copied().sum::<T>() / trace
        } else {
            T::zero()
        };
        PcaModel::from_parts(mean, basis, eigenvalues, retained.min(T::one()))
    }
}

/// Fit a PCA model on a descriptor sample, keeping `out_dim` components.
/// At most `sample_cap` descriptors are used, subsampled uniformly (seeded).
pub fn fit_pca<T: Real>(
    data: &[Vec<T>],
    out_dim: usize,
    seed: u64,
    sample_cap: usize,
) -> Result<PcaModel<T>> {
    if out_dim == 0 {
        return Err(Error::InvalidParameter(
            "pca output dimension must be positive".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::InsufficientSamples {
            have: 0,
            need: out_dim + 1,
        });
    }
    let dim = data[0].len();
    for x in data {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "pca input".into(),
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "pca input contains non-finite values".into(),
            ));
        }
    }
    let mut acc = CovAccumulator::new(dim);
    match subsample_indices(data.len(), sample_cap, seed) {
        Some(picked) => {
            for i in picked {
                acc.add(&data[i]);
            }
        }
        None => {
            for x in data {
                acc.add(x);
            }
        }
    }
    acc.finish(out_dim)
}
