//! Diagonal-covariance Gaussian mixtures fitted by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::parallel;
use crate::sampling::subsample_indices;
use crate::scalar::{real, Real};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_SAMPLE_CAP: usize = 1_000_000;
/// EM wants a few points per component before it is worth running.
pub const MIN_SAMPLES_PER_COMPONENT: usize = 10;

const LOG_2PI: f64 = 1.837877066409345483560659472811;
const ESTEP_CHUNK: usize = 2048;

#[derive(Debug, Clone)]
pub struct GmmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tol: f64,
    pub sample_cap: usize,
    pub variance_floor: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            sample_cap: DEFAULT_SAMPLE_CAP,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmModel<T: Real> {
    k: usize,
    dim: usize,
    weights: Vec<T>,
    /// `k * dim` row-major.
    means: Vec<T>,
    /// `k * dim` row-major, all entries >= the variance floor.
    variances: Vec<T>,
    pub seed: u64,
    /// Mean train log-likelihood after each EM iteration.
    pub loglik_trace: Vec<T>,
}

impl<T: Real> GmmModel<T> {
    pub fn from_parts(
        weights: Vec<T>,
        means: Vec<T>,
        variances: Vec<T>,
        dim: usize,
        seed: u64,
        loglik_trace: Vec<T>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || dim == 0 {
            return Err(Error::InvalidParameter(
                "mixture needs k >= 1 and dim >= 1".into(),
            ));
        }
        if means.len() != k * dim || variances.len() != k * dim {
            return Err(Error::DimensionMismatch {
                context: "mixture parameters".into(),
                expected: k * dim,
                found: means.len().max(variances.len()),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= T::zero()) {
            return Err(Error::InvalidParameter(
                "mixture weights must be positive".into(),
            ));
        }
        let total = weights.iter().copied().sum::<T>();
        if (total - T::one()).abs() > real::<T>(1e-9) {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let floor = real::<T>(VARIANCE_FLOOR) * real::<T>(1.0 - 1e-9);
        if variances.iter().any(|v| !v.is_finite() || *v < floor) {
            return Err(Error::InvalidParameter(
                "mixture variances must respect the variance floor".into(),
            ));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter(
                "mixture means must be finite".into(),
            ));
        }
        Ok(GmmModel {
            k,
            dim,
            weights,
            means,
            variances,
            seed,
            loglik_trace,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    pub fn mean_row(&self, k: usize) -> &[T] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance_row(&self, k: usize) -> &[T] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    /// `log w_k - (1/2) sum_j (log 2 pi + log var_kj)` for every component.
    pub(crate) fn log_consts(&self) -> Vec<T> {
        let half = real::<T>(0.5);
        let log2pi = real::<T>(LOG_2PI);
        (0..self.k)
            .map(|c| {
                let mut s = T::zero();
                for &v in self.variance_row(c) {
                    s += log2pi + v.ln();
                }
                self.weights[c].ln() - half * s
            })
            .collect()
    }
}

/// Log joint densities `log(w_k N(x; mu_k, var_k))` for one point.
fn log_joint<T: Real>(model: &GmmModel<T>, consts: &[T], x: &[T], out: &mut [T]) {
    let half = real::<T>(0.5);
    for c in 0..model.k {
        let mu = model.mean_row(c);
        let var = model.variance_row(c);
        let mut q = T::zero();
        for j in 0..model.dim {
            let d = x[j] - mu[j];
            q += d * d / var[j];
        }
        out[c] = consts[c] - half * q;
    }
}

fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let mut m = v[0];
    for &x in &v[1..] {
        m = m.max(x);
    }
    if !m.is_finite() {
        return m;
    }
    let mut s = T::zero();
    for &x in v {
        s += (x - m).exp();
    }
    m + s.ln()
}

/// Posterior component responsibilities for one point, summing to 1.
pub fn posteriors<T: Real>(model: &GmmModel<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            context: "posterior input".into(),
            expected: model.dim,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "posterior input must be finite".into(),
        ));
    }
    let consts = model.log_consts();
    let mut lp = vec![T::zero(); model.k];
    log_joint(model, &consts, x, &mut lp);
    let lse = log_sum_exp(&lp);
    let mut alpha: Vec<T> = lp.iter().map(|&v| (v - lse).exp()).collect();
    let total = alpha.iter().copied().sum::<T>();
    for a in &mut alpha {
        *a /= total;
    }
    Ok(alpha)
}

/// Mean per-point log density of `data` under the model.
pub fn log_likelihood<T: Real>(model: &GmmModel<T>, data: &[Vec<T>]) -> Result<T> {
    if data.is_empty() {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    }
    let consts = model.log_consts();
    let mut lp = vec![T::zero(); model.k];
    let mut total = T::zero();
    for x in data {
        if x.len() != model.dim {
            return Err(Error::DimensionMismatch {
                context: "log likelihood input".into(),
                expected: model.dim,
                found: x.len(),
            });
        }
        log_joint(model, &consts, x, &mut lp);
        total += log_sum_exp(&lp);
    }
    Ok(total / real::<T>(data.len() as f64))
}

fn kmeans_pp_centers<T: Real>(
    flat: &[T],
    n: usize,
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut centers = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centers.push(first);
    let mut d2 = vec![T::zero(); n];
    let dist2 = |a: &[T], b: &[T]| -> T {
        let mut s = T::zero();
        for j in 0..dim {
            let d = a[j] - b[j];
            s += d * d;
        }
        s
    };
    for i in 0..n {
        d2[i] = dist2(
            &flat[i * dim..(i + 1) * dim],
            &flat[first * dim..(first + 1) * dim],
        );
    }
    while centers.len() < k {
        let total = d2.iter().copied().sum::<T>();
        let next = if total > T::zero() {
            let r = real::<T>(rng.gen::<f64>()) * total;
            let mut acc = T::zero();
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(next);
        let c = &flat[next * dim..(next + 1) * dim];
        for i in 0..n {
            let d = dist2(&flat[i * dim..(i + 1) * dim], c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

struct EStepPartial<T> {
    loglik: T,
    nk: Vec<T>,
    sum_x: Vec<T>,
    sum_xx: Vec<T>,
}

/// Fit a `k`-component mixture with EM from a k-means++ initialisation.
pub fn fit_gmm<T: Real>(
    data: &[Vec<T>],
    k: usize,
    seed: u64,
    opts: &GmmOptions,
) -> Result<GmmModel<T>> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "component count must be >= 1".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::InsufficientSamples {
            have: 0,
            need: MIN_SAMPLES_PER_COMPONENT * k,
        });
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "descriptors must be non-empty".into(),
        ));
    }
    for x in data {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "gmm input".into(),
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "gmm input contains non-finite values".into(),
            ));
        }
    }

    // Seeded subsample, then a flat row-major matrix for the EM loops.
    let picked = subsample_indices(data.len(), opts.sample_cap, seed.wrapping_add(1));
    let n = picked.as_ref().map_or(data.len(), Vec::len);
    if n < MIN_SAMPLES_PER_COMPONENT * k {
        return Err(Error::InsufficientSamples {
            have: n,
            need: MIN_SAMPLES_PER_COMPONENT * k,
        });
    }
    let mut flat = Vec::with_capacity(n * dim);
    match &picked {
        Some(idx) => {
            for &i in idx {
                flat.extend_from_slice(&data[i]);
            }
        }
        None => {
            for x in data {
                flat.extend_from_slice(x);
            }
        }
    }

    let n_t = real::<T>(n as f64);
    let floor = real::<T>(opts.variance_floor);

    // Global per-axis variance seeds every component's spread.
    let mut global_mean = vec![T::zero(); dim];
    for i in 0..n {
        for j in 0..dim {
            global_mean[j] += flat[i * dim + j];
        }
    }
    for v in &mut global_mean {
        *v /= n_t;
    }
    let mut global_var = vec![T::zero(); dim];
    for i in 0..n {
        for j in 0..dim {
            let d = flat[i * dim + j] - global_mean[j];
            global_var[j] += d * d;
        }
    }
    for v in &mut global_var {
        *v = (*v / n_t).max(floor);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp_centers(&flat, n, dim, k, &mut rng);
    let mut weights = vec![T::one() / real::<T>(k as f64); k];
    let mut means = Vec::with_capacity(k * dim);
    for &c in &centers {
        means.extend_from_slice(&flat[c * dim..(c + 1) * dim]);
    }
    let mut variances: Vec<T> = global_var.iter().cycle().take(k * dim).copied().collect();

    let mut trace: Vec<T> = Vec::new();
    let tol = real::<T>(opts.tol);
    let half = real::<T>(0.5);
    let log2pi = real::<T>(LOG_2PI);

    for _iter in 0..opts.max_iter.max(1) {
        // Component constants for this iteration's parameters.
        let consts: Vec<T> = (0..k)
            .map(|c| {
                let mut s = T::zero();
                for j in 0..dim {
                    s += log2pi + variances[c * dim + j].ln();
                }
                weights[c].ln() - half * s
            })
            .collect();

        // E-step over fixed chunks; partials are folded in chunk order so the
        // result does not depend on thread scheduling.
        let ranges: Vec<(usize, usize)> = (0..n)
            .step_by(ESTEP_CHUNK)
            .map(|s| (s, (s + ESTEP_CHUNK).min(n)))
            .collect();
        let flat_ref = &flat;
        let means_ref = &means;
        let variances_ref = &variances;
        let consts_ref = &consts;
        let partials: Vec<EStepPartial<T>> = parallel::pool().install(|| {
            ranges
                .par_iter()
                .map(|&(start, end)| {
                    let mut part = EStepPartial {
                        loglik: T::zero(),
                        nk: vec![T::zero(); k],
                        sum_x: vec![T::zero(); k * dim],
                        sum_xx: vec![T::zero(); k * dim],
                    };
                    let mut lp = vec![T::zero(); k];
                    for i in start..end {
                        let x = &flat_ref[i * dim..(i + 1) * dim];
                        for c in 0..k {
                            let mu = &means_ref[c * dim..(c + 1) * dim];
                            let var = &variances_ref[c * dim..(c + 1) * dim];
                            let mut q = T::zero();
                            for j in 0..dim {
                                let d = x[j] - mu[j];
                                q += d * d / var[j];
                            }
                            lp[c] = consts_ref[c] - half * q;
                        }
                        let lse = log_sum_exp(&lp);
                        part.loglik += lse;
                        for c in 0..k {
                            let r = (lp[c] - lse).exp();
                            if r > T::zero() {
                                part.nk[c] += r;
                                let sx = &mut part.sum_x[c * dim..(c + 1) * dim];
                                let sxx = &mut part.sum_xx[c * dim..(c + 1) * dim];
                                for j in 0..dim {
                                    let v = x[j];
                                    sx[j] += r * v;
                                    sxx[j] += r * v * v;
                                }
                            }
                        }
                    }
                    part
                })
                .collect()
        });

        let mut loglik = T::zero();
        let mut nk = vec![T::zero(); k];
        let mut sum_x = vec![T::zero(); k * dim];
        let mut sum_xx = vec![T::zero(); k * dim];
        for part in partials {
            loglik += part.loglik;
            for c in 0..k {
                nk[c] += part.nk[c];
            }
            for (a, b) in sum_x.iter_mut().zip(&part.sum_x) {
                *a += *b;
            }
            for (a, b) in sum_xx.iter_mut().zip(&part.sum_xx) {
                *a += *b;
            }
        }

        let mean_ll = loglik / n_t;
        let done = trace
            .last()
            .map(|&prev| mean_ll - prev < tol * prev.abs().max(T::epsilon()))
            .unwrap_or(false);
        trace.push(mean_ll);

        // M-step. Empty components keep their previous parameters and a
        // vanishing (but positive) weight.
        let tiny = T::min_positive_value() * real::<T>(1e6);
        for c in 0..k {
            if nk[c] > T::zero() {
                for j in 0..dim {
                    let mu = sum_x[c * dim + j] / nk[c];
                    means[c * dim + j] = mu;
                    variances[c * dim + j] = (sum_xx[c * dim + j] / nk[c] - mu * mu).max(floor);
                }
                weights[c] = nk[c] / n_t;
            } else {
                weights[c] = tiny;
            }
        }
        let total_w = weights.iter().copied().sum::<T>();
        for w in &mut weights {
            *w /= total_w;
        }

        if done {
            break;
        }
    }

    GmmModel::from_parts(weights, means, variances, dim, seed, trace)
}
