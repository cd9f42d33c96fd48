//! Fisher vector encoding of descriptor sets against a Gaussian mixture.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::parallel;
use crate::scalar::{real, Real};

const ENCODE_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct FisherVector<T: Real> {
    /// Length `2 * dim * k`; per component `dim` first-order entries followed
    /// by `dim` second-order entries.
    pub values: Vec<T>,
    pub normalized: bool,
    pub source: Option<String>,
}

impl<T: Real> FisherVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Encode descriptors as an (unnormalised) Fisher vector.
///
/// For component `k` with weight `w_k`, mean `mu_k` and per-axis deviation
/// `s_k`, the first-order block is `sum_t a_t(k) (x_t - mu_k) / s_k` scaled by
/// `1 / (T sqrt(w_k))`, and the second-order block is
/// `sum_t a_t(k) ((x_t - mu_k)^2 / s_k^2 - 1)` scaled by `1 / (T sqrt(2 w_k))`,
/// where `a_t` are posterior responsibilities and `T` the descriptor count.
pub fn encode_fv<T: Real>(model: &GmmModel<T>, descriptors: &[Vec<T>]) -> Result<FisherVector<T>> {
    if descriptors.is_empty() {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    }
    let k = model.k();
    let dim = model.dim();
    for x in descriptors {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "fisher vector input".into(),
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "fisher vector input contains non-finite values".into(),
            ));
        }
    }

    let consts = model.log_consts();
    let half = real::<T>(0.5);

    // Chunked accumulation folded in chunk order keeps the sums independent
    // of thread scheduling.
    let ranges: Vec<(usize, usize)> = (0..descriptors.len())
        .step_by(ENCODE_CHUNK)
        .map(|s| (s, (s + ENCODE_CHUNK).min(descriptors.len())))
        .collect();
    let partials: Vec<(Vec<T>, Vec<T>)> = parallel::pool().install(|| {
        ranges
            .par_iter()
            .map(|&(start, end)| {
                let mut s1 = vec![T::zero(); k * dim];
                let mut s2 = vec![T::zero(); k * dim];
                let mut lp = vec![T::zero(); k];
                for x in &descriptors[start..end] {
                    for c in 0..k {
                        let mu = model.mean_row(c);
                        let var = model.variance_row(c);
                        let mut q = T::zero();
                        for j in 0..dim {
                            let d = x[j] - mu[j];
                            q += d * d / var[j];
                        }
                        lp[c] = consts[c] - half * q;
                    }
                    let mut m = lp[0];
                    for &v in &lp[1..] {
                        m = m.max(v);
                    }
                    let mut z = T::zero();
                    for &v in &lp {
                        z += (v - m).exp();
                    }
                    let lse = m + z.ln();
                    for c in 0..k {
                        let a = (lp[c] - lse).exp();
                        if a > T::zero() {
                            let mu = model.mean_row(c);
                            let var = model.variance_row(c);
                            for j in 0..dim {
                                let sd = var[j].sqrt();
                                let u = (x[j] - mu[j]) / sd;
                                s1[c * dim + j] += a * u;
                                s2[c * dim + j] += a * (u * u - T::one());
                            }
                        }
                    }
                }
                (s1, s2)
            })
            .collect()
    });

    let mut s1 = vec![T::zero(); k * dim];
    let mut s2 = vec![T::zero(); k * dim];
    for (p1, p2) in partials {
        for (a, b) in s1.iter_mut().zip(&p1) {
            *a += *b;
        }
        for (a, b) in s2.iter_mut().zip(&p2) {
            *a += *b;
        }
    }

    let t = real::<T>(descriptors.len() as f64);
    let two = real::<T>(2.0);
    let mut values = vec![T::zero(); 2 * k * dim];
    for c in 0..k {
        let w = model.weights()[c];
        let scale1 = T::one() / (t * w.sqrt());
        let scale2 = T::one() / (t * (two * w).sqrt());
        for j in 0..dim {
            values[c * 2 * dim + j] = scale1 * s1[c * dim + j];
            values[c * 2 * dim + dim + j] = scale2 * s2[c * dim + j];
        }
    }

    Ok(FisherVector {
        values,
        normalized: false,
        source: None,
    })
}

/// Apply signed square root and/or L2 normalisation in place.
///
/// An all-zero vector is left as zeros; the `normalized` flag is still set.
pub fn normalize_fv<T: Real>(fv: &mut FisherVector<T>, power: bool, l2: bool) {
    if power {
        for v in &mut fv.values {
            *v = v.signum() * v.abs().sqrt();
        }
    }
    if l2 {
        let norm = fv.values.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            for v in &mut fv.values {
                *v /= norm;
            }
        }
    }
    fv.normalized = true;
}

/// Write one Fisher vector: u32 LE component count, u32 LE descriptor
/// dimension, then `2 * dim * k` f64 LE values.
pub fn write_fv_dump<T: Real>(
    path: &Path,
    k: usize,
    dim: usize,
    fv: &FisherVector<T>,
) -> Result<()> {
    if fv.values.len() != 2 * k * dim {
        return Err(Error::DimensionMismatch {
            context: "fisher vector dump".into(),
            expected: 2 * k * dim,
            found: fv.values.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(&(k as u32).to_le_bytes())?;
    put(&(dim as u32).to_le_bytes())?;
    for &v in &fv.values {
        put(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a Fisher vector dump back as `(k, dim, values)`.
pub fn read_fv_dump(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf).map_err(|e| Error::io(path, e))?;
    let k = u32::from_le_bytes(u32_buf) as usize;
    r.read_exact(&mut u32_buf).map_err(|e| Error::io(path, e))?;
    let dim = u32::from_le_bytes(u32_buf) as usize;
    let mut values = Vec::with_capacity(2 * k * dim);
    let mut f64_buf = [0u8; 8];
    for _ in 0..2 * k * dim {
        r.read_exact(&mut f64_buf).map_err(|e| Error::io(path, e))?;
        values.push(f64::from_le_bytes(f64_buf));
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => Ok((k, dim, values)),
        Ok(_) => Err(Error::Bundle {
            path: path.to_path_buf(),
            message: "trailing data after fisher vector".into(),
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::posteriors;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_model(k: usize, dim: usize, seed: u64) -> GmmModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let means = (0..k * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let variances = (0..k * dim).map(|_| rng.gen_range(0.3..2.0)).collect();
        GmmModel::from_parts(weights, means, variances, dim, seed, vec![]).unwrap()
    }

    fn oracle_fv(model: &GmmModel<f64>, descriptors: &[Vec<f64>]) -> Vec<f64> {
        let k = model.k();
        let dim = model.dim();
        let t = descriptors.len() as f64;
        let mut out = vec![0.0; 2 * k * dim];
        for x in descriptors {
            let alpha = posteriors(model, x).unwrap();
            for c in 0..k {
                for j in 0..dim {
                    let sd = model.variance_row(c)[j].sqrt();
                    let u = (x[j] - model.mean_row(c)[j]) / sd;
                    out[c * 2 * dim + j] += alpha[c] * u / (t * model.weights()[c].sqrt());
                    out[c * 2 * dim + dim + j] +=
                        alpha[c] * (u * u - 1.0) / (t * (2.0 * model.weights()[c]).sqrt());
                }
            }
        }
        out
    }

    #[test]
    fn single_point_at_the_mean_of_a_single_component() {
        let dim = 4;
        let model =
            GmmModel::<f64>::from_parts(vec![1.0], vec![0.7; dim], vec![1.3; dim], dim, 0, vec![])
                .unwrap();
        let fv = encode_fv(&model, &[vec![0.7; dim]]).unwrap();
        assert!(!fv.normalized);
        for j in 0..dim {
            assert!(fv.values[j].abs() < 1e-15);
            assert!((fv.values[dim + j] + 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_a_per_point_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let k = rng.gen_range(1..=4);
            let dim = rng.gen_range(1..=6);
            let t = rng.gen_range(1..=16);
            let model = random_model(k, dim, 1000 + case);
            let descriptors: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect();
            let fv = encode_fv(&model, &descriptors).unwrap();
            let want = oracle_fv(&model, &descriptors);
            assert_eq!(fv.values.len(), 2 * k * dim);
            for (a, b) in fv.values.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn descriptor_order_does_not_matter() {
        let model = random_model(3, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let descriptors: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let reversed: Vec<Vec<f64>> = descriptors.iter().rev().cloned().collect();
        let a = encode_fv(&model, &descriptors).unwrap();
        let b = encode_fv(&model, &reversed).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn union_of_disjoint_sets_is_the_weighted_average() {
        let model = random_model(2, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<Vec<f64>> = (0..13)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..29)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let all: Vec<Vec<f64>> = a.iter().chain(b.iter()).cloned().collect();
        let fa = encode_fv(&model, &a).unwrap();
        let fb = encode_fv(&model, &b).unwrap();
        let fu = encode_fv(&model, &all).unwrap();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        for i in 0..fu.values.len() {
            let want = (na * fa.values[i] + nb * fb.values[i]) / (na + nb);
            assert!((fu.values[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn points_near_one_component_only_touch_its_block() {
        let dim = 2;
        let model = GmmModel::<f64>::from_parts(
            vec![0.5, 0.5],
            vec![0.0, 0.0, 100.0, 100.0],
            vec![1.0; 4],
            dim,
            0,
            vec![],
        )
        .unwrap();
        let fv = encode_fv(&model, &[vec![0.3, -0.2], vec![-0.5, 0.1]]).unwrap();
        let near = &fv.values[0..2 * dim];
        let far = &fv.values[2 * dim..4 * dim];
        assert!(near.iter().any(|v| v.abs() > 1e-3));
        // The far block only sees exp(-5000)-scale responsibilities.
        assert!(far.iter().all(|v| v.abs() < 1e-100), "{far:?}");
    }

    #[test]
    fn expectation_under_the_model_is_near_zero() {
        let model = random_model(2, 2, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 100_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let r: f64 = rng.gen();
            let c = if r < model.weights()[0] { 0 } else { 1 };
            let x: Vec<f64> = (0..2)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    model.mean_row(c)[j] + z * model.variance_row(c)[j].sqrt()
                })
                .collect();
            draws.push(x);
        }
        let fv = encode_fv(&model, &draws).unwrap();
        for &v in &fv.values {
            assert!(v.abs() < 0.02, "coordinate {v} too far from zero");
        }
    }

    #[test]
    fn normalisation_yields_a_unit_vector_and_keeps_zeros() {
        let mut fv = FisherVector {
            values: vec![4.0, -9.0, 0.25],
            normalized: false,
            source: None,
        };
        normalize_fv(&mut fv, true, false);
        assert_eq!(fv.values, vec![2.0, -3.0, 0.5]);
        assert!(fv.normalized);
        normalize_fv(&mut fv, false, true);
        let norm: f64 = fv.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);

        let mut zero = FisherVector {
            values: vec![0.0; 6],
            normalized: false,
            source: None,
        };
        normalize_fv(&mut zero, true, true);
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert!(zero.normalized);
    }

    #[test]
    fn dump_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fv.bin");
        let model = random_model(2, 3, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let descriptors: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let fv = encode_fv(&model, &descriptors).unwrap();
        write_fv_dump(&path, 2, 3, &fv).unwrap();
        let (k, dim, values) = read_fv_dump(&path).unwrap();
        assert_eq!((k, dim), (2, 3));
        assert_eq!(values, fv.values);

        assert!(write_fv_dump(&path, 3, 3, &fv).is_err());
    }

    #[test]
    fn empty_and_mismatched_inputs_are_rejected() {
        let model = random_model(2, 3, 40);
        assert!(matches!(
            encode_fv(&model, &[]),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(encode_fv(&model, &[vec![0.0; 2]]).is_err());
        assert!(encode_fv(&model, &[vec![f64::NAN, 0.0, 0.0]]).is_err());
    }
}
