//! Linear support-vector classifier with an unregularised bias term.
//!
//! Minimises `(1/2)|w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))` through its
//! dual: maximal-violating-pair updates on two coordinates at a time under the
//! constraints `0 <= alpha_i <= C` and `sum_i alpha_i y_i = 0`.

use crate::error::{Error, Result};
use crate::manifest::Label;
use crate::scalar::{real, Real};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_PAIR_UPDATES: usize = 2_000_000;
/// Candidate misclassification costs for the cross-validation helper.
pub const DEFAULT_C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone)]
pub struct SvmOptions {
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_pair_updates: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            tol: DEFAULT_TOL,
            max_pair_updates: DEFAULT_MAX_PAIR_UPDATES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearModel<T: Real> {
    pub w: Vec<T>,
    pub b: T,
    /// Misclassification cost the model was trained with.
    pub c: T,
    /// Pair updates spent by the solver.
    pub iterations: usize,
    /// Primal objective at the returned solution.
    pub objective: T,
}

/// A raw classifier score; larger means more bona-fide-like.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadScore<T: Real> {
    pub value: T,
}

impl<T: Real> PadScore<T> {
    /// Bona fide iff the score reaches the threshold.
    pub fn decision(&self, threshold: T) -> Label {
        if self.value >= threshold {
            Label::BonaFide
        } else {
            Label::Attack
        }
    }
}

fn label_sign<T: Real>(label: Label) -> T {
    match label {
        Label::BonaFide => T::one(),
        Label::Attack => -T::one(),
    }
}

/// Score a feature vector: `w . x + b`.
pub fn score<T: Real>(model: &LinearModel<T>, x: &[T]) -> Result<PadScore<T>> {
    if x.len() != model.w.len() {
        return Err(Error::DimensionMismatch {
            context: "svm score input".into(),
            expected: model.w.len(),
            found: x.len(),
        });
    }
    let mut s = model.b;
    for (wi, xi) in model.w.iter().zip(x) {
        s += *wi * *xi;
    }
    Ok(PadScore { value: s })
}

fn primal_objective<T: Real>(w: &[T], b: T, c: T, features: &[Vec<T>], y: &[T]) -> T {
    let half = real::<T>(0.5);
    let mut obj = half * w.iter().map(|&v| v * v).sum::<T>();
    for (x, &yi) in features.iter().zip(y) {
        let mut s = b;
        for (wi, xi) in w.iter().zip(x) {
            s += *wi * *xi;
        }
        let hinge = (T::one() - yi * s).max(T::zero());
        obj += c * hinge;
    }
    obj
}

/// Train on features and labels; bona fide maps to +1, attack to -1.
pub fn train_linear_svm<T: Real>(
    features: &[Vec<T>],
    labels: &[Label],
    c: T,
    opts: &SvmOptions,
) -> Result<LinearModel<T>> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "svm labels".into(),
            expected: features.len(),
            found: labels.len(),
        });
    }
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::InvalidParameter("svm cost must be positive".into()));
    }
    let n = features.len();
    if n == 0 {
        return Err(Error::InsufficientSamples { have: 0, need: 2 });
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "svm features must be non-empty".into(),
        ));
    }
    for x in features {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "svm features".into(),
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "svm features must be finite".into(),
            ));
        }
    }
    if !labels.contains(&Label::BonaFide) || !labels.contains(&Label::Attack) {
        return Err(Error::SingleClass);
    }

    let y: Vec<T> = labels.iter().map(|&l| label_sign(l)).collect();

    // Precomputed Gram matrix; the working sets stay small enough for n^2.
    let mut gram = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = T::zero();
            for (a, b) in features[i].iter().zip(&features[j]) {
                s += *a * *b;
            }
            gram[i * n + j] = s;
            gram[j * n + i] = s;
        }
    }

    let tol = real::<T>(opts.tol);
    let tau = real::<T>(1e-12);
    let mut alpha = vec![T::zero(); n];
    // grad_i = d/d alpha_i of (1/2) a'Qa - 1'a with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-T::one(); n];
    let mut updates = 0usize;

    while updates < opts.max_pair_updates {
        // Maximal violating pair: i maximises -y g over the set that can move
        // up, j minimises it over the set that can move down.
        let mut i_best: Option<(usize, T)> = None;
        let mut j_best: Option<(usize, T)> = None;
        for t in 0..n {
            let u = -y[t] * grad[t];
            let up =
                (y[t] > T::zero() && alpha[t] < c) || (y[t] < T::zero() && alpha[t] > T::zero());
            let down =
                (y[t] < T::zero() && alpha[t] < c) || (y[t] > T::zero() && alpha[t] > T::zero());
            if up && i_best.map_or(true, |(_, v)| u > v) {
                i_best = Some((t, u));
            }
            if down && j_best.map_or(true, |(_, v)| u < v) {
                j_best = Some((t, u));
            }
        }
        let (Some((i, m_up)), Some((j, m_down))) = (i_best, j_best) else {
            break;
        };
        if m_up - m_down <= tol {
            break;
        }

        // Move along alpha_i += y_i t, alpha_j -= y_j t, which preserves the
        // equality constraint; clip t to both boxes.
        let g = y[i] * grad[i] - y[j] * grad[j];
        let h = (gram[i * n + i] + gram[j * n + j] - real::<T>(2.0) * gram[i * n + j]).max(tau);
        let mut t_step = -g / h;
        let (lo_i, hi_i) = if y[i] > T::zero() {
            (-alpha[i], c - alpha[i])
        } else {
            (alpha[i] - c, alpha[i])
        };
        let (lo_j, hi_j) = if y[j] > T::zero() {
            (alpha[j] - c, alpha[j])
        } else {
            (-alpha[j], c - alpha[j])
        };
        t_step = t_step.min(hi_i.min(hi_j)).max(lo_i.max(lo_j));
        if t_step == T::zero() {
            break;
        }
        let di = y[i] * t_step;
        let dj = -y[j] * t_step;
        alpha[i] += di;
        alpha[j] += dj;
        for t in 0..n {
            grad[t] += y[t] * y[i] * gram[t * n + i] * di + y[t] * y[j] * gram[t * n + j] * dj;
        }
        updates += 1;
    }

    let mut w = vec![T::zero(); dim];
    for i in 0..n {
        if alpha[i] > T::zero() {
            let coef = alpha[i] * y[i];
            for (wj, xj) in w.iter_mut().zip(&features[i]) {
                *wj += coef * *xj;
            }
        }
    }

    // Bias from free support vectors, else the midpoint of the KKT interval.
    let mut free_sum = T::zero();
    let mut free_count = 0usize;
    let mut lo = T::neg_infinity();
    let mut hi = T::infinity();
    for t in 0..n {
        let u = -y[t] * grad[t];
        if alpha[t] > T::zero() && alpha[t] < c {
            free_sum += u;
            free_count += 1;
        }
        let up = (y[t] > T::zero() && alpha[t] < c) || (y[t] < T::zero() && alpha[t] > T::zero());
        let down = (y[t] < T::zero() && alpha[t] < c) || (y[t] > T::zero() && alpha[t] > T::zero());
        if up {
            lo = lo.max(u);
        }
        if down {
            hi = hi.min(u);
        }
    }
    let b = if free_count > 0 {
        free_sum / real::<T>(free_count as f64)
    } else {
        let half = real::<T>(0.5);
        (lo + hi) * half
    };

    let objective = primal_objective(&w, b, c, features, &y);
    Ok(LinearModel {
        w,
        b,
        c,
        iterations: updates,
        objective,
    })
}

/// Pick a cost from `grid` by k-fold cross-validated accuracy.
///
/// Folds are assigned round-robin after a seeded shuffle; ties prefer the
/// smaller cost.
pub fn select_c_by_cv<T: Real>(
    features: &[Vec<T>],
    labels: &[Label],
    grid: &[f64],
    folds: usize,
    seed: u64,
    opts: &SvmOptions,
) -> Result<T> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if grid.is_empty() {
        return Err(Error::InvalidParameter("cost grid is empty".into()));
    }
    if folds < 2 || folds > features.len() {
        return Err(Error::InvalidParameter(format!(
            "fold count {folds} must be in 2..={}",
            features.len()
        )));
    }
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut best: Option<(f64, T)> = None;
    for &c_raw in grid {
        let c = real::<T>(c_raw);
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..folds {
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            let mut test_idx = Vec::new();
            for (pos, &idx) in order.iter().enumerate() {
                if pos % folds == fold {
                    test_idx.push(idx);
                } else {
                    train_x.push(features[idx].clone());
                    train_y.push(labels[idx]);
                }
            }
            if !train_y.contains(&Label::BonaFide) || !train_y.contains(&Label::Attack) {
                continue;
            }
            let model = train_linear_svm(&train_x, &train_y, c, opts)?;
            for idx in test_idx {
                let s = score(&model, &features[idx])?;
                if s.decision(T::zero()) == labels[idx] {
                    correct += 1;
                }
                total += 1;
            }
        }
        if total == 0 {
            continue;
        }
        let acc = correct as f64 / total as f64;
        if best.map_or(true, |(prev, _)| acc > prev) {
            best = Some((acc, c));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::InvalidParameter("cross-validation produced no usable folds".into()))
}
