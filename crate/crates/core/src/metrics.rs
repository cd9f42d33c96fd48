//! Presentation-attack detection error metrics.
//!
//! Conventions: higher scores are more bona-fide-like; a sample is accepted
//! (decided bona fide) when its score is at least the threshold. APCER is the
//! fraction of attacks accepted, BPCER the fraction of bona fide samples
//! rejected.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates<T> {
    pub apcer: T,
    pub bpcer: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint<T> {
    pub threshold: T,
    pub apcer: T,
    pub bpcer: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerSummary<T> {
    pub eer: T,
    pub threshold: T,
    pub apcer: T,
    pub bpcer: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyOutcome<T> {
    /// U statistic of the bona fide sample (ties counted half).
    pub u: T,
    pub z: T,
    pub p_value: T,
    /// True when the two-sided p-value is below 0.05.
    pub reject: bool,
}

/// Scores for one evaluation, split by ground truth.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet<T> {
    pub bona_fide: Vec<T>,
    pub attack: Vec<T>,
}

impl<T: Real> ScoreSet<T> {
    pub fn new(bona_fide: Vec<T>, attack: Vec<T>) -> Result<Self> {
        check_scores(&bona_fide, &attack)?;
        Ok(ScoreSet { bona_fide, attack })
    }

    pub fn error_rates(&self, threshold: T) -> Result<ErrorRates<T>> {
        error_rates(&self.bona_fide, &self.attack, threshold)
    }

    pub fn det_curve(&self) -> Result<Vec<DetPoint<T>>> {
        det_curve(&self.bona_fide, &self.attack)
    }

    pub fn d_eer(&self) -> Result<EerSummary<T>> {
        d_eer(&self.bona_fide, &self.attack)
    }

    pub fn auc(&self) -> Result<T> {
        auc(&self.bona_fide, &self.attack)
    }
}

fn check_scores<T: Real>(bona: &[T], attack: &[T]) -> Result<()> {
    if bona.is_empty() {
        return Err(Error::EmptyScores("bona fide"));
    }
    if attack.is_empty() {
        return Err(Error::EmptyScores("attack"));
    }
    if bona.iter().chain(attack).any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("scores must not be NaN".into()));
    }
    Ok(())
}

/// APCER and BPCER at a fixed threshold.
pub fn error_rates<T: Real>(bona: &[T], attack: &[T], threshold: T) -> Result<ErrorRates<T>> {
    check_scores(bona, attack)?;
    let accepted_attacks = attack.iter().filter(|&&s| s >= threshold).count();
    let rejected_bona = bona.iter().filter(|&&s| s < threshold).count();
    Ok(ErrorRates {
        apcer: real::<T>(accepted_attacks as f64 / attack.len() as f64),
        bpcer: real::<T>(rejected_bona as f64 / bona.len() as f64),
    })
}

/// Operating points at every achievable trade-off.
///
/// Thresholds are the midpoints between consecutive distinct pooled scores,
/// plus -inf (accept everything) and +inf (reject everything), in ascending
/// order.
pub fn det_curve<T: Real>(bona: &[T], attack: &[T]) -> Result<Vec<DetPoint<T>>> {
    check_scores(bona, attack)?;
    let mut pooled: Vec<T> = bona.iter().chain(attack).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();

    let mut thresholds = Vec::with_capacity(pooled.len() + 1);
    thresholds.push(T::neg_infinity());
    let half = real::<T>(0.5);
    for w in pooled.windows(2) {
        thresholds.push((w[0] + w[1]) * half);
    }
    thresholds.push(T::infinity());

    thresholds
        .into_iter()
        .map(|t| {
            let rates = error_rates(bona, attack, t)?;
            Ok(DetPoint {
                threshold: t,
                apcer: rates.apcer,
                bpcer: rates.bpcer,
            })
        })
        .collect()
}

/// Decision EER: the operating point minimising |APCER - BPCER|, reported as
/// the mean of the two rates there. Ties go to the lower threshold.
pub fn d_eer<T: Real>(bona: &[T], attack: &[T]) -> Result<EerSummary<T>> {
    let curve = det_curve(bona, attack)?;
    let mut best = &curve[0];
    let mut best_gap = (best.apcer - best.bpcer).abs();
    for point in &curve[1..] {
        let gap = (point.apcer - point.bpcer).abs();
        if gap < best_gap {
            best = point;
            best_gap = gap;
        }
    }
    let half = real::<T>(0.5);
    Ok(EerSummary {
        eer: (best.apcer + best.bpcer) * half,
        threshold: best.threshold,
        apcer: best.apcer,
        bpcer: best.bpcer,
    })
}

/// Lowest BPCER among operating points with APCER at most `alpha`, with the
/// threshold that achieves it.
pub fn bpcer_at_apcer<T: Real>(bona: &[T], attack: &[T], alpha: T) -> Result<(T, T)> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "apcer ceiling must lie in (0, 1], got {alpha}"
        )));
    }
    let curve = det_curve(bona, attack)?;
    // BPCER is non-decreasing in the threshold, so the first admissible
    // point in ascending threshold order is the minimum.
    for point in &curve {
        if point.apcer <= alpha {
            return Ok((point.bpcer, point.threshold));
        }
    }
    unreachable!("the +inf operating point always has APCER 0");
}

/// Area under the ROC curve: the probability that a random bona fide score
/// exceeds a random attack score, counting ties as one half. Computed exactly
/// from midranks.
pub fn auc<T: Real>(bona: &[T], attack: &[T]) -> Result<T> {
    check_scores(bona, attack)?;
    let (rank_sum_bona, _) = midranks(bona, attack);
    let n1 = bona.len() as f64;
    let n2 = attack.len() as f64;
    let u = rank_sum_bona - n1 * (n1 + 1.0) / 2.0;
    Ok(real::<T>(u / (n1 * n2)))
}

/// Midrank sum of the bona fide sample and the tie-group sizes of the pool.
fn midranks<T: Real>(bona: &[T], attack: &[T]) -> (f64, Vec<usize>) {
    let mut pool: Vec<(T, bool)> = bona
        .iter()
        .map(|&s| (s, true))
        .chain(attack.iter().map(|&s| (s, false)))
        .collect();
    pool.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut rank_sum = 0.0;
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pool.len() {
        let mut j = i;
        while j < pool.len() && pool[j].0 == pool[i].0 {
            j += 1;
        }
        // Ranks are 1-based; everything in pool[i..j] shares the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        let bona_in_group = pool[i..j].iter().filter(|(_, is_bona)| *is_bona).count();
        rank_sum += midrank * bona_in_group as f64;
        ties.push(j - i);
        i = j;
    }
    (rank_sum, ties)
}

/// Two-sided Mann-Whitney U test under the normal approximation with tie and
/// continuity corrections. Rejects when p < 0.05; a degenerate pool (all
/// scores equal) yields p = 1.
pub fn mann_whitney<T: Real>(bona: &[T], attack: &[T]) -> Result<MannWhitneyOutcome<T>> {
    check_scores(bona, attack)?;
    if bona.len() < 2 || attack.len() < 2 {
        return Err(Error::InsufficientSamples {
            have: bona.len().min(attack.len()),
            need: 2,
        });
    }
    let n1 = bona.len() as f64;
    let n2 = attack.len() as f64;
    let n = n1 + n2;
    let (rank_sum_bona, ties) = midranks(bona, attack);
    let u = rank_sum_bona - n1 * (n1 + 1.0) / 2.0;
    let mean_u = n1 * n2 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var_u = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));

    let (z, p) = if var_u <= 0.0 {
        (0.0, 1.0)
    } else {
        let diff = u - mean_u;
        let corrected = if diff > 0.0 {
            diff - 0.5
        } else if diff < 0.0 {
            diff + 0.5
        } else {
            0.0
        };
        let z = corrected / var_u.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let p = (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0);
        (z, p)
    };

    Ok(MannWhitneyOutcome {
        u: real::<T>(u),
        z: real::<T>(z),
        p_value: real::<T>(p),
        reject: p < SIGNIFICANCE_LEVEL,
    })
}

/// Inverse standard normal CDF (the probit function).
///
/// Rational approximations accurate to around 1e-15 over (0, 1); 0 and 1 map
/// to the infinities.
pub fn probit<T: Real>(p: T) -> Result<T> {
    let p = p.to_f64().unwrap_or(f64::NAN);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "probit argument must lie in [0, 1], got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(T::neg_infinity());
    }
    if p == 1.0 {
        return Ok(T::infinity());
    }

    let q = p - 0.5;
    let value = if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        num / den
    } else {
        let mut r = if q < 0.0 { p } else { 1.0 - p };
        r = (-r.ln()).sqrt();
        let value = if r <= 5.0 {
            let r = r - 1.6;
            let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
                + 2.417_807_251_774_506e-1)
                * r
                + 1.270_458_252_452_368_4)
                * r
                + 3.647_848_324_763_204_5)
                * r
                + 5.769_497_221_460_691)
                * r
                + 4.630_337_846_156_546)
                * r
                + 1.423_437_110_749_683_5;
            let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0;
            num / den
        } else {
            let r = r - 5.0;
            let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
                + 1.242_660_947_388_078_4e-3)
                * r
                + 2.653_218_952_657_612_3e-2)
                * r
                + 2.965_605_718_285_048_7e-1)
                * r
                + 1.784_826_539_917_291_3)
                * r
                + 5.463_784_911_164_114)
                * r
                + 6.657_904_643_501_103;
            let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_132e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358_1e-1)
                * r
                + 5.998_322_065_558_879_4e-1)
                * r
                + 1.0;
            num / den
        };
        if q < 0.0 {
            -value
        } else {
            value
        }
    };
    Ok(real::<T>(value))
}

/// Shortest-form significant-digit formatting (C's `%.10g`), with infinities
/// spelled `inf` / `-inf`.
pub fn format_g(x: f64) -> String {
    const SIG: usize = 10;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG - 1, x);
    let (mantissa, exp_str) = sci.split_once('e').expect("exponential form");
    let exp: i32 = exp_str.parse().expect("exponent");
    if exp < -4 || exp >= SIG as i32 {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!(
            "{}e{}{:02}",
            mantissa,
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        let decimals = (SIG as i32 - 1 - exp).max(0) as usize;
        let plain = format!("{x:.decimals$}");
        if plain.contains('.') {
            plain
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            plain
        }
    }
}

/// Render a DET curve as CSV with probit-warped coordinates.
pub fn det_csv<T: Real>(points: &[DetPoint<T>]) -> Result<String> {
    let mut out = String::from("threshold,apcer,bpcer,probit_apcer,probit_bpcer\n");
    for p in points {
        let pa: T = probit(p.apcer)?;
        let pb: T = probit(p.bpcer)?;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_g(p.threshold.to_f64().unwrap()),
            format_g(p.apcer.to_f64().unwrap()),
            format_g(p.bpcer.to_f64().unwrap()),
            format_g(pa.to_f64().unwrap()),
            format_g(pb.to_f64().unwrap()),
        ));
    }
    Ok(out)
}
