//! Platt scaling and calibration diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::sigmoid;

pub const CLIP: f64 = 1e-6;
const NEWTON_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration needs both classes")]
    SingleClass,
    #[error("{0}")]
    Parameter(String),
    #[error("Platt fit did not converge after {iterations} iterations (A = {a}, B = {b}, |step| = {step:e})")]
    NotConverged { iterations: usize, a: f64, b: f64, step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSpace {
    LogOdds,
}

/// p' = 1 / (1 + exp(A·logit(p) + B)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
    pub score_space: ScoreSpace,
}

impl PlattParams {
    pub const IDENTITY: PlattParams = PlattParams { a: -1.0, b: 0.0, score_space: ScoreSpace::LogOdds };

    pub fn apply(&self, p: f64) -> f64 {
        sigmoid(-(self.a * logit_clipped(p) + self.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlattTargets {
    /// (N₊+1)/(N₊+2) and 1/(N₋+2).
    #[default]
    Smoothed,
    /// Plain 0/1 labels: the in-sample maximum-likelihood fit.
    Raw,
}

pub fn logit_clipped(p: f64) -> f64 {
    let p = p.clamp(CLIP, 1.0 - CLIP);
    (p / (1.0 - p)).ln()
}

fn class_counts(labels: &[bool]) -> Result<(f64, f64), CalibrationError> {
    let pos = labels.iter().filter(|l| **l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(CalibrationError::SingleClass);
    }
    Ok((pos, neg))
}

pub fn fit_platt(raw: &[f64], labels: &[bool]) -> Result<PlattParams, CalibrationError> {
    fit_platt_with(raw, labels, PlattTargets::Smoothed)
}

/// Newton's method with step halving on the cross-entropy against the targets.
pub fn fit_platt_with(raw: &[f64], labels: &[bool], targets: PlattTargets) -> Result<PlattParams, CalibrationError> {
    if raw.len() != labels.len() {
        return Err(CalibrationError::Parameter("probabilities and labels differ in length".into()));
    }
    let (n_pos, n_neg) = class_counts(labels)?;
    let (t_pos, t_neg) = match targets {
        PlattTargets::Smoothed => ((n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)),
        PlattTargets::Raw => (1.0, 0.0),
    };
    let s: Vec<f64> = raw.iter().map(|p| logit_clipped(*p)).collect();
    let t: Vec<f64> = labels.iter().map(|l| if *l { t_pos } else { t_neg }).collect();

    let loss = |a: f64, b: f64| -> f64 {
        s.iter()
            .zip(&t)
            .map(|(si, ti)| {
                let f = a * si + b;
                // −t log σ(−f) − (1−t) log σ(f)
                let sp = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                ti * sp(f) + (1.0 - ti) * sp(-f)
            })
            .sum()
    };

    let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
    let mut current = loss(a, b);
    for iter in 0..MAX_NEWTON {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (si, ti) in s.iter().zip(&t) {
            let q = sigmoid(-(a * si + b));
            let d = ti - q;
            let w = q * (1.0 - q);
            ga += d * si;
            gb += d;
            haa += w * si * si;
            hab += w * si;
            hbb += w;
        }
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(-hab * ga + haa * gb) / det;
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let l = loss(na, nb);
            if l <= current + 1e-12 * current.abs() {
                a = na;
                b = nb;
                current = l;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let moved = (step * da).abs().max((step * db).abs());
        if !accepted || moved < NEWTON_TOL || (ga.abs() < 1e-12 && gb.abs() < 1e-12) {
            return Ok(PlattParams { a, b, score_space: ScoreSpace::LogOdds });
        }
        if iter + 1 == MAX_NEWTON {
            return Err(CalibrationError::NotConverged { iterations: MAX_NEWTON, a, b, step: moved });
        }
    }
    unreachable!()
}

pub fn apply_platt(params: &PlattParams, raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|p| params.apply(*p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub mean_predicted: f64,
    pub observed: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCurve {
    pub bins: Vec<CalibrationBin>,
    /// NaN when the logits have no spread.
    pub slope: f64,
    pub intercept: f64,
    pub brier: f64,
    pub log_loss: f64,
}

impl CalibrationCurve {
    /// Adjacent bins with the same mean prediction merged into one.
    pub fn merged(&self) -> Vec<CalibrationBin> {
        let mut out: Vec<CalibrationBin> = Vec::new();
        for b in &self.bins {
            match out.last_mut() {
                Some(last) if last.mean_predicted == b.mean_predicted => {
                    let n = (last.count + b.count) as f64;
                    last.observed = (last.observed * last.count as f64 + b.observed * b.count as f64) / n;
                    last.count += b.count;
                }
                _ => out.push(*b),
            }
        }
        out
    }
}

pub fn brier_score(p: &[f64], labels: &[bool]) -> f64 {
    p.iter()
        .zip(labels)
        .map(|(p, l)| (p - if *l { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        / p.len() as f64
}

/// Mean negative log-likelihood with probabilities clipped to [1e-6, 1 − 1e-6].
pub fn log_loss(p: &[f64], labels: &[bool]) -> f64 {
    p.iter()
        .zip(labels)
        .map(|(p, l)| {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            -(if *l { p.ln() } else { (1.0 - p).ln() })
        })
        .sum::<f64>()
        / p.len() as f64
}

/// Equal-count bins by predicted probability plus a logistic refit of the
/// labels on logit(p).
pub fn calibration_curve(p: &[f64], labels: &[bool], n_bins: usize) -> Result<CalibrationCurve, CalibrationError> {
    if p.len() != labels.len() {
        return Err(CalibrationError::Parameter("probabilities and labels differ in length".into()));
    }
    if n_bins == 0 || p.len() < n_bins {
        return Err(CalibrationError::Parameter(format!("{} rows cannot fill {n_bins} bins", p.len())));
    }
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| p[*a].total_cmp(&p[*b]));
    let bins = (0..n_bins)
        .map(|k| {
            let rows = &order[k * n / n_bins..(k + 1) * n / n_bins];
            let c = rows.len() as f64;
            CalibrationBin {
                mean_predicted: rows.iter().map(|i| p[*i]).sum::<f64>() / c,
                observed: rows.iter().filter(|i| labels[**i]).count() as f64 / c,
                count: rows.len(),
            }
        })
        .collect();
    let (intercept, slope) = logistic_recalibration(p, labels);
    Ok(CalibrationCurve { bins, slope, intercept, brier: brier_score(p, labels), log_loss: log_loss(p, labels) })
}

/// (intercept, slope) of an unpenalized logistic fit of labels on logit(p).
fn logistic_recalibration(p: &[f64], labels: &[bool]) -> (f64, f64) {
    let s: Vec<f64> = p.iter().map(|v| logit_clipped(*v)).collect();
    let y: Vec<f64> = labels.iter().map(|l| if *l { 1.0 } else { 0.0 }).collect();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 1e-12) {
        return (f64::NAN, f64::NAN);
    }
    let nll = |a: f64, b: f64| -> f64 {
        s.iter()
            .zip(&y)
            .map(|(si, yi)| {
                let eta = a + b * si;
                let sp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
                sp - yi * eta
            })
            .sum()
    };
    let ybar = y.iter().sum::<f64>() / n;
    let (mut a, mut b) = if ybar > 0.0 && ybar < 1.0 { ((ybar / (1.0 - ybar)).ln(), 0.0) } else { (0.0, 0.0) };
    let mut current = nll(a, b);
    for _ in 0..100 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (si, yi) in s.iter().zip(&y) {
            let q = sigmoid(a + b * si);
            g0 += q - yi;
            g1 += (q - yi) * si;
            let w = q * (1.0 - q);
            h00 += w;
            h01 += w * si;
            h11 += w * si * si;
        }
        let det = h00 * h11 - h01 * h01;
        let da = -(h11 * g0 - h01 * g1) / det;
        let db = -(-h01 * g0 + h00 * g1) / det;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let l = nll(a + step * da, b + step * db);
            if l <= current {
                a += step * da;
                b += step * db;
                current = l;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved || (step * da).abs().max((step * db).abs()) < NEWTON_TOL {
            break;
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuneval::auc_labels;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Labels drawn Bernoulli(true_p) while the model reports `reported(true_p)`.
    fn cohort(n: usize, seed: u64, reported: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let truth: f64 = rng.random_range(0.02..0.98);
            y.push(rng.random::<f64>() < truth);
            p.push(reported(truth));
        }
        (p, y)
    }

    fn overconfident(t: f64) -> f64 {
        sigmoid(2.5 * logit_clipped(t))
    }

    #[test]
    fn calibrated_input_gives_identity() {
        let (p, y) = cohort(5000, 1, |t| t);
        let m = fit_platt(&p, &y).unwrap();
        assert!((m.a + 1.0).abs() < 0.1, "{m:?}");
        assert!(m.b.abs() < 0.1, "{m:?}");
    }

    #[test]
    fn overconfident_scores_pulled_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<bool> = (0..2000).map(|_| rng.random::<f64>() < 0.7).collect();
        let p = vec![0.95; 2000];
        let m = fit_platt(&p, &y).unwrap();
        let c = m.apply(0.95);
        let rate = y.iter().filter(|l| **l).count() as f64 / 2000.0;
        assert!((c - rate).abs() < 0.01, "{c} vs {rate}");
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(fit_platt(&[0.2, 0.4], &[true, true]), Err(CalibrationError::SingleClass)));
    }

    #[test]
    fn identity_params_map_to_self() {
        for p in [1e-6, 0.01, 0.3, 0.5, 0.77, 1.0 - 1e-6] {
            assert!((PlattParams::IDENTITY.apply(p) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_recovers_after_platt() {
        let (p, y) = cohort(2000, 3, overconfident);
        let before = calibration_curve(&p, &y, 10).unwrap();
        assert!(before.slope < 0.8, "{}", before.slope);
        let m = fit_platt(&p, &y).unwrap();
        let q = apply_platt(&m, &p);
        let after = calibration_curve(&q, &y, 10).unwrap();
        assert!((0.8..=1.2).contains(&after.slope), "{}", after.slope);
        assert_eq!(auc_labels(&p, &y).unwrap(), auc_labels(&q, &y).unwrap());
    }

    #[test]
    fn perfect_predictions_sit_on_the_diagonal() {
        let y: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let p: Vec<f64> = y.iter().map(|l| if *l { 1.0 - CLIP } else { CLIP }).collect();
        let c = calibration_curve(&p, &y, 4).unwrap();
        for b in c.merged() {
            assert!((b.mean_predicted - b.observed).abs() < 1e-5);
        }
        assert!(c.slope > 1.0);
    }

    #[test]
    fn constant_half_is_one_bin() {
        let y: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let c = calibration_curve(&[0.5; 20], &y, 5).unwrap();
        let m = c.merged();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].mean_predicted, m[0].observed, m[0].count), (0.5, 0.5, 20));
        assert!(c.slope.is_nan());
    }

    #[test]
    fn refitting_is_nearly_idempotent() {
        let (p, y) = cohort(6000, 4, overconfident);
        let once = apply_platt(&fit_platt(&p, &y).unwrap(), &p);
        let twice = apply_platt(&fit_platt(&once, &y).unwrap(), &once);
        let worst = once.iter().zip(&twice).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    proptest! {
        #[test]
        fn in_sample_log_loss_never_worse(seed: u64, n in 30usize..300, k in 0.3f64..3.0) {
            let (p, y) = cohort(n, seed, |t| sigmoid(k * logit_clipped(t)));
            prop_assume!(y.iter().any(|l| *l) && y.iter().any(|l| !*l));
            let m = fit_platt_with(&p, &y, PlattTargets::Raw).unwrap();
            let q = apply_platt(&m, &p);
            prop_assert!(log_loss(&q, &y) <= log_loss(&p, &y) + 1e-9);
            prop_assert!(m.a < 0.0 || auc_labels(&p, &y).unwrap() <= 0.5);
            prop_assert_eq!(auc_labels(&p, &y).unwrap(), auc_labels(&q, &y).unwrap());
        }

        #[test]
        fn bins_are_equal_count(n in 10usize..200, bins in 1usize..10, seed: u64) {
            let (p, y) = cohort(n, seed, |t| t);
            let c = calibration_curve(&p, &y, bins).unwrap();
            let counts: Vec<usize> = c.bins.iter().map(|b| b.count).collect();
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            prop_assert!(c.bins.iter().all(|b| (0.0..=1.0).contains(&b.observed)));
        }
    }
}
