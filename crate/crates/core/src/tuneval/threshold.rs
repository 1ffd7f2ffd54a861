use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TunevalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    YoudenSource,
    PrevalenceTarget,
}

impl ThresholdPolicy {
    pub const ALL: [ThresholdPolicy; 2] = [ThresholdPolicy::YoudenSource, ThresholdPolicy::PrevalenceTarget];

    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdPolicy::YoudenSource => "youden_source",
            ThresholdPolicy::PrevalenceTarget => "prevalence_target",
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThresholdPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "youden_source" | "youden" => Ok(ThresholdPolicy::YoudenSource),
            "prevalence_target" | "prevalence" => Ok(ThresholdPolicy::PrevalenceTarget),
            other => Err(format!("unknown threshold policy `{other}`")),
        }
    }
}

/// Scores at or above `value` are classified at risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub policy: ThresholdPolicy,
}

/// {0} ∪ midpoints of adjacent distinct scores ∪ {1}, ascending.
pub fn candidate_values(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = vec![0.0];
    out.extend(sorted.windows(2).map(|w| {
        let m = 0.5 * (w[0] + w[1]);
        if m > w[0] { m } else { w[1] }
    }));
    out.push(1.0);
    out.dedup();
    out
}

fn check_scores(scores: &[f64]) -> Result<(), TunevalError> {
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(TunevalError::Parameter("probabilities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Threshold maximizing sensitivity + specificity − 1; ties go to the smallest.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<(Threshold, f64), TunevalError> {
    if scores.len() != labels.len() {
        return Err(TunevalError::Parameter("scores and labels differ in length".into()));
    }
    check_scores(scores)?;
    let p = labels.iter().filter(|l| **l).count() as i64;
    let n = labels.len() as i64 - p;
    if p == 0 || n == 0 {
        return Err(TunevalError::UndefinedMetric("Youden index needs both classes"));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sweep candidates upward; `k` counts scores strictly below the candidate.
    let (mut k, mut fn_, mut tn) = (0usize, 0i64, 0i64);
    let mut best: Option<(f64, i64, i64, i64)> = None;
    for t in candidate_values(scores) {
        while k < pairs.len() && pairs[k].0 < t {
            if pairs[k].1 {
                fn_ += 1;
            } else {
                tn += 1;
            }
            k += 1;
        }
        // J·p·n = tp·n + tn·p − p·n
        let score = (p - fn_) * n + tn * p;
        if best.is_none_or(|b| score > b.1) {
            best = Some((t, score, fn_, tn));
        }
    }
    let (t, score, _, _) = best.expect("at least two candidates");
    let j = (score - p * n) as f64 / (p * n) as f64;
    Ok((Threshold { value: t, policy: ThresholdPolicy::YoudenSource }, j))
}

/// Threshold whose flagged fraction is closest to `target`; ties go to the smaller threshold.
pub fn prevalence_threshold(scores: &[f64], target: f64) -> Result<Threshold, TunevalError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(TunevalError::Parameter(format!("target prevalence {target} outside (0, 1)")));
    }
    if scores.is_empty() {
        return Err(TunevalError::Parameter("no scores".into()));
    }
    check_scores(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut k = 0usize;
    let mut best: Option<(f64, f64)> = None;
    for t in candidate_values(scores) {
        while k < sorted.len() && sorted[k] < t {
            k += 1;
        }
        let gap = ((sorted.len() - k) as f64 / n - target).abs();
        if best.is_none_or(|b| gap < b.1) {
            best = Some((t, gap));
        }
    }
    Ok(Threshold { value: best.expect("candidates").0, policy: ThresholdPolicy::PrevalenceTarget })
}
