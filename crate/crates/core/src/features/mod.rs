//! Weekly self-regulation indicators, collinearity screening and outcome labels.

mod extract;
mod id;
mod screen;

use std::collections::BTreeMap;

use thiserror::Error;

pub use extract::{
    extract_weekly_features, weekly_columns, Eng2Anchor, FeatureOptions, Per4Rule, WeeklyFeatureRow, WeeklyTable,
};
pub use id::{Block, ClassCell, ColumnKey, Family, FeatureId, Statistic, WindowCell};
pub use screen::{correlation_matrix, screen_collinear, DropEntry, DropReport};

use crate::trace::GRADE_SCALE;

/// Grades at or above this value count as at risk.
pub const AT_RISK_GRADE: f64 = 3.7;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("event references page `{0}` that no assignment in the course config owns")]
    UnknownPage(String),
    #[error("grade {0} is not on the 0.7-5.0 scale")]
    GradeDomain(f64),
    #[error("student `{0}` has no grade")]
    MissingGrade(String),
    #[error("screening: {0}")]
    Screening(String),
    #[error("malformed weekly table: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskLabel {
    AtRisk,
    NotAtRisk,
}

impl RiskLabel {
    pub fn is_at_risk(self) -> bool {
        self == RiskLabel::AtRisk
    }
}

pub fn label_grade(grade: f64) -> Result<RiskLabel, FeatureError> {
    if !GRADE_SCALE.iter().any(|g| (g - grade).abs() < 1e-9) {
        return Err(FeatureError::GradeDomain(grade));
    }
    Ok(if grade >= AT_RISK_GRADE - 1e-9 { RiskLabel::AtRisk } else { RiskLabel::NotAtRisk })
}

pub fn label_at_risk(grades: &BTreeMap<String, f64>) -> Result<BTreeMap<String, RiskLabel>, FeatureError> {
    grades
        .iter()
        .map(|(s, g)| Ok((s.clone(), label_grade(*g)?)))
        .collect()
}

/// Weekly features with one label per student, aligned by row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCohort {
    pub weekly: WeeklyTable,
    pub labels: Vec<bool>,
    pub grades: Vec<f64>,
}

impl LabeledCohort {
    pub fn new(weekly: WeeklyTable, grades: &BTreeMap<String, f64>) -> Result<Self, FeatureError> {
        let mut labels = Vec::with_capacity(weekly.students.len());
        let mut gs = Vec::with_capacity(weekly.students.len());
        for s in &weekly.students {
            let g = *grades.get(s).ok_or_else(|| FeatureError::MissingGrade(s.clone()))?;
            labels.push(label_grade(g)?.is_at_risk());
            gs.push(g);
        }
        Ok(LabeledCohort { weekly, labels, grades: gs })
    }

    pub fn prevalence(&self) -> f64 {
        self.labels.iter().filter(|l| **l).count() as f64 / self.labels.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests;
