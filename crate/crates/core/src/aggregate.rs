//! Cumulative predictor sets: progressive and early-reset aggregation.
//!
//! Both turn the weekly raw values of weeks `1..=k` into per-feature mean and
//! sample standard deviation columns. Early-reset additionally freezes weeks
//! 1-4 as their own block and restarts accumulation at the reset week.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Block, ColumnKey, Statistic, WeeklyTable};
use crate::matrix::FeatureMatrix;

pub const DEFAULT_RESET_WEEK: u32 = 5;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("prediction week {week} outside 1..={n_weeks}")]
    WeekRange { week: u32, n_weeks: u32 },
    #[error("reset week {0} must be at least 2")]
    ResetWeek(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Progressive,
    EarlyReset,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Progressive => "progressive",
            Strategy::EarlyReset => "early_reset",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "progressive" => Ok(Strategy::Progressive),
            "early_reset" | "early-reset" => Ok(Strategy::EarlyReset),
            _ => Err(format!("unknown aggregation strategy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub strategy: Strategy,
    pub prediction_week: u32,
    pub reset_week: u32,
}

impl AggregationSpec {
    pub fn new(strategy: Strategy, prediction_week: u32) -> Self {
        AggregationSpec { strategy, prediction_week, reset_week: DEFAULT_RESET_WEEK }
    }

    pub fn apply(&self, table: &WeeklyTable) -> Result<AggregatedMatrix, AggregateError> {
        match self.strategy {
            Strategy::Progressive => aggregate_progressive(table, self.prediction_week),
            Strategy::EarlyReset => aggregate_early_reset_at(table, self.prediction_week, self.reset_week),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedMatrix {
    pub matrix: FeatureMatrix,
    pub prediction_week: u32,
    pub strategy: Strategy,
}

/// Mean and sample SD (n − 1) of `values`; a single value has SD 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn check_week(table: &WeeklyTable, k: u32) -> Result<(), AggregateError> {
    if k == 0 || k > table.n_weeks {
        return Err(AggregateError::WeekRange { week: k, n_weeks: table.n_weeks });
    }
    Ok(())
}

/// Appends mean/SD columns for weeks `from..=to` of the selected features.
fn push_block(
    table: &WeeklyTable,
    features: &[usize],
    from: u32,
    to: u32,
    block: Option<Block>,
    columns: &mut Vec<ColumnKey>,
    blocks: &mut Vec<Array2<f64>>,
) {
    let n = table.n_students();
    let mut data = Array2::zeros((n, 2 * features.len()));
    let mut buf = Vec::with_capacity((to - from + 1) as usize);
    for s in 0..n {
        for (slot, &j) in features.iter().enumerate() {
            buf.clear();
            buf.extend((from..=to).map(|w| table.data[[s, w as usize - 1, j]]));
            let (m, sd) = mean_sd(&buf);
            data[[s, 2 * slot]] = m;
            data[[s, 2 * slot + 1]] = sd;
        }
    }
    for &j in features {
        let f = table.columns[j];
        columns.push(ColumnKey { block, feature: f.with_statistic(Statistic::CumMean) });
        columns.push(ColumnKey { block, feature: f.with_statistic(Statistic::CumSd) });
    }
    blocks.push(data);
}

fn assemble(table: &WeeklyTable, columns: Vec<ColumnKey>, blocks: Vec<Array2<f64>>) -> FeatureMatrix {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let data = if views.is_empty() {
        Array2::zeros((table.n_students(), 0))
    } else {
        ndarray::concatenate(ndarray::Axis(1), &views).expect("blocks share row count")
    };
    FeatureMatrix::new(table.students.clone(), columns, data)
}

pub fn aggregate_progressive(table: &WeeklyTable, k: u32) -> Result<AggregatedMatrix, AggregateError> {
    check_week(table, k)?;
    let all: Vec<usize> = (0..table.columns.len()).collect();
    let (mut columns, mut blocks) = (Vec::new(), Vec::new());
    push_block(table, &all, 1, k, None, &mut columns, &mut blocks);
    Ok(AggregatedMatrix {
        matrix: assemble(table, columns, blocks),
        prediction_week: k,
        strategy: Strategy::Progressive,
    })
}

pub fn aggregate_early_reset(table: &WeeklyTable, k: u32) -> Result<AggregatedMatrix, AggregateError> {
    aggregate_early_reset_at(table, k, DEFAULT_RESET_WEEK)
}

/// Before the reset week this equals progressive aggregation. From the reset
/// week on: a frozen block over weeks before the reset, plus a reset block
/// over `reset_week..=k` without the performance families.
pub fn aggregate_early_reset_at(
    table: &WeeklyTable,
    k: u32,
    reset_week: u32,
) -> Result<AggregatedMatrix, AggregateError> {
    check_week(table, k)?;
    if reset_week < 2 {
        return Err(AggregateError::ResetWeek(reset_week));
    }
    if k < reset_week {
        let mut out = aggregate_progressive(table, k)?;
        out.strategy = Strategy::EarlyReset;
        return Ok(out);
    }
    let all: Vec<usize> = (0..table.columns.len()).collect();
    let behavioral: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&j| !table.columns[j].family.is_performance())
        .collect();
    let (mut columns, mut blocks) = (Vec::new(), Vec::new());
    push_block(table, &all, 1, reset_week - 1, Some(Block::Frozen), &mut columns, &mut blocks);
    push_block(table, &behavioral, reset_week, k, Some(Block::Reset), &mut columns, &mut blocks);
    Ok(AggregatedMatrix {
        matrix: assemble(table, columns, blocks),
        prediction_week: k,
        strategy: Strategy::EarlyReset,
    })
}
