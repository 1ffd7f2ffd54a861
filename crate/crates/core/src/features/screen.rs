use std::cmp::Ordering;

use ndarray::Array2;
use serde::Serialize;

use super::{ColumnKey, Family, FeatureError};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropEntry {
    pub column: ColumnKey,
    /// Correlated partner that stayed; `None` for forced exclusions.
    pub partner: Option<ColumnKey>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DropReport {
    pub dropped: Vec<DropEntry>,
    /// Constant columns: correlation undefined, kept.
    pub constant: Vec<ColumnKey>,
}

impl DropReport {
    pub fn dropped_families(&self) -> Vec<Family> {
        let mut f: Vec<Family> = self.dropped.iter().map(|d| d.column.feature.family).collect();
        f.sort();
        f.dedup();
        f
    }
}

/// Pearson correlations between columns; `None` marks constant columns.
pub fn correlation_matrix(data: &Array2<f64>) -> (Array2<f64>, Vec<bool>) {
    let (n, p) = data.dim();
    let mut centered = data.clone();
    let mut constant = vec![false; p];
    let mut norms = vec![0.0; p];
    for j in 0..p {
        let mut col = centered.column_mut(j);
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let ss: f64 = col.iter().map(|v| v * v).sum();
        norms[j] = ss.sqrt();
        constant[j] = !(ss > 1e-24 * (1.0 + mean * mean) * n as f64);
    }
    let mut r = Array2::from_elem((p, p), f64::NAN);
    for i in 0..p {
        if constant[i] {
            continue;
        }
        r[[i, i]] = 1.0;
        for j in (i + 1)..p {
            if constant[j] {
                continue;
            }
            let dot: f64 = centered.column(i).dot(&centered.column(j));
            let v = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            r[[i, j]] = v;
            r[[j, i]] = v;
        }
    }
    (r, constant)
}

/// Drops forced families first, then one column of every pair with |r| > cutoff.
///
/// The column with the larger mean |r| to the remaining columns goes; exact
/// ties drop the later column in [`ColumnKey`] order.
pub fn screen_collinear(
    matrix: &FeatureMatrix,
    cutoff: f64,
    forced_exclusions: Option<&[Family]>,
) -> Result<(FeatureMatrix, DropReport), FeatureError> {
    if matrix.n_rows() < 2 {
        return Err(FeatureError::Screening("need at least two rows".into()));
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(FeatureError::Screening(format!("cutoff {cutoff} outside (0, 1)")));
    }
    let mut report = DropReport::default();
    let mut keep: Vec<ColumnKey> = Vec::new();
    for c in &matrix.columns {
        if forced_exclusions.is_some_and(|f| f.contains(&c.feature.family)) {
            report.dropped.push(DropEntry { column: *c, partner: None, r: f64::NAN });
        } else {
            keep.push(*c);
        }
    }
    let sub = matrix.select(&keep).expect("columns come from the matrix");
    let (r, constant) = correlation_matrix(&sub.data);
    let p = keep.len();
    for (j, c) in constant.iter().enumerate() {
        if *c {
            log::debug!("feature {} is constant; correlation undefined, kept", keep[j]);
            report.constant.push(keep[j]);
        }
    }
    let mut alive: Vec<bool> = vec![true; p];
    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..p {
            if !alive[i] || constant[i] {
                continue;
            }
            for j in (i + 1)..p {
                if !alive[j] || constant[j] {
                    continue;
                }
                let a = r[[i, j]].abs();
                if a > cutoff && worst.is_none_or(|(_, _, w)| a > w) {
                    worst = Some((i, j, a));
                }
            }
        }
        let Some((i, j, _)) = worst else { break };
        let mean_abs = |k: usize| {
            let (s, n) = (0..p)
                .filter(|&m| m != k && alive[m] && !constant[m])
                .fold((0.0, 0usize), |(s, n), m| (s + r[[k, m]].abs(), n + 1));
            if n == 0 { 0.0 } else { s / n as f64 }
        };
        let (mi, mj) = (mean_abs(i), mean_abs(j));
        let drop_j = match mj.partial_cmp(&mi).unwrap_or(Ordering::Equal) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => keep[j] > keep[i],
        };
        let (gone, stays) = if drop_j { (j, i) } else { (i, j) };
        alive[gone] = false;
        report.dropped.push(DropEntry { column: keep[gone], partner: Some(keep[stays]), r: r[[i, j]] });
    }
    let final_cols: Vec<ColumnKey> = keep
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(c, _)| *c)
        .collect();
    Ok((matrix.select(&final_cols).expect("subset"), report))
}
