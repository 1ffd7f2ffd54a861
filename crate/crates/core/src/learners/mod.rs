//! The three classifiers, a common model wrapper and feature importance.

pub mod boost;
pub mod elastic_net;
pub mod forest;
pub mod grid;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boost::{fit_gbt, BoostModel, BoostParams};
pub use elastic_net::{fit_elastic_net, fit_path, sigmoid, ElasticNetModel};
pub use forest::{fit_probability_forest, ForestModel, ForestParams};
pub use grid::{GridPreset, HyperGrid, HyperParams};

use crate::features::ColumnKey;
use crate::matrix::FeatureMatrix;
use crate::tuneval::auc_labels;

pub const PERMUTATION_REPEATS: usize = 10;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("input contains NaN or infinite values")]
    NonFinite,
    #[error("invalid hyperparameter: {0}")]
    Parameter(String),
    #[error("labels are constant; a classifier cannot be fit")]
    DegenerateLabels,
    #[error("feature schema mismatch: {0}")]
    Schema(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "en")]
    ElasticNet,
    #[serde(rename = "rf")]
    Forest,
    #[serde(rename = "gbt")]
    Boost,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::ElasticNet, LearnerKind::Forest, LearnerKind::Boost];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::ElasticNet => "en",
            LearnerKind::Forest => "rf",
            LearnerKind::Boost => "gbt",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" | "elastic_net" | "elasticnet" => Ok(LearnerKind::ElasticNet),
            "rf" | "forest" | "random_forest" => Ok(LearnerKind::Forest),
            "gbt" | "xgb" | "boost" => Ok(LearnerKind::Boost),
            other => Err(format!("unknown learner `{other}` (expected en, rf or gbt)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fit", rename_all = "snake_case")]
pub enum Model {
    ElasticNet(ElasticNetModel),
    Forest(ForestModel),
    Boost(BoostModel),
}

impl Model {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Model::ElasticNet(_) => LearnerKind::ElasticNet,
            Model::Forest(_) => LearnerKind::Forest,
            Model::Boost(_) => LearnerKind::Boost,
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        match self {
            Model::ElasticNet(m) => m.predict_proba(x),
            Model::Forest(m) => m.predict_proba(x),
            Model::Boost(m) => m.predict_proba(x),
        }
    }
}

pub fn fit_model(x: ArrayView2<'_, f64>, y: &[bool], params: &HyperParams, seed: u64) -> Result<Model, LearnerError> {
    Ok(match params {
        HyperParams::ElasticNet { alpha, lambda } => Model::ElasticNet(fit_elastic_net(x, y, *alpha, *lambda)?),
        HyperParams::Forest(p) => Model::Forest(fit_probability_forest(x, y, p, seed)?),
        HyperParams::Boost(p) => Model::Boost(fit_gbt(x, y, p, seed)?),
    })
}

/// A fitted model with its feature schema, tuned hyperparameters and operating threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: LearnerKind,
    pub params: HyperParams,
    pub schema: Vec<String>,
    pub seed: u64,
    pub threshold: Option<f64>,
    pub model: Model,
}

impl TrainedModel {
    pub fn fit(matrix: &FeatureMatrix, y: &[bool], params: &HyperParams, seed: u64) -> Result<Self, LearnerError> {
        let model = fit_model(matrix.view(), y, params, seed)?;
        let params = match (&model, params) {
            (Model::Boost(b), _) => HyperParams::Boost(b.params),
            (_, p) => *p,
        };
        Ok(TrainedModel { kind: model.kind(), params, schema: matrix.column_names(), seed, threshold: None, model })
    }

    /// Reorders `matrix` to the training schema; extra columns are ignored.
    pub fn align(&self, matrix: &FeatureMatrix) -> Result<Array2<f64>, LearnerError> {
        let names = matrix.column_names();
        let mut idx = Vec::with_capacity(self.schema.len());
        for s in &self.schema {
            let j = names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| LearnerError::Schema(format!("column `{s}` missing")))?;
            idx.push(j);
        }
        Ok(matrix.data.select(ndarray::Axis(1), &idx))
    }

    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, LearnerError> {
        let x = self.align(matrix)?;
        Ok(self.model.predict_proba(x.view()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnerError> {
        serde_json::from_str(s).map_err(|e| LearnerError::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureScore {
    pub feature: String,
    pub score: f64,
}

/// Ranked importances, largest magnitude first; ties keep schema order.
///
/// Elastic net: signed standardized coefficients. Forest: mean total Gini
/// decrease. Boosting: mean AUC drop over permutations of each column of `x`.
pub fn importance(
    model: &TrainedModel,
    x: Option<(&FeatureMatrix, &[bool])>,
    seed: u64,
) -> Result<Vec<FeatureScore>, LearnerError> {
    let scores: Vec<f64> = match &model.model {
        Model::ElasticNet(m) => m.coefficients.clone(),
        Model::Forest(m) => m.gini_importance.clone(),
        Model::Boost(m) => {
            let (matrix, y) =
                x.ok_or_else(|| LearnerError::Parameter("permutation importance needs data".into()))?;
            let x = model.align(matrix)?;
            permutation_importance(m, x.view(), y, seed)?
        }
    };
    let mut out: Vec<FeatureScore> = model
        .schema
        .iter()
        .zip(scores)
        .map(|(f, score)| FeatureScore { feature: f.clone(), score })
        .collect();
    out.sort_by(|a, b| b.score.abs().total_cmp(&a.score.abs()));
    Ok(out)
}

pub fn permutation_importance(
    model: &BoostModel,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    seed: u64,
) -> Result<Vec<f64>, LearnerError> {
    let base = auc_labels(&model.predict_proba(x), y).map_err(|e| LearnerError::Parameter(e.to_string()))?;
    let mut used = vec![false; x.ncols()];
    for t in &model.trees {
        for f in t.features_used() {
            used[f] = true;
        }
    }
    let mut out = vec![0.0; x.ncols()];
    for j in 0..x.ncols() {
        if !used[j] {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut xp = x.to_owned();
        let mut col: Vec<f64> = x.column(j).to_vec();
        let mut drop = 0.0;
        for _ in 0..PERMUTATION_REPEATS {
            col.shuffle(&mut rng);
            xp.column_mut(j).iter_mut().zip(&col).for_each(|(a, b)| *a = *b);
            let auc = auc_labels(&model.predict_proba(xp.view()), y).expect("labels checked above");
            drop += base - auc;
        }
        out[j] = drop / PERMUTATION_REPEATS as f64;
    }
    Ok(out)
}

/// Columns of `matrix` that feed a fitted model, in schema order.
pub fn schema_keys(model: &TrainedModel) -> Result<Vec<ColumnKey>, LearnerError> {
    model
        .schema
        .iter()
        .map(|s| s.parse().map_err(|e| LearnerError::Schema(format!("{s}: {e}"))))
        .collect()
}

/// Split value strictly between `lo < hi` on the `<=` side: the midpoint, or
/// `lo` when the midpoint rounds up to `hi`.
pub(crate) fn split_point(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * (lo + hi);
    if m < hi {
        m
    } else {
        lo
    }
}
