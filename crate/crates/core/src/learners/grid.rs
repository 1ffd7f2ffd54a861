//! Hyperparameter candidate grids.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::boost::BoostParams;
use super::forest::ForestParams;
use super::LearnerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    Paper,
    Small,
}

impl GridPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            GridPreset::Paper => "paper",
            GridPreset::Small => "small",
        }
    }
}

impl FromStr for GridPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(GridPreset::Paper),
            "small" => Ok(GridPreset::Small),
            other => Err(format!("unknown grid preset `{other}` (expected paper or small)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperParams {
    ElasticNet { alpha: f64, lambda: f64 },
    Forest(ForestParams),
    Boost(BoostParams),
}

impl HyperParams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            HyperParams::ElasticNet { .. } => LearnerKind::ElasticNet,
            HyperParams::Forest(_) => LearnerKind::Forest,
            HyperParams::Boost(_) => LearnerKind::Boost,
        }
    }

    /// Sort key: smaller means more regularized.
    pub(crate) fn parsimony_key(&self) -> Vec<f64> {
        match self {
            HyperParams::ElasticNet { alpha, lambda } => vec![-lambda, -alpha],
            HyperParams::Forest(f) => vec![-(f.min_node_size as f64), f.mtry as f64, f.n_trees as f64],
            HyperParams::Boost(b) => {
                vec![b.max_depth as f64, -b.min_child_weight, b.subsample, b.colsample, b.n_rounds as f64]
            }
        }
    }
}

/// `n` points from `lo` to `hi` inclusive, equally spaced.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

/// `n` points from `lo` to `hi` inclusive, equally spaced in log10.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.log10(), hi.log10(), n).into_iter().map(|e| 10f64.powf(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElasticNetGrid {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestGrid {
    pub mtry: Vec<usize>,
    pub min_node_size: Vec<usize>,
    pub n_trees: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoostGrid {
    pub max_depth: Vec<usize>,
    pub min_child_weight: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample: Vec<f64>,
    pub learning_rate: f64,
    pub max_rounds: usize,
}

/// Candidate lists for all three learners, given the number of predictors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperGrid {
    pub preset: GridPreset,
    pub elastic_net: ElasticNetGrid,
    pub forest: ForestGrid,
    pub boost: BoostGrid,
}

/// Integers from ⌈d/2⌉ to ⌊3d/2⌋ plus ⌊2.5d⌋ and 3d, with d = ⌊√p⌋, kept within 1..=p.
pub fn mtry_candidates(p: usize) -> Vec<usize> {
    let d = ((p as f64).sqrt().floor() as usize).max(1);
    let mut v: Vec<usize> = (d.div_ceil(2)..=(3 * d) / 2).collect();
    v.push(5 * d / 2);
    v.push(3 * d);
    v.retain(|m| *m >= 1 && *m <= p);
    v.dedup();
    v
}

impl HyperGrid {
    pub fn new(preset: GridPreset, p: usize) -> Self {
        match preset {
            GridPreset::Paper => HyperGrid::paper(p),
            GridPreset::Small => HyperGrid::small(p),
        }
    }

    pub fn paper(p: usize) -> Self {
        HyperGrid {
            preset: GridPreset::Paper,
            elastic_net: ElasticNetGrid { alphas: linspace(0.0, 1.0, 11), lambdas: logspace(1e-3, 1e3, 100) },
            forest: ForestGrid {
                mtry: mtry_candidates(p),
                min_node_size: vec![10, 12, 15, 17, 20, 23, 25, 30],
                n_trees: vec![500, 1000, 2000],
            },
            boost: BoostGrid {
                max_depth: (3..=10).collect(),
                min_child_weight: linspace(1.0, 10.0, 8),
                subsample: linspace(0.5, 1.0, 8),
                colsample: linspace(0.5, 1.0, 8),
                learning_rate: super::boost::DEFAULT_LEARNING_RATE,
                max_rounds: super::boost::DEFAULT_ROUNDS,
            },
        }
    }

    /// Roughly a tenth of the `paper` preset per learner, same ranges.
    pub fn small(p: usize) -> Self {
        let d = ((p as f64).sqrt().floor() as usize).max(1);
        let mut mtry = vec![d.div_ceil(2).max(1), d, (3 * d / 2).min(p.max(1))];
        mtry.dedup();
        HyperGrid {
            preset: GridPreset::Small,
            elastic_net: ElasticNetGrid { alphas: linspace(0.0, 1.0, 5), lambdas: logspace(1e-3, 1e3, 20) },
            forest: ForestGrid { mtry, min_node_size: vec![10, 20], n_trees: vec![150] },
            boost: BoostGrid {
                max_depth: vec![3, 6],
                min_child_weight: vec![1.0, 5.5],
                subsample: vec![0.75],
                colsample: vec![0.75],
                learning_rate: super::boost::DEFAULT_LEARNING_RATE,
                max_rounds: super::boost::DEFAULT_ROUNDS,
            },
        }
    }

    pub fn candidates(&self, kind: LearnerKind) -> Vec<HyperParams> {
        let mut out = Vec::new();
        match kind {
            LearnerKind::ElasticNet => {
                for &alpha in &self.elastic_net.alphas {
                    for &lambda in &self.elastic_net.lambdas {
                        out.push(HyperParams::ElasticNet { alpha, lambda });
                    }
                }
            }
            LearnerKind::Forest => {
                for &mtry in &self.forest.mtry {
                    for &min_node_size in &self.forest.min_node_size {
                        for &n_trees in &self.forest.n_trees {
                            out.push(HyperParams::Forest(ForestParams { mtry, min_node_size, n_trees }));
                        }
                    }
                }
            }
            LearnerKind::Boost => {
                let g = &self.boost;
                for &max_depth in &g.max_depth {
                    for &min_child_weight in &g.min_child_weight {
                        for &subsample in &g.subsample {
                            for &colsample in &g.colsample {
                                out.push(HyperParams::Boost(BoostParams {
                                    max_depth,
                                    min_child_weight,
                                    subsample,
                                    colsample,
                                    learning_rate: g.learning_rate,
                                    n_rounds: g.max_rounds,
                                }));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
