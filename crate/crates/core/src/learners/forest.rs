//! Probability forest: bagged Gini trees whose leaves hold class proportions.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub mtry: usize,
    pub min_node_size: usize,
    pub n_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { p: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTree {
    pub nodes: Vec<Node>,
}

impl ProbabilityTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { p } => return *p,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<ProbabilityTree>,
    pub mtry: usize,
    pub min_node_size: usize,
    pub n_trees: usize,
    pub seed: u64,
    /// Total Gini decrease per feature, averaged over trees.
    pub gini_importance: Vec<f64>,
}

impl ForestModel {
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let n_trees = self.trees.len() as f64;
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / n_trees
            })
            .collect()
    }
}

pub fn fit_probability_forest(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, LearnerError> {
    let (n, p) = x.dim();
    if n != y.len() {
        return Err(LearnerError::Shape(format!("{n} rows but {} labels", y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite);
    }
    if params.mtry == 0 || params.mtry > p {
        return Err(LearnerError::Parameter(format!("mtry {} outside 1..={p}", params.mtry)));
    }
    if params.min_node_size >= n {
        return Err(LearnerError::Parameter(format!(
            "min_node_size {} must be below the {n} rows",
            params.min_node_size
        )));
    }
    if params.n_trees == 0 {
        return Err(LearnerError::Parameter("n_trees must be positive".into()));
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j).to_vec()).collect();
    let yf: Vec<f64> = y.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();

    let grown: Vec<(ProbabilityTree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut g = Grower { cols: &cols, y: &yf, params, rng, nodes: Vec::new(), importance: vec![0.0; p] };
            g.grow(rows);
            (ProbabilityTree { nodes: g.nodes }, g.importance)
        })
        .collect();

    let mut gini_importance = vec![0.0; p];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (a, b) in gini_importance.iter_mut().zip(&imp) {
            *a += b;
        }
        trees.push(tree);
    }
    for v in &mut gini_importance {
        *v /= params.n_trees as f64;
    }
    Ok(ForestModel {
        trees,
        mtry: params.mtry,
        min_node_size: params.min_node_size,
        n_trees: params.n_trees,
        seed,
        gini_importance,
    })
}

struct Grower<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

/// n · Gini impurity for a node with `pos` positives out of `n`.
fn weighted_gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        2.0 * pos * (n - pos) / n
    }
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let pos: f64 = rows.iter().map(|&i| self.y[i]).sum();
        self.nodes.push(Node::Leaf { p: pos / n as f64 });
        if n <= self.params.min_node_size || pos == 0.0 || pos == n as f64 {
            return id;
        }
        let Some(best) = self.best_split(&rows, pos) else { return id };
        let col = &self.cols[best.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= best.threshold);
        self.importance[best.feature] += best.decrease;
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }

    fn best_split(&mut self, rows: &[usize], pos: f64) -> Option<BestSplit> {
        let p = self.cols.len();
        let mut features = sample(&mut self.rng, p, self.params.mtry).into_vec();
        features.sort_unstable();
        let n = rows.len() as f64;
        let parent = weighted_gini(pos, n);
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        for &j in &features {
            let col = &self.cols[j];
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (col[i], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut nl, mut pl) = (0.0, 0.0);
            for k in 0..pairs.len() - 1 {
                nl += 1.0;
                pl += pairs[k].1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let decrease = parent - weighted_gini(pl, nl) - weighted_gini(pos - pl, n - nl);
                if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    let threshold = super::split_point(pairs[k].0, pairs[k + 1].0);
                    best = Some(BestSplit { feature: j, threshold, decrease });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuneval::auc_rank;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn params(mtry: usize, min_node_size: usize, n_trees: usize) -> ForestParams {
        ForestParams { mtry, min_node_size, n_trees }
    }

    fn noise(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
    }

    fn auc_of(pred: &[f64], y: &[bool]) -> f64 {
        let pos: Vec<f64> = pred.iter().zip(y).filter(|(_, l)| **l).map(|(p, _)| *p).collect();
        let neg: Vec<f64> = pred.iter().zip(y).filter(|(_, l)| !**l).map(|(p, _)| *p).collect();
        auc_rank(&pos, &neg).unwrap()
    }

    #[test]
    fn constant_labels_predict_one() {
        let x = noise(15, 3, 1);
        let m = fit_probability_forest(x.view(), &[true; 15], &params(2, 2, 20), 3).unwrap();
        assert!(m.predict_proba(x.view()).iter().all(|p| *p == 1.0));
    }

    #[test]
    fn memorizes_planted_rule() {
        let x = noise(20, 3, 7);
        let y: Vec<bool> = x.rows().into_iter().map(|r| r[0] + 0.5 * r[1] > 0.0).collect();
        let m = fit_probability_forest(x.view(), &y, &params(2, 1, 500), 11).unwrap();
        assert!(auc_of(&m.predict_proba(x.view()), &y) >= 0.95);
    }

    #[test]
    fn single_tree_pure_leaves_recall_training_rows() {
        let x = Array2::from_shape_vec((6, 1), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = [false, true, false, true, true, false];
        let m = fit_probability_forest(x.view(), &y, &params(1, 1, 1), 0).unwrap();
        let tree = &m.trees[0];
        // every leaf of a fully grown tree is pure
        for node in &tree.nodes {
            if let Node::Leaf { p } = node {
                assert!(*p == 0.0 || *p == 1.0);
            }
        }
        assert!(m.predict_proba(x.view()).iter().all(|p| *p == 0.0 || *p == 1.0));
    }

    #[test]
    fn adjacent_floats_never_leave_an_empty_child() {
        let a = 0.3_f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = Array2::from_shape_vec((6, 1), vec![a, b, a, b, a, b]).unwrap();
        let y = [false, true, false, true, false, true];
        let m = fit_probability_forest(x.view(), &y, &params(1, 1, 50), 4).unwrap();
        assert!(m.predict_proba(x.view()).iter().all(|p| p.is_finite()));
    }

    #[test]
    fn same_seed_same_trees() {
        let x = noise(40, 5, 2);
        let y: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let a = fit_probability_forest(x.view(), &y, &params(2, 3, 30), 9).unwrap();
        let b = fit_probability_forest(x.view(), &y, &params(2, 3, 30), 9).unwrap();
        assert_eq!(a, b);
        let c = fit_probability_forest(x.view(), &y, &params(2, 3, 30), 10).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn gini_importance_finds_planted_feature() {
        let x = noise(200, 4, 5);
        let y: Vec<bool> = x.column(0).iter().map(|v| *v > 0.2).collect();
        let m = fit_probability_forest(x.view(), &y, &params(2, 5, 100), 1).unwrap();
        let g = &m.gini_importance;
        assert!((1..4).all(|j| g[0] > g[j]), "{g:?}");
    }

    #[test]
    fn ties_go_to_lowest_feature() {
        // two identical columns: every split uses column 0
        let v = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let x = Array2::from_shape_fn((6, 2), |(i, _)| v[i]);
        let y = [false, false, false, true, true, true];
        let m = fit_probability_forest(x.view(), &y, &params(2, 1, 10), 4).unwrap();
        for t in &m.trees {
            for node in &t.nodes {
                if let Node::Split { feature, .. } = node {
                    assert_eq!(*feature, 0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let x = noise(10, 2, 0);
        let y: Vec<bool> = (0..10).map(|i| i < 5).collect();
        assert!(fit_probability_forest(x.view(), &y, &params(3, 1, 5), 0).is_err());
        assert!(fit_probability_forest(x.view(), &y, &params(1, 10, 5), 0).is_err());
    }
}
