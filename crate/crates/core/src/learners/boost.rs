//! Second-order gradient boosting of regression trees on the logistic loss.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::elastic_net::sigmoid;
use super::LearnerError;

/// L2 penalty on leaf weights.
pub const REG_LAMBDA: f64 = 1.0;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_ROUNDS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub learning_rate: f64,
    pub n_rounds: usize,
}

impl BoostParams {
    pub fn new(max_depth: usize, min_child_weight: f64, subsample: f64, colsample: f64) -> Self {
        BoostParams {
            max_depth,
            min_child_weight,
            subsample,
            colsample,
            learning_rate: DEFAULT_LEARNING_RATE,
            n_rounds: DEFAULT_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn features_used(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            RegNode::Split { feature, .. } => Some(*feature),
            RegNode::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub base_margin: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<RegressionTree>,
    pub params: BoostParams,
    pub seed: u64,
}

impl BoostModel {
    pub fn margin(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.margin_rounds(x, self.trees.len())
    }

    fn margin_rounds(&self, x: ArrayView2<'_, f64>, rounds: usize) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                let mut m = self.base_margin;
                for t in &self.trees[..rounds] {
                    m += t.predict_row(&row);
                }
                m
            })
            .collect()
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.margin(x).into_iter().map(sigmoid).collect()
    }

    /// Probabilities after each of the given round counts (ascending).
    pub fn predict_staged(&self, x: ArrayView2<'_, f64>, rounds: &[usize]) -> Vec<Vec<f64>> {
        let n = x.nrows();
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut margin = vec![self.base_margin; n];
        let mut done = 0;
        let mut out = Vec::with_capacity(rounds.len());
        for &r in rounds {
            let r = r.min(self.trees.len());
            for t in &self.trees[done.min(r)..r] {
                for (m, row) in margin.iter_mut().zip(&rows) {
                    *m += t.predict_row(row);
                }
            }
            done = done.max(r);
            out.push(margin.iter().map(|m| sigmoid(*m)).collect());
        }
        out
    }

    /// Keeps only the first `rounds` trees.
    pub fn truncate(&mut self, rounds: usize) {
        self.trees.truncate(rounds);
        self.params.n_rounds = self.trees.len();
    }
}

/// Gradient and hessian of the logistic loss with respect to the margin.
pub fn logistic_grad_hess(margin: f64, y: bool) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - if y { 1.0 } else { 0.0 }, p * (1.0 - p))
}

pub fn logistic_loss(margin: f64, y: bool) -> f64 {
    let softplus = if margin > 0.0 { margin + (-margin).exp().ln_1p() } else { margin.exp().ln_1p() };
    softplus - if y { margin } else { 0.0 }
}

fn check(x: ArrayView2<'_, f64>, y: &[bool], params: &BoostParams) -> Result<(), LearnerError> {
    if x.nrows() != y.len() {
        return Err(LearnerError::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite);
    }
    if y.is_empty() {
        return Err(LearnerError::Shape("no rows".into()));
    }
    let bad = |what: &str| Err(LearnerError::Parameter(what.to_string()));
    if params.max_depth == 0 {
        return bad("max_depth must be positive");
    }
    if !(params.min_child_weight >= 0.0) {
        return bad("min_child_weight must be nonnegative");
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return bad("subsample outside (0, 1]");
    }
    if !(params.colsample > 0.0 && params.colsample <= 1.0) {
        return bad("colsample outside (0, 1]");
    }
    if !(params.learning_rate >= 0.0) {
        return bad("learning_rate must be nonnegative");
    }
    Ok(())
}

pub fn fit_gbt(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    params: &BoostParams,
    seed: u64,
) -> Result<BoostModel, LearnerError> {
    check(x, y, params)?;
    let (n, p) = x.dim();
    let pos = y.iter().filter(|v| **v).count() as f64;
    let ybar = (pos / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_margin = (ybar / (1.0 - ybar)).ln();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j).to_vec()).collect();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut margin = vec![base_margin; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cols = ((params.colsample * p as f64).floor() as usize).clamp(1, p.max(1));
    let mut trees = Vec::with_capacity(params.n_rounds);
    let order: Vec<Vec<usize>> = cols
        .iter()
        .map(|c| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|a, b| c[*a].total_cmp(&c[*b]));
            o
        })
        .collect();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut member = vec![false; n];
    for _ in 0..params.n_rounds {
        for i in 0..n {
            (grad[i], hess[i]) = logistic_grad_hess(margin[i], y[i]);
        }
        let rows_in: Vec<usize> = if params.subsample < 1.0 {
            (0..n).filter(|_| rng.random::<f64>() < params.subsample).collect()
        } else {
            (0..n).collect()
        };
        let mut features = if p == 0 { Vec::new() } else { sample(&mut rng, p, n_cols).into_vec() };
        features.sort_unstable();
        member.iter_mut().for_each(|m| *m = false);
        rows_in.iter().for_each(|&i| member[i] = true);
        let sorted: Vec<Vec<usize>> =
            features.iter().map(|&j| order[j].iter().copied().filter(|&i| member[i]).collect()).collect();
        let mut b = TreeBuilder {
            cols: &cols,
            grad: &grad,
            hess: &hess,
            features: &features,
            params,
            nodes: Vec::new(),
            side: vec![false; n],
        };
        b.build(rows_in, sorted, 0);
        let tree = RegressionTree { nodes: b.nodes };
        for (m, row) in margin.iter_mut().zip(&rows) {
            *m += tree.predict_row(row);
        }
        trees.push(tree);
    }
    Ok(BoostModel { base_margin, trees, params: *params, seed })
}

struct TreeBuilder<'a> {
    cols: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    features: &'a [usize],
    params: &'a BoostParams,
    nodes: Vec<RegNode>,
    side: Vec<bool>,
}

fn score(g: f64, h: f64) -> f64 {
    g * g / (h + REG_LAMBDA)
}

impl TreeBuilder<'_> {
    /// `sorted[f]` lists the node's rows ordered by `features[f]`.
    fn build(&mut self, rows: Vec<usize>, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let value = -g / (h + REG_LAMBDA) * self.params.learning_rate;
        self.nodes.push(RegNode::Leaf { value });
        if depth >= self.params.max_depth || rows.len() < 2 || self.params.learning_rate == 0.0 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&sorted, g, h) else { return id };
        let col = &self.cols[feature];
        for &i in &rows {
            self.side[i] = col[i] <= threshold;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.side[i]);
        let (sl, sr): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
            sorted.into_iter().map(|list| list.into_iter().partition(|&i| self.side[i])).unzip();
        let left = self.build(l, sl, depth + 1);
        let right = self.build(r, sr, depth + 1);
        self.nodes[id] = RegNode::Split { feature, threshold, left, right };
        id
    }

    fn best_split(&self, sorted: &[Vec<usize>], g: f64, h: f64) -> Option<(usize, f64)> {
        let parent = score(g, h);
        let mcw = self.params.min_child_weight;
        let mut best: Option<(usize, f64, f64)> = None;
        for (&j, list) in self.features.iter().zip(sorted) {
            let col = &self.cols[j];
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..list.len() - 1 {
                let (i, next) = (list[k], list[k + 1]);
                gl += self.grad[i];
                hl += self.hess[i];
                if col[i] == col[next] {
                    continue;
                }
                let hr = h - hl;
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gain = score(gl, hl) + score(g - gl, hr) - parent;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.2) {
                    best = Some((j, super::split_point(col[i], col[next]), gain));
                }
            }
        }
        best.map(|(j, t, _)| (j, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::{prop_assert, proptest};
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_learning_rate_is_base_rate() {
        let x = noise(30, 3, 1);
        let y: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let mut params = BoostParams::new(3, 1.0, 1.0, 1.0);
        params.learning_rate = 0.0;
        params.n_rounds = 20;
        let m = fit_gbt(x.view(), &y, &params, 0).unwrap();
        for p in m.predict_proba(x.view()) {
            assert!((p - 10.0 / 30.0).abs() < 1e-12);
        }
        params.n_rounds = 0;
        let m = fit_gbt(x.view(), &y, &params, 0).unwrap();
        assert!(m.predict_proba(x.view()).iter().all(|p| (p - 10.0 / 30.0).abs() < 1e-12));
    }

    #[test]
    fn stump_splits_at_the_step() {
        let v: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x = Array2::from_shape_vec((20, 1), v.clone()).unwrap();
        let y: Vec<bool> = v.iter().map(|t| *t >= 13.0).collect();
        let mut params = BoostParams::new(1, 0.0, 1.0, 1.0);
        params.n_rounds = 1;
        let m = fit_gbt(x.view(), &y, &params, 0).unwrap();

        // exhaustive oracle over all midpoints
        let (g0, h0) = logistic_grad_hess(m.base_margin, false);
        let (g1, h1) = logistic_grad_hess(m.base_margin, true);
        let (gs, hs): (Vec<f64>, Vec<f64>) =
            y.iter().map(|l| if *l { (g1, h1) } else { (g0, h0) }).unzip();
        let (g, h): (f64, f64) = (gs.iter().sum(), hs.iter().sum());
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..19 {
            let gl: f64 = gs[..=k].iter().sum();
            let hl: f64 = hs[..=k].iter().sum();
            let gain = score(gl, hl) + score(g - gl, h - hl);
            if gain > best.0 {
                best = (gain, 0.5 * (v[k] + v[k + 1]));
            }
        }
        assert_eq!(best.1, 12.5);
        match &m.trees[0].nodes[0] {
            RegNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((12.0..=13.0).contains(threshold));
                assert_eq!(*threshold, best.1);
            }
            other => panic!("expected a split, got {other:?}"),
        }
    }

    #[test]
    fn training_loss_nonincreasing() {
        for seed in 0..5 {
            let x = noise(80, 4, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let y: Vec<bool> = (0..80).map(|_| rng.random::<bool>()).collect();
            let mut params = BoostParams::new(3, 1.0, 1.0, 1.0);
            params.n_rounds = 50;
            let m = fit_gbt(x.view(), &y, &params, seed).unwrap();
            let stages: Vec<usize> = (0..=50).collect();
            let mut prev = f64::INFINITY;
            for probs in m.predict_staged(x.view(), &stages) {
                let loss: f64 = probs
                    .iter()
                    .zip(&y)
                    .map(|(p, l)| -(if *l { p.ln() } else { (1.0 - p).ln() }))
                    .sum();
                assert!(loss <= prev + 1e-9, "{loss} > {prev}");
                prev = loss;
            }
        }
    }

    #[test]
    fn staged_matches_truncated() {
        let x = noise(40, 3, 3);
        let y: Vec<bool> = x.column(0).iter().map(|v| *v > 0.0).collect();
        let mut params = BoostParams::new(2, 1.0, 0.8, 0.7);
        params.n_rounds = 30;
        let m = fit_gbt(x.view(), &y, &params, 8).unwrap();
        let staged = m.predict_staged(x.view(), &[10, 30]);
        let mut t = m.clone();
        t.truncate(10);
        assert_eq!(staged[0], t.predict_proba(x.view()));
        assert_eq!(staged[1], m.predict_proba(x.view()));
    }

    #[test]
    fn deterministic_under_seed() {
        let x = noise(50, 5, 4);
        let y: Vec<bool> = (0..50).map(|i| i % 2 == 0).collect();
        let mut params = BoostParams::new(4, 1.0, 0.7, 0.6);
        params.n_rounds = 25;
        let a = fit_gbt(x.view(), &y, &params, 1).unwrap();
        let b = fit_gbt(x.view(), &y, &params, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn min_child_weight_blocks_splits() {
        let x = noise(20, 2, 6);
        let y: Vec<bool> = (0..20).map(|i| i < 10).collect();
        // every hessian is 0.25 at the base margin, so the root holds 5.0 in total
        let mut params = BoostParams::new(3, 2.6, 1.0, 1.0);
        params.n_rounds = 1;
        let m = fit_gbt(x.view(), &y, &params, 0).unwrap();
        assert_eq!(m.trees[0].nodes.len(), 1);
    }

    proptest! {
        #[test]
        fn grad_hess_match_finite_differences(margin in -8.0f64..8.0, y: bool) {
            let eps = 1e-5;
            let (g, h) = logistic_grad_hess(margin, y);
            let fd_g = (logistic_loss(margin + eps, y) - logistic_loss(margin - eps, y)) / (2.0 * eps);
            let gp = logistic_grad_hess(margin + eps, y).0;
            let gm = logistic_grad_hess(margin - eps, y).0;
            let fd_h = (gp - gm) / (2.0 * eps);
            prop_assert!((g - fd_g).abs() < 1e-6);
            prop_assert!((h - fd_h).abs() < 1e-6);
        }
    }
}
