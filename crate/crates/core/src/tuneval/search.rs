use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use super::{auc_labels, FoldPlan, TunevalError};
use crate::derive_seed;
use crate::learners::{
    fit_gbt, fit_model, fit_path, BoostParams, HyperParams, LearnerError, LearnerKind,
};

/// Round counts at which boosting candidates are scored.
pub const BOOST_CHECKPOINT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvRow {
    pub params: HyperParams,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: HyperParams,
    pub best_auc: f64,
    pub table: Vec<CvRow>,
    /// Out-of-fold probabilities of the best configuration; NaN in skipped folds.
    pub oof: Vec<f64>,
    pub skipped_folds: Vec<usize>,
}

enum Job {
    /// One elastic-net path: (α, table rows with their λ).
    Path(f64, Vec<(usize, f64)>),
    Single(usize),
    /// Boosting at the largest round count, scored at several checkpoints.
    Staged(BoostParams, Vec<(usize, usize)>),
}

fn expand(candidates: &[HyperParams]) -> (Vec<HyperParams>, Vec<Job>) {
    let mut table = Vec::new();
    let mut jobs = Vec::new();
    let mut paths: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    for c in candidates {
        match c {
            HyperParams::ElasticNet { alpha, lambda } => {
                let row = table.len();
                table.push(*c);
                match paths.iter_mut().find(|(a, _)| a == alpha) {
                    Some((_, v)) => v.push((row, *lambda)),
                    None => paths.push((*alpha, vec![(row, *lambda)])),
                }
            }
            HyperParams::Forest(_) => {
                jobs.push(Job::Single(table.len()));
                table.push(*c);
            }
            HyperParams::Boost(b) => {
                let mut stages = Vec::new();
                let mut r = BOOST_CHECKPOINT.min(b.n_rounds);
                loop {
                    stages.push((table.len(), r));
                    table.push(HyperParams::Boost(BoostParams { n_rounds: r, ..*b }));
                    if r >= b.n_rounds {
                        break;
                    }
                    r = (r + BOOST_CHECKPOINT).min(b.n_rounds);
                }
                jobs.push(Job::Staged(*b, stages));
            }
        }
    }
    jobs.extend(paths.into_iter().map(|(a, v)| Job::Path(a, v)));
    (table, jobs)
}

fn run_job(
    job: &Job,
    x_train: ArrayView2<'_, f64>,
    y_train: &[bool],
    x_test: ArrayView2<'_, f64>,
    table: &[HyperParams],
    seed: u64,
) -> Result<Vec<(usize, Vec<f64>)>, LearnerError> {
    Ok(match job {
        Job::Path(alpha, rows) => {
            let lambdas: Vec<f64> = rows.iter().map(|r| r.1).collect();
            fit_path(x_train, y_train, *alpha, &lambdas)?
                .into_iter()
                .zip(rows)
                .map(|(m, (row, _))| (*row, m.predict_proba(x_test)))
                .collect()
        }
        Job::Single(row) => vec![(*row, fit_model(x_train, y_train, &table[*row], seed)?.predict_proba(x_test))],
        Job::Staged(params, stages) => {
            let m = fit_gbt(x_train, y_train, params, seed)?;
            let rounds: Vec<usize> = stages.iter().map(|s| s.1).collect();
            stages.iter().map(|s| s.0).zip(m.predict_staged(x_test, &rounds)).collect()
        }
    })
}

/// Scores every candidate by pooled out-of-fold AUC.
///
/// Ties go to the most regularized candidate: larger λ then larger α for the
/// elastic net, larger nodes / shallower trees / fewer rounds for the ensembles.
pub fn grid_search_cv(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    candidates: &[HyperParams],
    plan: &FoldPlan,
    seed: u64,
) -> Result<SearchResult, TunevalError> {
    if candidates.is_empty() {
        return Err(TunevalError::Parameter("empty hyperparameter grid".into()));
    }
    if plan.assignment.len() != y.len() || x.nrows() != y.len() {
        return Err(TunevalError::Parameter("fold plan, rows and labels disagree in size".into()));
    }
    let (table, jobs) = expand(candidates);
    let mut skipped = Vec::new();
    let mut folds = Vec::new();
    for f in 0..plan.k {
        let train = plan.train_rows(f);
        let pos = train.iter().filter(|i| y[**i]).count();
        if pos == 0 || pos == train.len() {
            log::warn!("fold {f}: training part holds a single class; skipped");
            skipped.push(f);
        } else {
            folds.push((f, train, plan.test_rows(f)));
        }
    }
    if folds.is_empty() {
        return Err(TunevalError::AllFoldsSkipped);
    }

    let tasks: Vec<(usize, usize)> = (0..folds.len()).flat_map(|fi| (0..jobs.len()).map(move |j| (fi, j))).collect();
    let results: Vec<Result<(usize, Vec<(usize, Vec<f64>)>), LearnerError>> = tasks
        .par_iter()
        .map(|&(fi, j)| {
            let (f, train, test) = &folds[fi];
            let xt = x.select(Axis(0), train);
            let yt: Vec<bool> = train.iter().map(|i| y[*i]).collect();
            let xs = x.select(Axis(0), test);
            run_job(&jobs[j], xt.view(), &yt, xs.view(), &table, derive_seed(seed, *f as u64))
                .map(|r| (fi, r))
        })
        .collect();

    let n = y.len();
    let mut oof = vec![vec![f64::NAN; n]; table.len()];
    for r in results {
        let (fi, preds) = r?;
        let test = &folds[fi].2;
        for (row, p) in preds {
            for (i, v) in test.iter().zip(p) {
                oof[row][*i] = v;
            }
        }
    }
    let used: Vec<usize> = (0..n).filter(|i| !skipped.contains(&plan.assignment[*i])).collect();
    let y_used: Vec<bool> = used.iter().map(|i| y[*i]).collect();
    let mut rows = Vec::with_capacity(table.len());
    for (params, preds) in table.iter().zip(&oof) {
        let p: Vec<f64> = used.iter().map(|i| preds[*i]).collect();
        rows.push(CvRow { params: *params, auc: auc_labels(&p, &y_used)? });
    }

    let best_auc = rows.iter().map(|r| r.auc).fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|a, b| {
        table[*a].parsimony_key().partial_cmp(&table[*b].parsimony_key()).expect("finite keys")
    });
    let best = *order.iter().find(|i| rows[**i].auc == best_auc).expect("maximum exists");
    Ok(SearchResult {
        best: table[best],
        best_auc,
        oof: oof.swap_remove(best),
        table: rows,
        skipped_folds: skipped,
    })
}

/// Out-of-fold probabilities for one fixed configuration; NaN in skipped folds.
pub fn cross_val_predict(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    params: &HyperParams,
    plan: &FoldPlan,
    seed: u64,
) -> Result<Vec<f64>, TunevalError> {
    let mut out = vec![f64::NAN; y.len()];
    for f in 0..plan.k {
        let train = plan.train_rows(f);
        let yt: Vec<bool> = train.iter().map(|i| y[*i]).collect();
        if yt.iter().all(|v| *v) || yt.iter().all(|v| !*v) {
            continue;
        }
        let test = plan.test_rows(f);
        let m = fit_model(x.select(Axis(0), &train).view(), &yt, params, derive_seed(seed, f as u64))?;
        for (i, p) in test.iter().zip(m.predict_proba(x.select(Axis(0), &test).view())) {
            out[*i] = p;
        }
    }
    Ok(out)
}

/// The learner shared by all candidates, if there is one.
pub fn kind_of(candidates: &[HyperParams]) -> Option<LearnerKind> {
    let k = candidates.first()?.kind();
    candidates.iter().all(|c| c.kind() == k).then_some(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ForestParams;
    use crate::tuneval::stratified_kfold;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn planted(n: usize, seed: u64) -> (Array2<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 4), |_| StandardNormal.sample(&mut rng));
        let y = x
            .rows()
            .into_iter()
            .map(|r| {
                let e: f64 = StandardNormal.sample(&mut rng);
                1.5 * r[0] - r[1] + 0.5 * e > 0.0
            })
            .collect();
        (x, y)
    }

    #[test]
    fn single_candidate_returned() {
        let (x, y) = planted(60, 1);
        let plan = stratified_kfold(&y, 5, 0).unwrap();
        let c = [HyperParams::Forest(ForestParams { mtry: 2, min_node_size: 5, n_trees: 20 })];
        let r = grid_search_cv(x.view(), &y, &c, &plan, 0).unwrap();
        assert_eq!(r.best, c[0]);
        assert_eq!(r.table.len(), 1);
        assert!(r.oof.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn huge_lambda_loses_to_moderate() {
        let (x, y) = planted(120, 2);
        let plan = stratified_kfold(&y, 10, 3).unwrap();
        let c = [
            HyperParams::ElasticNet { alpha: 0.5, lambda: 1000.0 },
            HyperParams::ElasticNet { alpha: 0.5, lambda: 0.01 },
        ];
        let r = grid_search_cv(x.view(), &y, &c, &plan, 0).unwrap();
        assert!(r.table[1].auc > r.table[0].auc);
        assert_eq!(r.best, c[1]);
    }

    #[test]
    fn ties_prefer_larger_lambda() {
        let (x, y) = planted(80, 3);
        let plan = stratified_kfold(&y, 4, 3).unwrap();
        // both λ shrink every slope to zero: identical constant predictions
        let c = [
            HyperParams::ElasticNet { alpha: 1.0, lambda: 500.0 },
            HyperParams::ElasticNet { alpha: 1.0, lambda: 1000.0 },
        ];
        let r = grid_search_cv(x.view(), &y, &c, &plan, 0).unwrap();
        assert_eq!(r.table[0].auc, r.table[1].auc);
        assert_eq!(r.best, c[1]);
    }

    #[test]
    fn boosting_is_scored_at_checkpoints() {
        let (x, y) = planted(60, 4);
        let plan = stratified_kfold(&y, 3, 3).unwrap();
        let mut b = BoostParams::new(2, 1.0, 1.0, 1.0);
        b.n_rounds = 25;
        let r = grid_search_cv(x.view(), &y, &[HyperParams::Boost(b)], &plan, 0).unwrap();
        let rounds: Vec<usize> = r
            .table
            .iter()
            .map(|row| match row.params {
                HyperParams::Boost(p) => p.n_rounds,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(rounds, vec![10, 20, 25]);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let (x, y) = planted(20, 5);
        let plan = stratified_kfold(&y, 2, 0).unwrap();
        assert!(grid_search_cv(x.view(), &y, &[], &plan, 0).is_err());
    }
}
