//! Elastic-net penalized logistic regression.
//!
//! Minimizes
//!
//! ```text
//! -(1/n) Σ [y η − log(1 + e^η)] + λ [α ‖β‖₁ + (1 − α) ‖β‖₂² / 2]
//! ```
//!
//! over an unpenalized intercept and slopes on z-scored columns. Each outer
//! sweep builds the weighted least-squares approximation at the current
//! iterate, solves it by cyclic coordinate descent and then backtracks along
//! the resulting direction until the true objective does not increase.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::LearnerError;

pub const COEF_TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 100_000;
const MIN_SD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub intercept: f64,
    /// Slopes on the standardized scale.
    pub coefficients: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
}

impl ElasticNetModel {
    pub fn linear_score(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                let mut eta = self.intercept;
                for (j, v) in row.iter().enumerate() {
                    if self.coefficients[j] != 0.0 {
                        eta += self.coefficients[j] * (v - self.feature_means[j]) / self.feature_sds[j];
                    }
                }
                eta
            })
            .collect()
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.linear_score(x).into_iter().map(sigmoid).collect()
    }

    pub fn n_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    /// Objective after every outer sweep, starting with the initial point.
    pub objective: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^η) without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Column-major standardized design.
struct Standardized {
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
    active: Vec<bool>,
}

fn standardize(x: ArrayView2<'_, f64>) -> Standardized {
    let (n, p) = x.dim();
    let mut cols = Vec::with_capacity(p);
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    let mut active = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let ok = sd > MIN_SD * (1.0 + mean.abs());
        let sd = if ok { sd } else { 1.0 };
        cols.push(col.iter().map(|v| (v - mean) / sd).collect());
        means.push(mean);
        sds.push(sd);
        active.push(ok);
    }
    Standardized { cols, means, sds, active }
}

fn objective(y: &[f64], eta: &[f64], beta: &[f64], alpha: f64, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let nll: f64 = y.iter().zip(eta).map(|(yi, e)| softplus(*e) - yi * e).sum::<f64>() / n;
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    nll + lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)
}

fn check_inputs(x: ArrayView2<'_, f64>, y: &[bool], alpha: f64) -> Result<f64, LearnerError> {
    if x.nrows() != y.len() {
        return Err(LearnerError::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LearnerError::Parameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let pos = y.iter().filter(|v| **v).count();
    if pos == 0 || pos == y.len() {
        return Err(LearnerError::DegenerateLabels);
    }
    Ok(pos as f64 / y.len() as f64)
}

pub fn fit_elastic_net(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    alpha: f64,
    lambda: f64,
) -> Result<ElasticNetModel, LearnerError> {
    fit_elastic_net_traced(x, y, alpha, lambda).map(|(m, _)| m)
}

pub fn fit_elastic_net_traced(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    alpha: f64,
    lambda: f64,
) -> Result<(ElasticNetModel, FitTrace), LearnerError> {
    let mut path = fit_path_traced(x, y, alpha, &[lambda])?;
    Ok(path.pop().expect("one lambda"))
}

/// Fits a sequence of λ values with warm starts, largest λ first internally.
/// Results come back in the order of `lambdas`.
pub fn fit_path(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    alpha: f64,
    lambdas: &[f64],
) -> Result<Vec<ElasticNetModel>, LearnerError> {
    Ok(fit_path_traced(x, y, alpha, lambdas)?.into_iter().map(|(m, _)| m).collect())
}

fn fit_path_traced(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    alpha: f64,
    lambdas: &[f64],
) -> Result<Vec<(ElasticNetModel, FitTrace)>, LearnerError> {
    let ybar = check_inputs(x, y, alpha)?;
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(LearnerError::Parameter("lambda must be positive".into()));
    }
    let std = standardize(x);
    let yf: Vec<f64> = y.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
    let p = std.cols.len();

    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|a, b| lambdas[*b].total_cmp(&lambdas[*a]));

    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut beta = vec![0.0; p];
    let mut out: Vec<Option<(ElasticNetModel, FitTrace)>> = vec![None; lambdas.len()];
    for idx in order {
        let lambda = lambdas[idx];
        let trace = solve(&std, &yf, alpha, lambda, &mut b0, &mut beta);
        out[idx] = Some((
            ElasticNetModel {
                intercept: b0,
                coefficients: beta.clone(),
                alpha,
                lambda,
                feature_means: std.means.clone(),
                feature_sds: std.sds.clone(),
            },
            trace,
        ));
    }
    Ok(out.into_iter().map(|m| m.expect("every lambda fitted")).collect())
}

fn linear(std: &Standardized, b0: f64, beta: &[f64], n: usize) -> Vec<f64> {
    let mut eta = vec![b0; n];
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            for (e, x) in eta.iter_mut().zip(&std.cols[j]) {
                *e += b * x;
            }
        }
    }
    eta
}

/// Coordinate descent on the quadratic model in covariance form: the weighted
/// Gram matrix is built once per outer sweep and each update costs O(p).
struct Sweep<'a> {
    cols: &'a [usize],
    gram: Vec<f64>,
    /// (1/n) Σ wᵢ xᵢⱼ
    wx: Vec<f64>,
    /// (1/n) Σ wᵢ xᵢⱼ rᵢ for the current residual.
    g: Vec<f64>,
    /// Σ wᵢ rᵢ
    s: f64,
    sum_w: f64,
    nf: f64,
    l1: f64,
    l2: f64,
}

impl<'a> Sweep<'a> {
    fn new(std: &Standardized, cols: &'a [usize], w: &[f64], r: &[f64], l1: f64, l2: f64) -> Self {
        let p = std.cols.len();
        let nf = w.len() as f64;
        let mut gram = vec![0.0; p * p];
        let mut wx = vec![0.0; p];
        let mut g = vec![0.0; p];
        let mut xw = vec![0.0; w.len()];
        for (a, &j) in cols.iter().enumerate() {
            let xj = &std.cols[j];
            for ((o, x), wi) in xw.iter_mut().zip(xj).zip(w) {
                *o = x * wi;
            }
            wx[j] = xw.iter().sum::<f64>() / nf;
            g[j] = xw.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / nf;
            for &k in &cols[a..] {
                let v = xw.iter().zip(&std.cols[k]).map(|(a, b)| a * b).sum::<f64>() / nf;
                gram[j * p + k] = v;
                gram[k * p + j] = v;
            }
        }
        Sweep { cols, gram, wx, g, s: w.iter().zip(r).map(|(a, b)| a * b).sum(), sum_w: w.iter().sum(), nf, l1, l2 }
    }

    /// One cyclic pass over `support` and the intercept; returns the largest update.
    fn pass(&mut self, support: &[usize], b0: &mut f64, beta: &mut [f64]) -> f64 {
        let p = beta.len();
        let mut max_change: f64 = 0.0;
        for &j in support {
            let old = beta[j];
            let xw2 = self.gram[j * p + j];
            let new = soft_threshold(self.g[j] + xw2 * old, self.l1) / (xw2 + self.l2);
            if new != old {
                let d = new - old;
                let row = &self.gram[j * p..(j + 1) * p];
                for &k in self.cols {
                    self.g[k] -= d * row[k];
                }
                self.s -= d * self.nf * self.wx[j];
                beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        let shift = self.s / self.sum_w;
        if shift != 0.0 {
            for &k in self.cols {
                self.g[k] -= shift * self.wx[k];
            }
            self.s -= shift * self.sum_w;
            *b0 += shift;
            max_change = max_change.max(shift.abs());
        }
        max_change
    }
}

fn solve(std: &Standardized, y: &[f64], alpha: f64, lambda: f64, b0: &mut f64, beta: &mut [f64]) -> FitTrace {
    let n = y.len();
    let p = beta.len();
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    let mut trace = FitTrace::default();

    let mut eta = linear(std, *b0, beta, n);
    let mut obj = objective(y, &eta, beta, alpha, lambda);
    trace.objective.push(obj);

    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];
    while trace.sweeps < MAX_SWEEPS {
        // Quadratic approximation at the current iterate.
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            w[i] = (pi * (1.0 - pi)).max(1e-5);
            r[i] = (y[i] - pi) / w[i];
        }
        let mut nb0 = *b0;
        let mut nbeta = beta.to_vec();
        let all: Vec<usize> = (0..p).filter(|j| std.active[*j]).collect();
        let mut cd = Sweep::new(std, &all, &w, &r, l1, l2);
        loop {
            trace.sweeps += 1;
            if cd.pass(&all, &mut nb0, &mut nbeta) < COEF_TOLERANCE || trace.sweeps >= MAX_SWEEPS {
                break;
            }
            // Cycle over the nonzero set until it settles, then recheck everything.
            let support: Vec<usize> = all.iter().copied().filter(|j| nbeta[*j] != 0.0).collect();
            while trace.sweeps < MAX_SWEEPS {
                trace.sweeps += 1;
                if cd.pass(&support, &mut nb0, &mut nbeta) < COEF_TOLERANCE {
                    break;
                }
            }
        }

        // Backtrack along the proposed direction.
        let d0 = nb0 - *b0;
        let dbeta: Vec<f64> = nbeta.iter().zip(beta.iter()).map(|(a, b)| a - b).collect();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cb0 = *b0 + step * d0;
            let cbeta: Vec<f64> = beta.iter().zip(&dbeta).map(|(b, d)| b + step * d).collect();
            let ceta = linear(std, cb0, &cbeta, n);
            let cobj = objective(y, &ceta, &cbeta, alpha, lambda);
            if cobj <= obj {
                accepted = Some((cb0, cbeta, ceta, cobj));
                break;
            }
            step *= 0.5;
        }
        let Some((cb0, cbeta, ceta, cobj)) = accepted else {
            trace.converged = true;
            break;
        };
        let change = cbeta
            .iter()
            .zip(beta.iter())
            .map(|(a, b)| (a - b).abs())
            .fold((cb0 - *b0).abs(), f64::max);
        *b0 = cb0;
        beta.copy_from_slice(&cbeta);
        eta = ceta;
        obj = cobj;
        trace.objective.push(obj);
        if change < COEF_TOLERANCE {
            trace.converged = true;
            break;
        }
    }
    trace
}
