//! Linear soft-margin SVM (dual coordinate descent) and detector metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainMeta {
    /// Epochs run.
    pub iterations: usize,
    pub converged: bool,
    /// Largest projected-gradient magnitude at the returned solution.
    pub max_violation: f64,
    /// Primal minus dual objective at the returned solution.
    pub duality_gap: f64,
    /// Primal objective after each epoch.
    pub objective_trace: Vec<f64>,
    /// Dual objective after each epoch; never decreases.
    pub dual_trace: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub meta: TrainMeta,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

fn check_labels(y: &[i8]) -> Result<()> {
    if let Some(v) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::Label(format!("labels must be +1 or -1, got {v}")));
    }
    Ok(())
}

/// Trains `min ½‖(w, b)‖² + C Σ max(0, 1 - y_i (w·x_i + b))`.
///
/// The bias is an extra weight on a constant feature of 1. Each epoch visits
/// the dual variables in a freshly shuffled order; training stops once the
/// largest projected-gradient violation at the current iterate is below
/// `tol`, or after `max_iter` epochs.
pub fn svm_train(x: &Matrix, y: &[i8], params: &SvmParams) -> Result<SvmModel> {
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} samples", y.len())));
    }
    check_labels(y)?;
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::Label("training needs both +1 and -1 samples".into()));
    }
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(Error::Param(format!("C must be positive, got {}", params.c)));
    }
    if !(params.tol > 0.0) {
        return Err(Error::Param(format!("tol must be positive, got {}", params.tol)));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }

    let c = params.c;
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let q_diag: Vec<f64> = x.row_iter().map(|r| dot(r, r) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut meta = TrainMeta {
        seed: params.seed,
        ..TrainMeta::default()
    };

    let gradient = |w: &[f64], b: f64, i: usize| yf[i] * (dot(w, x.row(i)) + b) - 1.0;
    let projected = |g: f64, a: f64| {
        if a <= 0.0 {
            g.min(0.0)
        } else if a >= c {
            g.max(0.0)
        } else {
            g
        }
    };

    while meta.iterations < params.max_iter {
        meta.iterations += 1;
        order.shuffle(&mut rng);
        let mut epoch_violation = 0.0f64;
        for &i in &order {
            let g = gradient(&w, b, i);
            let pg = projected(g, alpha[i]);
            epoch_violation = epoch_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * yf[i];
                if step != 0.0 {
                    for (wj, &xj) in w.iter_mut().zip(x.row(i)) {
                        *wj += step * xj;
                    }
                    b += step;
                }
            }
        }
        meta.objective_trace.push(primal(&w, b, x, &yf, c));
        meta.dual_trace.push(dual(&alpha, &w, b));
        if epoch_violation < params.tol {
            let exact = (0..n)
                .map(|i| projected(gradient(&w, b, i), alpha[i]).abs())
                .fold(0.0, f64::max);
            if exact < params.tol {
                meta.converged = true;
                break;
            }
        }
    }
    meta.max_violation = (0..n)
        .map(|i| projected(gradient(&w, b, i), alpha[i]).abs())
        .fold(0.0, f64::max);
    meta.duality_gap = primal(&w, b, x, &yf, c) - dual(&alpha, &w, b);
    Ok(SvmModel { w, b, c, meta })
}

fn dual(alpha: &[f64], w: &[f64], b: f64) -> f64 {
    alpha.iter().sum::<f64>() - 0.5 * (dot(w, w) + b * b)
}

fn primal(w: &[f64], b: f64, x: &Matrix, y: &[f64], c: f64) -> f64 {
    let hinge: f64 = x
        .row_iter()
        .zip(y)
        .map(|(r, &yi)| (1.0 - yi * (dot(w, r) + b)).max(0.0))
        .sum();
    0.5 * (dot(w, w) + b * b) + c * hinge
}

pub fn svm_scores(model: &SvmModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.dim() {
        return Err(Error::Shape(format!(
            "samples have {} features, model expects {}",
            x.cols(),
            model.dim()
        )));
    }
    Ok(x.row_iter().map(|r| model.score(r)).collect())
}

/// `sign(score)`, with a score of exactly zero mapped to `+1`.
pub fn label_of(score: f64) -> i8 {
    if score < 0.0 {
        -1
    } else {
        1
    }
}

pub fn svm_predict(model: &SvmModel, x: &Matrix) -> Result<Vec<i8>> {
    Ok(svm_scores(model, x)?.into_iter().map(label_of).collect())
}

pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Area under the ROC curve from the Mann-Whitney rank sum with midranks
/// for tied scores.
pub fn auroc(scores: &[f64], truth: &[i8]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    check_labels(truth)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUROC needs both positive and negative samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end+1 share their mean
        let midrank = (start + end + 2) as f64 / 2.0;
        for &i in &order[start..=end] {
            if truth[i] == 1 {
                rank_sum += midrank;
            }
        }
        start = end + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
