//! C-support vector classification with an RBF kernel, trained by sequential
//! minimal optimization using second-order working-set selection.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_C: f64 = 1.0;
pub const KKT_TOLERANCE: f64 = 1e-3;
/// Stopping tolerance used by `svm_train`; tight enough that the decision
/// function no longer depends on the optimization path.
pub const TRAIN_TOLERANCE: f64 = 1e-9;
const TAU: f64 = 1e-12;

/// Per-feature z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Solution of `min 1/2 a'Qa - e'a` s.t. `0 <= a <= C`, `y'a = 0`, with
/// `Q_ij = y_i y_j K_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Intercept of the decision function `sum_i a_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    /// Dual objective in maximization form, `e'a - 1/2 a'Qa`.
    pub objective: f64,
    pub iterations: usize,
}

/// SMO on a precomputed kernel matrix. `y` holds `+1.0` / `-1.0`.
pub fn smo_solve(kernel: &[Vec<f64>], y: &[f64], c: f64, tol: f64) -> Result<SmoSolution> {
    let n = y.len();
    if kernel.len() != n || kernel.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!("kernel must be {n}x{n}")));
    }
    if !(c > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("C and tolerance must be positive".into()));
    }
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = 10_000_000usize.max(100 * n);
    let mut iterations = 0;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] >= g_max {
                if -y[t] * grad[t] > g_max || i == usize::MAX {
                    i = t;
                }
                g_max = -y[t] * grad[t];
            }
        }
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            if i != usize::MAX && v < g_max {
                let b = g_max - v;
                let a = kernel[i][i] + kernel[t][t] - 2.0 * kernel[i][t];
                let score = -(b * b) / if a > 0.0 { a } else { TAU };
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < tol {
            break;
        }
        iterations += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let quad = {
            let a = kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j];
            if a > 0.0 {
                a
            } else {
                TAU
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }
    if iterations >= max_iter {
        log::warn!("SMO stopped at the iteration cap ({max_iter}) before reaching tolerance {tol}");
    }

    // Intercept: average over free vectors, else midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };
    let objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(SmoSolution { alpha, bias: -rho, objective, iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Standardized support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector; `|coef| <= C`.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub standardizer: Standardizer,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn decision_value(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!("row has {} features, model expects {}", row.len(), self.dim())));
        }
        let z = self.standardizer.apply(row);
        Ok(self.support_vectors.iter().zip(&self.dual_coef).map(|(sv, c)| c * rbf(sv, &z, self.gamma)).sum::<f64>()
            + self.bias)
    }
}

fn check_rows(rows: &[Vec<f64>], labels: &[bool]) -> Result<usize> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::InvalidArgument("need one label per row and at least one row".into()));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("rows must share a non-zero dimension".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Data("SVM training needs both classes".into()));
    }
    Ok(d)
}

/// Trains on internally standardized rows. `gamma = None` uses
/// `1 / n_features`.
pub fn svm_train(rows: &[Vec<f64>], labels: &[bool], c: f64, gamma: Option<f64>) -> Result<SvmModel> {
    let d = check_rows(rows, labels)?;
    let gamma = gamma.unwrap_or(1.0 / d as f64);
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let standardizer = Standardizer::fit(rows);
    let z: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.apply(r)).collect();
    let kernel: Vec<Vec<f64>> = z.iter().map(|a| z.iter().map(|b| rbf(a, b, gamma)).collect()).collect();

    // Solved with the first row's label mapped to +1.
    let orientation = if labels[0] { 1.0 } else { -1.0 };
    let y: Vec<f64> = labels.iter().map(|&l| orientation * if l { 1.0 } else { -1.0 }).collect();
    let sol = smo_solve(&kernel, &y, c, TRAIN_TOLERANCE)?;

    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (idx, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(z[idx].clone());
            dual_coef.push(orientation * a * y[idx]);
        }
    }
    Ok(SvmModel { support_vectors, dual_coef, bias: orientation * sol.bias, gamma, c, standardizer })
}

/// Predicted label (a decision value of exactly 0 counts as positive) and the
/// decision value.
pub fn svm_predict(model: &SvmModel, row: &[f64]) -> Result<(bool, f64)> {
    let v = model.decision_value(row)?;
    Ok((v >= 0.0, v))
}

/// Stratified, shuffled k-fold split; fold ids per row.
fn stratified_folds(labels: &[bool], k: usize, seed: u64, attempt: u64) -> Vec<usize> {
    let mut rng = rng::stream(rng::derive_seed(seed, "kfold"), attempt);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0; labels.len()];
    for (slot, &idx) in pos.iter().chain(&neg).enumerate() {
        fold_of[idx] = slot % k;
    }
    fold_of
}

/// Mean per-fold accuracy of stratified k-fold cross-validation.
pub fn kfold_accuracy(rows: &[Vec<f64>], labels: &[bool], k: usize, seed: u64, c: f64) -> Result<f64> {
    check_rows(rows, labels)?;
    if k < 2 || rows.len() < k {
        return Err(Error::InvalidArgument(format!("need 2 <= k <= rows ({}), got k = {k}", rows.len())));
    }
    const MAX_ATTEMPTS: u64 = 16;
    let fold_of = (0..MAX_ATTEMPTS)
        .map(|attempt| stratified_folds(labels, k, seed, attempt))
        .find(|fold_of| {
            (0..k).all(|f| {
                let train = (0..labels.len()).filter(|&i| fold_of[i] != f);
                let (mut p, mut n) = (false, false);
                for i in train {
                    p |= labels[i];
                    n |= !labels[i];
                }
                p && n
            })
        })
        .ok_or_else(|| Error::Data("could not form folds with both classes in every training split".into()))?;

    let mut total = 0.0;
    for f in 0..k {
        let (mut train_x, mut train_y, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..rows.len() {
            if fold_of[i] == f {
                test.push(i);
            } else {
                train_x.push(rows[i].clone());
                train_y.push(labels[i]);
            }
        }
        let model = svm_train(&train_x, &train_y, c, None)?;
        let mut correct = 0usize;
        for &i in &test {
            if svm_predict(&model, &rows[i])?.0 == labels[i] {
                correct += 1;
            }
        }
        total += correct as f64 / test.len() as f64;
    }
    Ok(total / k as f64)
}
