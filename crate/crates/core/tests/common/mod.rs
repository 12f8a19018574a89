//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use pulse_affect::autodiff::Tensor;
use pulse_affect::rng;
use rand::Rng;

/// Same-padded cross-correlation by direct summation. `x: [L, C]`,
/// `w: [W, C, F]`, `b: [F]`; output tap `t` reads `x[t + i - W/2]`.
pub fn conv1d_direct(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (l, c) = (x.shape()[0], x.shape()[1]);
    let (width, f) = (w.shape()[0], w.shape()[2]);
    let at = |t: usize, ch: usize| x.data()[t * c + ch];
    let tap = |i: usize, ch: usize, fo: usize| w.data()[(i * c + ch) * f + fo];
    let mut out = Vec::with_capacity(l * f);
    for t in 0..l {
        for fo in 0..f {
            let mut acc = b.data()[fo];
            for i in 0..width {
                let Some(src) = (t + i).checked_sub(width / 2) else { continue };
                if src >= l {
                    continue;
                }
                for ch in 0..c {
                    acc += at(src, ch) * tap(i, ch, fo);
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Sample entropy by materialising every template and counting ordered
/// matching pairs under the Chebyshev distance.
pub fn sample_entropy_by_templates(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n_templates = x.len().checked_sub(m)?;
    let templates = |len: usize| -> Vec<&[f64]> { (0..n_templates).map(|i| &x[i..i + len]).collect() };
    let count = |ts: &[&[f64]]| -> usize {
        let mut hits = 0;
        for (i, a) in ts.iter().enumerate() {
            for (j, b) in ts.iter().enumerate() {
                let d = a.iter().zip(b.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                if i != j && d <= r {
                    hits += 1;
                }
            }
        }
        hits
    };
    let b = count(&templates(m));
    let a = count(&templates(m + 1));
    (a > 0 && b > 0).then(|| -((a as f64) / (b as f64)).ln())
}

/// Exact two-sided Mann-Whitney p-value by enumerating all group assignments
/// of the pooled sample. Ties get average ranks.
pub fn mann_whitney_exact(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let ranks: Vec<f64> = pooled
        .iter()
        .map(|v| {
            let below = pooled.iter().filter(|u| *u < v).count() as f64;
            let equal = pooled.iter().filter(|u| *u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let n1 = x.len();
    let centre = (n1 * y.len()) as f64 / 2.0;
    let u = |members: &[usize]| members.iter().map(|&i| ranks[i]).sum::<f64>() - (n1 * (n1 + 1)) as f64 / 2.0;
    let observed = (u(&(0..n1).collect::<Vec<_>>()) - centre).abs();

    let (mut extreme, mut total) = (0u64, 0u64);
    let mut pick: Vec<usize> = (0..n1).collect();
    loop {
        total += 1;
        if (u(&pick) - centre).abs() >= observed - 1e-9 {
            extreme += 1;
        }
        // Next n1-combination of 0..n in lexicographic order.
        let Some(i) = (0..n1).rev().find(|&i| pick[i] < n - n1 + i) else { break };
        pick[i] += 1;
        for k in i + 1..n1 {
            pick[k] = pick[k - 1] + 1;
        }
    }
    extreme as f64 / total as f64
}

/// Dual objective `e'a - a'Qa/2` with `Q_ij = y_i y_j K_ij`.
pub fn svm_dual(alpha: &[f64], y: &[f64], kernel: &[Vec<f64>]) -> f64 {
    let mut quad = 0.0;
    for i in 0..alpha.len() {
        for j in 0..alpha.len() {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Best dual objective over a grid for a 4-point problem with labels
/// `[+1, +1, -1, -1]`. The equality constraint gives
/// `a3 = a0 + a1 - a2`, leaving a grid over `(a0, a1)` with an inner grid
/// over `a2`; the grid is refined three times around the incumbent.
pub fn svm_dual_grid_4(kernel: &[Vec<f64>], c: f64, steps: usize) -> f64 {
    let y = [1.0, 1.0, -1.0, -1.0];
    let mut best = (f64::NEG_INFINITY, [0.0; 4]);
    let mut lo = [0.0; 3];
    let mut width = c;
    for _round in 0..4 {
        let h = width / steps as f64;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let a0 = lo[0] + i as f64 * h;
                    let a1 = lo[1] + j as f64 * h;
                    let a2 = lo[2] + k as f64 * h;
                    let a3 = a0 + a1 - a2;
                    let a = [a0, a1, a2, a3];
                    if a.iter().all(|v| (0.0..=c).contains(v)) {
                        let obj = svm_dual(&a, &y, kernel);
                        if obj > best.0 {
                            best = (obj, a);
                        }
                    }
                }
            }
        }
        width /= 4.0;
        for (l, a) in lo.iter_mut().zip(best.1) {
            *l = (a - width / 2.0).clamp(0.0, c - width);
        }
    }
    best.0
}

/// Beat times with i.i.d. uniform intervals in `ibi_range`, covering
/// `(0, duration_s)`.
pub fn random_beats(duration_s: f64, ibi_range: (f64, f64), seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0);
    let mut t = r.random_range(ibi_range.0..ibi_range.1);
    let mut beats = Vec::new();
    while t < duration_s {
        beats.push(t);
        t += r.random_range(ibi_range.0..ibi_range.1);
    }
    beats
}

/// Fraction of true beats with a detection within `tolerance_s`, each
/// detection used at most once.
pub fn sensitivity(truth: &[f64], detected: &[f64], tolerance_s: f64) -> f64 {
    let mut used = vec![false; detected.len()];
    let mut hits = 0;
    for &t in truth {
        let best = detected
            .iter()
            .enumerate()
            .filter(|(k, d)| !used[*k] && (*d - t).abs() <= tolerance_s)
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()));
        if let Some((k, _)) = best {
            used[k] = true;
            hits += 1;
        }
    }
    hits as f64 / truth.len() as f64
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, 0);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}
