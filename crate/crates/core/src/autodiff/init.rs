//! Weight initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use super::tensor::Tensor;

/// I.i.d. `N(0, 2 / fan_in)`.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    assert!(fan_in >= 1, "fan_in must be positive");
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

/// I.i.d. uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

/// `[rows, cols]` with orthonormal rows (when `rows <= cols`) or orthonormal
/// columns, from Gram-Schmidt on a Gaussian matrix.
pub fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let (k, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        // Two passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut data = vec![0.0; rows * cols];
    for (i, b) in basis.iter().enumerate() {
        for (j, &v) in b.iter().enumerate() {
            if rows <= cols {
                data[i * cols + j] = v;
            } else {
                data[j * cols + i] = v;
            }
        }
    }
    Tensor::new(vec![rows, cols], data).expect("shape")
}
