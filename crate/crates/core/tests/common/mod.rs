#![allow(dead_code)]

use std::sync::Arc;

use lassodf::dataset::{standardize, RawDataset, StandardizedDataset};
use lassodf::path::Design;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vector(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || gaussian(rng))
}

pub fn gaussian_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, p), || gaussian(rng))
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Standardized Gaussian design with a sparse signal plus unit noise.
pub fn random_dataset_sized(n: usize, p: usize, seed: u64) -> StandardizedDataset {
    let mut r = rng(seed);
    let x = gaussian_matrix(n, p, &mut r);
    let beta = Array1::from_shape_simple_fn(p, || {
        if r.random_bool(0.6) {
            3.0 * gaussian(&mut r)
        } else {
            0.0
        }
    });
    let y = x.dot(&beta) + gaussian_vector(n, &mut r);
    standardize(&RawDataset::new(x, y, names(p)).unwrap()).unwrap()
}

/// Random size with `p ≤ max_p` and `n > p + 2`.
pub fn random_dataset(seed: u64, max_p: usize) -> StandardizedDataset {
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let p = r.random_range(1..=max_p);
    let n = r.random_range(p + 3..=p + 30);
    random_dataset_sized(n, p, seed)
}

/// `p` orthonormal columns in `R^n`, each orthogonal to the ones vector.
pub fn orthonormal_design(n: usize, p: usize, seed: u64) -> Arc<Design> {
    let mut r = rng(seed);
    let mut basis: Vec<Array1<f64>> = vec![Array1::from_elem(n, 1.0 / (n as f64).sqrt())];
    while basis.len() < p + 1 {
        let mut v = gaussian_vector(n, &mut r);
        for _ in 0..2 {
            for b in &basis {
                v = &v - &(b * b.dot(&v));
            }
        }
        let norm = v.dot(&v).sqrt();
        basis.push(v / norm);
    }
    let cols: Vec<_> = basis[1..].iter().map(|c| c.view().insert_axis(Axis(1))).collect();
    let x = ndarray::concatenate(Axis(1), &cols).unwrap();
    Arc::new(Design::new(x, names(p)))
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs())).unwrap();
        if piv != k {
            for c in 0..n {
                a.swap([k, c], [piv, c]);
            }
            b.swap(k, piv);
        }
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for c in k..n {
                a[[i, c]] -= f * a[[k, c]];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = Array1::zeros(n);
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[[k, c]] * x[c]).sum();
        x[k] = (b[k] - s) / a[[k, k]];
    }
    x
}

pub fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
