//! Independent numerics for checking the PCA code: plain loops and a cyclic
//! Jacobi eigensolver, no linear-algebra crate.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Mat = Vec<Vec<f64>>;

pub fn covariance(x: &Mat) -> (Vec<f64>, Mat) {
    let n = x.len();
    let d = x[0].len();
    let mut mean = vec![0.0; d];
    for row in x {
        for j in 0..d {
            mean[j] += row[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for row in x {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[a][b] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a][b] /= n as f64 - 1.0;
            cov[b][a] = cov[a][b];
        }
    }
    (mean, cov)
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
/// Vectors are returned as rows.
pub fn jacobi_eigen(mut a: Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|x, y| a[*y][*y].total_cmp(&a[*x][*x]));
    let vals = order.iter().map(|i| a[*i][*i]).collect();
    let vecs = order.iter().map(|i| (0..n).map(|k| v[k][*i]).collect()).collect();
    (vals, vecs)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Align `v` to `reference` by sign, then return the max abs difference.
pub fn aligned_diff(v: &[f64], reference: &[f64]) -> f64 {
    let s = if dot(v, reference) < 0.0 { -1.0 } else { 1.0 };
    v.iter().zip(reference).map(|(x, y)| (s * x - y).abs()).fold(0.0, f64::max)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Mat {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| (0..d).map(|_| normal.sample(rng)).collect()).collect()
}

/// Gaussian rows whose column scales decay, so the leading subspace is well
/// separated from the rest.
pub fn anisotropic(seed: u64, n: usize, d: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let scales: Vec<f64> = (0..d).map(|j| 10.0 * 0.8f64.powi(j as i32)).collect();
    let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    (0..n)
        .map(|_| (0..d).map(|j| shift[j] + scales[j] * normal.sample(&mut rng)).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian rows with `k` strong directions (scales 10 down to 4) over unit
/// noise: random data whose top-k subspace is identifiable.
pub fn spiked(seed: u64, n: usize, d: usize, k: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let scales: Vec<f64> = (0..d)
        .map(|j| if j < k { 10.0 - 6.0 * j as f64 / (k.max(2) - 1) as f64 } else { 1.0 })
        .collect();
    (0..n)
        .map(|_| (0..d).map(|j| scales[j] * normal.sample(&mut rng)).collect())
        .collect()
}
