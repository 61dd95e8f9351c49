//! Reference implementations used to check the library against.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;

/// O(n^2) opposite-arm neighbors ordered by (distance, index).
pub fn brute_knn(points: &[[f64; 2]], z: &[u8], k: usize) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..points.len())
                .filter(|&j| z[j] != z[i])
                .map(|j| {
                    let de = points[i][0] - points[j][0];
                    let dp = points[i][1] - points[j][1];
                    ((de * de + dp * dp).sqrt(), j)
                })
                .collect();
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|c| c.1).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleNode {
    pub n: usize,
    pub effect: f64,
    pub split: Option<(usize, f64)>,
}

fn sse_of(y: &[f64], idx: &[usize]) -> (f64, f64) {
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    (mean, idx.iter().map(|&i| (y[i] - mean).powi(2)).sum())
}

/// Exhaustive greedy CART: at each node try every midpoint on each axis,
/// keep the first strictly best split, recurse left then right.
pub fn greedy_tree(points: &[[f64; 2]], y: &[f64], min_node: usize, cp_floor: f64) -> Vec<OracleNode> {
    let all: Vec<usize> = (0..y.len()).collect();
    let root_sse = sse_of(y, &all).1;
    let mut out = Vec::new();
    grow(points, y, all, min_node, cp_floor * root_sse, &mut out);
    out
}

fn grow(points: &[[f64; 2]], y: &[f64], idx: Vec<usize>, min_node: usize, floor: f64, out: &mut Vec<OracleNode>) {
    let (mean, sse) = sse_of(y, &idx);
    let pos = out.len();
    out.push(OracleNode { n: idx.len(), effect: mean, split: None });
    if sse <= 0.0 {
        return;
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for axis in 0..2 {
        let mut vals: Vec<f64> = idx.iter().map(|&i| points[i][axis]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| points[i][axis] <= t);
            if l.len() < min_node || r.len() < min_node {
                continue;
            }
            let gain = sse - sse_of(y, &l).1 - sse_of(y, &r).1;
            if best.is_none_or(|b| gain > b.0) {
                best = Some((gain, axis, t));
            }
        }
    }
    let Some((gain, axis, t)) = best else { return };
    if !(gain > 0.0) || gain < floor {
        return;
    }
    out[pos].split = Some((axis, t));
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| points[i][axis] <= t);
    grow(points, y, l, min_node, floor, out);
    grow(points, y, r, min_node, floor, out);
}

/// Sum-scale logistic negative log-likelihood gradient at `[b0, b...]`.
pub fn logistic_gradient(x: &DMatrix<f64>, z: &[f64], w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for i in 0..x.nrows() {
        let eta = w[0] + (0..x.ncols()).map(|j| x[(i, j)] * w[j + 1]).sum::<f64>();
        let r = 1.0 / (1.0 + (-eta).exp()) - z[i];
        g[0] += r;
        for j in 0..x.ncols() {
            g[j + 1] += r * x[(i, j)];
        }
    }
    g
}

/// Columns centered and scaled to unit population variance.
pub fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut s = x.clone();
    for j in 0..x.ncols() {
        let mean = x.column(j).sum() / n;
        let sd = (x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        for i in 0..x.nrows() {
            s[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
    s
}

/// Largest violation of the lasso optimality conditions on the
/// standardized scale. `resid_grad(j)` is the smooth-loss derivative
/// `-(1/n) x_j' (y - mu)` and `beta` the standardized coefficients.
pub fn kkt_violation(xs: &DMatrix<f64>, y: &[f64], mu: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = xs.nrows() as f64;
    let mut worst: f64 = 0.0;
    // intercept condition
    let r0: f64 = (0..xs.nrows()).map(|i| y[i] - mu[i]).sum::<f64>() / n;
    worst = worst.max(r0.abs());
    for j in 0..xs.ncols() {
        let c: f64 = (0..xs.nrows()).map(|i| xs[(i, j)] * (y[i] - mu[i])).sum::<f64>() / n;
        let v = if beta[j] == 0.0 {
            (c.abs() - lambda).max(0.0)
        } else {
            (c - lambda * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut a = w.to_vec();
            let mut b = w.to_vec();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random::<f64>())
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
