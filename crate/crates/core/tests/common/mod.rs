//! Oracles shared by the integration and acceptance tests. Everything here
//! is coded directly from the definitions, without going through the
//! library's softmax or estimators.

#![allow(dead_code)]

pub const FD_STEP: f64 = 1e-5;

/// `P(i) = 1 / Σ_j exp(θ_j − θ_i)`.
pub fn prob(theta: &[f64], i: usize) -> f64 {
    1.0 / theta.iter().map(|t| (t - theta[i]).exp()).sum::<f64>()
}

pub fn probs(theta: &[f64]) -> Vec<f64> {
    (0..theta.len()).map(|i| prob(theta, i)).collect()
}

pub fn expected_reward(theta: &[f64], r: &[f64]) -> f64 {
    (0..theta.len()).map(|i| prob(theta, i) * r[i]).sum()
}

/// `Σ_{y∈S} P(y)^α r(y) / Σ_{y∈S} P(y)^α` over distinct sampled tokens.
pub fn rtilde(theta: &[f64], support: &[usize], r: &[f64], alpha: f64) -> f64 {
    let w: Vec<f64> = support.iter().map(|&y| prob(theta, y).powf(alpha)).collect();
    let z: f64 = w.iter().sum();
    support.iter().zip(&w).map(|(&y, w)| w * r[y]).sum::<f64>() / z
}

pub fn distinct(tokens: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for &t in tokens {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

pub fn central_difference(theta: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[j] += FD_STEP;
            down[j] -= FD_STEP;
            (f(&up) - f(&down)) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact expectation of the REINFORCE estimator `(1/k) Σ (r(y_i) − b)(e_{y_i} − P)`
/// by enumerating all `n^k` ordered batches.
pub fn reinforce_expectation(theta: &[f64], r: &[f64], b: f64, k: usize) -> Vec<f64> {
    let n = theta.len();
    let p = probs(theta);
    let mut mean = vec![0.0; n];
    let mut idx = vec![0usize; k];
    loop {
        let weight: f64 = idx.iter().map(|&i| p[i]).product();
        for &y in &idx {
            for j in 0..n {
                let score = if j == y { 1.0 - p[j] } else { -p[j] };
                mean[j] += weight * (r[y] - b) * score / k as f64;
            }
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return mean;
            }
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// `P(y)(r(y) − R)`.
pub fn exact_gradient(theta: &[f64], r: &[f64]) -> Vec<f64> {
    let p = probs(theta);
    let big_r: f64 = p.iter().zip(r).map(|(p, r)| p * r).sum();
    p.iter().zip(r).map(|(p, r)| p * (r - big_r)).collect()
}

/// Mode probability after one REINFORCE step on token `y`:
/// `θ' = θ + lr (r(y) − b)(e_y − P)`.
pub fn mode_after_step(theta: &[f64], y: usize, ry: f64, b: f64, lr: f64) -> f64 {
    let p = probs(theta);
    let next: Vec<f64> = theta
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let score = if j == y { 1.0 - p[j] } else { -p[j] };
            t + lr * (ry - b) * score
        })
        .collect();
    probs(&next).into_iter().fold(0.0, f64::max)
}
