//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use prefelicit::model::{all_pairs, Design, PerformanceTable, PreferenceSet, PreferenceStatement};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::function::gamma::{digamma, ln_gamma};

pub const GRID_POINTS: usize = 201;

/// Trapezoid nodes and normalized posterior weights over the 1-simplex
/// `u = (t, 1 − t)` under a flat prior.
pub fn grid_posterior(design: &Design, q: &PreferenceSet) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(design.dimension(), 2);
    let h = 1.0 / (GRID_POINTS - 1) as f64;
    let nodes: Vec<f64> = (0..GRID_POINTS).map(|k| k as f64 * h).collect();
    let logs: Vec<f64> = nodes
        .iter()
        .map(|&t| bt_log_likelihood(design, q, &[t, 1.0 - t]))
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let end = if k == 0 || k == GRID_POINTS - 1 { 0.5 } else { 1.0 };
            end * h * (l - max).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    (nodes, w)
}

/// `log ∫ p(Q|u) du` over the 1-simplex by trapezoid quadrature.
pub fn grid_log_evidence(design: &Design, q: &PreferenceSet) -> f64 {
    let n = 4001;
    let h = 1.0 / (n - 1) as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let t = k as f64 * h;
        let end = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += end * h * bt_log_likelihood(design, q, &[t, 1.0 - t]).exp();
    }
    acc.ln()
}

/// Grid posterior probability of `U(a_i) > U(a_j)`, ties split.
pub fn grid_predictive(design: &Design, q: &PreferenceSet, i: usize, j: usize) -> f64 {
    let (nodes, w) = grid_posterior(design, q);
    nodes
        .iter()
        .zip(&w)
        .map(|(&t, &wk)| {
            let u = [t, 1.0 - t];
            let (a, b) = (dot(&u, design.vector(i)), dot(&u, design.vector(j)));
            wk * if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            }
        })
        .sum()
}

/// Plain logistic-form Bradley-Terry log-likelihood.
pub fn bt_log_likelihood(design: &Design, q: &PreferenceSet, u: &[f64]) -> f64 {
    q.iter()
        .map(|s| {
            let a = dot(u, design.vector(s.preferred));
            let b = dot(u, design.vector(s.other));
            a - (a.exp() + b.exp()).ln()
        })
        .sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `KL(Dir(θ) ‖ Dir(α))` in closed form.
pub fn dirichlet_kl(theta: &[f64], alpha: &[f64]) -> f64 {
    let t0: f64 = theta.iter().sum();
    let a0: f64 = alpha.iter().sum();
    let mut kl = ln_gamma(t0) - ln_gamma(a0);
    for (&t, &a) in theta.iter().zip(alpha) {
        kl += ln_gamma(a) - ln_gamma(t) + (t - a) * (digamma(t) - digamma(t0));
    }
    kl
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

pub fn random_table<R: Rng>(rng: &mut R, n: usize, m: usize, subintervals: usize) -> PerformanceTable {
    let rows = (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    PerformanceTable::from_unit_rows(rows, subintervals).unwrap()
}

/// `count` distinct pairs answered consistently with `u_true`.
pub fn consistent_answers<R: Rng>(rng: &mut R, design: &Design, u_true: &[f64], count: usize) -> PreferenceSet {
    let mut pairs = all_pairs(design.n_alternatives());
    pairs.shuffle(rng);
    let mut q = PreferenceSet::new();
    for p in pairs.into_iter().take(count) {
        let s = if design.value(u_true, p.first) >= design.value(u_true, p.second) {
            PreferenceStatement::new(p.first, p.second)
        } else {
            PreferenceStatement::new(p.second, p.first)
        };
        q.push(s.unwrap()).unwrap();
    }
    q
}

/// Uniform point on the simplex by normalized exponentials.
pub fn uniform_simplex<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}
