//! L2-regularized logistic regression by full-batch damped Newton steps.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

use super::check_training_set;

pub const C_GRID: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iters: usize,
    /// Stop once the gradient infinity-norm falls below this.
    pub tol: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor while backtracking.
    pub shrink: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            c: 1.0,
            max_iters: 5000,
            tol: 1e-6,
            armijo: 1e-4,
            shrink: 0.5,
        }
    }
}

impl LrConfig {
    pub fn with_c(c: f64) -> Self {
        LrConfig {
            c,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + math::exp(-z))
    } else {
        let e = math::exp(z);
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + math::ln_1p(math::exp(-z))
    } else {
        math::ln_1p(math::exp(z))
    }
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            weights: alloc::vec![0.0; dim],
            bias: 0.0,
            iterations: 0,
            converged: false,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn confidence(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

/// Mean log-loss plus `|w|^2 / (2 C n)`; the bias is not penalized.
/// Parameters are packed as `[w..., b]`.
pub fn objective<X: AsRef<[f64]>>(theta: &[f64], x: &[X], y: &[bool], c: f64) -> f64 {
    let d = theta.len() - 1;
    let n = x.len() as f64;
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = dot(&theta[..d], xi.as_ref()) + theta[d];
        loss += softplus(z) - if yi { z } else { 0.0 };
    }
    let reg = theta[..d].iter().map(|w| w * w).sum::<f64>() / (2.0 * c * n);
    loss / n + reg
}

/// Objective value and gradient with respect to `[w..., b]`.
pub fn objective_grad<X: AsRef<[f64]>>(
    theta: &[f64],
    x: &[X],
    y: &[bool],
    c: f64,
) -> (f64, Vec<f64>) {
    let d = theta.len() - 1;
    let n = x.len() as f64;
    let mut grad = alloc::vec![0.0; d + 1];
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let xi = xi.as_ref();
        let z = dot(&theta[..d], xi) + theta[d];
        let t = if yi { 1.0 } else { 0.0 };
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for j in 0..d {
            grad[j] += r * xi[j];
        }
        grad[d] += r;
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    let mut reg = 0.0;
    for j in 0..d {
        grad[j] += theta[j] / (c * n);
        reg += theta[j] * theta[j];
    }
    (loss / n + reg / (2.0 * c * n), grad)
}

/// Solves `H d = -g` for the Hessian of [`objective`]; falls back to `-g`
/// if the factorization fails.
fn newton_direction<X: AsRef<[f64]>>(theta: &[f64], x: &[X], c: f64, g: &[f64]) -> Vec<f64> {
    let k = theta.len();
    let d = k - 1;
    let n = x.len() as f64;
    let mut h = alloc::vec![0.0; k * k];
    let mut xt = alloc::vec![1.0; k];
    for xi in x {
        let xi = xi.as_ref();
        xt[..d].copy_from_slice(xi);
        let p = sigmoid(dot(&theta[..d], xi) + theta[d]);
        let s = p * (1.0 - p);
        for a in 0..k {
            let sa = s * xt[a];
            for b in 0..=a {
                h[a * k + b] += sa * xt[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..=a {
            h[a * k + b] /= n;
        }
        h[a * k + a] += if a < d { 1.0 / (c * n) } else { 0.0 } + 1e-12;
    }
    match cholesky_solve(&mut h, k, g) {
        Some(mut v) => {
            v.iter_mut().for_each(|e| *e = -*e);
            v
        }
        None => g.iter().map(|e| -e).collect(),
    }
}

/// In-place Cholesky of the lower triangle of `a` (row-major `k x k`), then
/// solves `a v = rhs`.
fn cholesky_solve(a: &mut [f64], k: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    for j in 0..k {
        let mut diag = a[j * k + j];
        for m in 0..j {
            diag -= a[j * k + m] * a[j * k + m];
        }
        if !(diag > 0.0) {
            return None;
        }
        let l = math::sqrt(diag);
        a[j * k + j] = l;
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for m in 0..j {
                v -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = v / l;
        }
    }
    let mut z = rhs.to_vec();
    for i in 0..k {
        for m in 0..i {
            z[i] -= a[i * k + m] * z[m];
        }
        z[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for m in i + 1..k {
            z[i] -= a[m * k + i] * z[m];
        }
        z[i] /= a[i * k + i];
    }
    Some(z)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Per-iteration objective values are reported through `trace` when given.
pub fn train_lr_traced<X: AsRef<[f64]>>(
    x: &[X],
    y: &[bool],
    config: &LrConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<LogisticModel> {
    check_training_set(x.len(), y)?;
    if !(config.c > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "C must be positive, got {}",
            config.c
        )));
    }
    let d = x[0].as_ref().len();
    if let Some(bad) = x.iter().find(|r| r.as_ref().len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.as_ref().len(),
        });
    }
    let mut theta = alloc::vec![0.0; d + 1];
    let (mut f, mut g) = objective_grad(&theta, x, y, config.c);
    let mut converged = false;
    let mut iterations = 0;
    let mut candidate = theta.clone();
    while iterations < config.max_iters {
        if let Some(t) = trace.as_deref_mut() {
            t.push(f);
        }
        let gnorm_inf = g.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
        if gnorm_inf <= config.tol {
            converged = true;
            break;
        }
        let mut dir = newton_direction(&theta, x, config.c, &g);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..=d {
                candidate[j] = theta[j] + step * dir[j];
            }
            let fc = objective(&candidate, x, y, config.c);
            if fc <= f + config.armijo * step * slope {
                accepted = true;
                break;
            }
            step *= config.shrink;
        }
        if !accepted {
            // No representable decrease left along the direction.
            break;
        }
        core::mem::swap(&mut theta, &mut candidate);
        let (fn_, gn) = objective_grad(&theta, x, y, config.c);
        f = fn_;
        g = gn;
        iterations += 1;
    }
    if let Some(t) = trace {
        if t.last() != Some(&f) {
            t.push(f);
        }
    }
    let bias = theta[d];
    theta.truncate(d);
    Ok(LogisticModel {
        weights: theta,
        bias,
        iterations,
        converged,
    })
}

pub fn train_lr<X: AsRef<[f64]>>(x: &[X], y: &[bool], config: &LrConfig) -> Result<LogisticModel> {
    train_lr_traced(x, y, config, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn batch(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = rng_from(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = x
            .iter()
            .map(|r| r[0] + 0.3 * r[1] + 0.2 * rng.random::<f64>() > 0.75)
            .collect();
        (x, y)
    }

    #[test]
    fn zero_weights_give_half() {
        let m = LogisticModel::zeros(12);
        assert_eq!(m.confidence(&[0.3; 12]), 0.5);
    }

    #[test]
    fn hand_set_weights() {
        let mut m = LogisticModel::zeros(12);
        m.weights[0] = 1.0;
        m.bias = -0.5;
        let mut x = [0.0; 12];
        x[0] = 1.0;
        let oracle = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((m.confidence(&x) - oracle).abs() < 1e-15);
        assert!((m.confidence(&x) - 0.622459).abs() < 1e-6);
    }

    #[test]
    fn separable_toy_set() {
        let x = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [false, false, true, true];
        let m = train_lr(&x, &y, &LrConfig::with_c(10.0)).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.confidence(xi) >= 0.5, yi);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = batch(64, 12, 3);
        let mut rng = rng_from(4);
        for c in C_GRID {
            let theta: Vec<f64> = (0..13).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = objective_grad(&theta, &x, &y, c);
            let h = 1e-6;
            for j in 0..13 {
                let mut p = theta.clone();
                let mut m = theta.clone();
                p[j] += h;
                m[j] -= h;
                let fd = (objective(&p, &x, &y, c) - objective(&m, &x, &y, c)) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-5, "C={c} j={j}: analytic {} fd {fd}", g[j]);
            }
        }
    }

    #[test]
    fn loss_is_monotone_and_converges() {
        let (x, y) = batch(300, 12, 9);
        for c in C_GRID {
            let mut trace = Vec::new();
            let m = train_lr_traced(&x, &y, &LrConfig::with_c(c), Some(&mut trace)).unwrap();
            assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(
                m.converged,
                "C={c} stopped after {} iterations",
                m.iterations
            );
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = [4.0, 0.0, 0.0, 2.0, 3.0, 0.0, 0.0, 1.0, 2.0];
        // lower triangle of [[4,2,0],[2,3,1],[0,1,2]]; x = [1, -1, 2]
        let v = cholesky_solve(&mut a, 3, &[2.0, 1.0, 3.0]).unwrap();
        for (got, want) in v.iter().zip([1.0, -1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(cholesky_solve(&mut [0.0, 0.0, 0.0, -1.0], 2, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = batch(10, 12, 1);
        assert_eq!(
            train_lr(&x, &[true; 10], &LrConfig::default()),
            Err(Error::SingleClass)
        );
    }

    #[test]
    fn deterministic() {
        let (x, y) = batch(100, 12, 2);
        let cfg = LrConfig::with_c(1.0);
        assert_eq!(
            train_lr(&x, &y, &cfg).unwrap(),
            train_lr(&x, &y, &cfg).unwrap()
        );
    }
}
