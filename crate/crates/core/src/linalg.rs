//! Matrix-free damped least squares by CGLS.

use alloc::vec;
use alloc::vec::Vec;

pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    /// `x = Aᵀ y`.
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64>;
}

/// Sequential dot product; fixed summation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CglsOptions {
    /// Tikhonov weight `λ` in `‖Ax − b‖² + λ‖x‖²`.
    pub damping: f64,
    /// Stop when `‖Aᵀr − λx‖ ≤ max(rel_tol · ‖Aᵀb‖, abs_tol)`.
    pub rel_tol: f64,
    /// Absolute floor on the same test, for right-hand sides at roundoff level.
    pub abs_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `√(‖Ax − b‖² + λ‖x‖²)`.
    pub objective: f64,
    pub data_residual: f64,
    pub normal_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CglsResult {
    pub x: Vec<f64>,
    pub converged: bool,
    pub history: Vec<IterRecord>,
}

impl CglsResult {
    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |h| h.iter)
    }

    pub fn final_normal_residual(&self) -> f64 {
        self.history.last().map_or(0.0, |h| h.normal_residual)
    }
}

pub fn cgls<A: LinearOperator + ?Sized>(a: &A, b: &[f64], opts: &CglsOptions) -> CglsResult {
    let lam = opts.damping;
    let n = a.cols();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut s = a.apply_adjoint(&r);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let norm0 = crate::math::sqrt(gamma);
    let record = |iter, r: &[f64], x: &[f64], g: f64| {
        let rr = dot(r, r);
        IterRecord {
            iter,
            objective: crate::math::sqrt(rr + lam * dot(x, x)),
            data_residual: crate::math::sqrt(rr),
            normal_residual: crate::math::sqrt(g),
        }
    };
    let mut history = vec![record(0, &r, &x, gamma)];
    let stop = (opts.rel_tol * norm0).max(opts.abs_tol);
    if norm0 <= stop {
        return CglsResult { x, converged: true, history };
    }
    let mut converged = false;
    for iter in 1..=opts.max_iter {
        let q = a.apply(&p);
        let delta = dot(&q, &q) + lam * dot(&p, &p);
        if !(delta > 0.0) {
            break;
        }
        let alpha = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = a.apply_adjoint(&r);
        for (si, xi) in s.iter_mut().zip(&x) {
            *si -= lam * xi;
        }
        let gamma_new = dot(&s, &s);
        history.push(record(iter, &r, &x, gamma_new));
        if crate::math::sqrt(gamma_new) <= stop {
            converged = true;
            break;
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    CglsResult { x, converged, history }
}

/// Dense row-major matrix, mostly for tests.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x)).collect()
    }
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.data[i * self.cols + j] * y[i];
            }
        }
        out
    }
}
