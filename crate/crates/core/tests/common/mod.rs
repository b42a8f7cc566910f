//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use dpgmm_core::linalg::{jacobi_eigen, SymMatrix};

/// Symmetric square root (or inverse square root for `power = -0.5`) of a
/// PSD matrix, treating eigenvalues below `1e-13 · λ_max` as zero.
pub fn sym_power(m: &SymMatrix, power: f64) -> SymMatrix {
    let (vals, vecs) = jacobi_eigen(m);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let d = m.dim();
    SymMatrix::from_fn(d, |i, j| {
        vals.iter()
            .zip(&vecs)
            .filter(|(v, _)| **v > 1e-13 * top)
            .map(|(v, u)| v.powf(power) * u[i] * u[j])
            .sum()
    })
}

/// Lower bound on `min tr(AX) s.t. X ⪰ c dᵢdᵢᵀ` from the Lagrange dual
///
/// `max_{w ∈ simplex} c · (tr (Σ wᵢ eᵢeᵢᵀ)^{1/2})²`, `eᵢ = A^{1/2} dᵢ`,
///
/// maximized with multiplicative updates `wᵢ ∝ wᵢ · eᵢᵀ M^{-1/2} eᵢ`.
/// Every iterate is a valid lower bound; the best one is returned.
pub fn sdp_dual_bound(a: &SymMatrix, constraints: &[Vec<f64>], c: f64, iters: usize) -> f64 {
    let half = sym_power(a, 0.5);
    let e: Vec<Vec<f64>> = constraints.iter().map(|v| half.mul_vec(v)).collect();
    let m = e.len();
    let d = a.dim();
    let mut w = vec![1.0 / m as f64; m];
    let mut best = 0.0_f64;
    for _ in 0..iters {
        let mut mm = SymMatrix::zeros(d);
        for (wi, ei) in w.iter().zip(&e) {
            mm = mm.add(&SymMatrix::outer(ei, *wi));
        }
        let root = sym_power(&mm, 0.5);
        let value = c * root.trace().powi(2);
        best = best.max(value);
        let inv_root = sym_power(&mm, -0.5);
        let g: Vec<f64> = e.iter().map(|ei| inv_root.quad_form(ei)).collect();
        let total: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi *= gi / total;
        }
    }
    best
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Same dual as [`sdp_dual_bound`], maximized by projected gradient ascent
/// on `h(w) = tr (Σ wᵢ eᵢeᵢᵀ)^{1/2}` with Armijo backtracking.
///
/// Runs at most `max_iters` iterations and stops early once the best
/// value has not moved by more than `1e-13` relative over 1000 iterations.
pub fn sdp_projected_gradient_bound(a: &SymMatrix, constraints: &[Vec<f64>], c: f64, max_iters: usize) -> f64 {
    let half = sym_power(a, 0.5);
    let e: Vec<Vec<f64>> = constraints.iter().map(|v| half.mul_vec(v)).collect();
    let m = e.len();
    let d = a.dim();
    let gram = |w: &[f64]| {
        let mut mm = SymMatrix::zeros(d);
        for (wi, ei) in w.iter().zip(&e) {
            if *wi > 0.0 {
                mm = mm.add(&SymMatrix::outer(ei, *wi));
            }
        }
        mm
    };
    let value = |w: &[f64]| sym_power(&gram(w), 0.5).trace();
    let mut w = vec![1.0 / m as f64; m];
    let mut h = value(&w);
    let mut step: f64 = 1.0;
    let mut checkpoint = h;
    for iter in 0..max_iters {
        let mm = gram(&w);
        // A small ridge keeps the gradient finite but large along directions
        // the current weights leave uncovered.
        let inv_root = sym_power(&mm.add_diagonal(1e-10 * mm.trace() / d as f64), -0.5);
        let grad: Vec<f64> = e.iter().map(|ei| 0.5 * inv_root.quad_form(ei)).collect();
        let scale = grad.iter().cloned().fold(0.0, f64::max).max(1e-300);
        step = (step * 2.0).min(1e6);
        loop {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi + step * gi / scale).collect();
            let next = project_simplex(&trial);
            let moved: f64 = next.iter().zip(&w).zip(&grad).map(|((n, o), g)| (n - o) * g / scale).sum();
            let hn = value(&next);
            if hn >= h + 1e-4 * moved * scale || step < 1e-14 {
                if hn > h {
                    w = next;
                    h = hn;
                }
                break;
            }
            step *= 0.5;
        }
        if iter % 1000 == 999 {
            if (h - checkpoint).abs() <= 1e-13 * h {
                break;
            }
            checkpoint = h;
        }
    }
    c * h * h
}
