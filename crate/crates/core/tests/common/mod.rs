#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sulphation::{Grid1D, MaterialParams, PearsonParams};

pub fn pearson(sigma: f64) -> PearsonParams {
    PearsonParams::new(7.0, 1.0, sigma, 1.5).unwrap()
}

pub fn material(lambda: f64) -> MaterialParams {
    MaterialParams::new(0.2, -0.01, lambda, 0.0, 10.0, 1.5).unwrap()
}

/// Heat iteration matrix on the unknowns `u₁ … u_M`.
pub fn heat_matrix(dbar: f64, m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = 1.0 - 2.0 * dbar;
        if i > 0 {
            a[(i, i - 1)] = dbar;
        }
        if i + 1 < m {
            a[(i, i + 1)] = dbar;
        }
    }
    a[(m - 1, m - 2)] = 2.0 * dbar;
    a
}

/// `Uⁿ⁺¹ = A Uⁿ + Δ̄ Ũ₀ⁿ` on the unknowns, returned with the new boundary value prepended.
pub fn heat_step_dense(grid: &Grid1D, u: &[f64], psi_next: f64) -> Vec<f64> {
    let m = grid.m;
    let a = heat_matrix(grid.dbar, m);
    let un = DVector::from_column_slice(&u[1..]);
    let mut bnd = DVector::zeros(m);
    bnd[0] = u[0];
    let next = a * un + grid.dbar * bnd;
    std::iter::once(psi_next).chain(next.iter().copied()).collect()
}

/// `(Gⁿ, Pⁿ, Ṽⁿ)` of the `v` scheme assembled from the state at level `n`.
pub fn vc_matrices(
    grid: &Grid1D,
    mat: &MaterialParams,
    u: &[f64],
    v: &[f64],
    c: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let m = grid.m;
    let d = grid.dbar;
    let phi = |x: f64| mat.phi1 + mat.phi2 * x;
    let b = |i: usize| {
        if i == m {
            0.0
        } else {
            (phi(c[i + 1]) - phi(c[i - 1])) / (4.0 * phi(c[i]))
        }
    };
    let h = |i: usize| grid.dt * mat.lambda * c[i] * (mat.phi2 * (v[i] + u[i]) - 1.0);
    let mut g = DMatrix::zeros(m, m);
    let mut p = DMatrix::zeros(m, m);
    for i in 1..=m {
        let r = i - 1;
        g[(r, r)] = 1.0 - 2.0 * d + h(i);
        p[(r, r)] = h(i);
        if i < m {
            let bi = b(i);
            g[(r, r + 1)] = d * (1.0 + bi);
            p[(r, r + 1)] = d * bi;
            if i > 1 {
                g[(r, r - 1)] = d * (1.0 - bi);
                p[(r, r - 1)] = -d * bi;
            }
        } else {
            g[(r, r - 1)] = 2.0 * d;
        }
    }
    let mut vt = DVector::zeros(m);
    vt[0] = -b(1) * u[0];
    (g, p, vt)
}

pub fn vc_step_dense(grid: &Grid1D, mat: &MaterialParams, u: &[f64], v: &[f64], c: &[f64]) -> Vec<f64> {
    let (g, p, vt) = vc_matrices(grid, mat, u, v, c);
    let vn = DVector::from_column_slice(&v[1..]);
    let un = DVector::from_column_slice(&u[1..]);
    let next = g * vn + p * un + grid.dbar * vt;
    std::iter::once(0.0).chain(next.iter().copied()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Prints the verdict line and fails the test when `ok` is false.
pub fn report(id: u32, ok: bool, detail: &str) {
    println!("criterion {id:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}
