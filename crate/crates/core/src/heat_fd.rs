//! FTCS solver for `u_t = u_xx` on `[0, x̄]` with Dirichlet data at `x = 0`,
//! homogeneous Neumann at `x̄` and zero initial data.
//!
//! The Neumann ghost `u_{M+1} = u_{M−1}` is folded into the last row, which
//! becomes `u_M ← (1 − 2Δ̄)u_M + 2Δ̄ u_{M−1}`. The boundary value enters at
//! the new time level.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("mesh sizes must be positive and finite (x_bar = {x_bar}, T = {t_end}, dx = {dx}, dt = {dt})")]
    NonPositive {
        x_bar: f64,
        t_end: f64,
        dx: f64,
        dt: f64,
    },
    #[error("dx = {dx} does not divide the domain length {x_bar}")]
    NotDivisible { x_bar: f64, dx: f64 },
    #[error("dt/dx^2 = {dbar} exceeds the FTCS stability limit 1/2")]
    StabilityViolated { dbar: f64 },
    #[error("row of length {got} does not match the {expected} spatial nodes")]
    LengthMismatch { expected: usize, got: usize },
}

/// Uniform space–time mesh on `[0, x̄] × [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_bar: f64,
    pub t_end: f64,
    pub dx: f64,
    pub dt: f64,
    /// Number of spatial intervals `M`; there are `M + 1` nodes.
    pub m: usize,
    /// Number of time steps `N`.
    pub n: usize,
    pub dbar: f64,
}

impl Grid1D {
    /// Builds the mesh from target sizes. `dx` must divide `x̄`; the time
    /// step is shrunk to `T / ⌈T/dt⌉` when `dt` does not divide `T`.
    pub fn new(x_bar: f64, t_end: f64, dx: f64, dt: f64) -> Result<Self, GridError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !(finite_pos(x_bar) && finite_pos(t_end) && finite_pos(dx) && finite_pos(dt)) {
            return Err(GridError::NonPositive {
                x_bar,
                t_end,
                dx,
                dt,
            });
        }
        let m = (x_bar / dx).round();
        if m < 1.0 || (m * dx - x_bar).abs() > 1e-9 * x_bar {
            return Err(GridError::NotDivisible { x_bar, dx });
        }
        let n = (t_end / dt - 1e-9).ceil().max(1.0);
        Self::from_counts(x_bar, t_end, m as usize, n as usize)
    }

    pub fn from_counts(x_bar: f64, t_end: f64, m: usize, n: usize) -> Result<Self, GridError> {
        let dx = x_bar / m as f64;
        let dt = t_end / n as f64;
        let dbar = dt / (dx * dx);
        if !(dbar <= 0.5) {
            return Err(GridError::StabilityViolated { dbar });
        }
        Ok(Self {
            x_bar,
            t_end,
            dx,
            dt,
            m,
            n,
            dbar,
        })
    }

    pub fn nodes(&self) -> usize {
        self.m + 1
    }

    pub fn x(&self, m: usize) -> f64 {
        m as f64 * self.dx
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Same domain and time mesh with `factor` times more spatial intervals.
    pub fn refined(&self, factor: usize) -> Result<Self, GridError> {
        Self::from_counts(self.x_bar, self.t_end, self.m * factor, self.n)
    }
}

/// Row-major space–time array, one row per retained time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(xs: Vec<f64>) -> Self {
        Self {
            times: Vec::new(),
            xs,
            data: Vec::new(),
        }
    }

    pub fn push_row(&mut self, t: f64, row: impl IntoIterator<Item = f64>) {
        self.times.push(t);
        self.data.extend(row);
        debug_assert_eq!(self.data.len(), self.times.len() * self.xs.len());
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn cols(&self) -> usize {
        self.xs.len()
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let c = self.cols();
        &self.data[n * c..(n + 1) * c]
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.data[n * self.cols() + m]
    }

    pub fn last_row(&self) -> &[f64] {
        self.row(self.rows() - 1)
    }

    /// True when both fields live on the same retained mesh.
    pub fn same_mesh(&self, other: &Field) -> bool {
        self.times == other.times && self.xs == other.xs
    }
}

/// One FTCS step of the heat equation.
///
/// `u` holds time level `n` on all `M + 1` nodes, `u[0]` being the current
/// boundary value. Writes level `n + 1` into `out` with `out[0] = psi_next`.
pub fn step_heat(grid: &Grid1D, u: &[f64], psi_next: f64, out: &mut [f64]) -> Result<(), GridError> {
    let nodes = grid.nodes();
    if grid.dbar > 0.5 {
        return Err(GridError::StabilityViolated { dbar: grid.dbar });
    }
    for len in [u.len(), out.len()] {
        if len != nodes {
            return Err(GridError::LengthMismatch {
                expected: nodes,
                got: len,
            });
        }
    }
    let d = grid.dbar;
    let centre = 1.0 - 2.0 * d;
    let m_last = grid.m;
    for m in 1..m_last {
        out[m] = d * u[m + 1] + centre * u[m] + d * u[m - 1];
    }
    out[m_last] = centre * u[m_last] + 2.0 * d * u[m_last - 1];
    out[0] = psi_next;
    Ok(())
}

/// Full space–time heat solution.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatField {
    pub u: Field,
    pub boundary: Vec<f64>,
}

/// Marches the heat scheme over the whole boundary series (`N + 1` values),
/// retaining every time level.
pub fn solve_heat(grid: &Grid1D, boundary: &[f64]) -> Result<HeatField, GridError> {
    if boundary.len() != grid.n + 1 {
        return Err(GridError::LengthMismatch {
            expected: grid.n + 1,
            got: boundary.len(),
        });
    }
    let xs = (0..grid.nodes()).map(|m| grid.x(m)).collect();
    let mut field = Field::new(xs);
    let mut cur = vec![0.0; grid.nodes()];
    cur[0] = boundary[0];
    let mut next = vec![0.0; grid.nodes()];
    field.push_row(0.0, cur.iter().copied());
    for n in 0..grid.n {
        step_heat(grid, &cur, boundary[n + 1], &mut next)?;
        std::mem::swap(&mut cur, &mut next);
        field.push_row(grid.t(n + 1), cur.iter().copied());
    }
    Ok(HeatField {
        u: field,
        boundary: boundary.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub dbar: f64,
    pub interior_nodes: usize,
    pub max_abs_eigenvalue: f64,
}

impl SpectralReport {
    pub fn is_stable(&self) -> bool {
        self.max_abs_eigenvalue <= 1.0 + 1e-10
    }
}

/// Symmetrized iteration matrix `Ã = S⁻¹AS`, `S = diag(1, …, 1, √2)`, acting
/// on the `m` unknown nodes `1..=M`.
pub fn symmetrized_heat_matrix(dbar: f64, m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = 1.0 - 2.0 * dbar;
        if i + 1 < m {
            let off = if i + 2 == m { std::f64::consts::SQRT_2 * dbar } else { dbar };
            a[(i, i + 1)] = off;
            a[(i + 1, i)] = off;
        }
    }
    a
}

/// Dense spectral radius of the symmetrized heat matrix. Intended for
/// `m ≤ 256`.
pub fn spectral_bound_check(dbar: f64, m: usize) -> SpectralReport {
    let eig = SymmetricEigen::new(symmetrized_heat_matrix(dbar, m));
    let max_abs_eigenvalue = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    SpectralReport {
        dbar,
        interior_nodes: m,
        max_abs_eigenvalue,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(m: usize, dbar: f64) -> Grid1D {
        let dx = 1.0 / m as f64;
        Grid1D::from_counts(1.0, 10.0 * dbar * dx * dx, m, 10).unwrap()
    }

    #[test]
    fn mesh_construction() {
        let g = Grid1D::new(1.5, 1.5, 0.01, 1.99e-5).unwrap();
        assert_eq!(g.m, 150);
        assert_eq!(g.n, 75377);
        assert!(g.dt <= 1.99e-5);
        assert_relative_eq!(g.n as f64 * g.dt, 1.5, max_relative = 1e-12);
        assert_relative_eq!(g.m as f64 * g.dx, 1.5, max_relative = 1e-12);
        assert!(matches!(
            Grid1D::new(1.5, 1.0, 0.01, 6e-5),
            Err(GridError::StabilityViolated { .. })
        ));
        assert!(matches!(
            Grid1D::new(1.5, 1.0, 0.07, 1e-5),
            Err(GridError::NotDivisible { .. })
        ));
        assert!(Grid1D::new(1.5, 1.0, 0.0, 1e-5).is_err());
        let g = Grid1D::new(1.0, 1.0, 0.125, 2f64.powi(-19)).unwrap();
        assert_eq!(g.n, 1 << 19);
    }

    #[test]
    fn constant_row_is_preserved() {
        let g = grid(8, 0.4);
        let u = vec![0.7; 9];
        let mut out = vec![0.0; 9];
        step_heat(&g, &u, 0.7, &mut out).unwrap();
        for v in out {
            assert_relative_eq!(v, 0.7, epsilon = 1e-15);
        }
    }

    #[test]
    fn boundary_only_touches_node_zero() {
        let g = grid(8, 0.4);
        let mut out = vec![9.0; 9];
        step_heat(&g, &[0.0; 9], 1.0, &mut out).unwrap();
        assert_eq!(out[0], 1.0);
        assert!(out[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_spreads_with_stencil_weights() {
        let g = grid(8, 0.3);
        let mut u = vec![0.0; 9];
        u[4] = 1.0;
        let mut out = vec![0.0; 9];
        step_heat(&g, &u, 0.0, &mut out).unwrap();
        assert_relative_eq!(out[3], 0.3, epsilon = 1e-15);
        assert_relative_eq!(out[4], 0.4, epsilon = 1e-15);
        assert_relative_eq!(out[5], 0.3, epsilon = 1e-15);
        assert_eq!(out[2] + out[6], 0.0);
    }

    #[test]
    fn step_rejects_bad_rows_and_unstable_grids() {
        let g = grid(8, 0.3);
        let mut out = vec![0.0; 9];
        assert!(matches!(
            step_heat(&g, &[0.0; 5], 0.0, &mut out),
            Err(GridError::LengthMismatch { .. })
        ));
        let mut bad = g;
        bad.dbar = 0.6;
        assert!(matches!(
            step_heat(&bad, &[0.0; 9], 0.0, &mut out),
            Err(GridError::StabilityViolated { .. })
        ));
    }

    #[test]
    fn zero_boundary_gives_zero_field() {
        let g = grid(10, 0.5);
        let h = solve_heat(&g, &vec![0.0; g.n + 1]).unwrap();
        assert!(h.u.data.iter().all(|&v| v == 0.0));
        assert_eq!(h.u.rows(), g.n + 1);
    }

    #[test]
    fn spectral_radius_tracks_the_stability_limit() {
        assert!(spectral_bound_check(0.5, 64).is_stable());
        assert!(!spectral_bound_check(0.6, 64).is_stable());
        assert!(spectral_bound_check(0.199, 150).max_abs_eigenvalue < 1.0);
    }
}
