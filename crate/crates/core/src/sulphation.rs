//! Coupled sulphation solver with a stochastic Dirichlet boundary.
//!
//! The porous SO₂ concentration is split as `s = u + v`: `u` solves the
//! heat equation carrying the rough boundary data `ψ̃ = ψ/φ(c(t,0))`, and
//! `v` solves the nonlinear transport–reaction equation with `v(t,0) = 0`.
//! Calcite follows `c ← c·exp(−λΔt s φ(c))` node by node.
//!
//! With `bₘ = (φ(c_{m+1}) − φ(c_{m−1}))/(4φ(cₘ))` and
//! `hₘ = λΔt cₘ(φ₂ sₘ − 1)`, the interior `v` update reads
//!
//! ```text
//! v′ = Δ̄(1+b)v₊ + Δ̄(1−b)v₋ + (1 − 2Δ̄ + h)v + Δ̄b u₊ + h u − Δ̄b u₋
//! ```
//!
//! and adding the heat step gives the direct scheme
//! `s′ = Δ̄(1+b)s₊ + Δ̄(1−b)s₋ + (1 − 2Δ̄ + h)s`, which is kept as an oracle.

use thiserror::Error;

use crate::heat_fd::{self, Field, Grid1D, GridError};
use crate::lsst::{self, SdePath};
use crate::pearson::PearsonParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SulphationError {
    #[error("material parameter `{name}` = {value} is out of range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("initial porosity phi1 + phi2*c0 = {0} must be positive")]
    NonPositivePorosity(f64),
    #[error("initial calcite density {c0} must be below 4/5*phi1/|phi2| = {bound}")]
    InitialCalciteTooLarge { c0: f64, bound: f64 },
    #[error("initial concentration {s0} exceeds the bound eta_tilde = {eta_tilde}")]
    InitialConcentrationTooLarge { s0: f64, eta_tilde: f64 },
    #[error("time step {dt} exceeds the positivity bound {bound}")]
    TimeStepTooLarge { dt: f64, bound: f64 },
    #[error("non-finite state at time level {step}, node {node}")]
    NonFiniteState { step: usize, node: usize },
    #[error("boundary series has {got} values, grid needs {expected}")]
    BoundaryLength { expected: usize, got: usize },
    #[error("SDE step {sde_dt} does not divide the PDE step {pde_dt}")]
    MeshMismatch { sde_dt: f64, pde_dt: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Material constants of the porous stone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub phi1: f64,
    pub phi2: f64,
    pub lambda: f64,
    pub s0_bar: f64,
    pub c0_bar: f64,
    /// `η / φ(c̄₀)`, the a priori bound on `s`.
    pub eta_tilde: f64,
}

impl MaterialParams {
    /// `eta` is the upper bound of the boundary process.
    pub fn new(
        phi1: f64,
        phi2: f64,
        lambda: f64,
        s0_bar: f64,
        c0_bar: f64,
        eta: f64,
    ) -> Result<Self, SulphationError> {
        let check = |name, value: f64, ok: bool| {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(SulphationError::InvalidParameter { name, value })
            }
        };
        check("phi1", phi1, phi1 > 0.0)?;
        check("phi2", phi2, phi2 < 0.0)?;
        check("lambda", lambda, lambda > 0.0)?;
        check("s0_bar", s0_bar, s0_bar >= 0.0)?;
        check("c0_bar", c0_bar, c0_bar > 0.0)?;
        check("eta", eta, eta > 0.0)?;
        let phi0 = phi1 + phi2 * c0_bar;
        if phi0 <= 0.0 {
            return Err(SulphationError::NonPositivePorosity(phi0));
        }
        let bound = calcite_bound(phi1, phi2);
        if c0_bar >= bound {
            return Err(SulphationError::InitialCalciteTooLarge { c0: c0_bar, bound });
        }
        let eta_tilde = eta / phi0;
        if s0_bar > eta_tilde {
            return Err(SulphationError::InitialConcentrationTooLarge { s0: s0_bar, eta_tilde });
        }
        Ok(Self {
            phi1,
            phi2,
            lambda,
            s0_bar,
            c0_bar,
            eta_tilde,
        })
    }

    #[inline]
    pub fn porosity(&self, c: f64) -> f64 {
        self.phi1 + self.phi2 * c
    }

    /// Largest admissible time step for spatial step `dx`.
    pub fn max_time_step(&self, dx: f64) -> f64 {
        let dx2 = dx * dx;
        dx2 / (2.0 + self.lambda * self.c0_bar * dx2 * (1.0 - self.phi2 * self.eta_tilde))
    }
}

/// `(4/5) φ₁/|φ₂|`.
pub fn calcite_bound(phi1: f64, phi2: f64) -> f64 {
    0.8 * phi1 / phi2.abs()
}

/// Positivity and stability conditions of the explicit scheme.
pub fn check_conditions(grid: &Grid1D, mat: &MaterialParams) -> Result<(), SulphationError> {
    if !(grid.dbar <= 0.5) {
        return Err(GridError::StabilityViolated { dbar: grid.dbar }.into());
    }
    let bound = calcite_bound(mat.phi1, mat.phi2);
    if mat.c0_bar >= bound {
        return Err(SulphationError::InitialCalciteTooLarge {
            c0: mat.c0_bar,
            bound,
        });
    }
    let dt_bound = mat.max_time_step(grid.dx);
    if grid.dt > dt_bound {
        return Err(SulphationError::TimeStepTooLarge {
            dt: grid.dt,
            bound: dt_bound,
        });
    }
    Ok(())
}

/// Boundary data at `x = 0` on the PDE time mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPair {
    /// Raw boundary process `ψⁿ`.
    pub psi: Vec<f64>,
    /// `c(tₙ, 0) = c̄₀ exp(−λ Qₙ)`.
    pub c_left: Vec<f64>,
    /// `ψ̃ⁿ = ψⁿ / φ(c(tₙ, 0))`.
    pub s_left: Vec<f64>,
    /// Left-endpoint quadrature `Qₙ` of `∫₀^{tₙ} Ψ`.
    pub integral: Vec<f64>,
}

impl BoundaryPair {
    /// Builds the pair from a series sampled with step `sde_dt`, keeping every
    /// `stride`-th value. The quadrature runs on the fine series.
    pub fn from_series(psi: &[f64], sde_dt: f64, stride: usize, mat: &MaterialParams) -> Self {
        let stride = stride.max(1);
        let mut q = 0.0;
        let mut out = Self {
            psi: Vec::with_capacity(psi.len() / stride + 1),
            c_left: Vec::new(),
            s_left: Vec::new(),
            integral: Vec::new(),
        };
        for (j, &p) in psi.iter().enumerate() {
            if j % stride == 0 {
                let c = mat.c0_bar * (-mat.lambda * q).exp();
                out.psi.push(p);
                out.c_left.push(c);
                out.s_left.push(p / mat.porosity(c));
                out.integral.push(q);
            }
            q += p * sde_dt;
        }
        out
    }

    /// Uses a sampled path on a PDE grid whose step is an integer multiple of
    /// the path's step.
    pub fn from_path(
        path: &SdePath,
        sde_dt: f64,
        grid: &Grid1D,
        mat: &MaterialParams,
    ) -> Result<Self, SulphationError> {
        let ratio = grid.dt / sde_dt;
        let stride = ratio.round();
        if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
            return Err(SulphationError::MeshMismatch {
                sde_dt,
                pde_dt: grid.dt,
            });
        }
        let stride = stride as usize;
        let needed = grid.n * stride + 1;
        if path.psi.len() < needed {
            return Err(SulphationError::BoundaryLength {
                expected: needed,
                got: path.psi.len(),
            });
        }
        Ok(Self::from_series(&path.psi[..needed], sde_dt, stride, mat))
    }

    /// Noise-free boundary `γ(1 − e^{−αt})` on the grid's time mesh.
    pub fn deterministic(params: &PearsonParams, grid: &Grid1D, mat: &MaterialParams) -> Self {
        let psi: Vec<f64> = (0..=grid.n)
            .map(|n| lsst::deterministic_boundary(params, grid.t(n)))
            .collect();
        Self::from_series(&psi, grid.dt, 1, mat)
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

#[inline]
fn advection_coeff(mat: &MaterialParams, c: &[f64], m: usize) -> f64 {
    (mat.porosity(c[m + 1]) - mat.porosity(c[m - 1])) / (4.0 * mat.porosity(c[m]))
}

#[inline]
fn reaction_coeff(mat: &MaterialParams, dt: f64, c: f64, s: f64) -> f64 {
    mat.lambda * dt * c * (mat.phi2 * s - 1.0)
}

#[inline]
fn calcite_update(mat: &MaterialParams, dt: f64, c: f64, s: f64) -> f64 {
    c * (-mat.lambda * dt * s * mat.porosity(c)).exp()
}

fn check_len(grid: &Grid1D, rows: &[&[f64]]) -> Result<(), SulphationError> {
    for r in rows {
        if r.len() != grid.nodes() {
            return Err(GridError::LengthMismatch {
                expected: grid.nodes(),
                got: r.len(),
            }
            .into());
        }
    }
    Ok(())
}

fn check_finite(row: &[f64], step: usize) -> Result<(), SulphationError> {
    match row.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(SulphationError::NonFiniteState { step, node }),
        None => Ok(()),
    }
}

/// One step of the `(v, c)` scheme from level `n` to `n + 1`.
///
/// `u[0]` carries the boundary value `ψ̃ⁿ` and `v[0]` is zero. `c_next[0]` is
/// filled from the same exponential update as the interior (`s₀ = ψ̃ⁿ`), so
/// it equals `c(tₙ₊₁, 0)` up to rounding.
pub fn step_vc(
    grid: &Grid1D,
    mat: &MaterialParams,
    u: &[f64],
    v: &[f64],
    c: &[f64],
    v_next: &mut [f64],
    c_next: &mut [f64],
) -> Result<(), SulphationError> {
    check_len(grid, &[u, v, c, v_next, c_next])?;
    let d = grid.dbar;
    let dt = grid.dt;
    let last = grid.m;
    for m in 1..last {
        let b = advection_coeff(mat, c, m);
        let h = reaction_coeff(mat, dt, c[m], v[m] + u[m]);
        v_next[m] = d * (1.0 + b) * v[m + 1]
            + d * (1.0 - b) * v[m - 1]
            + (1.0 - 2.0 * d + h) * v[m]
            + d * b * u[m + 1]
            + h * u[m]
            - d * b * u[m - 1];
    }
    let h = reaction_coeff(mat, dt, c[last], v[last] + u[last]);
    v_next[last] = 2.0 * d * v[last - 1] + (1.0 - 2.0 * d + h) * v[last] + h * u[last];
    v_next[0] = 0.0;
    for m in 0..=last {
        c_next[m] = calcite_update(mat, dt, c[m], v[m] + u[m]);
    }
    check_finite(v_next, 0)?;
    check_finite(c_next, 0)
}

/// One step of the direct `(s, c)` scheme; `s_left_next` is `ψ̃ⁿ⁺¹`.
pub fn step_sc(
    grid: &Grid1D,
    mat: &MaterialParams,
    s: &[f64],
    c: &[f64],
    s_left_next: f64,
    s_next: &mut [f64],
    c_next: &mut [f64],
) -> Result<(), SulphationError> {
    check_len(grid, &[s, c, s_next, c_next])?;
    let d = grid.dbar;
    let dt = grid.dt;
    let last = grid.m;
    for m in 1..last {
        let b = advection_coeff(mat, c, m);
        let h = reaction_coeff(mat, dt, c[m], s[m]);
        s_next[m] = d * (1.0 + b) * s[m + 1] + d * (1.0 - b) * s[m - 1] + (1.0 - 2.0 * d + h) * s[m];
    }
    let h = reaction_coeff(mat, dt, c[last], s[last]);
    s_next[last] = 2.0 * d * s[last - 1] + (1.0 - 2.0 * d + h) * s[last];
    s_next[0] = s_left_next;
    for m in 0..=last {
        c_next[m] = calcite_update(mat, dt, c[m], s[m]);
    }
    check_finite(s_next, 0)?;
    check_finite(c_next, 0)
}

/// Smallest three-point weight of the direct scheme at the given state:
/// `min(1 − b, 1 + b, 1 − 2Δ̄ + h)` over the unknown nodes.
pub fn min_scheme_weight(grid: &Grid1D, mat: &MaterialParams, s: &[f64], c: &[f64]) -> f64 {
    let mut w = f64::INFINITY;
    for m in 1..=grid.m {
        let b = if m < grid.m { advection_coeff(mat, c, m) } else { 0.0 };
        let h = reaction_coeff(mat, grid.dt, c[m], s[m]);
        w = w.min(1.0 - b).min(1.0 + b).min(1.0 - 2.0 * grid.dbar + h);
    }
    w
}

/// `c = φ₁c̄₀ / (φ(c̄₀) e^{λφ₁ I} − φ₂c̄₀)` for `I = ∫₀ᵗ s`.
pub fn calcite_closed_form(mat: &MaterialParams, integral_s: f64) -> f64 {
    let c0 = mat.c0_bar;
    mat.phi1 * c0 / (mat.porosity(c0) * (mat.lambda * mat.phi1 * integral_s).exp() - mat.phi2 * c0)
}

/// Closed-form calcite after the history `s_history` (one value per step,
/// left-endpoint quadrature).
pub fn calcite_from_history(mat: &MaterialParams, s_history: &[f64], dt: f64) -> f64 {
    calcite_closed_form(mat, s_history.iter().sum::<f64>() * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    U,
    V,
    S,
    C,
    Rho,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [Quantity::U, Quantity::V, Quantity::S, Quantity::C, Quantity::Rho];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::U => "u",
            Quantity::V => "v",
            Quantity::S => "s",
            Quantity::C => "c",
            Quantity::Rho => "rho",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == name)
    }
}

/// Which time levels and nodes are retained in output fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decimation {
    pub time_stride: usize,
    pub space_stride: usize,
    /// Retain only nodes with `x ≤ x_view`.
    pub x_view: Option<f64>,
}

impl Default for Decimation {
    fn default() -> Self {
        Self {
            time_stride: 1,
            space_stride: 1,
            x_view: None,
        }
    }
}

impl Decimation {
    pub fn node_indices(&self, grid: &Grid1D) -> Vec<usize> {
        let limit = self.x_view.unwrap_or(f64::INFINITY);
        (0..grid.nodes())
            .step_by(self.space_stride.max(1))
            .filter(|&m| grid.x(m) <= limit + 1e-12)
            .collect()
    }

    /// Retained time levels; the final level is always included.
    pub fn time_indices(&self, grid: &Grid1D) -> Vec<usize> {
        let mut t: Vec<usize> = (0..=grid.n).step_by(self.time_stride.max(1)).collect();
        if *t.last().unwrap() != grid.n {
            t.push(grid.n);
        }
        t
    }

    fn keeps_time(&self, grid: &Grid1D, n: usize) -> bool {
        n.is_multiple_of(self.time_stride.max(1)) || n == grid.n
    }
}

/// Running extrema over every node and time level of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsMonitor {
    pub min_s: f64,
    pub max_s: f64,
    pub min_c: f64,
    pub max_c: f64,
    /// Number of (node, step) pairs where `c` increased.
    pub c_increases: usize,
    pub min_rho: f64,
    pub max_rho: f64,
    /// Number of (node, level) pairs inspected.
    pub checked: usize,
}

impl Default for BoundsMonitor {
    fn default() -> Self {
        Self {
            min_s: f64::INFINITY,
            max_s: f64::NEG_INFINITY,
            min_c: f64::INFINITY,
            max_c: f64::NEG_INFINITY,
            c_increases: 0,
            min_rho: f64::INFINITY,
            max_rho: f64::NEG_INFINITY,
            checked: 0,
        }
    }
}

impl BoundsMonitor {
    fn observe(&mut self, mat: &MaterialParams, u: &[f64], v: &[f64], c: &[f64], c_prev: Option<&[f64]>) {
        for m in 0..u.len() {
            let s = u[m] + v[m];
            let rho = s * mat.porosity(c[m]);
            self.min_s = self.min_s.min(s);
            self.max_s = self.max_s.max(s);
            self.min_c = self.min_c.min(c[m]);
            self.max_c = self.max_c.max(c[m]);
            self.min_rho = self.min_rho.min(rho);
            self.max_rho = self.max_rho.max(rho);
            if let Some(prev) = c_prev {
                if c[m] > prev[m] {
                    self.c_increases += 1;
                }
            }
        }
        self.checked += u.len();
    }

    pub fn merge(&mut self, other: &BoundsMonitor) {
        self.min_s = self.min_s.min(other.min_s);
        self.max_s = self.max_s.max(other.max_s);
        self.min_c = self.min_c.min(other.min_c);
        self.max_c = self.max_c.max(other.max_c);
        self.min_rho = self.min_rho.min(other.min_rho);
        self.max_rho = self.max_rho.max(other.max_rho);
        self.c_increases += other.c_increases;
        self.checked += other.checked;
    }

    /// `s ∈ [0, η̃)`, `c ∈ [0, c̄₀]` and `c` never increased.
    pub fn within(&self, mat: &MaterialParams) -> bool {
        self.min_s >= 0.0
            && self.max_s < mat.eta_tilde
            && self.min_c >= 0.0
            && self.max_c <= mat.c0_bar
            && self.c_increases == 0
    }
}

/// Retained output of a coupled solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFields {
    pub fields: Vec<(Quantity, Field)>,
    pub bounds: BoundsMonitor,
}

impl SolutionFields {
    pub fn get(&self, q: Quantity) -> Option<&Field> {
        self.fields.iter().find(|(k, _)| *k == q).map(|(_, f)| f)
    }
}

/// Stepwise state of the split solver.
#[derive(Debug, Clone)]
pub struct CoupledSolver<'a> {
    grid: Grid1D,
    mat: MaterialParams,
    boundary: &'a BoundaryPair,
    step: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    c: Vec<f64>,
    u_next: Vec<f64>,
    v_next: Vec<f64>,
    c_next: Vec<f64>,
}

impl<'a> CoupledSolver<'a> {
    pub fn new(grid: &Grid1D, mat: &MaterialParams, boundary: &'a BoundaryPair) -> Result<Self, SulphationError> {
        check_conditions(grid, mat)?;
        if boundary.len() != grid.n + 1 {
            return Err(SulphationError::BoundaryLength {
                expected: grid.n + 1,
                got: boundary.len(),
            });
        }
        let nodes = grid.nodes();
        let mut u = vec![0.0; nodes];
        u[0] = boundary.s_left[0];
        let mut v = vec![mat.s0_bar; nodes];
        v[0] = 0.0;
        let mut c = vec![mat.c0_bar; nodes];
        c[0] = boundary.c_left[0];
        Ok(Self {
            grid: *grid,
            mat: *mat,
            boundary,
            step: 0,
            u,
            v,
            c,
            u_next: vec![0.0; nodes],
            v_next: vec![0.0; nodes],
            c_next: vec![0.0; nodes],
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.grid.n
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self, q: Quantity, m: usize) -> f64 {
        match q {
            Quantity::U => self.u[m],
            Quantity::V => self.v[m],
            Quantity::S => self.u[m] + self.v[m],
            Quantity::C => self.c[m],
            Quantity::Rho => (self.u[m] + self.v[m]) * self.mat.porosity(self.c[m]),
        }
    }

    /// Advances one time level.
    pub fn advance(&mut self) -> Result<(), SulphationError> {
        let n = self.step;
        heat_fd::step_heat(&self.grid, &self.u, self.boundary.s_left[n + 1], &mut self.u_next)?;
        step_vc(&self.grid, &self.mat, &self.u, &self.v, &self.c, &mut self.v_next, &mut self.c_next)
            .map_err(|e| match e {
                SulphationError::NonFiniteState { node, .. } => SulphationError::NonFiniteState { step: n + 1, node },
                other => other,
            })?;
        self.c_next[0] = self.boundary.c_left[n + 1];
        std::mem::swap(&mut self.u, &mut self.u_next);
        std::mem::swap(&mut self.v, &mut self.v_next);
        std::mem::swap(&mut self.c, &mut self.c_next);
        self.step += 1;
        Ok(())
    }

    fn observe(&self, monitor: &mut BoundsMonitor, first: bool) {
        let prev = if first { None } else { Some(self.c_next.as_slice()) };
        monitor.observe(&self.mat, &self.u, &self.v, &self.c, prev);
    }
}

/// Runs the split solver over the whole grid, retaining `quantities` on the
/// decimated mesh and monitoring bounds on every node and level.
pub fn solve_system(
    grid: &Grid1D,
    mat: &MaterialParams,
    boundary: &BoundaryPair,
    decimation: &Decimation,
    quantities: &[Quantity],
) -> Result<SolutionFields, SulphationError> {
    let mut solver = CoupledSolver::new(grid, mat, boundary)?;
    let nodes = decimation.node_indices(grid);
    let xs: Vec<f64> = nodes.iter().map(|&m| grid.x(m)).collect();
    let mut fields: Vec<(Quantity, Field)> = quantities.iter().map(|&q| (q, Field::new(xs.clone()))).collect();
    let mut bounds = BoundsMonitor::default();

    let record = |solver: &CoupledSolver, fields: &mut Vec<(Quantity, Field)>| {
        let t = grid.t(solver.step_index());
        for (q, f) in fields.iter_mut() {
            f.push_row(t, nodes.iter().map(|&m| solver.value(*q, m)));
        }
    };

    solver.observe(&mut bounds, true);
    record(&solver, &mut fields);
    while !solver.is_done() {
        solver.advance()?;
        solver.observe(&mut bounds, false);
        if decimation.keeps_time(grid, solver.step_index()) {
            record(&solver, &mut fields);
        }
    }
    Ok(SolutionFields { fields, bounds })
}

/// Runs the direct `(s, c)` scheme and returns every level of `s` and `c`.
pub fn solve_direct(
    grid: &Grid1D,
    mat: &MaterialParams,
    boundary: &BoundaryPair,
) -> Result<(Field, Field), SulphationError> {
    check_conditions(grid, mat)?;
    let nodes = grid.nodes();
    let xs: Vec<f64> = (0..nodes).map(|m| grid.x(m)).collect();
    let mut s_field = Field::new(xs.clone());
    let mut c_field = Field::new(xs);
    let mut s = vec![mat.s0_bar; nodes];
    s[0] = boundary.s_left[0];
    let mut c = vec![mat.c0_bar; nodes];
    c[0] = boundary.c_left[0];
    let mut s_next = vec![0.0; nodes];
    let mut c_next = vec![0.0; nodes];
    s_field.push_row(0.0, s.iter().copied());
    c_field.push_row(0.0, c.iter().copied());
    for n in 0..grid.n {
        step_sc(grid, mat, &s, &c, boundary.s_left[n + 1], &mut s_next, &mut c_next)?;
        c_next[0] = boundary.c_left[n + 1];
        std::mem::swap(&mut s, &mut s_next);
        std::mem::swap(&mut c, &mut c_next);
        s_field.push_row(grid.t(n + 1), s.iter().copied());
        c_field.push_row(grid.t(n + 1), c.iter().copied());
    }
    Ok((s_field, c_field))
}
