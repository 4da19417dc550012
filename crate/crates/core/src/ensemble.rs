//! Monte Carlo drivers and estimators.
//!
//! Every path `j` draws its noise from stream `j` of the master seed, and
//! parallel work is collected in path order before any reduction, so all
//! results are identical for any thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::heat_fd::{Field, Grid1D, GridError};
use crate::lsst::{self, LsstError, SdePath, TruncationSpec};
use crate::pearson::{PearsonError, PearsonParams};
use crate::sulphation::{
    self, BoundaryPair, BoundsMonitor, Decimation, MaterialParams, Quantity, SolutionFields, SulphationError,
};

/// Minimum sample size for strong error estimates.
pub const MIN_CONVERGENCE_PATHS: usize = 100;

/// Paths processed per parallel batch; bounds peak memory in reductions.
const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("{got} paths supplied, at least {need} required")]
    InsufficientPaths { got: usize, need: usize },
    #[error("grids are not nested by factor 2 (lengths {0:?})")]
    GridsNotNested(Vec<usize>),
    #[error("fields live on different meshes")]
    GridMismatch,
    #[error("power-law fit needs at least two positive points")]
    InvalidFit,
    #[error("coarsening ratio {ratio} does not divide the {steps} reference steps")]
    BadRatio { ratio: usize, steps: usize },
    #[error(transparent)]
    Pearson(#[from] PearsonError),
    #[error(transparent)]
    Lsst(#[from] LsstError),
    #[error(transparent)]
    Sulphation(#[from] SulphationError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Least-squares fit of `log e = log C + q log Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub q: f64,
    pub log_c: f64,
}

pub fn fit_power_law(deltas: &[f64], errors: &[f64]) -> Result<PowerFit, EnsembleError> {
    if deltas.len() != errors.len()
        || deltas.len() < 2
        || deltas.iter().chain(errors).any(|&v| !(v > 0.0 && v.is_finite()))
    {
        return Err(EnsembleError::InvalidFit);
    }
    let n = deltas.len() as f64;
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(EnsembleError::InvalidFit);
    }
    let q = sxy / sxx;
    Ok(PowerFit { q, log_c: my - q * mx })
}

/// Setup of a strong convergence study against a fine LSST reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub params: PearsonParams,
    pub k: f64,
    pub psi0: f64,
    pub t_end: f64,
    /// Reference step `δ = 2^{-ref_exponent}` (times `t_end`).
    pub ref_exponent: u32,
    /// Coarse steps as multiples of `δ`.
    pub ratios: Vec<usize>,
    pub n_paths: usize,
    pub seed: u64,
}

impl ConvergenceConfig {
    /// Step ladder used for the published error table.
    pub fn table_ladder(params: PearsonParams, n_paths: usize, seed: u64) -> Self {
        Self {
            params,
            k: 0.22,
            psi0: 0.0,
            t_end: 1.0,
            ref_exponent: 15,
            ratios: (4..=8).map(|e| 1usize << e).collect(),
            n_paths,
            seed,
        }
    }

    pub fn delta_ref(&self) -> f64 {
        self.t_end / (1u64 << self.ref_exponent) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub delta_ref: f64,
    pub deltas: Vec<f64>,
    pub n_paths: usize,
    /// `ê_{2,T,Δ}` in `ψ`, root mean square error at the final time.
    pub errors_final: Vec<f64>,
    /// `ε̂_{2,Δ}` in `ψ`, square root of the largest mean square error over
    /// coarse mesh times.
    pub errors_uniform: Vec<f64>,
    /// The same two estimators measured in the transformed variable `y`.
    pub errors_final_y: Vec<f64>,
    pub errors_uniform_y: Vec<f64>,
    /// Fits of the `ψ` errors.
    pub fit_final: PowerFit,
    pub fit_uniform: PowerFit,
}

/// Squared errors of one path along each coarse mesh, `[ψ, y]`.
struct PathErrors {
    time_sq: Vec<[Vec<f64>; 2]>,
}

/// Estimates strong errors against the reference path, in `ψ` and in `y`.
/// Each coarse path is driven by block sums of the reference increments.
pub fn strong_errors(cfg: &ConvergenceConfig) -> Result<ConvergenceStudy, EnsembleError> {
    if cfg.n_paths < MIN_CONVERGENCE_PATHS {
        return Err(EnsembleError::InsufficientPaths {
            got: cfg.n_paths,
            need: MIN_CONVERGENCE_PATHS,
        });
    }
    let steps = 1usize << cfg.ref_exponent;
    let delta_ref = cfg.delta_ref();
    for &r in &cfg.ratios {
        if r == 0 || !steps.is_multiple_of(r) {
            return Err(EnsembleError::BadRatio { ratio: r, steps });
        }
    }
    let fine_spec = TruncationSpec::for_params(&cfg.params, cfg.k, delta_ref)?;
    let coarse_specs = cfg
        .ratios
        .iter()
        .map(|&r| TruncationSpec::for_params(&cfg.params, cfg.k, delta_ref * r as f64))
        .collect::<Result<Vec<_>, _>>()?;

    let one_path = |j: usize| -> Result<PathErrors, EnsembleError> {
        let mut rng = lsst::path_rng(cfg.seed, j as u64);
        let dw = lsst::brownian_increments(&mut rng, delta_ref, steps);
        let fine = lsst::path_from_increments(&cfg.params, &fine_spec, cfg.psi0, &dw)?;
        let mut out = PathErrors {
            time_sq: Vec::with_capacity(cfg.ratios.len()),
        };
        for (&r, spec) in cfg.ratios.iter().zip(&coarse_specs) {
            let coarse = lsst::path_from_increments(&cfg.params, spec, cfg.psi0, &lsst::coarsen(&dw, r))?;
            let sq = |fine: &[f64], coarse: &[f64]| -> Vec<f64> {
                coarse.iter().enumerate().map(|(n, v)| (fine[n * r] - v).powi(2)).collect()
            };
            out.time_sq.push([sq(&fine.psi, &coarse.psi), sq(&fine.y, &coarse.y)]);
        }
        Ok(out)
    };

    let mut time_sum: Vec<[Vec<f64>; 2]> = cfg
        .ratios
        .iter()
        .map(|&r| [vec![0.0; steps / r + 1], vec![0.0; steps / r + 1]])
        .collect();
    for start in (0..cfg.n_paths).step_by(BATCH) {
        let end = (start + BATCH).min(cfg.n_paths);
        let batch: Vec<PathErrors> = (start..end)
            .into_par_iter()
            .map(one_path)
            .collect::<Result<_, _>>()?;
        for p in batch {
            for (acc, path) in time_sum.iter_mut().zip(&p.time_sq) {
                for k in 0..2 {
                    for (a, v) in acc[k].iter_mut().zip(&path[k]) {
                        *a += v;
                    }
                }
            }
        }
    }
    let n = cfg.n_paths as f64;
    let deltas: Vec<f64> = cfg.ratios.iter().map(|&r| delta_ref * r as f64).collect();
    let final_rms = |k: usize| -> Vec<f64> { time_sum.iter().map(|t| (t[k].last().unwrap() / n).sqrt()).collect() };
    let uniform_rms = |k: usize| -> Vec<f64> {
        time_sum
            .iter()
            .map(|t| (t[k].iter().fold(0.0f64, |a, &b| a.max(b)) / n).sqrt())
            .collect()
    };
    let errors_final = final_rms(0);
    let errors_uniform = uniform_rms(0);
    Ok(ConvergenceStudy {
        delta_ref,
        fit_final: fit_power_law(&deltas, &errors_final)?,
        fit_uniform: fit_power_law(&deltas, &errors_uniform)?,
        deltas,
        n_paths: cfg.n_paths,
        errors_final,
        errors_uniform,
        errors_final_y: final_rms(1),
        errors_uniform_y: uniform_rms(1),
    })
}

/// `√(Δx Σ (a_m − b_{2m})²)` over the nodes of the coarser row `a`.
pub fn nested_distance(coarse: &[f64], fine: &[f64], dx_coarse: f64) -> Result<f64, EnsembleError> {
    if coarse.is_empty() || fine.len() != 2 * (coarse.len() - 1) + 1 {
        return Err(EnsembleError::GridsNotNested(vec![coarse.len(), fine.len()]));
    }
    let ss: f64 = coarse.iter().enumerate().map(|(m, a)| (a - fine[2 * m]).powi(2)).sum();
    Ok((dx_coarse * ss).sqrt())
}

/// Orders `log₂(‖g_Δx − g_Δx/2‖ / ‖g_Δx/2 − g_Δx/4‖)` along a ladder of
/// final-time rows, coarsest first, each level halving `Δx`. A ladder of
/// `L` rows yields `L − 2` orders.
pub fn accuracy_orders(rows: &[Vec<f64>], dx0: f64) -> Result<Vec<f64>, EnsembleError> {
    if rows.len() < 3 {
        return Err(EnsembleError::GridsNotNested(rows.iter().map(Vec::len).collect()));
    }
    let mut dists = Vec::with_capacity(rows.len() - 1);
    let mut dx = dx0;
    for pair in rows.windows(2) {
        dists.push(
            nested_distance(&pair[0], &pair[1], dx)
                .map_err(|_| EnsembleError::GridsNotNested(rows.iter().map(Vec::len).collect()))?,
        );
        dx *= 0.5;
    }
    Ok(dists.windows(2).map(|d| (d[0] / d[1]).log2()).collect())
}

/// Setup of the pathwise spatial accuracy experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyConfig {
    pub params: PearsonParams,
    pub mat: MaterialParams,
    pub k: f64,
    pub psi0: f64,
    pub x_bar: f64,
    pub t_end: f64,
    pub dt: f64,
    pub dx0: f64,
    /// Number of grids; `levels − 2` orders are produced per path.
    pub levels: usize,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRecord {
    pub path: usize,
    pub dx: f64,
    pub p_rho: f64,
    pub p_c: f64,
}

/// Final-time `ρ` and `c` rows for one boundary pair on one grid.
fn final_rows(grid: &Grid1D, mat: &MaterialParams, boundary: &BoundaryPair) -> Result<(Vec<f64>, Vec<f64>), EnsembleError> {
    let mut solver = sulphation::CoupledSolver::new(grid, mat, boundary)?;
    while !solver.is_done() {
        solver.advance()?;
    }
    let rho = (0..grid.nodes()).map(|m| solver.value(Quantity::Rho, m)).collect();
    Ok((rho, solver.c().to_vec()))
}

/// Per-path orders for `ρ` and `c`; the same boundary path drives every grid.
pub fn spatial_accuracy(cfg: &AccuracyConfig) -> Result<Vec<AccuracyRecord>, EnsembleError> {
    let base = Grid1D::new(cfg.x_bar, cfg.t_end, cfg.dx0, cfg.dt)?;
    let grids = (0..cfg.levels)
        .map(|l| base.refined(1 << l))
        .collect::<Result<Vec<_>, _>>()?;
    for g in &grids {
        sulphation::check_conditions(g, &cfg.mat)?;
    }
    let spec = TruncationSpec::for_params(&cfg.params, cfg.k, base.dt)?;
    let per_path = |j: usize| -> Result<Vec<AccuracyRecord>, EnsembleError> {
        let path = lsst::sample_path(&cfg.params, &spec, cfg.psi0, base.n, cfg.seed, j as u64)?;
        let boundary = BoundaryPair::from_series(&path.psi, base.dt, 1, &cfg.mat);
        let (mut rho, mut c) = (Vec::new(), Vec::new());
        for g in &grids {
            let (r, cc) = final_rows(g, &cfg.mat, &boundary)?;
            rho.push(r);
            c.push(cc);
        }
        let pr = accuracy_orders(&rho, base.dx)?;
        let pc = accuracy_orders(&c, base.dx)?;
        Ok(pr
            .iter()
            .zip(&pc)
            .enumerate()
            .map(|(l, (&p_rho, &p_c))| AccuracyRecord {
                path: j,
                dx: base.dx / (1u64 << l) as f64,
                p_rho,
                p_c,
            })
            .collect())
    };
    // grids within a path are independent too, but paths give enough parallelism
    let nested: Vec<Vec<AccuracyRecord>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(per_path)
        .collect::<Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Nearest-rank percentile of an ascending sample: element `⌈pN⌉` (1-based).
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Welford accumulator with an exact pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldStatistics {
    pub mean: Field,
    pub std: Field,
    pub p25: Field,
    pub p50: Field,
    pub p75: Field,
    pub n_paths: usize,
}

impl FieldStatistics {
    pub fn named(&self) -> [(&'static str, &Field); 5] {
        [
            ("mean", &self.mean),
            ("std", &self.std),
            ("p25", &self.p25),
            ("p50", &self.p50),
            ("p75", &self.p75),
        ]
    }
}

fn check_mesh(samples: &[&Field]) -> Result<(), EnsembleError> {
    if samples.iter().any(|f| !f.same_mesh(samples[0])) {
        return Err(EnsembleError::GridMismatch);
    }
    Ok(())
}

/// Pointwise mean, unbiased standard deviation and nearest-rank quartiles.
pub fn field_statistics(samples: &[&Field]) -> Result<FieldStatistics, EnsembleError> {
    if samples.len() < 2 {
        return Err(EnsembleError::InsufficientPaths {
            got: samples.len(),
            need: 2,
        });
    }
    check_mesh(samples)?;
    let proto = samples[0];
    let empty = || Field {
        times: proto.times.clone(),
        xs: proto.xs.clone(),
        data: Vec::with_capacity(proto.data.len()),
    };
    let (mut mean, mut std, mut p25, mut p50, mut p75) = (empty(), empty(), empty(), empty(), empty());
    let mut column = Vec::with_capacity(samples.len());
    for i in 0..proto.data.len() {
        column.clear();
        let mut mom = RunningMoments::default();
        for f in samples {
            let v = f.data[i];
            mom.push(v);
            column.push(v);
        }
        column.sort_by(f64::total_cmp);
        mean.data.push(mom.mean);
        std.data.push(mom.std());
        p25.data.push(percentile_nearest_rank(&column, 0.25));
        p50.data.push(percentile_nearest_rank(&column, 0.50));
        p75.data.push(percentile_nearest_rank(&column, 0.75));
    }
    Ok(FieldStatistics {
        mean,
        std,
        p25,
        p50,
        p75,
        n_paths: samples.len(),
    })
}

/// `√(mean_j |f_j − f₀|²)` at every node.
pub fn rmsd(samples: &[&Field], reference: &Field) -> Result<Field, EnsembleError> {
    if samples.is_empty() {
        return Err(EnsembleError::InsufficientPaths { got: 0, need: 1 });
    }
    if samples.iter().any(|f| !f.same_mesh(reference)) {
        return Err(EnsembleError::GridMismatch);
    }
    let n = samples.len() as f64;
    let data = (0..reference.data.len())
        .map(|i| {
            let ss: f64 = samples.iter().map(|f| (f.data[i] - reference.data[i]).powi(2)).sum();
            (ss / n).sqrt()
        })
        .collect();
    Ok(Field {
        times: reference.times.clone(),
        xs: reference.xs.clone(),
        data,
    })
}

/// Two-sided Kolmogorov–Smirnov distance between a sample and a CDF. Sorts
/// `sample` in place.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Pooled `ψ` values at mesh times `t ≥ t_min` over `n_paths` LSST paths.
pub fn pooled_marginal(
    params: &PearsonParams,
    spec: &TruncationSpec,
    psi0: f64,
    t_end: f64,
    t_min: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>, EnsembleError> {
    let steps = (t_end / spec.delta).round() as usize;
    let first = (t_min / spec.delta).ceil() as usize;
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|j| {
            lsst::sample_path(params, spec, psi0, steps, seed, j as u64).map(|p| p.psi[first.min(p.psi.len())..].to_vec())
        })
        .collect::<Result<_, _>>()?;
    Ok(paths.concat())
}

/// Setup of a coupled-system ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub params: PearsonParams,
    pub mat: MaterialParams,
    pub k: f64,
    pub psi0: f64,
    pub grid: Grid1D,
    /// SDE steps per PDE step.
    pub sde_substeps: usize,
    pub decimation: Decimation,
    pub n_paths: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn sde_dt(&self) -> f64 {
        self.grid.dt / self.sde_substeps.max(1) as f64
    }

    /// Boundary pair of path `j`; the noise-free boundary when `σ = 0`.
    pub fn boundary(&self, j: usize) -> Result<(BoundaryPair, Option<SdePath>), EnsembleError> {
        if self.params.is_deterministic() {
            return Ok((BoundaryPair::deterministic(&self.params, &self.grid, &self.mat), None));
        }
        let sub = self.sde_substeps.max(1);
        let spec = TruncationSpec::for_params(&self.params, self.k, self.sde_dt())?;
        let path = lsst::sample_path(&self.params, &spec, self.psi0, self.grid.n * sub, self.seed, j as u64)?;
        let pair = BoundaryPair::from_path(&path, self.sde_dt(), &self.grid, &self.mat)?;
        Ok((pair, Some(path)))
    }

    pub fn solve_path(&self, j: usize, quantities: &[Quantity]) -> Result<SolutionFields, EnsembleError> {
        let (pair, _) = self.boundary(j)?;
        Ok(sulphation::solve_system(&self.grid, &self.mat, &pair, &self.decimation, quantities)?)
    }

    /// The same setup with the noise switched off.
    pub fn deterministic(&self) -> Result<Self, EnsembleError> {
        Ok(Self {
            params: self.params.with_sigma(0.0)?,
            ..self.clone()
        })
    }
}

/// Solves every path of the ensemble, in path order.
pub fn run_ensemble(cfg: &EnsembleConfig, quantities: &[Quantity]) -> Result<Vec<SolutionFields>, EnsembleError> {
    sulphation::check_conditions(&cfg.grid, &cfg.mat)?;
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|j| cfg.solve_path(j, quantities))
        .collect()
}

/// Bounds over the whole ensemble together with the extreme boundary values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleBounds {
    pub fields: BoundsMonitor,
    pub psi_min: f64,
    pub psi_max: f64,
    pub psi_checked: usize,
    /// Smallest `s` produced by the direct `(s, c)` scheme on the same boundaries.
    pub direct_min_s: f64,
}

/// Runs the ensemble keeping only bounds, not fields.
pub fn ensemble_bounds(cfg: &EnsembleConfig) -> Result<EnsembleBounds, EnsembleError> {
    sulphation::check_conditions(&cfg.grid, &cfg.mat)?;
    let per_path: Vec<(BoundsMonitor, f64, f64, usize, f64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|j| -> Result<_, EnsembleError> {
            let (pair, path) = cfg.boundary(j)?;
            let psi: &[f64] = path.as_ref().map_or(&pair.psi, |p| &p.psi);
            let lo = psi.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let out = sulphation::solve_system(&cfg.grid, &cfg.mat, &pair, &cfg.decimation, &[])?;
            let (s_direct, _) = sulphation::solve_direct(&cfg.grid, &cfg.mat, &pair)?;
            let direct_min = s_direct.data.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((out.bounds, lo, hi, psi.len(), direct_min))
        })
        .collect::<Result<_, _>>()?;
    let mut acc = EnsembleBounds {
        fields: BoundsMonitor::default(),
        psi_min: f64::INFINITY,
        psi_max: f64::NEG_INFINITY,
        psi_checked: 0,
        direct_min_s: f64::INFINITY,
    };
    for (b, lo, hi, n, d) in per_path {
        acc.direct_min_s = acc.direct_min_s.min(d);
        acc.fields.merge(&b);
        acc.psi_min = acc.psi_min.min(lo);
        acc.psi_max = acc.psi_max.max(hi);
        acc.psi_checked += n;
    }
    Ok(acc)
}
