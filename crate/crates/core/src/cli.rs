//! Config-driven experiments writing plot-ready CSV.
//!
//! The config is TOML; every section and key is optional and falls back to
//! the default parameter set (see `configs/default.toml`). Each run writes
//! its CSV files plus `manifest.json` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ensemble::{self, AccuracyConfig, ConvergenceConfig, EnsembleConfig, EnsembleError};
use crate::heat_fd::{Field, Grid1D, GridError};
use crate::lsst::{LsstError, TruncationSpec};
use crate::pearson::{PearsonError, PearsonParams};
use crate::sulphation::{self, Decimation, MaterialParams, Quantity, SulphationError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    ConfigParse(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}
validation_from!(PearsonError, LsstError, GridError, SulphationError, EnsembleError);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub sigma: f64,
    pub k: f64,
    pub psi0: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            alpha: 7.0,
            gamma: 1.0,
            eta: 1.5,
            sigma: 1.0,
            k: 0.22,
            psi0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub phi1: f64,
    pub phi2: f64,
    pub lambda: f64,
    pub s0_bar: f64,
    pub c0_bar: f64,
}

impl Default for MaterialSection {
    fn default() -> Self {
        Self {
            phi1: 0.2,
            phi2: -0.01,
            lambda: 1.0,
            s0_bar: 0.0,
            c0_bar: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_bar: f64,
    pub t_end: f64,
    pub dx: f64,
    pub dt: f64,
    /// Exported nodes are restricted to `x ≤ x_view`.
    pub x_view: Option<f64>,
    /// SDE steps per PDE step.
    pub sde_substeps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_bar: 1.5,
            t_end: 1.5,
            dx: 0.01,
            dt: 1.99e-5,
            x_view: Some(1.0),
            sde_substeps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Ensemble size for field statistics and RMSD.
    pub paths: usize,
    /// Number of paths exported by `sde-path`.
    pub sde_paths: usize,
    /// Path index used by `simulate`.
    pub path_index: usize,
    /// Use the full published sample sizes instead of the desk-scale ones.
    pub full_size: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 20240601,
            paths: 200,
            sde_paths: 10,
            path_index: 0,
            full_size: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub time_stride: usize,
    pub space_stride: usize,
    pub quantities: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            time_stride: 1000,
            space_stride: 1,
            quantities: vec!["rho".into(), "c".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub t_end: f64,
    pub ref_exponent: u32,
    pub ratios: Vec<usize>,
    pub paths: usize,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            ref_exponent: 15,
            ratios: vec![16, 32, 64, 128, 256],
            paths: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccuracySection {
    pub t_end: f64,
    pub dt: f64,
    pub dx0: f64,
    pub levels: usize,
    pub paths: usize,
}

impl Default for AccuracySection {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt: 1.907e-6,
            dx0: 0.125,
            levels: 4,
            paths: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sde: SdeSection,
    pub material: MaterialSection,
    pub grid: GridSection,
    pub run: RunSection,
    pub output: OutputSection,
    pub convergence: ConvergenceSection,
    pub accuracy: AccuracySection,
}

/// Published sample sizes behind `full_size`.
const FULL_CONVERGENCE_PATHS: usize = 10_000;
const FULL_ENSEMBLE_PATHS: usize = 500;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::ConfigParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn params(&self) -> Result<PearsonParams, CliError> {
        let s = &self.sde;
        Ok(PearsonParams::new(s.alpha, s.gamma, s.sigma, s.eta)?)
    }

    pub fn material(&self) -> Result<MaterialParams, CliError> {
        let m = &self.material;
        Ok(MaterialParams::new(m.phi1, m.phi2, m.lambda, m.s0_bar, m.c0_bar, self.sde.eta)?)
    }

    pub fn grid(&self) -> Result<Grid1D, CliError> {
        let g = &self.grid;
        Ok(Grid1D::new(g.x_bar, g.t_end, g.dx, g.dt)?)
    }

    pub fn decimation(&self) -> Decimation {
        Decimation {
            time_stride: self.output.time_stride.max(1),
            space_stride: self.output.space_stride.max(1),
            x_view: self.grid.x_view,
        }
    }

    pub fn quantities(&self) -> Result<Vec<Quantity>, CliError> {
        self.output
            .quantities
            .iter()
            .map(|q| Quantity::parse(q).ok_or_else(|| CliError::Validation(format!("unknown quantity `{q}`"))))
            .collect()
    }

    pub fn ensemble_paths(&self) -> usize {
        if self.run.full_size {
            FULL_ENSEMBLE_PATHS
        } else {
            self.run.paths
        }
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig, CliError> {
        let grid = self.grid()?;
        let mat = self.material()?;
        sulphation::check_conditions(&grid, &mat)?;
        let cfg = EnsembleConfig {
            params: self.params()?,
            mat,
            k: self.sde.k,
            psi0: self.sde.psi0,
            grid,
            sde_substeps: self.grid.sde_substeps.max(1),
            decimation: self.decimation(),
            n_paths: self.ensemble_paths(),
            seed: self.run.seed,
        };
        if !cfg.params.is_deterministic() {
            TruncationSpec::for_params(&cfg.params, cfg.k, cfg.sde_dt())?;
        }
        Ok(cfg)
    }

    pub fn convergence(&self) -> Result<ConvergenceConfig, CliError> {
        let c = &self.convergence;
        Ok(ConvergenceConfig {
            params: self.params()?,
            k: self.sde.k,
            psi0: self.sde.psi0,
            t_end: c.t_end,
            ref_exponent: c.ref_exponent,
            ratios: c.ratios.clone(),
            n_paths: if self.run.full_size { FULL_CONVERGENCE_PATHS } else { c.paths },
            seed: self.run.seed,
        })
    }

    pub fn accuracy(&self) -> Result<AccuracyConfig, CliError> {
        let a = &self.accuracy;
        Ok(AccuracyConfig {
            params: self.params()?,
            mat: self.material()?,
            k: self.sde.k,
            psi0: self.sde.psi0,
            x_bar: self.grid.x_bar,
            t_end: a.t_end,
            dt: a.dt,
            dx0: a.dx0,
            levels: a.levels,
            n_paths: a.paths,
            seed: self.run.seed,
        })
    }

    /// SHA-256 of the canonical JSON form of the resolved config, output directory excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output.dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample boundary paths (t, y, psi).
    SdePath,
    /// Strong error table of the SDE sampler.
    SdeConvergence,
    /// One coupled solve, all fields.
    Simulate,
    /// Ensemble statistics of the retained fields.
    Ensemble,
    /// Pathwise spatial accuracy orders.
    Accuracy,
    /// RMSD between noisy and noise-free solutions.
    Rmsd,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SdePath => "sde-path",
            Command::SdeConvergence => "sde-convergence",
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Accuracy => "accuracy",
            Command::Rmsd => "rmsd",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sulphation", version, about = "Marble sulphation with a bounded stochastic boundary")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
    notes: Vec<String>,
}

impl Output {
    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|source| CliError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn push_row(out: &mut String, cells: &[f64]) {
    for (i, v) in cells.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

/// Wide CSV `t,x,<q₁>,<q₂>,…` of fields sharing one mesh.
pub fn fields_csv(fields: &[(Quantity, &Field)]) -> String {
    let mut s = String::from("t,x");
    for (q, _) in fields {
        s.push(',');
        s.push_str(q.name());
    }
    s.push('\n');
    if let Some((_, first)) = fields.first() {
        let mut cells = vec![0.0; fields.len() + 2];
        for n in 0..first.rows() {
            for m in 0..first.cols() {
                cells[0] = first.times[n];
                cells[1] = first.xs[m];
                for (i, (_, f)) in fields.iter().enumerate() {
                    cells[i + 2] = f.get(n, m);
                }
                push_row(&mut s, &cells);
            }
        }
    }
    s
}

/// Long CSV `t,x,stat,value`.
pub fn long_csv(stats: &[(&str, &Field)]) -> String {
    let mut s = String::from("t,x,stat,value\n");
    if let Some((_, first)) = stats.first() {
        for n in 0..first.rows() {
            for m in 0..first.cols() {
                for (name, f) in stats {
                    let _ = writeln!(s, "{:?},{:?},{},{:?}", first.times[n], first.xs[m], name, f.get(n, m));
                }
            }
        }
    }
    s
}

fn run_sde_path(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let ens = cfg.ensemble()?;
    let stride = cfg.output.time_stride.max(1);
    let mut s = String::from("path,t,y,psi\n");
    for j in 0..cfg.run.sde_paths {
        let (pair, path) = ens.boundary(j)?;
        match path {
            Some(p) => {
                for n in (0..p.len()).step_by(stride) {
                    let _ = writeln!(s, "{j},{:?},{:?},{:?}", p.times[n], p.y[n], p.psi[n]);
                }
            }
            None => {
                let eta = ens.params.eta();
                for n in (0..pair.len()).step_by(stride) {
                    let y = 2.0 * (pair.psi[n] / eta).sqrt().asin();
                    let _ = writeln!(s, "{j},{:?},{:?},{:?}", ens.grid.t(n), y, pair.psi[n]);
                }
            }
        }
    }
    out.write("sde_paths.csv", &s)
}

fn run_convergence(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let conv = cfg.convergence()?;
    let study = ensemble::strong_errors(&conv)?;
    let mut s = String::from("delta,ratio,e_final,e_uniform,e_final_y,e_uniform_y\n");
    for (i, &r) in conv.ratios.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:?},{},{:?},{:?},{:?},{:?}",
            study.deltas[i],
            r,
            study.errors_final[i],
            study.errors_uniform[i],
            study.errors_final_y[i],
            study.errors_uniform_y[i]
        );
    }
    out.write("convergence_errors.csv", &s)?;
    let mut f = String::from("estimator,q,c\n");
    for (name, fit) in [("final", study.fit_final), ("uniform", study.fit_uniform)] {
        let _ = writeln!(f, "{name},{:?},{:?}", fit.q, fit.log_c.exp());
    }
    out.notes.push(format!(
        "paths={} q_final={:.4} q_uniform={:.4}",
        study.n_paths, study.fit_final.q, study.fit_uniform.q
    ));
    out.write("convergence_fit.csv", &f)
}

fn run_simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let ens = cfg.ensemble()?;
    let sol = ens.solve_path(cfg.run.path_index, &Quantity::ALL)?;
    let fields: Vec<(Quantity, &Field)> = sol.fields.iter().map(|(q, f)| (*q, f)).collect();
    out.write("fields.csv", &fields_csv(&fields))?;
    let b = sol.bounds;
    out.notes.push(format!(
        "s in [{:?}, {:?}], c in [{:?}, {:?}], c increases {}, within bounds {}",
        b.min_s,
        b.max_s,
        b.min_c,
        b.max_c,
        b.c_increases,
        b.within(&ens.mat)
    ));
    Ok(())
}

fn run_ensemble(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let ens = cfg.ensemble()?;
    let quantities = cfg.quantities()?;
    let runs = ensemble::run_ensemble(&ens, &quantities)?;
    for &q in &quantities {
        let samples: Vec<&Field> = runs.iter().filter_map(|r| r.get(q)).collect();
        let stats = ensemble::field_statistics(&samples)?;
        out.write(&format!("stats_{}.csv", q.name()), &long_csv(&stats.named()))?;
    }
    let mut bounds = sulphation::BoundsMonitor::default();
    runs.iter().for_each(|r| bounds.merge(&r.bounds));
    out.notes.push(format!(
        "paths={} within bounds {}",
        runs.len(),
        bounds.within(&ens.mat)
    ));
    Ok(())
}

fn run_accuracy(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let records = ensemble::spatial_accuracy(&cfg.accuracy()?)?;
    let mut s = String::from("path,dx,p_rho,p_c\n");
    for r in &records {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", r.path, r.dx, r.p_rho, r.p_c);
    }
    out.write("accuracy.csv", &s)
}

fn run_rmsd(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let ens = cfg.ensemble()?;
    let quantities = cfg.quantities()?;
    let det = ens.deterministic()?.solve_path(0, &quantities)?;
    let runs = ensemble::run_ensemble(&ens, &quantities)?;
    for &q in &quantities {
        let samples: Vec<&Field> = runs.iter().filter_map(|r| r.get(q)).collect();
        let reference = det.get(q).expect("retained");
        let field = ensemble::rmsd(&samples, reference)?;
        out.write(&format!("rmsd_{}.csv", q.name()), &long_csv(&[("rmsd", &field)]))?;
    }
    Ok(())
}

/// Runs one subcommand with an already resolved config.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Manifest, CliError> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut out = Output {
        dir,
        files: Vec::new(),
        notes: Vec::new(),
    };
    match command {
        Command::SdePath => run_sde_path(cfg, &mut out)?,
        Command::SdeConvergence => run_convergence(cfg, &mut out)?,
        Command::Simulate => run_simulate(cfg, &mut out)?,
        Command::Ensemble => run_ensemble(cfg, &mut out)?,
        Command::Accuracy => run_accuracy(cfg, &mut out)?,
        Command::Rmsd => run_rmsd(cfg, &mut out)?,
    }
    let manifest = Manifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.run.seed,
        config_sha256: cfg.hash(),
        files: out.files.clone(),
        notes: out.notes.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    out.write("manifest.json", &(json + "\n"))?;
    Ok(manifest)
}

/// Parses the config named on the command line and applies flag overrides.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Manifest, CliError> {
    let cfg = resolve(cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| execute(cli.command, &cfg))
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(m) => {
            for note in &m.notes {
                println!("{note}");
            }
            println!("wrote {} files to {}", m.files.len() + 1, resolve(&cli).map(|c| c.output.dir).unwrap_or_default().display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
