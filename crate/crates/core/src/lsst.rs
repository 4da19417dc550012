//! Lamperti sloping smooth truncation (LSST) sampler for the boundary SDE.
//!
//! The transformed drift `f` is replaced by `f_Δ`, which equals `f` on
//! `[Δᵏ, π − Δᵏ]`, blends quadratically into a line of slope `−C₀` on the
//! two thin strips next to `0` and `π`, and continues that line outside
//! `[0, π]`. `f_Δ` is C¹, globally Lipschitz and keeps `f′_Δ ≤ −C₀`, so
//! explicit Euler–Maruyama on `y` is stable and `η sin²(y/2)` never leaves
//! `[0, η]`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::lamperti::{self, LampertiDrift};
use crate::pearson::{PearsonError, PearsonParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LsstError {
    #[error("truncation exponent k = {0} must lie in (0, 1)")]
    InvalidExponent(f64),
    #[error("time step {dt} must be positive and below the admissible bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error(transparent)]
    Pearson(#[from] PearsonError),
}

/// `(y* ∧ (π − y*) ∧ 1)^{1/k}`.
pub fn delta_star(k: f64, y_star: f64) -> f64 {
    y_star.min(PI - y_star).min(1.0).powf(1.0 / k)
}

/// Regularization data of `f_Δ` for one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    pub k: f64,
    pub delta: f64,
    pub delta_star: f64,
    /// Inner threshold `Δᵏ`.
    pub thr: f64,
    /// `(f(Δᵏ), f′(Δᵏ))`.
    pub taylor_left: (f64, f64),
    /// `(f(π − Δᵏ), f′(π − Δᵏ))`.
    pub taylor_right: (f64, f64),
    pub c0_const: f64,
    pub drift: LampertiDrift,
}

impl TruncationSpec {
    pub fn new(drift: LampertiDrift, k: f64, delta: f64) -> Result<Self, LsstError> {
        if !(k > 0.0 && k < 1.0) {
            return Err(LsstError::InvalidExponent(k));
        }
        let bound = delta_star(k, drift.y_star);
        if !(delta > 0.0 && delta < bound) {
            return Err(LsstError::StepTooLarge { dt: delta, bound });
        }
        let thr = delta.powf(k);
        Ok(Self {
            k,
            delta,
            delta_star: bound,
            thr,
            taylor_left: (drift.f(thr), drift.df(thr)),
            taylor_right: (drift.f(PI - thr), drift.df(PI - thr)),
            c0_const: drift.c0_const,
            drift,
        })
    }

    /// Convenience constructor straight from the SDE coefficients.
    pub fn for_params(params: &PearsonParams, k: f64, delta: f64) -> Result<Self, LsstError> {
        Self::new(LampertiDrift::new(params), k, delta)
    }

    /// The truncated drift `f_Δ(y)`, defined on all of ℝ.
    #[inline]
    pub fn truncated_drift(&self, y: f64) -> f64 {
        let thr = self.thr;
        let c0 = self.c0_const;
        let (fl, dfl) = self.taylor_left;
        let (fr, dfr) = self.taylor_right;
        if y < 0.0 {
            fl - 0.5 * thr * dfl - c0 * (y - 0.5 * thr)
        } else if y < thr {
            let z = y - thr;
            fl + dfl * z + (dfl + c0) / (2.0 * thr) * z * z
        } else if y <= PI - thr {
            self.drift.f(y)
        } else if y <= PI {
            let z = y - PI + thr;
            fr + dfr * z - (dfr + c0) / (2.0 * thr) * z * z
        } else {
            fr + 0.5 * thr * dfr - c0 * (y - PI + 0.5 * thr)
        }
    }

    /// One explicit Euler–Maruyama step `y + f_Δ(y)Δ + σ dW`.
    #[inline]
    pub fn em_step(&self, sigma: f64, y_prev: f64, dw: f64) -> f64 {
        y_prev + self.truncated_drift(y_prev) * self.delta + sigma * dw
    }
}

/// Independent RNG stream for path `index` under `seed`.
///
/// Streams are addressed by `(seed, index)` only, so a path's noise does not
/// depend on how many paths are drawn or on scheduling order.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n` Brownian increments with variance `dt`.
pub fn brownian_increments(rng: &mut impl Rng, dt: f64, n: usize) -> Vec<f64> {
    let scale = dt.sqrt();
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Sums consecutive blocks of `factor` fine increments. A trailing partial
/// block is dropped.
pub fn coarsen(fine: &[f64], factor: usize) -> Vec<f64> {
    fine.chunks_exact(factor).map(|c| c.iter().sum()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub psi: Vec<f64>,
    /// `(seed, stream)` the increments were drawn from, if any.
    pub seed: Option<(u64, u64)>,
}

impl SdePath {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

/// Runs the LSST recursion driven by the given increments.
pub fn path_from_increments(
    params: &PearsonParams,
    spec: &TruncationSpec,
    psi0: f64,
    increments: &[f64],
) -> Result<SdePath, LsstError> {
    let eta = params.eta();
    let sigma = params.sigma();
    let mut y = Vec::with_capacity(increments.len() + 1);
    let mut cur = lamperti::forward(params, psi0)?;
    y.push(cur);
    for &dw in increments {
        cur = spec.em_step(sigma, cur, dw);
        y.push(cur);
    }
    let psi = y.iter().map(|&v| lamperti::inverse(eta, v)).collect();
    let times = (0..y.len()).map(|n| n as f64 * spec.delta).collect();
    Ok(SdePath {
        times,
        y,
        psi,
        seed: None,
    })
}

/// Samples one path of `n_steps` steps from stream `(seed, stream)`.
pub fn sample_path(
    params: &PearsonParams,
    spec: &TruncationSpec,
    psi0: f64,
    n_steps: usize,
    seed: u64,
    stream: u64,
) -> Result<SdePath, LsstError> {
    let mut rng = path_rng(seed, stream);
    let dw = brownian_increments(&mut rng, spec.delta, n_steps);
    let mut path = path_from_increments(params, spec, psi0, &dw)?;
    path.seed = Some((seed, stream));
    Ok(path)
}

/// Noise-free boundary `γ(1 − e^{−αt})`.
pub fn deterministic_boundary(params: &PearsonParams, t: f64) -> f64 {
    params.gamma() * -(-params.alpha() * t).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(sigma: f64) -> PearsonParams {
        PearsonParams::new(7.0, 1.0, sigma, 1.5).unwrap()
    }

    fn spec(sigma: f64, delta: f64) -> TruncationSpec {
        TruncationSpec::for_params(&params(sigma), 0.22, delta).unwrap()
    }

    #[test]
    fn delta_star_cases() {
        assert_eq!(delta_star(0.5, PI / 2.0), 1.0);
        assert_eq!(delta_star(0.22, 1.912), 1.0);
        assert_relative_eq!(delta_star(0.25, 0.5), 0.0625, epsilon = 1e-16);
    }

    #[test]
    fn spec_validation() {
        let d = LampertiDrift::new(&params(1.0));
        assert!(matches!(
            TruncationSpec::new(d, 1.0, 1e-3),
            Err(LsstError::InvalidExponent(_))
        ));
        assert!(matches!(
            TruncationSpec::new(d, 0.22, 1.0),
            Err(LsstError::StepTooLarge { .. })
        ));
        let s = spec(1.0, 1e-4);
        assert!(s.thr > 0.0 && s.thr < d.y_star.min(PI - d.y_star));
    }

    #[test]
    fn middle_branch_is_exact() {
        let s = spec(1.0, 1e-4);
        for i in 0..=50 {
            let y = s.thr + (PI - 2.0 * s.thr) * i as f64 / 50.0;
            assert_eq!(s.truncated_drift(y), s.drift.f(y));
        }
    }

    #[test]
    fn outer_branches_have_slope_minus_c0() {
        let s = spec(0.25, 1e-4);
        assert_relative_eq!(
            s.truncated_drift(-1.0) - s.truncated_drift(-2.0),
            -s.c0_const,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            s.truncated_drift(PI + 2.0) - s.truncated_drift(PI + 1.0),
            -s.c0_const,
            epsilon = 1e-12
        );
    }

    #[test]
    fn junctions_are_continuous() {
        let s = spec(1.0, 2f64.powi(-10));
        let eps = 1e-12;
        for x in [0.0, s.thr, PI - s.thr, PI] {
            let l = s.truncated_drift(x - eps);
            let r = s.truncated_drift(x + eps);
            assert!((l - r).abs() < 1e-10 * (1.0 + l.abs()), "jump at {x}: {l} vs {r}");
        }
    }

    #[test]
    fn em_step_fixed_point_and_pull() {
        let s = spec(1.0, 1e-3);
        let ys = s.drift.y_star;
        assert_relative_eq!(s.em_step(1.0, ys, 0.0), ys, epsilon = 1e-12);
        assert!(s.em_step(0.0, ys + 0.3, 0.0) < ys + 0.3);
        assert!(s.em_step(0.0, ys - 0.3, 0.0) > ys - 0.3);
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = params(1.0);
        let s = spec(1.0, 1e-3);
        let a = sample_path(&p, &s, 0.0, 500, 17, 3).unwrap();
        let b = sample_path(&p, &s, 0.0, 500, 17, 3).unwrap();
        let c = sample_path(&p, &s, 0.0, 500, 17, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
        assert_eq!(a.len(), 501);
        assert_eq!(a.y[0], 0.0);
        for (y, psi) in a.y.iter().zip(&a.psi) {
            assert_eq!(*psi, lamperti::inverse(1.5, *y));
            assert!((0.0..=1.5).contains(psi));
        }
    }

    #[test]
    fn coarsening_sums_blocks() {
        let fine = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(coarsen(&fine, 2), vec![3.0, 7.0]);
    }

    #[test]
    fn deterministic_boundary_closed_form() {
        let p = params(0.0);
        assert_eq!(deterministic_boundary(&p, 0.0), 0.0);
        assert_relative_eq!(deterministic_boundary(&p, 1.0 / 7.0), 1.0 - (-1f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(deterministic_boundary(&p, 50.0), 1.0, epsilon = 1e-15);
        assert!(deterministic_boundary(&p, 50.0) <= 1.0);
    }
}
