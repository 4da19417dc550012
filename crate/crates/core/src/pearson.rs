//! Bounded Pearson diffusion used as the outdoor SO₂ boundary signal.
//!
//! ```text
//! dΨ = α(γ − Ψ) dt + σ √(Ψ(η − Ψ)) dW,   Ψ ∈ [0, η]
//! ```
//!
//! With `ν₁ = 2αγ/(σ²η)` and `ν₂ = 2α(η−γ)/(σ²η)`, both endpoints are
//! entrance boundaries iff `min(ν₁, ν₂) > 1`, and the invariant law is a
//! Beta(ν₁, ν₂) stretched onto `[0, η]`.
//!
//! Densities are evaluated in log space: for σ = 0.25 the exponents reach
//! ν₁ ≈ 149 and the raw powers overflow.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PearsonError {
    #[error("coefficient `{name}` must be finite and positive, got {value}")]
    NonPositiveCoefficient { name: &'static str, value: f64 },
    #[error("mean level gamma = {gamma} must lie strictly below the bound eta = {eta}")]
    GammaNotBelowEta { gamma: f64, eta: f64 },
    #[error("entrance condition min(nu1, nu2) > 1 violated: nu1 = {nu1}, nu2 = {nu2}")]
    NuConditionViolated { nu1: f64, nu2: f64 },
    #[error("state {value} outside the open interval (0, {eta})")]
    DomainViolation { value: f64, eta: f64 },
    #[error("operation requires a diffusive process (sigma > 0)")]
    Deterministic,
}

/// Validated coefficients of the Pearson SDE.
///
/// `sigma == 0` is an explicit deterministic mode: the boundary follows
/// `γ(1 − e^{−αt})` and the ν exponents are undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonParams {
    alpha: f64,
    gamma: f64,
    sigma: f64,
    eta: f64,
    nu: Option<(f64, f64)>,
}

impl PearsonParams {
    /// Validates the quadruple `(α, γ, σ, η)`.
    pub fn new(alpha: f64, gamma: f64, sigma: f64, eta: f64) -> Result<Self, PearsonError> {
        for (name, value) in [("alpha", alpha), ("gamma", gamma), ("eta", eta)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(PearsonError::NonPositiveCoefficient { name, value });
            }
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(PearsonError::NonPositiveCoefficient {
                name: "sigma",
                value: sigma,
            });
        }
        if gamma >= eta {
            return Err(PearsonError::GammaNotBelowEta { gamma, eta });
        }
        if sigma == 0.0 {
            return Ok(Self {
                alpha,
                gamma,
                sigma,
                eta,
                nu: None,
            });
        }
        let s2eta = sigma * sigma * eta;
        let nu1 = 2.0 * alpha * gamma / s2eta;
        let nu2 = 2.0 * alpha * (eta - gamma) / s2eta;
        if !(nu1.min(nu2) > 1.0) {
            return Err(PearsonError::NuConditionViolated { nu1, nu2 });
        }
        Ok(Self {
            alpha,
            gamma,
            sigma,
            eta,
            nu: Some((nu1, nu2)),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn is_deterministic(&self) -> bool {
        self.nu.is_none()
    }

    /// `(ν₁, ν₂)`, or `None` in deterministic mode.
    pub fn exponents(&self) -> Option<(f64, f64)> {
        self.nu
    }

    /// `ν = min(ν₁, ν₂)`.
    pub fn nu(&self) -> Option<f64> {
        self.nu.map(|(a, b)| a.min(b))
    }

    /// Same process with a different noise intensity.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self, PearsonError> {
        Self::new(self.alpha, self.gamma, sigma, self.eta)
    }

    /// Default anchor for the scale and speed densities.
    pub fn default_anchor(&self) -> f64 {
        0.5 * self.eta
    }

    fn diffusive(&self) -> Result<(f64, f64), PearsonError> {
        self.nu.ok_or(PearsonError::Deterministic)
    }

    fn check_open(&self, x: f64) -> Result<(), PearsonError> {
        if x > 0.0 && x < self.eta {
            Ok(())
        } else {
            Err(PearsonError::DomainViolation {
                value: x,
                eta: self.eta,
            })
        }
    }

    /// `ln s(x)` relative to the anchor `x0`.
    pub fn ln_scale_density(&self, x: f64, x0: f64) -> Result<f64, PearsonError> {
        let (nu1, nu2) = self.diffusive()?;
        self.check_open(x)?;
        self.check_open(x0)?;
        let eta = self.eta;
        Ok(nu1 * (x0.ln() - x.ln()) + nu2 * ((eta - x0).ln() - (eta - x).ln()))
    }

    /// Scale density `s(x) = x₀^{ν₁}(η−x₀)^{ν₂} / (x^{ν₁}(η−x)^{ν₂})`.
    pub fn scale_density(&self, x: f64, x0: f64) -> Result<f64, PearsonError> {
        self.ln_scale_density(x, x0).map(f64::exp)
    }

    /// Speed density `m(x) = 1 / (σ² x (η−x) s(x))`.
    pub fn speed_density(&self, x: f64, x0: f64) -> Result<f64, PearsonError> {
        let ln_s = self.ln_scale_density(x, x0)?;
        let ln_b2 = 2.0 * self.sigma.ln() + x.ln() + (self.eta - x).ln();
        Ok((-ln_s - ln_b2).exp())
    }

    /// Invariant Beta(ν₁, ν₂) density rescaled onto `[0, η]`.
    pub fn invariant_density(&self, x: f64) -> Result<f64, PearsonError> {
        let (nu1, nu2) = self.diffusive()?;
        let eta = self.eta;
        if !(0.0..=eta).contains(&x) {
            return Err(PearsonError::DomainViolation { value: x, eta });
        }
        if x == 0.0 || x == eta {
            // ν₁, ν₂ > 1 for every validated parameter set.
            return Ok(0.0);
        }
        let ln_norm = ln_gamma(nu1 + nu2) - ln_gamma(nu1) - ln_gamma(nu2);
        let ln_p = ln_norm + (nu1 - 1.0) * x.ln() + (nu2 - 1.0) * (eta - x).ln()
            - (nu1 + nu2 - 1.0) * eta.ln();
        Ok(ln_p.exp())
    }

    /// Distribution function of the invariant law at `x`, clamped to `[0, 1]`
    /// outside the support.
    pub fn invariant_cdf(&self, x: f64) -> Result<f64, PearsonError> {
        let (nu1, nu2) = self.diffusive()?;
        if x <= 0.0 {
            return Ok(0.0);
        }
        if x >= self.eta {
            return Ok(1.0);
        }
        Ok(beta_reg(nu1, nu2, x / self.eta))
    }

    /// Mean of the invariant law, `η ν₁/(ν₁+ν₂)`.
    pub fn invariant_mean(&self) -> Option<f64> {
        self.nu.map(|(nu1, nu2)| self.eta * nu1 / (nu1 + nu2))
    }

    /// Mode of the invariant law, `η(ν₁−1)/(ν₁+ν₂−2)`.
    pub fn invariant_mode(&self) -> Option<f64> {
        self.nu
            .map(|(nu1, nu2)| self.eta * (nu1 - 1.0) / (nu1 + nu2 - 2.0))
    }

    pub fn classify_boundaries(&self) -> Option<BoundaryClassification> {
        self.nu.map(|(nu1, nu2)| BoundaryClassification::from_exponents(nu1, nu2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Entrance,
    NotEntrance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryClassification {
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub nu: f64,
}

impl BoundaryClassification {
    /// Classifies `0` through ν₁ and `η` through ν₂. Usable on raw exponents,
    /// which is how the non-entrance cases are reached.
    pub fn from_exponents(nu1: f64, nu2: f64) -> Self {
        let kind = |nu: f64| {
            if nu > 1.0 {
                BoundaryKind::Entrance
            } else {
                BoundaryKind::NotEntrance
            }
        };
        Self {
            left: kind(nu1),
            right: kind(nu2),
            nu: nu1.min(nu2),
        }
    }
}

/// Raw exponents `(ν₁, ν₂)` for an unvalidated quadruple with σ > 0.
pub fn raw_exponents(alpha: f64, gamma: f64, sigma: f64, eta: f64) -> (f64, f64) {
    let s2eta = sigma * sigma * eta;
    (
        2.0 * alpha * gamma / s2eta,
        2.0 * alpha * (eta - gamma) / s2eta,
    )
}
