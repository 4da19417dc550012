//! Lamperti change of variables `y = 2 arcsin(√(ψ/η))`.
//!
//! It maps the Pearson SDE onto an additive-noise equation on `(0, π)`:
//!
//! ```text
//! dY = f(Y) dt + σ dW,   f(y) = a₁ cot(y/2) − a₂ tan(y/2)
//! ```
//!
//! `f` is strictly decreasing with `f′ ≤ −C₀`, `C₀ = (2α − σ²)/4`.

use std::f64::consts::PI;

use crate::pearson::{PearsonError, PearsonParams};

/// Maps a state in `[0, η]` to `[0, π]`.
pub fn forward(params: &PearsonParams, psi: f64) -> Result<f64, PearsonError> {
    let eta = params.eta();
    if !(0.0..=eta).contains(&psi) {
        return Err(PearsonError::DomainViolation { value: psi, eta });
    }
    Ok(2.0 * (psi / eta).sqrt().min(1.0).asin())
}

/// `η sin²(y/2)`; defined for every real `y` and always in `[0, η]`.
#[inline]
pub fn inverse(eta: f64, y: f64) -> f64 {
    let s = (0.5 * y).sin();
    (eta * s * s).clamp(0.0, eta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LampertiDrift {
    pub a1: f64,
    pub a2: f64,
    pub c0_const: f64,
    pub y_star: f64,
}

impl LampertiDrift {
    /// Also defined for σ = 0, where it is the noise-free relaxation
    /// `dψ = α(γ − ψ) dt` seen through the transform.
    pub fn new(params: &PearsonParams) -> Self {
        let (alpha, gamma, sigma, eta) = (params.alpha(), params.gamma(), params.sigma(), params.eta());
        let s2eta = sigma * sigma * eta;
        let a1 = (4.0 * alpha * gamma - s2eta) / (4.0 * eta);
        let a2 = (4.0 * alpha * (eta - gamma) - s2eta) / (4.0 * eta);
        let c0_const = (2.0 * alpha - sigma * sigma) / 4.0;
        let mut d = Self {
            a1,
            a2,
            c0_const,
            y_star: 2.0 * (a1 / a2).sqrt().atan(),
        };
        // One Newton polish; f' < 0 everywhere so the step is well defined.
        let step = d.f(d.y_star) / d.df(d.y_star);
        if step.is_finite() {
            let polished = d.y_star - step;
            if polished > 0.0 && polished < PI && d.f(polished).abs() <= d.f(d.y_star).abs() {
                d.y_star = polished;
            }
        }
        d
    }

    /// Unchecked drift; finite on the open interval `(0, π)`.
    #[inline]
    pub fn f(&self, y: f64) -> f64 {
        let (s, c) = (0.5 * y).sin_cos();
        self.a1 * c / s - self.a2 * s / c
    }

    /// Unchecked derivative `−a₁/(2 sin²(y/2)) − a₂/(2 cos²(y/2))`.
    #[inline]
    pub fn df(&self, y: f64) -> f64 {
        let (s, c) = (0.5 * y).sin_cos();
        -0.5 * self.a1 / (s * s) - 0.5 * self.a2 / (c * c)
    }

    pub fn drift(&self, y: f64) -> Result<f64, PearsonError> {
        check_open(y)?;
        Ok(self.f(y))
    }

    pub fn drift_derivative(&self, y: f64) -> Result<f64, PearsonError> {
        check_open(y)?;
        Ok(self.df(y))
    }
}

fn check_open(y: f64) -> Result<(), PearsonError> {
    if y > 0.0 && y < PI {
        Ok(())
    } else {
        Err(PearsonError::DomainViolation { value: y, eta: PI })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base(sigma: f64) -> PearsonParams {
        PearsonParams::new(7.0, 1.0, sigma, 1.5).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let p = base(1.0);
        assert_eq!(forward(&p, 0.0).unwrap(), 0.0);
        assert_relative_eq!(forward(&p, 1.5).unwrap(), PI, epsilon = 1e-15);
        assert_relative_eq!(forward(&p, 0.75).unwrap(), PI / 2.0, epsilon = 1e-15);
        assert!(forward(&p, 1.5001).is_err());
        assert!(forward(&p, -1e-12).is_err());
        assert_relative_eq!(inverse(1.5, PI / 2.0), 0.75, epsilon = 1e-15);
        let wrapped = inverse(1.5, PI + 0.1);
        assert!(wrapped < 1.5 && wrapped > 0.0);
        assert_relative_eq!(inverse(1.5, forward(&p, 0.3).unwrap()), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn coefficients_closed_form() {
        let d = LampertiDrift::new(&base(1.0));
        assert_relative_eq!(d.a1, 26.5 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(d.a2, 12.5 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(d.c0_const, 3.25, epsilon = 1e-15);
        // mpmath reference; figure value 1.938
        assert_relative_eq!(d.y_star, 1.937_965_103_183_276_5, epsilon = 1e-13);
        assert!((d.y_star - 1.938).abs() < 5e-4);

        let d = LampertiDrift::new(&base(0.25));
        assert_relative_eq!(d.y_star, 1.912_219_122_726_846_9, epsilon = 1e-13);
        assert!((d.y_star - 1.912).abs() < 5e-4);
        assert_relative_eq!(d.c0_const, 3.484_375, epsilon = 1e-15);

        let sym = LampertiDrift::new(&PearsonParams::new(3.0, 0.75, 1.0, 1.5).unwrap());
        assert_relative_eq!(sym.y_star, PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn drift_zero_sign_and_domain() {
        let d = LampertiDrift::new(&base(1.0));
        assert!(d.drift(d.y_star).unwrap().abs() < 1e-10);
        assert!(d.drift(d.y_star - 0.1).unwrap() > 0.0);
        assert!(d.drift(d.y_star + 0.1).unwrap() < 0.0);
        assert!(d.drift(0.0).is_err());
        assert!(d.drift(PI).is_err());
        assert!(d.drift_derivative(PI).is_err());
        assert!(d.drift(1e-8).unwrap() > 1e8);
        assert!(d.drift(PI - 1e-8).unwrap() < -1e8);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let d = LampertiDrift::new(&base(1.0));
        let h = 1e-5;
        for i in 1..100 {
            let y = 0.1 + (PI - 0.2) * i as f64 / 100.0;
            let fd = (d.f(y + h) - d.f(y - h)) / (2.0 * h);
            assert!((d.drift_derivative(y).unwrap() - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
        let ys = d.y_star;
        let (s, c) = (0.5 * ys).sin_cos();
        assert_relative_eq!(d.df(ys), -(d.a1 / (2.0 * s * s) + d.a2 / (2.0 * c * c)));
        assert!(d.df(ys) < 0.0);
    }

    #[test]
    fn noise_free_zero_is_the_mean_level() {
        let p = base(0.0);
        let d = LampertiDrift::new(&p);
        assert_relative_eq!(d.y_star, forward(&p, 1.0).unwrap(), epsilon = 1e-14);
        assert_relative_eq!(d.c0_const, 3.5);
    }
}
