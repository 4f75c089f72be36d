//! Parametric baseline hazard families and their derivatives.
//!
//! A baseline family supplies the hazard `λ(t, γ)`, the cumulative hazard
//! `Λ(t, γ) = ∫_0^t λ(s, γ) ds`, the gradients `ψ_γ(t) = ∂ log λ / ∂γ`
//! and `Ψ_γ(t) = ∂Λ / ∂γ`, and the inverse `Λ⁻¹`. Two families are built
//! in — constant (exponential) and Weibull — and anything implementing
//! [`BaselineHazard`] plugs into the estimation and testing machinery.
//!
//! Parameter positivity is handled by the optimizers working on log(γ);
//! the families themselves reject out-of-domain parameters.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A parametric baseline hazard family `λ(t, γ)` with γ of dimension `q`.
///
/// Implementations must satisfy `λ ≥ 0`, `Λ(0, γ) = 0`, `Λ` nondecreasing
/// in `t`, and `Λ⁻¹(Λ(t, γ), γ) = t` on the valid domain.
pub trait BaselineHazard: Send + Sync {
    /// Dimension of the baseline parameter γ.
    fn dim(&self) -> usize;

    /// Identifier used by the CLI and configs ("exponential", "weibull", ...).
    fn name(&self) -> &'static str;

    /// Reject parameters outside the family's domain.
    fn validate_params(&self, gamma: &[f64]) -> Result<()>;

    /// λ(t, γ).
    fn hazard(&self, t: f64, gamma: &[f64]) -> Result<f64>;

    /// Λ(t, γ).
    fn cumulative(&self, t: f64, gamma: &[f64]) -> Result<f64>;

    /// ψ_γ(t) = ∂ log λ(t, γ) / ∂γ.
    fn log_hazard_grad(&self, t: f64, gamma: &[f64]) -> Result<Vec<f64>>;

    /// Ψ_γ(t) = ∂ Λ(t, γ) / ∂γ.
    fn cumulative_grad(&self, t: f64, gamma: &[f64]) -> Result<Vec<f64>>;

    /// Λ⁻¹(u, γ) for u ≥ 0.
    fn inverse_cumulative(&self, u: f64, gamma: &[f64]) -> Result<f64>;
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Constant baseline hazard λ(t, γ) = γ, γ > 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialBaseline;

impl BaselineHazard for ExponentialBaseline {
    fn dim(&self) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "exponential"
    }

    fn validate_params(&self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != 1 {
            return Err(Error::Domain(format!("exponential baseline takes 1 parameter, got {}", gamma.len())));
        }
        if !(gamma[0] > 0.0 && gamma[0].is_finite()) {
            return Err(Error::Domain(format!("exponential rate must be positive, got {}", gamma[0])));
        }
        Ok(())
    }

    fn hazard(&self, t: f64, gamma: &[f64]) -> Result<f64> {
        self.validate_params(gamma)?;
        check_time(t)?;
        Ok(gamma[0])
    }

    fn cumulative(&self, t: f64, gamma: &[f64]) -> Result<f64> {
        self.validate_params(gamma)?;
        check_time(t)?;
        Ok(gamma[0] * t)
    }

    fn log_hazard_grad(&self, t: f64, gamma: &[f64]) -> Result<Vec<f64>> {
        self.validate_params(gamma)?;
        check_time(t)?;
        Ok(vec![1.0 / gamma[0]])
    }

    fn cumulative_grad(&self, t: f64, gamma: &[f64]) -> Result<Vec<f64>> {
        self.validate_params(gamma)?;
        check_time(t)?;
        Ok(vec![t])
    }

    fn inverse_cumulative(&self, u: f64, gamma: &[f64]) -> Result<f64> {
        self.validate_params(gamma)?;
        if u < 0.0 {
            return Err(Error::Domain(format!("cumulative hazard value must be >= 0, got {u}")));
        }
        Ok(u / gamma[0])
    }
}

/// Weibull baseline hazard λ(t, γ) = γ₂ γ₁^{γ₂} t^{γ₂ - 1} with
/// Λ(t, γ) = (γ₁ t)^{γ₂}; both parameters positive. Reduces to the
/// exponential family with rate γ₁ when γ₂ = 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct WeibullBaseline;

impl WeibullBaseline {
    fn check(&self, gamma: &[f64]) -> Result<(f64, f64)> {
        if gamma.len() != 2 {
            return Err(Error::Domain(format!("weibull baseline takes 2 parameters, got {}", gamma.len())));
        }
        let (g1, g2) = (gamma[0], gamma[1]);
        if !(g1 > 0.0 && g1.is_finite() && g2 > 0.0 && g2.is_finite()) {
            return Err(Error::Domain(format!("weibull parameters must be positive, got ({g1}, {g2})")));
        }
        Ok((g1, g2))
    }
}

impl BaselineHazard for WeibullBaseline {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &'static str {
        "weibull"
    }

    fn validate_params(&self, gamma: &[f64]) -> Result<()> {
        self.check(gamma).map(|_| ())
    }

    fn hazard(&self, t: f64, gamma: &[f64]) -> Result<f64> {
        let (g1, g2) = self.check(gamma)?;
        check_time(t)?;
        if t == 0.0 {
            if g2 < 1.0 {
                return Err(Error::Domain("weibull hazard is singular at t = 0 for shape < 1".into()));
            }
            return Ok(if g2 == 1.0 { g1 } else { 0.0 });
        }
        Ok(g2 * g1.powf(g2) * t.powf(g2 - 1.0))
    }

    fn cumulative(&self, t: f64, gamma: &[f64]) -> Result<f64> {
        let (g1, g2) = self.check(gamma)?;
        check_time(t)?;
        Ok((g1 * t).powf(g2))
    }

    fn log_hazard_grad(&self, t: f64, gamma: &[f64]) -> Result<Vec<f64>> {
        let (g1, g2) = self.check(gamma)?;
        check_time(t)?;
        if t == 0.0 {
            // log λ = log γ₂ + γ₂ log γ₁ + (γ₂ − 1) log t: the shape
            // component involves log t, undefined at the origin.
            return Err(Error::Domain("weibull log-hazard gradient is singular at t = 0".into()));
        }
        Ok(vec![g2 / g1, 1.0 / g2 + g1.ln() + t.ln()])
    }

    fn cumulative_grad(&self, t: f64, gamma: &[f64]) -> Result<Vec<f64>> {
        let (g1, g2) = self.check(gamma)?;
        check_time(t)?;
        if t == 0.0 {
            return Ok(vec![0.0, 0.0]);
        }
        let l = (g1 * t).powf(g2);
        Ok(vec![g2 * g1.powf(g2 - 1.0) * t.powf(g2), l * (g1 * t).ln()])
    }

    fn inverse_cumulative(&self, u: f64, gamma: &[f64]) -> Result<f64> {
        let (g1, g2) = self.check(gamma)?;
        if u < 0.0 {
            return Err(Error::Domain(format!("cumulative hazard value must be >= 0, got {u}")));
        }
        Ok(u.powf(1.0 / g2) / g1)
    }
}

/// Look up a built-in baseline family by its CLI/config identifier.
pub fn baseline_by_name(name: &str) -> Result<Arc<dyn BaselineHazard>> {
    match name {
        "exponential" => Ok(Arc::new(ExponentialBaseline)),
        "weibull" => Ok(Arc::new(WeibullBaseline)),
        other => Err(Error::Domain(format!("unknown baseline family '{other}' (expected 'exponential' or 'weibull')"))),
    }
}
