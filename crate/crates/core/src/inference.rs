//! Wald-type tests for composite restrictions m(θ) = 0, their asymptotic
//! and contiguous power, sample-size planning, and influence diagnostics
//! for estimator, test level and test power.
//!
//! The test statistic is `W_n = n m'(θ̂)(M'(θ̂) Σ_{n,α} M(θ̂))⁻¹ m(θ̂)`
//! with `M = ∂m'/∂θ`, compared against a χ²_r critical value. Under
//! parameter drifts `θ_0 + d/√n` the limit is noncentral χ²_r with
//! noncentrality `d'N d`, `N = M(M'ΣM)⁻¹M'`; contamination of mass ε/√n
//! at a point y_t shifts the drift by ε·IF(y_t), where
//! `IF(y_t) = J⁻¹ (u1, u2)(y_t)` is the estimator's influence function.
//! The level influence function vanishes identically; the power influence
//! function is `C_r^*(d'Nd) · d'N IF(y_t)` with the series `C_r^*`.

use std::sync::Arc;

use crate::data::{CensoredDataset, CensoredObservation};
use crate::error::{Error, Result};
use crate::mdpde::{sandwich_covariance, score_contributions, FitResult, ModelSpec, Theta};
use crate::numerics::matrix::Matrix;
use crate::numerics::special::{chisq_quantile, chisq_sf, noncentral_chisq_sf, normal_cdf, normal_quantile};

type RestrictionFn = dyn Fn(&Theta) -> Result<Vec<f64>> + Send + Sync;
type JacobianFn = dyn Fn(&Theta) -> Result<Matrix> + Send + Sync;

/// A composite null hypothesis m(θ) = 0_r with Jacobian
/// M(θ) = ∂m'(θ)/∂θ of size (p+q) × r and full column rank.
#[derive(Clone)]
pub struct HypothesisSpec {
    label: String,
    r: usize,
    m: Arc<RestrictionFn>,
    jacobian: Option<Arc<JacobianFn>>,
}

impl std::fmt::Debug for HypothesisSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HypothesisSpec")
            .field("label", &self.label)
            .field("r", &self.r)
            .finish()
    }
}

impl HypothesisSpec {
    /// General restriction with a numerical Jacobian fallback.
    pub fn new<F>(label: impl Into<String>, r: usize, m: F) -> Self
    where
        F: Fn(&Theta) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        HypothesisSpec { label: label.into(), r, m: Arc::new(m), jacobian: None }
    }

    /// Attach an analytic Jacobian supplier.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&Theta) -> Result<Matrix> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of restrictions r.
    pub fn restrictions(&self) -> usize {
        self.r
    }

    /// m(θ), checked to have length r.
    pub fn restriction(&self, theta: &Theta) -> Result<Vec<f64>> {
        let v = (self.m)(theta)?;
        if v.len() != self.r {
            return Err(Error::Domain(format!(
                "restriction '{}' returned {} values, expected {}",
                self.label,
                v.len(),
                self.r
            )));
        }
        Ok(v)
    }

    /// M(θ) of size dim(θ) × r; numerical differentiation with step
    /// 1e-6·max(1, |θ_i|) when no analytic Jacobian was supplied. Rank
    /// deficiency is an error.
    pub fn jacobian_at(&self, theta: &Theta) -> Result<Matrix> {
        let dim = theta.dim();
        let m = match &self.jacobian {
            Some(j) => {
                let m = j(theta)?;
                if m.rows() != dim || m.cols() != self.r {
                    return Err(Error::Domain(format!(
                        "jacobian of '{}' has shape {}x{}, expected {}x{}",
                        self.label,
                        m.rows(),
                        m.cols(),
                        dim,
                        self.r
                    )));
                }
                m
            }
            None => {
                let flat = theta.flat();
                let q = theta.gamma.len();
                let mut m = Matrix::zeros(dim, self.r);
                for i in 0..dim {
                    let h = 1e-6 * flat[i].abs().max(1.0);
                    let mut plus = flat.clone();
                    plus[i] += h;
                    let mut minus = flat.clone();
                    minus[i] -= h;
                    let vp = self.restriction(&Theta::from_flat(q, &plus))?;
                    let vm = self.restriction(&Theta::from_flat(q, &minus))?;
                    for k in 0..self.r {
                        m[(i, k)] = (vp[k] - vm[k]) / (2.0 * h);
                    }
                }
                m
            }
        };
        // full column rank check through the r×r Gram matrix
        let gram = m.transpose().matmul(&m);
        if gram.condition_estimate() > crate::numerics::CONDITION_LIMIT {
            return Err(Error::Domain(format!("restriction Jacobian of '{}' is rank deficient", self.label)));
        }
        Ok(m)
    }

    /// H₀: β_j = b0 for a 1-based coefficient index.
    pub fn coefficient_equals(j: usize, b0: f64) -> Self {
        let label = format!("beta[{j}]={b0}");
        HypothesisSpec::new(label, 1, move |theta: &Theta| {
            let beta = &theta.beta;
            if j == 0 || j > beta.len() {
                return Err(Error::Domain(format!("coefficient index {j} out of range (p = {})", beta.len())));
            }
            Ok(vec![beta[j - 1] - b0])
        })
        .with_jacobian(move |theta: &Theta| {
            if j == 0 || j > theta.beta.len() {
                return Err(Error::Domain(format!("coefficient index {j} out of range (p = {})", theta.beta.len())));
            }
            let mut m = Matrix::zeros(theta.dim(), 1);
            m[(theta.gamma.len() + j - 1, 0)] = 1.0;
            Ok(m)
        })
    }

    /// H₀: β_j = 0 for every j in `indices` (1-based, distinct).
    pub fn coefficients_zero(indices: &[usize]) -> Self {
        let idx = indices.to_vec();
        let label = format!(
            "beta[{}]=0",
            idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        );
        let idx2 = idx.clone();
        HypothesisSpec::new(label, idx.len(), move |theta: &Theta| {
            idx.iter()
                .map(|&j| {
                    if j == 0 || j > theta.beta.len() {
                        Err(Error::Domain(format!("coefficient index {j} out of range (p = {})", theta.beta.len())))
                    } else {
                        Ok(theta.beta[j - 1])
                    }
                })
                .collect()
        })
        .with_jacobian(move |theta: &Theta| {
            let mut m = Matrix::zeros(theta.dim(), idx2.len());
            for (k, &j) in idx2.iter().enumerate() {
                if j == 0 || j > theta.beta.len() {
                    return Err(Error::Domain(format!("coefficient index {j} out of range (p = {})", theta.beta.len())));
                }
                m[(theta.gamma.len() + j - 1, k)] = 1.0;
            }
            Ok(m)
        })
    }

    /// H₀: γ_j = g0 for a 1-based baseline-parameter index, e.g. the
    /// Weibull exponentiality test γ₂ = 1.
    pub fn baseline_param_equals(j: usize, g0: f64) -> Self {
        let label = format!("gamma[{j}]={g0}");
        HypothesisSpec::new(label, 1, move |theta: &Theta| {
            if j == 0 || j > theta.gamma.len() {
                return Err(Error::Domain(format!("baseline index {j} out of range (q = {})", theta.gamma.len())));
            }
            Ok(vec![theta.gamma[j - 1] - g0])
        })
        .with_jacobian(move |theta: &Theta| {
            if j == 0 || j > theta.gamma.len() {
                return Err(Error::Domain(format!("baseline index {j} out of range (q = {})", theta.gamma.len())));
            }
            let mut m = Matrix::zeros(theta.dim(), 1);
            m[(j - 1, 0)] = 1.0;
            Ok(m)
        })
    }

    /// Shifted restriction m(θ) − m(θ_ref): moves the null set so that
    /// `theta_ref` satisfies it, used by the switched-hypothesis power
    /// convention of the experiments.
    pub fn shifted_to(&self, theta_ref: &Theta) -> Result<HypothesisSpec> {
        let offset = self.restriction(theta_ref)?;
        let base = self.m.clone();
        let jac = self.jacobian.clone();
        let mut out = HypothesisSpec {
            label: format!("{} (shifted)", self.label),
            r: self.r,
            m: Arc::new(move |theta: &Theta| {
                let mut v = base(theta)?;
                for (vi, oi) in v.iter_mut().zip(&offset) {
                    *vi -= oi;
                }
                Ok(v)
            }),
            jacobian: None,
        };
        if let Some(j) = jac {
            out.jacobian = Some(j);
        }
        Ok(out)
    }
}

/// Result of a Wald-type test.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TestResult {
    pub label: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub tau: f64,
    pub alpha: f64,
    pub theta_hat: Theta,
}

/// Strict rejection rule: ties at the critical value do not reject.
fn decide(statistic: f64, critical: f64) -> bool {
    statistic > critical
}

/// The r×r test kernel M'ΣM.
fn test_kernel(sigma: &Matrix, m_jac: &Matrix) -> Matrix {
    m_jac.transpose().matmul(sigma).matmul(m_jac)
}

fn kernel_solve(kernel: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    let sol = kernel.solve(&Matrix::column(v)).map_err(|e| match e {
        Error::NearSingular { condition, .. } => Error::DegenerateInformation(format!(
            "test kernel M'ΣM is numerically singular (condition {condition:.3e})"
        )),
        other => other,
    })?;
    Ok((0..v.len()).map(|i| sol[(i, 0)]).collect())
}

/// Wald-type statistic W_n = n·m'(M'ΣM)⁻¹m at the fitted θ̂.
pub fn wald_statistic(fit: &FitResult, hypothesis: &HypothesisSpec) -> Result<f64> {
    if !fit.converged {
        return Err(Error::NonConvergence("Wald statistic requires a converged fit".into()));
    }
    let m_val = hypothesis.restriction(&fit.theta_hat)?;
    let m_jac = hypothesis.jacobian_at(&fit.theta_hat)?;
    let kernel = test_kernel(&fit.sigma, &m_jac);
    let solved = kernel_solve(&kernel, &m_val)?;
    let w: f64 = m_val.iter().zip(&solved).map(|(a, b)| a * b).sum();
    Ok((fit.n as f64 * w).max(0.0))
}

/// Full Wald-type test at significance level `tau`.
pub fn wald_test(fit: &FitResult, hypothesis: &HypothesisSpec, tau: f64) -> Result<TestResult> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("significance level must lie in (0,1), got {tau}")));
    }
    let statistic = wald_statistic(fit, hypothesis)?;
    let r = hypothesis.restrictions();
    let critical_value = chisq_quantile(1.0 - tau, r)?;
    let p_value = chisq_sf(statistic, r)?;
    Ok(TestResult {
        label: hypothesis.label().to_string(),
        statistic,
        df: r,
        p_value,
        critical_value,
        reject: decide(statistic, critical_value),
        tau,
        alpha: fit.alpha,
        theta_hat: fit.theta_hat.clone(),
    })
}

/// ℓ*(θ, θ_ref) = m(θ)'(M'(θ_ref) Σ M(θ_ref))⁻¹ m(θ): the population
/// counterpart of W_n/n with the kernel frozen at θ_ref.
fn ell_star(hypothesis: &HypothesisSpec, theta: &Theta, kernel: &Matrix) -> Result<f64> {
    let m_val = hypothesis.restriction(theta)?;
    let solved = kernel_solve(kernel, &m_val)?;
    Ok(m_val.iter().zip(&solved).map(|(a, b)| a * b).sum())
}

/// σ²_W(θ*) = g' Σ g with g = ∇_θ ℓ*(θ, θ*)|_{θ*} by central differences.
fn sigma_w_squared(hypothesis: &HypothesisSpec, theta_star: &Theta, sigma: &Matrix, kernel: &Matrix) -> Result<f64> {
    let flat = theta_star.flat();
    let q = theta_star.gamma.len();
    let mut grad = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut h = 1e-6 * flat[i].abs().max(1.0);
        if i < q && flat[i] > 0.0 {
            h = h.min(0.5 * flat[i]);
        }
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let lp = ell_star(hypothesis, &Theta::from_flat(q, &plus), kernel)?;
        let lm = ell_star(hypothesis, &Theta::from_flat(q, &minus), kernel)?;
        grad[i] = (lp - lm) / (2.0 * h);
    }
    Ok(sigma.quadratic_form(&grad))
}

/// First-order approximation to the power of the Wald-type test at a
/// fixed alternative θ*: 1 − Φ( (√n/σ_W) (χ²_{r,τ}/n − ℓ*(θ*, θ*)) ).
pub fn approx_power(
    theta_star: &Theta,
    hypothesis: &HypothesisSpec,
    sigma_at_star: &Matrix,
    n: usize,
    tau: f64,
) -> Result<f64> {
    let m_jac = hypothesis.jacobian_at(theta_star)?;
    let kernel = test_kernel(sigma_at_star, &m_jac);
    let ell = ell_star(hypothesis, theta_star, &kernel)?;
    let s2 = sigma_w_squared(hypothesis, theta_star, sigma_at_star, &kernel)?;
    if !(s2 > 0.0) {
        return Err(Error::DegenerateInformation(
            "σ_W = 0 at θ*: the power approximation degenerates to a step function".into(),
        ));
    }
    let crit = chisq_quantile(1.0 - tau, hypothesis.restrictions())?;
    let nf = n as f64;
    let z = (nf.sqrt() / s2.sqrt()) * (crit / nf - ell);
    Ok((1.0 - normal_cdf(z)).clamp(0.0, 1.0))
}

/// Smallest sample size whose approximate power reaches `target_power`,
/// obtained by inverting the power approximation exactly: with
/// g = σ_W Φ⁻¹(1−π), the positive root of ℓ* n − g √n − χ²_{r,τ} = 0 is
/// √n* = (−g + √(g² + 4 ℓ* χ²_{r,τ})) / (2ℓ*), and n = ⌊n*⌋ + 1.
///
/// Equivalently n* = (A + B ± √(A(A+2B))) / (2ℓ*²) with
/// A = σ²_W (Φ⁻¹(1−π))², B = 2 χ²_{r,τ} ℓ* and the root-term sign that of
/// π − ½; at π = ½ this collapses to n* = χ²_{r,τ}/ℓ*.
pub fn required_sample_size(
    theta_star: &Theta,
    hypothesis: &HypothesisSpec,
    sigma_at_star: &Matrix,
    tau: f64,
    target_power: f64,
) -> Result<usize> {
    if !(target_power > 0.0 && target_power < 1.0) {
        return Err(Error::Domain(format!("target power must lie in (0,1), got {target_power}")));
    }
    let m_jac = hypothesis.jacobian_at(theta_star)?;
    let kernel = test_kernel(sigma_at_star, &m_jac);
    let ell = ell_star(hypothesis, theta_star, &kernel)?;
    if !(ell > 0.0) {
        return Err(Error::Infeasible("θ* satisfies the null; required sample size is unbounded".into()));
    }
    let s2 = sigma_w_squared(hypothesis, theta_star, sigma_at_star, &kernel)?;
    let crit = chisq_quantile(1.0 - tau, hypothesis.restrictions())?;
    let g = s2.sqrt() * normal_quantile(1.0 - target_power)?;
    let sqrt_n = (-g + (g * g + 4.0 * ell * crit).sqrt()) / (2.0 * ell);
    let n_star = sqrt_n * sqrt_n;
    Ok((n_star.floor() as usize + 1).max(1))
}

/// Contiguous drift specification: in parameter space (θ_n = θ₀ + d/√n)
/// or directly on the restriction scale (m(θ_n) = δ/√n); the two agree
/// under δ = M'(θ₀) d.
#[derive(Debug, Clone)]
pub enum ContiguousDrift {
    Parameter(Vec<f64>),
    Restriction(Vec<f64>),
}

/// Asymptotic power under contiguous alternatives: the noncentral χ²_r
/// survival at the level-τ critical value, with noncentrality d'Nd
/// (parameter drift) or δ'(M'ΣM)⁻¹δ (restriction drift).
pub fn contiguous_power(
    theta0: &Theta,
    hypothesis: &HypothesisSpec,
    sigma0: &Matrix,
    drift: &ContiguousDrift,
    tau: f64,
) -> Result<f64> {
    let ncp = contiguous_noncentrality(theta0, hypothesis, sigma0, drift)?;
    let r = hypothesis.restrictions();
    let crit = chisq_quantile(1.0 - tau, r)?;
    noncentral_chisq_sf(crit, r, ncp)
}

fn contiguous_noncentrality(
    theta0: &Theta,
    hypothesis: &HypothesisSpec,
    sigma0: &Matrix,
    drift: &ContiguousDrift,
) -> Result<f64> {
    let m_jac = hypothesis.jacobian_at(theta0)?;
    let kernel = test_kernel(sigma0, &m_jac);
    let delta: Vec<f64> = match drift {
        ContiguousDrift::Parameter(d) => {
            if d.len() != theta0.dim() {
                return Err(Error::Domain(format!("drift length {} does not match dim {}", d.len(), theta0.dim())));
            }
            m_jac.transpose().matvec(d)
        }
        ContiguousDrift::Restriction(delta) => {
            if delta.len() != hypothesis.restrictions() {
                return Err(Error::Domain(format!(
                    "restriction drift length {} does not match r = {}",
                    delta.len(),
                    hypothesis.restrictions()
                )));
            }
            delta.clone()
        }
    };
    let solved = kernel_solve(&kernel, &delta)?;
    Ok(delta.iter().zip(&solved).map(|(a, b)| a * b).sum::<f64>().max(0.0))
}

/// Everything the influence diagnostics need about a null model: the
/// model, a null parameter θ₀, the tuning parameter, and the empirical
/// J and Σ matrices evaluated there on a reference design.
#[derive(Debug, Clone)]
pub struct NullModelContext {
    pub spec: ModelSpec,
    pub theta0: Theta,
    pub alpha: f64,
    pub j_hat: Matrix,
    pub sigma: Matrix,
}

impl NullModelContext {
    /// Build by evaluating the empirical sandwich on `data` at `theta0`.
    pub fn from_data(spec: &ModelSpec, data: &CensoredDataset, theta0: &Theta, alpha: f64) -> Result<Self> {
        let (j_hat, _k, sigma) = sandwich_covariance(spec, data, theta0, alpha)?;
        Ok(NullModelContext {
            spec: spec.clone(),
            theta0: theta0.clone(),
            alpha,
            j_hat,
            sigma,
        })
    }

    /// Reuse the matrices of a fitted model, treating θ̂ as θ₀.
    pub fn from_fit(spec: &ModelSpec, fit: &FitResult) -> Self {
        NullModelContext {
            spec: spec.clone(),
            theta0: fit.theta_hat.clone(),
            alpha: fit.alpha,
            j_hat: fit.j_hat.clone(),
            sigma: fit.sigma.clone(),
        }
    }
}

/// Influence function of the estimator at a contamination point:
/// IF(y_t) = J⁻¹ (u1, u2)(y_t).
pub fn mdpde_influence(ctx: &NullModelContext, y_t: &CensoredObservation) -> Result<Vec<f64>> {
    let (s1, s2) = score_contributions(&ctx.spec, &ctx.theta0, ctx.alpha, y_t.time, y_t.observed, &y_t.covariates)?;
    let mut stacked = s1;
    stacked.extend(s2);
    let sol = ctx.j_hat.solve(&Matrix::column(&stacked)).map_err(|e| match e {
        Error::NearSingular { condition, .. } => {
            Error::DegenerateInformation(format!("J_n singular in influence computation (condition {condition:.3e})"))
        }
        other => other,
    })?;
    Ok((0..stacked.len()).map(|i| sol[(i, 0)]).collect())
}

/// N(θ₀) = M (M'ΣM)⁻¹ M'.
fn n_matrix(ctx: &NullModelContext, hypothesis: &HypothesisSpec) -> Result<Matrix> {
    let m_jac = hypothesis.jacobian_at(&ctx.theta0)?;
    let kernel = test_kernel(&ctx.sigma, &m_jac);
    let kinv = kernel.inverse().map_err(|e| match e {
        Error::NearSingular { condition, .. } => {
            Error::DegenerateInformation(format!("test kernel singular in N(θ₀) (condition {condition:.3e})"))
        }
        other => other,
    })?;
    Ok(m_jac.matmul(&kinv).matmul(&m_jac.transpose()))
}

/// Second-order influence function of the test statistic at the null:
/// IF₂(y_t) = 2 · IF' N(θ₀) IF ≥ 0. (The first-order IF vanishes.)
pub fn test_if2(ctx: &NullModelContext, hypothesis: &HypothesisSpec, y_t: &CensoredObservation) -> Result<f64> {
    let inf = mdpde_influence(ctx, y_t)?;
    let n_mat = n_matrix(ctx, hypothesis)?;
    Ok((2.0 * n_mat.quadratic_form(&inf)).max(0.0))
}

/// C_r^*(s) = e^{−s/2} Σ_v s^{v−1} 2^{−v} (2v − s) P(χ²_{r+2v} > χ²_{r,τ}) / v!,
/// the derivative kernel of the noncentral survival:
/// C_r^*(s) = 2 ∂/∂s P(χ²_r(s) > χ²_{r,τ}). At s = 0 the analytic limit
/// P(χ²_{r+2} > c) − P(χ²_r > c) is used.
pub fn c_star(s: f64, r: usize, tau: f64) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::Domain(format!("noncentrality must be >= 0, got {s}")));
    }
    let crit = chisq_quantile(1.0 - tau, r)?;
    if s == 0.0 {
        return Ok(chisq_sf(crit, r + 2)? - chisq_sf(crit, r)?);
    }
    let half = 0.5 * s;
    let mut weight = (-half).exp(); // Poisson(s/2) mass at v = 0
    let mut cumulative = 0.0;
    let mut acc = 0.0;
    let mut v = 0usize;
    loop {
        // s^{v-1} 2^{-v} (2v - s)/v! = w_v (2v/s − 1)
        acc += weight * (2.0 * v as f64 / s - 1.0) * chisq_sf(crit, r + 2 * v)?;
        cumulative += weight;
        if 1.0 - cumulative < 1e-14 && v as f64 > half {
            break;
        }
        v += 1;
        weight *= half / v as f64;
        if v > 10_000 {
            break;
        }
    }
    Ok(acc)
}

/// Power influence function at significance level τ under parameter
/// drift d: PIF = C_r^*(d'Nd) · d'N IF(y_t). The level influence
/// function is identically zero at every order.
pub fn power_influence(
    ctx: &NullModelContext,
    hypothesis: &HypothesisSpec,
    d: &[f64],
    tau: f64,
    y_t: &CensoredObservation,
) -> Result<f64> {
    if d.len() != ctx.theta0.dim() {
        return Err(Error::Domain(format!("drift length {} does not match dim {}", d.len(), ctx.theta0.dim())));
    }
    let n_mat = n_matrix(ctx, hypothesis)?;
    let s = n_mat.quadratic_form(d).max(0.0);
    let inf = mdpde_influence(ctx, y_t)?;
    let nd = n_mat.matvec(d);
    let cross: f64 = nd.iter().zip(&inf).map(|(a, b)| a * b).sum();
    Ok(c_star(s, hypothesis.restrictions(), tau)? * cross)
}

/// Asymptotic power under contiguous alternatives d/√n with additional
/// contiguous contamination of mass ε/√n at y_t: the noncentral χ²_r
/// survival with noncentrality d_ε' N d_ε, d_ε = d + ε·IF(y_t).
pub fn contaminated_power(
    ctx: &NullModelContext,
    hypothesis: &HypothesisSpec,
    d: &[f64],
    epsilon: f64,
    y_t: &CensoredObservation,
    tau: f64,
) -> Result<f64> {
    if epsilon < 0.0 {
        return Err(Error::Domain(format!("contamination mass must be >= 0, got {epsilon}")));
    }
    let inf = mdpde_influence(ctx, y_t)?;
    let d_eps: Vec<f64> = d.iter().zip(&inf).map(|(di, fi)| di + epsilon * fi).collect();
    let n_mat = n_matrix(ctx, hypothesis)?;
    let ncp = n_mat.quadratic_form(&d_eps).max(0.0);
    let r = hypothesis.restrictions();
    let crit = chisq_quantile(1.0 - tau, r)?;
    noncentral_chisq_sf(crit, r, ncp)
}

/// The same contaminated power evaluated through the explicit
/// Poisson-mixture series Σ_v C_v(t, A) P(χ²_{r+2v} > χ²_{r,τ}) with
/// t = M'd_ε and A = (M'ΣM)⁻¹; an independent route used to validate
/// [`contaminated_power`].
pub fn contaminated_power_series(
    ctx: &NullModelContext,
    hypothesis: &HypothesisSpec,
    d: &[f64],
    epsilon: f64,
    y_t: &CensoredObservation,
    tau: f64,
) -> Result<f64> {
    let inf = mdpde_influence(ctx, y_t)?;
    let d_eps: Vec<f64> = d.iter().zip(&inf).map(|(di, fi)| di + epsilon * fi).collect();
    let m_jac = hypothesis.jacobian_at(&ctx.theta0)?;
    let kernel = test_kernel(&ctx.sigma, &m_jac);
    let t = m_jac.transpose().matvec(&d_eps);
    let solved = kernel_solve(&kernel, &t)?;
    let tat: f64 = t.iter().zip(&solved).map(|(a, b)| a * b).sum::<f64>().max(0.0);

    let r = hypothesis.restrictions();
    let crit = chisq_quantile(1.0 - tau, r)?;
    // C_v(t, A) = (t'At)^v e^{-t'At/2} / (v! 2^v): Poisson(t'At/2) weights
    let half = 0.5 * tat;
    let mut weight = (-half).exp();
    let mut cumulative = 0.0;
    let mut acc = 0.0;
    let mut v = 0usize;
    loop {
        acc += weight * chisq_sf(crit, r + 2 * v)?;
        cumulative += weight;
        if 1.0 - cumulative < 1e-14 {
            break;
        }
        v += 1;
        weight *= half / v as f64;
        if v > 10_000 {
            break;
        }
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// One row of an influence sweep over contamination points.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InfluenceRow {
    pub x_t: f64,
    pub delta_t: u8,
    pub influence: Vec<f64>,
    pub if2: f64,
    pub pif: f64,
    /// Identically zero; emitted so sweep outputs are self-describing.
    pub lif: f64,
}

/// Evaluate IF, IF₂ and PIF over a grid of contamination times for both
/// censoring statuses at a fixed covariate value.
pub fn influence_sweep(
    ctx: &NullModelContext,
    hypothesis: &HypothesisSpec,
    d: &[f64],
    tau: f64,
    x_grid: &[f64],
    z_t: &[f64],
) -> Result<Vec<InfluenceRow>> {
    let mut rows = Vec::with_capacity(2 * x_grid.len());
    for &delta_t in &[1u8, 0u8] {
        for &x_t in x_grid {
            let y_t = CensoredObservation::new(x_t, delta_t == 1, z_t.to_vec())?;
            let influence = mdpde_influence(ctx, &y_t)?;
            let if2 = test_if2(ctx, hypothesis, &y_t)?;
            let pif = power_influence(ctx, hypothesis, d, tau, &y_t)?;
            rows.push(InfluenceRow { x_t, delta_t, influence, if2, pif, lif: 0.0 });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazards::ExponentialBaseline;
    use crate::numerics::special::chisq_cdf;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synthetic_fit(n: usize, gamma: Vec<f64>, beta: Vec<f64>, sigma_diag: Vec<f64>) -> FitResult {
        let dim = gamma.len() + beta.len();
        assert_eq!(sigma_diag.len(), dim);
        let mut sigma = Matrix::zeros(dim, dim);
        for i in 0..dim {
            sigma[(i, i)] = sigma_diag[i];
        }
        FitResult {
            theta_hat: Theta::new(gamma, beta),
            alpha: 0.1,
            objective_value: 0.0,
            sigma: sigma.clone(),
            j_hat: Matrix::identity(dim),
            k_hat: sigma,
            converged: true,
            iterations: 1,
            residual_norm: 0.0,
            n,
        }
    }

    #[test]
    fn builtin_hypotheses_evaluate_as_documented() {
        let theta = Theta::new(vec![1.5], vec![0.2, 1.5, -0.3]);
        let h = HypothesisSpec::coefficient_equals(2, 1.0);
        assert_eq!(h.restriction(&theta).unwrap(), vec![0.5]);
        let m = h.jacobian_at(&theta).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 1));
        assert_eq!(m[(2, 0)], 1.0);

        let hz = HypothesisSpec::coefficients_zero(&[1, 2, 3]);
        assert_eq!(hz.restriction(&theta).unwrap(), vec![0.2, 1.5, -0.3]);
        let mz = hz.jacobian_at(&theta).unwrap();
        assert_eq!((mz.rows(), mz.cols()), (4, 3));
        // block [I_p; O]' layout: zero γ row, identity below
        assert_eq!(mz[(0, 0)], 0.0);
        assert_eq!(mz[(1, 0)], 1.0);
        assert_eq!(mz[(2, 1)], 1.0);
        assert_eq!(mz[(3, 2)], 1.0);

        let hg = HypothesisSpec::baseline_param_equals(1, 1.0);
        assert_eq!(hg.restriction(&theta).unwrap(), vec![0.5]);

        assert!(HypothesisSpec::coefficient_equals(9, 0.0).restriction(&theta).is_err());
    }

    #[test]
    fn numerical_jacobian_matches_analytic_for_linear_restriction() {
        let theta = Theta::new(vec![0.9], vec![0.4, -0.2]);
        let h_numeric = HypothesisSpec::new("custom", 1, |t: &Theta| Ok(vec![2.0 * t.beta[0] - t.beta[1]]));
        let m = h_numeric.jacobian_at(&theta).unwrap();
        assert_relative_eq!(m[(0, 0)], 0.0, epsilon = 1e-8);
        assert_relative_eq!(m[(1, 0)], 2.0, epsilon = 1e-8);
        assert_relative_eq!(m[(2, 0)], -1.0, epsilon = 1e-8);
    }

    #[test]
    fn wald_statistic_hand_value() {
        // n = 50, β̂₂ = 1.5, b0 = 1, Σ^(22) = 2 → W = 50·0.25/2 = 6.25
        let fit = synthetic_fit(50, vec![1.0], vec![0.0, 1.5], vec![1.0, 1.0, 2.0]);
        let h = HypothesisSpec::coefficient_equals(2, 1.0);
        let w = wald_statistic(&fit, &h).unwrap();
        assert_relative_eq!(w, 6.25, epsilon = 1e-12);

        // doubling Σ halves W
        let fit2 = synthetic_fit(50, vec![1.0], vec![0.0, 1.5], vec![2.0, 2.0, 4.0]);
        assert_relative_eq!(wald_statistic(&fit2, &h).unwrap(), 3.125, epsilon = 1e-12);

        let result = wald_test(&fit, &h, 0.05).unwrap();
        // p = P(χ²₁ > 6.25) = 2(1 − Φ(2.5))
        let oracle = 2.0 * (1.0 - normal_cdf(2.5));
        assert_relative_eq!(result.p_value, oracle, epsilon = 1e-12);
        assert_relative_eq!(result.p_value, 0.01242, epsilon = 2e-5);
        assert!(result.reject);
    }

    #[test]
    fn exact_null_gives_zero_statistic_and_p_one() {
        let fit = synthetic_fit(50, vec![1.0], vec![0.0, 1.0], vec![1.0, 1.0, 2.0]);
        let h = HypothesisSpec::coefficient_equals(2, 1.0);
        let result = wald_test(&fit, &h, 0.05).unwrap();
        assert_eq!(result.statistic, 0.0);
        assert_eq!(result.p_value, 1.0);
        assert!(!result.reject);
    }

    #[test]
    fn rejection_rule_is_strict_at_the_boundary() {
        assert!(!decide(3.84, 3.84));
        assert!(!decide(3.83, 3.84));
        assert!(decide(3.85, 3.84));
    }

    #[test]
    fn unconverged_fit_is_rejected() {
        let mut fit = synthetic_fit(50, vec![1.0], vec![0.5], vec![1.0, 1.0]);
        fit.converged = false;
        assert!(wald_statistic(&fit, &HypothesisSpec::coefficient_equals(1, 0.0)).is_err());
    }

    #[test]
    fn wald_invariant_under_linear_reparameterization() {
        // m and A·m define the same null; W must agree
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let sigma = {
                // random SPD via B'B + I
                let mut b = Matrix::zeros(3, 3);
                for i in 0..3 {
                    for j in 0..3 {
                        b[(i, j)] = rng.random::<f64>() - 0.5;
                    }
                }
                b.transpose().matmul(&b).add(&Matrix::identity(3))
            };
            let mut fit = synthetic_fit(80, vec![1.2], vec![0.7, -0.4], vec![1.0, 1.0, 1.0]);
            fit.sigma = sigma;
            let h = HypothesisSpec::coefficients_zero(&[1, 2]);
            let (a11, a12, a21, a22) = (1.3, -0.4, 0.8, 2.1); // nonsingular A
            let ha = HypothesisSpec::new("A·m", 2, move |t: &Theta| {
                let m = [t.beta[0], t.beta[1]];
                Ok(vec![a11 * m[0] + a12 * m[1], a21 * m[0] + a22 * m[1]])
            });
            let w1 = wald_statistic(&fit, &h).unwrap();
            let w2 = wald_statistic(&fit, &ha).unwrap();
            assert_relative_eq!(w1, w2, max_relative = 1e-8);
        }
    }

    #[test]
    fn approx_power_half_at_the_crossover() {
        // ℓ*(θ*, θ*) = χ²_{r,τ}/n → argument 0 → power 1 − Φ(0) = 0.5
        let n = 40usize;
        let crit = chisq_quantile(0.95, 1).unwrap();
        let target_m = (crit / n as f64).sqrt();
        let h = HypothesisSpec::coefficient_equals(1, 0.0);
        let theta = Theta::new(vec![1.0], vec![target_m]); // Σ = I so ℓ* = m²
        let sigma = Matrix::identity(2);
        let p = approx_power(&theta, &h, &sigma, n, 0.05).unwrap();
        assert_relative_eq!(p, 0.5, epsilon = 1e-10);

        // power increases as the alternative moves away from the null
        let mut last = 0.0;
        for &b in &[0.4, 0.8, 1.6, 3.2] {
            let theta = Theta::new(vec![1.0], vec![b]);
            let p = approx_power(&theta, &h, &sigma, n, 0.05).unwrap();
            assert!(p >= last);
            last = p;
        }
        assert!(last > 0.999);
    }

    #[test]
    fn required_sample_size_examples() {
        let h = HypothesisSpec::coefficient_equals(1, 0.0);
        let sigma = Matrix::identity(2);
        // π = 0.5 collapses the σ_W term: n* = χ²_{1,0.05}/ℓ*; ℓ* = 4 here
        // gives n* ≈ 0.9604 → n = 1
        let theta = Theta::new(vec![1.0], vec![2.0]);
        let n = required_sample_size(&theta, &h, &sigma, 0.05, 0.5).unwrap();
        assert_eq!(n, 1);

        // a small effect needs more samples: ℓ* = 0.0625 → χ²/ℓ* ≈ 61.5
        let theta_small = Theta::new(vec![1.0], vec![0.25]);
        let n_small = required_sample_size(&theta_small, &h, &sigma, 0.05, 0.5).unwrap();
        assert_eq!(n_small, (chisq_quantile(0.95, 1).unwrap() / 0.0625).floor() as usize + 1);
        // n is nonincreasing in ℓ* and increasing in the power target
        let n_power = required_sample_size(&theta_small, &h, &sigma, 0.05, 0.9).unwrap();
        assert!(n_power > n_small);
        let mut last = usize::MAX;
        for &b in &[0.2, 0.4, 0.8, 1.6] {
            let theta = Theta::new(vec![1.0], vec![b]);
            let n = required_sample_size(&theta, &h, &sigma, 0.05, 0.8).unwrap();
            assert!(n <= last);
            last = n;
        }

        // at the null the problem is infeasible
        let theta_null = Theta::new(vec![1.0], vec![0.0]);
        assert!(matches!(
            required_sample_size(&theta_null, &h, &sigma, 0.05, 0.8),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn sample_size_is_self_consistent_with_approx_power() {
        let h = HypothesisSpec::coefficient_equals(1, 0.0);
        let sigma = Matrix::identity(2);
        for &b in &[0.3, 0.5, 0.8] {
            for &pi in &[0.6, 0.8, 0.9] {
                let theta = Theta::new(vec![1.0], vec![b]);
                let n = required_sample_size(&theta, &h, &sigma, 0.05, pi).unwrap();
                let achieved = approx_power(&theta, &h, &sigma, n, 0.05).unwrap();
                assert!(achieved >= pi - 0.02, "b={b} pi={pi}: n={n} gives {achieved}");
            }
        }
    }

    #[test]
    fn contiguous_power_agrees_across_drift_forms() {
        let theta0 = Theta::new(vec![1.0], vec![0.5, -0.2]);
        let h = HypothesisSpec::coefficient_equals(2, -0.2);
        let sigma = {
            let mut s = Matrix::identity(3);
            s[(1, 2)] = 0.3;
            s[(2, 1)] = 0.3;
            s[(2, 2)] = 1.7;
            s
        };
        // d = 0 → power = τ (central case)
        let p0 = contiguous_power(&theta0, &h, &sigma, &ContiguousDrift::Parameter(vec![0.0; 3]), 0.05).unwrap();
        assert_relative_eq!(p0, 0.05, epsilon = 1e-9);

        let d = vec![0.4, -0.7, 1.9];
        let m_jac = h.jacobian_at(&theta0).unwrap();
        let delta = m_jac.transpose().matvec(&d);
        let p_d = contiguous_power(&theta0, &h, &sigma, &ContiguousDrift::Parameter(d), 0.05).unwrap();
        let p_delta = contiguous_power(&theta0, &h, &sigma, &ContiguousDrift::Restriction(delta), 0.05).unwrap();
        assert_relative_eq!(p_d, p_delta, epsilon = 1e-12);
        assert!(p_d > 0.05);
    }

    fn uncensored_unit_exponential_ctx(alpha: f64) -> NullModelContext {
        // p = 0, γ = 1 design: times from Exp(1), all observed
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let times: Vec<f64> = (0..400).map(|_| -rng.random::<f64>().max(1e-15).ln()).collect();
        let status = vec![true; 400];
        let covs: Vec<Vec<f64>> = times.iter().map(|_| vec![]).collect();
        let data = CensoredDataset::from_parts(&times, &status, &covs, vec![]).unwrap();
        let spec = ModelSpec::new(std::sync::Arc::new(ExponentialBaseline), 0);
        NullModelContext::from_data(&spec, &data, &Theta::new(vec![1.0], vec![]), alpha).unwrap()
    }

    #[test]
    fn influence_closed_form_exponential_mle() {
        // IF(x_t; δ_t = 1) = 1 − x_t at γ = 1, α = 0 (score 1/γ − x, J = 1/γ²)
        let ctx = uncensored_unit_exponential_ctx(0.0);
        for &x_t in &[0.0, 0.5, 1.0, 3.0] {
            let y = CensoredObservation::new(x_t, true, vec![]).unwrap();
            let inf = mdpde_influence(&ctx, &y).unwrap();
            assert_relative_eq!(inf[0], 1.0 - x_t, epsilon = 1e-9);
        }
    }

    #[test]
    fn influence_bounded_for_positive_alpha_unbounded_at_zero() {
        for &alpha in &[0.1, 0.3, 0.5] {
            let ctx = uncensored_unit_exponential_ctx(alpha);
            let at = |x: f64| {
                let y = CensoredObservation::new(x, true, vec![]).unwrap();
                mdpde_influence(&ctx, &y).unwrap()[0].abs()
            };
            let lo = at(1e2);
            let hi = at(1e4);
            assert!(hi / lo.max(1e-300) < 1.1, "alpha {alpha}: {lo} vs {hi}");
        }
        let ctx0 = uncensored_unit_exponential_ctx(0.0);
        let at0 = |x: f64| {
            let y = CensoredObservation::new(x, true, vec![]).unwrap();
            mdpde_influence(&ctx0, &y).unwrap()[0].abs()
        };
        assert!(at0(1e4) / at0(1e2) > 10.0);
    }

    #[test]
    fn if2_is_nonnegative_and_reduces_to_scalar_form() {
        let ctx = uncensored_unit_exponential_ctx(0.3);
        let h = HypothesisSpec::baseline_param_equals(1, 1.0);
        for &x_t in &[0.1, 1.0, 7.0] {
            let y = CensoredObservation::new(x_t, true, vec![]).unwrap();
            let if2 = test_if2(&ctx, &h, &y).unwrap();
            assert!(if2 >= 0.0);
            // scalar hypothesis: IF₂ = 2 IF²/Σ^(11)
            let inf = mdpde_influence(&ctx, &y).unwrap()[0];
            assert_relative_eq!(if2, 2.0 * inf * inf / ctx.sigma[(0, 0)], max_relative = 1e-10);
        }
        // a contamination point where the score vanishes maps to zero
        let ctx0 = uncensored_unit_exponential_ctx(0.0);
        let y = CensoredObservation::new(1.0, true, vec![]).unwrap();
        assert_relative_eq!(test_if2(&ctx0, &h, &y).unwrap(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn c_star_zero_limit_matches_leading_terms() {
        // s = 0, r = 1, τ = 0.05: P(χ²₃ > χ²_{1,0.05}) − 0.05, with the
        // χ²₃ survival checked against its closed form
        // 2(1 − Φ(√c)) + √(2c/π) e^{−c/2}
        let crit = chisq_quantile(0.95, 1).unwrap();
        let chi3_closed = 2.0 * (1.0 - normal_cdf(crit.sqrt()))
            + (2.0 * crit / std::f64::consts::PI).sqrt() * (-0.5 * crit).exp();
        assert_relative_eq!(chisq_sf(crit, 3).unwrap(), chi3_closed, epsilon = 1e-10);
        assert_relative_eq!(chi3_closed, 0.2789, epsilon = 5e-4);
        let expect = chisq_sf(crit, 3).unwrap() - 0.05;
        assert_relative_eq!(c_star(0.0, 1, 0.05).unwrap(), expect, epsilon = 1e-12);
        // series → limit continuously
        assert_relative_eq!(c_star(1e-9, 1, 0.05).unwrap(), expect, epsilon = 1e-7);
    }

    #[test]
    fn c_star_is_noncentral_survival_derivative() {
        // C_r^*(s) = 2 ∂/∂s P(χ²_r(s) > χ²_{r,τ})
        for &(r, tau) in &[(1usize, 0.05), (3, 0.05), (2, 0.1)] {
            let crit = chisq_quantile(1.0 - tau, r).unwrap();
            for &s in &[0.2f64, 1.0, 4.0, 9.0] {
                let h = 1e-5 * s.max(1.0);
                let fd = (noncentral_chisq_sf(crit, r, s + h).unwrap() - noncentral_chisq_sf(crit, r, s - h).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(c_star(s, r, tau).unwrap(), 2.0 * fd, epsilon = 1e-6, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn pif_vanishes_without_drift_and_reduces_in_scalar_case() {
        let ctx = uncensored_unit_exponential_ctx(0.2);
        let h = HypothesisSpec::baseline_param_equals(1, 1.0);
        let y = CensoredObservation::new(2.5, true, vec![]).unwrap();
        assert_relative_eq!(power_influence(&ctx, &h, &[0.0], 0.05, &y).unwrap(), 0.0);

        // scalar reduction: C₁*(d²/Σ) · IF · d / Σ
        let d = 0.7;
        let sigma = ctx.sigma[(0, 0)];
        let inf = mdpde_influence(&ctx, &y).unwrap()[0];
        let expect = c_star(d * d / sigma, 1, 0.05).unwrap() * inf * d / sigma;
        assert_relative_eq!(power_influence(&ctx, &h, &[d], 0.05, &y).unwrap(), expect, max_relative = 1e-10);
    }

    #[test]
    fn contaminated_power_consistency() {
        let ctx = uncensored_unit_exponential_ctx(0.2);
        let h = HypothesisSpec::baseline_param_equals(1, 1.0);
        let y = CensoredObservation::new(4.0, true, vec![]).unwrap();
        let d = vec![0.6];

        // ε = 0 matches the plain contiguous power
        let base = contiguous_power(&ctx.theta0, &h, &ctx.sigma, &ContiguousDrift::Parameter(d.clone()), 0.05).unwrap();
        let eps0 = contaminated_power(&ctx, &h, &d, 0.0, &y, 0.05).unwrap();
        assert_relative_eq!(base, eps0, epsilon = 1e-14);

        // closed noncentral survival vs explicit series route
        for &eps in &[0.0, 0.3, 1.0] {
            let a = contaminated_power(&ctx, &h, &d, eps, &y, 0.05).unwrap();
            let b = contaminated_power_series(&ctx, &h, &d, eps, &y, 0.05).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }

        // d = 0: level under contamination, noncentrality ε²·IF'N·IF
        let inf = mdpde_influence(&ctx, &y).unwrap();
        let eps = 0.5;
        let m_jac = h.jacobian_at(&ctx.theta0).unwrap();
        let kernel = m_jac.transpose().matmul(&ctx.sigma).matmul(&m_jac);
        let ncp = eps * eps * inf[0] * inf[0] / kernel[(0, 0)];
        let crit = chisq_quantile(0.95, 1).unwrap();
        let expect = noncentral_chisq_sf(crit, 1, ncp).unwrap();
        let got = contaminated_power(&ctx, &h, &[0.0], eps, &y, 0.05).unwrap();
        assert_relative_eq!(got, expect, epsilon = 1e-12);

        // ∂/∂ε at 0 of the contaminated power equals the PIF
        let d = vec![0.4];
        let h_eps = 1e-5;
        let fd = (contaminated_power(&ctx, &h, &d, h_eps, &y, 0.05).unwrap()
            - contaminated_power(&ctx, &h, &d, 0.0, &y, 0.05).unwrap())
            / h_eps;
        let pif = power_influence(&ctx, &h, &d, 0.05, &y).unwrap();
        assert!((fd - pif).abs() < 1e-5, "fd {fd} vs pif {pif}");
    }

    #[test]
    fn influence_sweep_emits_both_statuses_and_zero_lif() {
        let ctx = uncensored_unit_exponential_ctx(0.3);
        let h = HypothesisSpec::baseline_param_equals(1, 1.0);
        let grid = [0.5, 1.0, 2.0];
        let rows = influence_sweep(&ctx, &h, &[0.001], 0.05, &grid, &[]).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().any(|r| r.delta_t == 0));
        assert!(rows.iter().any(|r| r.delta_t == 1));
        assert!(rows.iter().all(|r| r.lif == 0.0));
    }

    #[test]
    fn wald_p_value_is_consistent_with_cdf() {
        let fit = synthetic_fit(30, vec![1.0], vec![0.8], vec![1.0, 1.4]);
        let h = HypothesisSpec::coefficient_equals(1, 0.0);
        let t = wald_test(&fit, &h, 0.05).unwrap();
        assert_relative_eq!(t.p_value, 1.0 - chisq_cdf(t.statistic, 1).unwrap(), epsilon = 1e-12);
    }
}
