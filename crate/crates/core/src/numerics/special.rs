//! Normal, chi-square and noncentral chi-square distribution functions.
//!
//! The central CDFs are thin wrappers over the regularized incomplete
//! gamma and erfc from `statrs`; quantiles refine a closed-form initial
//! guess with Newton steps against our own CDFs. The noncentral survival
//! function is the Poisson-weighted mixture of central chi-square tails,
//! truncated when the remaining Poisson mass drops below 1e-14.

use crate::error::{Error, Result};
use statrs::function::erf;
use statrs::function::gamma::{gamma_lr, gamma_ur};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const POISSON_TAIL_CUTOFF: f64 = 1e-14;

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

/// Standard normal density φ(x).
pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.3989422804014327;
    (-0.5 * x * x).exp() * INV_SQRT_2PI
}

/// Standard normal quantile Φ⁻¹(p) for p ∈ (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile requires p in (0,1), got {p}")));
    }
    // Acklam's rational approximation as the starting point.
    let x0 = acklam_inverse(p);
    // Halley refinement against the erfc-based CDF.
    let mut x = x0;
    for _ in 0..3 {
        let e = normal_cdf(x) - p;
        let d = normal_pdf(x);
        if d == 0.0 {
            break;
        }
        let u = e / d;
        x -= u / (1.0 + 0.5 * x * u).max(0.5);
    }
    Ok(x)
}

fn acklam_inverse(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

fn check_df(r: usize) -> Result<f64> {
    if r < 1 {
        return Err(Error::Domain("degrees of freedom must be at least 1".into()));
    }
    Ok(r as f64)
}

/// Chi-square CDF P(χ²_r ≤ x).
///
/// The r = 1 and r = 2 cases use exact identities (2Φ(√x) − 1 and
/// 1 − e^{−x/2}); higher degrees go through the regularized incomplete
/// gamma.
pub fn chisq_cdf(x: f64, r: usize) -> Result<f64> {
    let df = check_df(r)?;
    if x < 0.0 {
        return Err(Error::Domain(format!("chi-square CDF requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(match r {
        1 => 2.0 * normal_cdf(x.sqrt()) - 1.0,
        2 => -(-0.5 * x).exp_m1(),
        _ => gamma_lr(0.5 * df, 0.5 * x),
    })
}

/// Chi-square survival function P(χ²_r > x).
pub fn chisq_sf(x: f64, r: usize) -> Result<f64> {
    let df = check_df(r)?;
    if x < 0.0 {
        return Err(Error::Domain(format!("chi-square SF requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    Ok(match r {
        1 => erf::erfc(x.sqrt() / SQRT_2),
        2 => (-0.5 * x).exp(),
        _ => gamma_ur(0.5 * df, 0.5 * x),
    })
}

/// Chi-square density.
fn chisq_pdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * df;
    (-statrs::function::gamma::ln_gamma(half) - half * std::f64::consts::LN_2
        + (half - 1.0) * x.ln()
        - 0.5 * x)
        .exp()
}

/// Chi-square quantile: x with P(χ²_r ≤ x) = p.
pub fn chisq_quantile(p: f64, r: usize) -> Result<f64> {
    let df = check_df(r)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("chi-square quantile requires p in (0,1), got {p}")));
    }
    // Wilson-Hilferty start: χ² ≈ df (1 - 2/(9 df) + z √(2/(9 df)))³
    let z = normal_quantile(p)?;
    let c = 2.0 / (9.0 * df);
    let mut x = df * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x.is_finite() && x > 0.0) {
        x = df;
    }
    // Newton iterations with a bisection fallback bracket.
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let cdf = chisq_cdf(x, r)?;
        if cdf > p {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let err = cdf - p;
        if err.abs() < 1e-13 {
            break;
        }
        let d = chisq_pdf(x, df);
        let mut next = if d > 0.0 { x - err / d } else { f64::NAN };
        if !(next.is_finite() && next > lo && (hi.is_infinite() || next < hi)) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { lo.max(x) * 2.0 + 1.0 };
        }
        if (next - x).abs() <= 1e-14 * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Noncentral chi-square survival P(χ²_r(δ) > x) via the Poisson-weighted
/// series Σ_v e^{-δ/2} (δ/2)^v / v! · P(χ²_{r+2v} > x).
pub fn noncentral_chisq_sf(x: f64, r: usize, delta: f64) -> Result<f64> {
    check_df(r)?;
    if x < 0.0 {
        return Err(Error::Domain(format!("noncentral SF requires x >= 0, got {x}")));
    }
    if delta < 0.0 {
        return Err(Error::Domain(format!("noncentrality must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return chisq_sf(x, r);
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let half = 0.5 * delta;
    let mut weight = (-half).exp(); // Poisson(half) mass at v = 0
    let mut cumulative = 0.0;
    let mut acc = 0.0;
    let mut v = 0usize;
    loop {
        acc += weight * chisq_sf(x, r + 2 * v)?;
        cumulative += weight;
        if 1.0 - cumulative < POISSON_TAIL_CUTOFF {
            break;
        }
        v += 1;
        weight *= half / v as f64;
        if v > 10_000 {
            // delta so large the series is impractical; fall back to the
            // normal approximation of the noncentral chi-square
            let mu = r as f64 + delta;
            let sd = (2.0 * (r as f64 + 2.0 * delta)).sqrt();
            return Ok(1.0 - normal_cdf((x - mu) / sd));
        }
    }
    Ok(acc.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn normal_cdf_symmetry() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        for &x in &[0.1, 0.7, 1.3, 2.9, 5.0] {
            assert_relative_eq!(normal_cdf(-x) + normal_cdf(x), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        // in-test bisection oracle against normal_cdf
        let bisect = |p: f64| {
            let (mut lo, mut hi) = (-40.0f64, 40.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal_cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        assert_relative_eq!(normal_quantile(0.975).unwrap(), bisect(0.975), epsilon = 1e-10);
        assert_relative_eq!(normal_quantile(0.975).unwrap(), 1.959964, epsilon = 1e-5);
        for &p in &[1e-8, 0.01, 0.3, 0.5, 0.9, 0.999, 1.0 - 1e-9] {
            let x = normal_quantile(p).unwrap();
            assert_relative_eq!(normal_cdf(x), p, epsilon = 1e-10);
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn chisq_cdf_anchors() {
        assert_relative_eq!(chisq_cdf(0.0, 3).unwrap(), 0.0);
        // r = 1 identity: P(χ²_1 ≤ x) = 2Φ(√x) − 1
        for &x in &[0.5f64, 1.0, 3.8415, 10.0] {
            let oracle = 2.0 * normal_cdf(x.sqrt()) - 1.0;
            assert_relative_eq!(chisq_cdf(x, 1).unwrap(), oracle, epsilon = 1e-12);
        }
        assert_relative_eq!(chisq_cdf(3.8415, 1).unwrap(), 0.95, epsilon = 1e-4);
        // r = 2 closed form: 1 − e^{−x/2}
        for &x in &[0.3, 1.386294, 7.0] {
            assert_relative_eq!(chisq_cdf(x, 2).unwrap(), 1.0 - (-0.5 * x).exp(), epsilon = 1e-13);
        }
        // limit toward 1
        assert_relative_eq!(chisq_cdf(1e4, 2).unwrap(), 1.0, epsilon = 1e-12);
        assert!(chisq_cdf(-1.0, 3).is_err());
        assert!(chisq_cdf(1.0, 0).is_err());
    }

    #[test]
    fn chisq_quantile_frozen_values() {
        // frozen from bisection on the CDF (and the r=2 closed form −2 ln(1−p))
        assert_relative_eq!(chisq_quantile(0.95, 1).unwrap(), 3.84146, epsilon = 1e-5);
        assert_relative_eq!(chisq_quantile(0.95, 3).unwrap(), 7.81473, epsilon = 1e-5);
        assert_relative_eq!(chisq_quantile(0.5, 2).unwrap(), -2.0 * 0.5f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn chisq_quantile_cdf_round_trip() {
        for r in 1..=10 {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let x = chisq_quantile(p, r).unwrap();
                assert_relative_eq!(chisq_cdf(x, r).unwrap(), p, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn noncentral_reduces_to_central_at_zero() {
        for r in [1usize, 2, 5] {
            for &x in &[0.0, 1.0, 3.84146, 12.0] {
                let nc = noncentral_chisq_sf(x, r, 0.0).unwrap();
                let central = 1.0 - chisq_cdf(x, r).unwrap();
                assert_relative_eq!(nc, central, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn noncentral_df1_normal_identity() {
        // χ²_1(δ) = (Z + √δ)²: P((Z+1)² > x) = P(Z > √x − 1) + P(Z < −√x − 1)
        let x = 3.84146f64;
        let oracle = (1.0 - normal_cdf(x.sqrt() - 1.0)) + normal_cdf(-x.sqrt() - 1.0);
        // limited by the incomplete-gamma accuracy of the df >= 3 terms
        assert_relative_eq!(noncentral_chisq_sf(x, 1, 1.0).unwrap(), oracle, epsilon = 1e-9);
        assert_relative_eq!(oracle, 0.17007, epsilon = 2e-5);
        assert_relative_eq!(noncentral_chisq_sf(0.0, 4, 2.5).unwrap(), 1.0);
    }

    #[test]
    fn noncentral_matches_monte_carlo() {
        // P(Σ (Z_i + μ_i)² > x) with r = 3, μ = (1, 0.5, 0): δ = 1.25
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mu = [1.0, 0.5, 0.0];
        let delta: f64 = mu.iter().map(|m| m * m).sum();
        let x = 6.0;
        let n = 1_000_000usize;
        let mut hits = 0usize;
        for _ in 0..n {
            let s: f64 = mu
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (z + m) * (z + m)
                })
                .sum();
            if s > x {
                hits += 1;
            }
        }
        let mc = hits as f64 / n as f64;
        let se = (mc * (1.0 - mc) / n as f64).sqrt();
        let exact = noncentral_chisq_sf(x, 3, delta).unwrap();
        assert!(
            (exact - mc).abs() <= 3.0 * se,
            "exact {exact} vs Monte Carlo {mc} (3 se = {})",
            3.0 * se
        );
    }
}
