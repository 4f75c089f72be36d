//! Derivative-free simplex minimization and damped Newton root finding.
//!
//! These two routines back the two-stage estimation loop: Nelder-Mead for
//! the baseline parameters (where objective evaluations involve
//! integrals) and Newton-Raphson with step halving for the regression
//! coefficients and for full-system polishing.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Options for [`minimize_nelder_mead`].
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Stop when the simplex diameter falls below this.
    pub diameter_tol: f64,
    pub max_iterations: usize,
    /// Initial simplex step per coordinate (relative when the start is nonzero).
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            diameter_tol: 1e-8,
            max_iterations: 500,
            initial_step: 0.1,
        }
    }
}

/// Outcome of a simplex minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

fn simplex_diameter(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .map(|p| {
            p.iter()
                .zip(best)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Nelder-Mead simplex minimization of `f` from `x0`.
///
/// Non-finite objective values are treated as +∞ so the simplex backs away
/// from invalid regions instead of aborting.
pub fn minimize_nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> MinimizeResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    if dim == 0 {
        let value = eval(x0, &mut evaluations);
        return MinimizeResult { x: vec![], value, converged: true, iterations: 0, evaluations };
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        let step = if p[i].abs() > 1e-8 { p[i].abs() * opts.initial_step } else { opts.initial_step };
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evaluations)).collect();

    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let reordered: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let revalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = reordered;
        values = revalues;

        if simplex_diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|d| simplex[..dim].iter().map(|p| p[d]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let fr = eval(&reflect, &mut evaluations);

        if fr < values[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&reflect)
                .map(|(c, r)| c + gamma * (r - c))
                .collect();
            let fe = eval(&expand, &mut evaluations);
            if fe < fr {
                simplex[dim] = expand;
                values[dim] = fe;
            } else {
                simplex[dim] = reflect;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflect;
            values[dim] = fr;
            continue;
        }
        // contraction
        let contract: Vec<f64> = if fr < values[dim] {
            centroid.iter().zip(&reflect).map(|(c, r)| c + rho * (r - c)).collect()
        } else {
            centroid.iter().zip(&worst).map(|(c, w)| c + rho * (w - c)).collect()
        };
        let fc = eval(&contract, &mut evaluations);
        if fc < values[dim].min(fr) {
            simplex[dim] = contract;
            values[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=dim {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, p)| b + sigma * (p - b))
                .collect();
            values[i] = eval(&shrunk, &mut evaluations);
            simplex[i] = shrunk;
        }
    }

    let mut best = 0usize;
    for i in 1..=dim {
        if values[i] < values[best] {
            best = i;
        }
    }
    MinimizeResult {
        x: simplex[best].clone(),
        value: values[best],
        converged,
        iterations,
        evaluations,
    }
}

/// Options for [`newton_raphson`].
#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Success criterion on ‖g‖∞.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            residual_tol: 1e-8,
            max_iterations: 100,
            max_halvings: 30,
        }
    }
}

/// Outcome of a Newton-Raphson solve.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn norm_inf(v: &[f64]) -> f64 {
    if v.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Damped Newton-Raphson on the residual `g` with Jacobian supplier `jac`.
///
/// A full step that fails to decrease ‖g‖∞ is halved (up to
/// `max_halvings`). A singular Jacobian surfaces as a near-singular error;
/// exhausting the iteration budget returns `converged: false` with the
/// last iterate.
pub fn newton_raphson<G, J>(mut g: G, mut jac: J, x0: &[f64], opts: &NewtonOptions) -> Result<NewtonResult>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<Matrix>,
{
    let mut x = x0.to_vec();
    let mut gx = g(&x)?;
    let mut gnorm = norm_inf(&gx);

    for iter in 1..=opts.max_iterations {
        if gnorm < opts.residual_tol {
            return Ok(NewtonResult { x, residual_norm: gnorm, converged: true, iterations: iter - 1 });
        }
        let j = jac(&x)?;
        let rhs = Matrix::column(&gx);
        let step = j.solve(&rhs)?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let candidate: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, xi)| xi - lambda * step[(i, 0)])
                .collect();
            match g(&candidate) {
                Ok(gc) => {
                    let cnorm = norm_inf(&gc);
                    if cnorm.is_finite() && cnorm < gnorm {
                        x = candidate;
                        gx = gc;
                        gnorm = cnorm;
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {} // out-of-domain trial point; halve and retry
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(NewtonResult { x, residual_norm: gnorm, converged: gnorm < opts.residual_tol, iterations: iter });
        }
    }
    Ok(NewtonResult { x: x.clone(), residual_norm: gnorm, converged: gnorm < opts.residual_tol, iterations: opts.max_iterations })
}

/// Central-difference Jacobian of `g` with per-coordinate step
/// `h_i = scale * max(1, |x_i|)`.
pub fn fd_jacobian<G>(mut g: G, x: &[f64], out_dim: usize, scale: f64) -> Result<Matrix>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut jac = Matrix::zeros(out_dim, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = scale * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let gp = g(&xp)?;
        xp[j] = x[j] - h;
        let gm = g(&xp)?;
        xp[j] = x[j];
        if gp.len() != out_dim || gm.len() != out_dim {
            return Err(Error::Domain("residual dimension changed during differentiation".into()));
        }
        for i in 0..out_dim {
            jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(mut f: F, x: &[f64], scale: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = scale * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        grad[j] = (fp - fm) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_minimum() {
        let r = minimize_nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &NelderMeadOptions::default());
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 3.0, epsilon = 1e-6);
    }

    #[test]
    fn anisotropic_quadratic_minimum() {
        let r = minimize_nelder_mead(
            |x| x[0] * x[0] + 10.0 * x[1] * x[1],
            &[1.0, 1.0],
            &NelderMeadOptions::default(),
        );
        assert!(r.converged);
        assert!(r.x[0].abs() < 1e-6 && r.x[1].abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let opts = NelderMeadOptions { max_iterations: 5000, ..Default::default() };
        let r = minimize_nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &opts,
        );
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn newton_square_root() {
        let r = newton_raphson(
            |x| Ok(vec![x[0] * x[0] - 4.0]),
            |x| Ok(Matrix::from_row_major(1, 1, vec![2.0 * x[0]])),
            &[3.0],
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn newton_exponential_root() {
        let r = newton_raphson(
            |x| Ok(vec![x[0].exp() - 1.0]),
            |x| Ok(Matrix::from_row_major(1, 1, vec![x[0].exp()])),
            &[1.0],
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!(r.x[0].abs() < 1e-8);
    }

    #[test]
    fn newton_cubic_matches_bisection_oracle() {
        let f = |x: f64| x * x * x - x - 2.0;
        // independent bisection on [1, 2]
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert_relative_eq!(oracle, 1.52138, epsilon = 1e-5);

        let r = newton_raphson(
            |x| Ok(vec![f(x[0])]),
            |x| Ok(Matrix::from_row_major(1, 1, vec![3.0 * x[0] * x[0] - 1.0])),
            &[1.5],
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.x[0], oracle, epsilon = 1e-8);
    }

    #[test]
    fn newton_reports_nonconvergence() {
        // residual with no root: g(x) = x^2 + 1; Newton stalls, flag stays false
        let r = newton_raphson(
            |x| Ok(vec![x[0] * x[0] + 1.0]),
            |x| Ok(Matrix::from_row_major(1, 1, vec![2.0 * x[0]])),
            &[2.0],
            &NewtonOptions { max_iterations: 10, ..Default::default() },
        )
        .unwrap();
        assert!(!r.converged);
        assert!(r.residual_norm >= 1.0);
    }

    #[test]
    fn fd_jacobian_linear_map_is_exact() {
        let jac = fd_jacobian(
            |x| Ok(vec![2.0 * x[0] + 3.0 * x[1], -x[0] + 4.0 * x[1]]),
            &[0.3, -0.7],
            2,
            1e-6,
        )
        .unwrap();
        assert_relative_eq!(jac[(0, 0)], 2.0, epsilon = 1e-9);
        assert_relative_eq!(jac[(0, 1)], 3.0, epsilon = 1e-9);
        assert_relative_eq!(jac[(1, 0)], -1.0, epsilon = 1e-9);
        assert_relative_eq!(jac[(1, 1)], 4.0, epsilon = 1e-9);
    }
}
