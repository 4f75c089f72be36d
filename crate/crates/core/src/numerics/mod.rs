//! Shared numerical kernels: linear algebra, quadrature, distribution
//! functions and optimizers. Everything here is pure and reentrant.

pub mod matrix;
pub mod optim;
pub mod quadrature;
pub mod special;

pub use matrix::{Matrix, CONDITION_LIMIT};
pub use optim::{
    fd_gradient, fd_jacobian, minimize_nelder_mead, newton_raphson, MinimizeResult,
    NelderMeadOptions, NewtonOptions, NewtonResult,
};
pub use quadrature::{adaptive_quadrature, adaptive_quadrature_to_inf, QuadResult, QuadratureSpec};
pub use special::{
    chisq_cdf, chisq_quantile, chisq_sf, noncentral_chisq_sf, normal_cdf, normal_pdf,
    normal_quantile,
};
