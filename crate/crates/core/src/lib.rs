//! Numerical toolkit for linear rigidity of stationary processes.
//!
//! A stationary process `X` on `Z^d` is linearly rigid when `X_0` lies in the
//! closed span of the other coordinates. By the Kolmogorov criterion this
//! happens exactly when the reciprocal of the spectral density has infinite
//! integral over the torus. The modules here compute spectral densities from
//! covariances or directly from projection kernels, classify rigidity from
//! the growth of the reciprocal-density integral, check the sufficient
//! tail/Zygmund conditions, compute finite-lag interpolation errors, and
//! sample determinantal point processes to confirm the moment formulas.

pub mod dppcov;
pub mod driver;
pub mod error;
pub mod io;
pub mod kernels;
pub mod predictor;
pub mod quadrature;
pub mod regularity;
pub mod sampler;
pub mod spectral;

pub use error::{Error, Result};
