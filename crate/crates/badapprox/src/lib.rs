//! Executable metric Diophantine approximation.
//!
//! The crate computes the quantities that govern the Hausdorff measure of
//! the set of ψ-badly approximable m×n matrices: the constants η and θ,
//! the window integral F_ψ, the block schedule (N_k), measures of the
//! danger windows W_ψ(Q1,Q2), lattice irregularity, the dynamical
//! dictionary along g_t, Cantor trees with evaporation rates, and a
//! continued-fraction oracle for the one-dimensional case.
//!
//! ```
//! use badapprox::core_theory::{eta, theta, Dimensions, NormSpec};
//!
//! let dims = Dimensions::new(1, 1).unwrap();
//! let sup = NormSpec::sup(1);
//! let t = theta(dims, &sup, &sup).unwrap();
//! assert!((t - 6.0 / std::f64::consts::PI.powi(2)).abs() < 1e-12);
//! assert!((eta(dims, &sup, &sup).unwrap() - 2.0 * t).abs() < 1e-12);
//! ```

pub mod cf_oracle;
pub mod core_theory;
pub mod dynamics;
pub mod error;
pub mod fractal;
pub mod geometry;
pub mod lattices;
pub mod rng;
pub mod scheduler;
pub mod tolerances;
pub mod window_measure;

pub use error::{Error, Result};
