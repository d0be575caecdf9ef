//! Exact moments of standardized sums and of linear functionals of OLS
//! estimators, convergence-rate analysis and adversarial designs.

pub mod combinat;
pub mod design;
pub mod error;
pub mod exact;
pub mod gaussian;
pub mod linalg;
pub mod moments;
pub mod montecarlo;
pub mod ols;
pub mod profile;
pub mod rate;
pub mod rng;

pub use error::{Error, Result};
pub use exact::{ExactRational, Radical};
