//! Optimal band (s,S) ordering policies for inventory models driven by a
//! one-dimensional diffusion, under the long-term average cost criterion.
//!
//! The pipeline is: describe the diffusion ([`diffusion`]) and costs
//! ([`costs`]), build the key functions ([`keyfns`]), minimise the cycle-cost
//! ratio ([`optimizer`]), certify the result ([`verify`]) and cross-check it
//! by Monte Carlo ([`simulate`]).

pub mod builtin;
pub mod costs;
pub mod diffusion;
pub mod error;
pub mod expr;
pub mod keyfns;
pub mod limits;
pub mod optimizer;
pub mod profile;
pub mod quadrature;
pub mod report;
pub mod serde_real;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
