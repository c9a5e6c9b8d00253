//! Numerical laboratory for soliton asymptotics of the cubic NLS with a
//! two-bound-state potential, restricted to radial data in R^3.

pub mod config;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod fgr;
pub mod fit;
pub mod frame;
pub mod grid_spectral;
pub mod io;
pub mod ground_state;
pub mod linalg;
pub mod linearization;
pub mod normal_form;

pub use error::{Error, Result};
