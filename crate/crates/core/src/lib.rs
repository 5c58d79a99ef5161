//! Arithmetic regularity over F_p^n at desk scale.

pub mod budget;
pub mod cli;
pub mod construction;
pub mod energy;
pub mod error;
pub mod field_space;
pub mod fourier;
pub mod numeric;
pub mod qarl;
pub mod quadratic;

pub use budget::Budget;
pub use error::{Error, Result};
