//! Structural/trading decomposition of portfolio relative log-return.
//!
//! The relative log-return of a portfolio against the market splits into a
//! structural process, the Fisk–Stratonovich integral of the portfolio
//! weights against log market weights, and a trading process that carries
//! the profit and loss from rebalancing. For functionally generated
//! portfolios the two coincide with the log-change of the generating
//! function and its drift process.

pub mod decomposition;
pub mod error;
pub mod generators;
pub mod harness;
pub mod market;
pub mod paths;
pub mod portfolio;

pub use error::{Error, Result};
