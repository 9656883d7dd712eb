//! Gravity-aided INS map matching with a hidden Markov model.
//!
//! Map cells are the hidden states, gravimeter readings the observations and
//! INS velocity the transition model. The crate provides:
//!
//! * [`mapgrid`]: gravity rasters, windows, sub-cells, synthetic maps and I/O
//! * [`insmodel`]: truth trajectories, sensor models and dead reckoning
//! * [`matcher`]: greedy Viterbi-style chains (VBMP / RVBMP / RVBMP-2), the exact
//!   trellis Viterbi and a brute-force MAP oracle
//! * [`iccp`]: an iterative closest contour point baseline
//! * [`harness`]: scenarios, Monte Carlo batches, metrics and reports

pub mod error;
pub mod exec;
pub mod geo;
pub mod harness;
pub mod iccp;
pub mod insmodel;
pub mod mapgrid;
pub mod matcher;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geo::{haversine_km, LonLat};
pub use mapgrid::{CellIndex, GravityMap, GridWindow};
