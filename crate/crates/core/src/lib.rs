//! Single-anchor UWB target tracking.
//!
//! A UAV carrying a multi-antenna UWB anchor measures range and azimuth/elevation to a
//! tagged target. The crate provides:
//!
//! - [`dynamics`]: double-integrator propagation of UAV and target.
//! - [`sensing`]: range/bearing measurement generation with heavy-tailed bearing outliers
//!   and the unit-sphere residual geometry.
//! - [`estimation`]: a sliding-window factor-graph smoother with Cauchy-robust bearing
//!   factors, a non-robust variant and an EKF baseline.
//! - [`control`]: a covariance-aware CLF-CBF standoff controller posed as a safety-filter QP.
//! - [`qp`]: a small dense QP solver used by the controller.
//! - [`sim`]: scenarios, closed-loop episodes and Monte-Carlo aggregation.

pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod qp;
pub mod sensing;
pub mod sim;
pub mod stats;
pub mod types;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use types::{FrameRotation, State6, Sym2, Sym3, Sym6, SymMatrix};
