//! Calibration measures for prediction-label distributions.
//!
//! The crate computes smooth calibration error, earth mover's distance to
//! calibration, lower, upper and true distances to calibration, and
//! omniprediction regret of noise-smoothed predictors against proper losses.
//! Everything is exact up to floating point: transport problems go through a
//! small dense simplex solver and smoothed expectations are closed-form
//! integrals.

pub mod constructions;
pub mod error;
pub mod experiments;
pub mod io;
pub mod losses;
pub mod lp;
pub mod metrics;
pub mod omni;
pub mod pld;
pub mod rng;
pub mod smoothing;
pub mod transport;

pub use error::{CalibError, ErrorKind, Result};
pub use losses::{LinearPiece, PostProcessing, VComponent, VMixtureLoss};
pub use lp::{solve_lp, LpProblem, LpSolution, LpStatus};
pub use metrics::{demc, ldce, smce, true_dce, udce_exact};
pub use omni::{best_post_regret, omni_regret, omni_regret_calibrated, OmniConfig, OmniReport};
pub use pld::{mix, Atom, FinitePredictionTask, Pld, TaskPoint};
pub use smoothing::{smooth, smooth_point, PiecewisePrediction, PosteriorFunction, SmoothedPld};
pub use transport::{wasserstein, wasserstein_label_preserving, TransportPlan};
