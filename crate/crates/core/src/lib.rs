//! Duality-gap minimization for two-player zero-sum differentiable games.
//!
//! The crate provides a small game catalog, the usual first- and
//! second-order baselines (GDA, OGDA, EG, SGA, CO, unrolled, FR), the
//! approximate duality gap with envelope and unrolled gradients, local
//! stability analysis, landscape grids, a stochastic AdaGrad rate
//! experiment and a 1-D mixture-of-Gaussians GAN.

pub mod dg;
pub mod dynamics;
pub mod error;
pub mod games;
pub mod mlp;
pub mod mog;
pub mod optimizers;
pub mod plot;
pub mod point;
pub mod rng;
pub mod stochastic;

pub use dg::{dg_descent_step, dg_estimate, worst_case_responses, DgConfig, DgEstimate, GradMode, OuterStep};
pub use error::{Error, Result};
pub use games::{parse_game, Game, GameSpec, HessianBlocks};
pub use optimizers::{run_trajectory, Algorithm, Classification, OptimizerConfig, Trajectory, TrajectoryOptions};
pub use point::{BoxDomain, JointPoint, Matrix, Vector};
