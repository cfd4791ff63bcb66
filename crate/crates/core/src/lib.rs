//! Torque-level safety filtering for legged robots, plus the tooling around
//! it: rigid-body dynamics on a floating-base tree, a dense ADMM QP solver,
//! friction and ground-clearance constraint assembly, a trot gait generator,
//! a compliant-contact simulator, CSV run logs, and a small attention-based
//! friction estimator with hand-written gradients.

pub mod filter;
pub mod gait;
pub mod log;
mod math;

pub mod model;
pub mod qp;
pub mod sim;

pub use model::{ContactSet, ModelError, ParseError, RobotModel, RobotState};
