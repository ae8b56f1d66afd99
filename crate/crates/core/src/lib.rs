//! Deterministic multi-UAV simulation: relay chain positioning with a
//! collision guard, store-and-forward relaying over a path-loss radio model,
//! and 2D-lidar point-cloud acquisition, driven by declarative scenarios.

pub mod guard;
pub mod kernel;
pub mod lidar;
pub mod net;
pub mod radio;
pub mod relay;
pub mod scenario;
