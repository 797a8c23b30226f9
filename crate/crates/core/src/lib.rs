//! Event-triggered distributed MPC for secondary voltage control of islanded
//! AC microgrids, with a deadbeat Volterra observer and a full nonlinear
//! inverter plant.

pub mod error;
pub mod linearize;
pub mod dmpc;
pub mod physics;
pub mod trigger;
pub mod comm;
pub mod observer;
pub mod agent;
pub mod scenario;

pub use error::{ConfigError, Error, PlantError};
