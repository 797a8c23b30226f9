//! Nonlinear plant: inverter DGs, RL network and the integrator.

pub mod dg;
pub mod network;
pub mod plant;

pub use dg::{dg_jacobian, droop_outputs, dg_derivatives, frame_transform, DgInput, DgParams, DgState, FrameDirection};
pub use network::{Closure, Line, Load, NetworkModel, Topology};
pub use plant::{rk4_step, DgSignals, Plant, PlantConfig, PlantState, Rk4Scratch, VoltageCommand};
