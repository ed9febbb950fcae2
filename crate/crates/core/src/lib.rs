//! Linear regions of piecewise-linear neural networks: closed-form bounds,
//! extremal constructions, and exact enumeration of activation regions with an
//! LP feasibility oracle.

pub mod bounds;
pub mod constructions;
pub mod counter;
pub mod error;
pub mod feasibility;
pub mod fixtures;
pub mod network;
pub mod render;
pub mod verify;

pub use bounds::{BigCount, NetConfig};
pub use error::{Error, Result};
pub use network::{ActivationPattern, AffineMap, InputDomain, Layer, LayerActivation, LinearOutput, Network};
