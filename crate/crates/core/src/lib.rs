//! Twin-model inference and discrete adjoints for gray-box 1-D conservation laws.
//!
//! A gray-box simulator exposes only its space-time solution. This crate fits
//! a twin model with a sigmoid-dictionary flux to that solution and then
//! differentiates objectives through the twin at the cost of one forward and
//! one backward sweep.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod basis;
pub mod control;
pub mod error;
pub mod field;
pub mod graybox;
pub mod math;
pub mod scheme;
pub mod tape;
pub mod train;
pub mod twin;
#[cfg(feature = "oracle")]
pub mod verify;

pub use basis::{BasisId, Dictionary};
pub use control::ControlField;
pub use error::{Error, Result};
pub use field::{build_grid, trapezoid_weights, Grid, Mask, QuadratureWeights, SpaceTimeField};
pub use graybox::{graybox_objective, graybox_solve, FluxKind, GrayBoxCase, InitialCondition};
pub use scheme::Setup;
pub use train::{Metric, TrainConfig, TrainData};
pub use twin::{residual_field, twin_solve, Objective, Scheme, TwinModel};
