#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod dynamics;
pub mod linalg;
pub mod orbit;
pub mod params;
pub mod profile;
pub mod sim;
pub mod stability;

pub use params::{DerivedQuantities, ModelKind, ModelParams, ParamError};
