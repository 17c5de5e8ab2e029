//! Structure-preserving finite-difference simulation of a Kirchhoff-Love
//! plate with boundary shear actuation, an energy-Casimir boundary
//! controller and an energy-balancing boundary observer.

pub mod actuation;
pub mod config;
pub mod controller;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod observer;
pub mod plate;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
