//! Three-interval exchanges, their rotation and marked-torus renormalization,
//! Rokhlin towers, shifted power joinings with exact Kantorovich-Rubinstein
//! distances, and the iterative switch construction of self-joinings.

pub mod arith;
pub mod construction;
pub mod error;
pub mod iet_core;
pub mod joinings;
pub mod params;
pub mod renorm;
pub mod towers;

pub use error::{Error, Result};
pub use iet_core::{ArithmeticMode, ExactIet, ExactRotation, Iet3, OrbitSegment, RotationRep};
