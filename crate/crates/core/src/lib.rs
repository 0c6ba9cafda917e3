//! Intrinsic canonical correlation analysis on products of SO(2) and SO(3).

pub mod cca;
pub mod datagen;
pub mod error;
mod geodesic;
pub mod harness;
pub mod icca;
pub mod io;
pub mod ipca;
pub mod lie;
pub mod metrics;
pub mod search;
mod sphere;
pub mod stats;

pub use error::{Error, Result};
pub use sphere::SphereStep;
