//! Continuous monitoring of observables with continuous spectrum.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`) through
//! [`Real`]; the `*F64` aliases at the crate root fix the precision used by the
//! command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lindblad;
pub mod measure;
pub mod packet;
pub mod qnd;
pub mod scalar;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use measure::{GridMeasure, Renormalized, TestFunction};
pub use scalar::{compensated_sum, log_add_exp, CompensatedSum, Real};
pub use sde::{NoisePath, RngStream, StreamRng, TimeGrid};

pub type GridMeasureF64 = GridMeasure<f64>;
pub type TestFunctionF64 = TestFunction<f64>;
pub type TimeGridF64 = TimeGrid<f64>;
pub type NoisePathF64 = NoisePath<f64>;
pub type PhysicalScalesF64 = packet::PhysicalScales<f64>;
pub type PotentialF64 = packet::Potential<f64>;
pub type GaussianPacketF64 = packet::GaussianPacket<f64>;
pub type LindbladSpecF64 = lindblad::LindbladSpec<f64>;
pub type QndConfigF64 = qnd::QndConfig<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
