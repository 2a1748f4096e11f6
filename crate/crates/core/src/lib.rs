//! Multi-wavelength capsule bleeding monitor: optical simulation, a tiny
//! 2D-CNN flow-rate classifier, an int8 inference path, duty-cycle energy
//! accounting and a telemetry frame codec.
//!
//! The compute-heavy loops (per-sample gradients, batch evaluation, per-scenario
//! recording generation) run on rayon when the `parallel` feature is enabled and
//! fall back to plain iterators otherwise. Both paths produce bit-identical
//! results; see [`exec`].

pub mod energy;
pub mod exec;
pub mod nn;
pub mod quant;
pub mod sim;
pub mod spectral;
pub mod telemetry;

pub use exec::Exec;
