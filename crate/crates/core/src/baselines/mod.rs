//! Baseline scorers sharing the [`Model`](crate::Model) interface.

mod acf;
mod mf;
mod protomf;

pub use acf::AcfParams;
pub use mf::MfParams;
pub use protomf::ProtoMfParams;
