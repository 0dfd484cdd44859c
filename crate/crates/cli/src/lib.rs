//! Command implementations behind the `hardbatch` binary.
//!
//! Every command writes its artifacts plus a `manifest.json` that records
//! the resolved configuration, so a run can be repeated bit for bit.

pub mod bench;
pub mod commands;
pub mod manifest;

pub use manifest::RunManifest;
