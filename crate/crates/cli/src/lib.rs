//! Command-line pipeline for the resonance library: configuration parsing,
//! artifact caching, and the obstacle-to-resonances stages behind the
//! `rough-resonance` binary.

pub mod cache;
pub mod config;
pub mod jsonfmt;
pub mod pipeline;
