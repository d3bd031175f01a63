//! Experiment configuration, orchestration, records and the acceptance suite
//! for `equidist-core`.

pub mod acceptance;
pub mod config;
pub mod record;
pub mod runs;
