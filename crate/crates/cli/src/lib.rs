//! Configuration-driven orchestration around the core library: one TOML file
//! describes a run; the binary (or these modules directly) executes the
//! pipeline — simulate → calibrate → solve → compare — persisting every
//! number as a seed-stamped artifact and assembling the comparison report.

pub mod artifacts;
pub mod config;
pub mod pipeline;
