//! Configuration, commands and the acceptance suite behind the `isleforge`
//! binary.

pub mod acceptance;
pub mod commands;
pub mod config;
