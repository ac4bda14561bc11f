//! Command-line runner, file formats and acceptance suite built on `zollab-core`.
pub mod commands;
pub mod config;
pub mod output;
pub mod suite;
