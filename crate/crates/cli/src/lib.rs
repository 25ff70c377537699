//! Command-line front end for the mipbo experiments.

pub mod commands;
pub mod config;
