//! Monitored single-particle quantum walk on periodic lattices.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod lattice;
pub mod noise;
pub mod observables;
pub mod rgflow;
pub mod stats;

pub use error::{Error, Result};
