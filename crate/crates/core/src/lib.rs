//! Liquid state machines with STDP and astrocyte-modulated plasticity.

pub mod analysis;
pub mod astrocyte;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod io;
pub mod network;
pub mod pipeline;
pub mod plasticity;
pub mod readout;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};
