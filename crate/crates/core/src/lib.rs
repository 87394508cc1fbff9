#![no_std]

#[cfg(test)]
extern crate std;

extern crate alloc;

pub mod continual;
pub mod diagnostics;
mod error;
pub mod network;
pub mod numerics;
pub mod regularizers;
pub mod spectral;
pub mod toyland;

pub use error::{Error, Result};
