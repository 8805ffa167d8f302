//! Link-level simulation of IEEE 802.11p vehicular channels with classical
//! data-pilot-aided channel estimators and a temporal convolutional network
//! that refines them.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod grid;
pub mod link;
pub mod phy;
pub mod pipeline;
pub mod tcn;

pub use error::{Error, Result};
pub use grid::ComplexGrid;
