//! Point cloud to IFC reconstruction of slabs, storeys, walls, openings and zones.

pub mod calibration;
pub mod cloud_io;
pub mod config;
pub mod error;
pub mod eval;
pub mod geom;
pub mod ifc;
pub mod opening;
pub mod pipeline;
pub mod preview;
pub mod raster;
pub mod slab;
pub mod synth;
pub mod wall;
pub mod zone;

pub use error::{Error, Result};
