//! Post-hoc quality estimation for 3D Lidar object detections.

pub mod assoc;
pub mod audit;
pub mod cli;
pub mod error;
pub mod features;
pub mod geom;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod select;
pub mod serve;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
