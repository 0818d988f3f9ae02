//! File formats, coordinate projection and configuration.

pub mod config;
pub mod geo;
pub mod records;
pub mod series;
pub mod table;
pub mod truth;

pub use config::{load_config, ConfigFile, RunConfig};
pub use geo::LocalFrame;
pub use records::{Coords, DenseRecord, DenseStream, HeadingSample, SparseRecord, SparseStream};
pub use table::Meta;
