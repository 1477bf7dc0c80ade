//! File formats, scene directories, the pipeline commands and the HTTP render
//! service on top of [`panosplat_core`].

mod error;

pub mod formats;
pub mod pipeline;
pub mod scene;
pub mod server;

pub use error::{Error, Result};
pub use panosplat_core as core;
