//! On-disk formats of every pipeline stage.

pub mod config;
pub mod dataset;
pub mod events;
pub mod model;
pub mod stream;
pub mod windows;

pub use config::{read_scenario, write_scenario};
pub use dataset::{read_dataset, write_dataset};
pub use events::{read_events, write_events};
pub use model::{read_model, write_model};
pub use stream::{read_stream, write_stream};
pub use windows::{read_windows, write_windows};
