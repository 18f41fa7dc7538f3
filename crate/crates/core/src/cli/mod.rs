//! Command-line front end: config files, presets, file formats and commands.

pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod presets;

pub use config::{dump_config, load_config, parse_config};
pub use presets::{Preset, REFERENCE};
