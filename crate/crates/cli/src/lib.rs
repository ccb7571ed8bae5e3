//! Pipeline, file formats and report rendering behind the `adlift` binary.

pub mod analysis;
pub mod config;
pub mod logs;
pub mod report;
