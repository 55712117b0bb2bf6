//! Configuration, scenario presets, run orchestration and file output for the
//! `atomlaser` command line tool.

pub mod config;
pub mod manifest;
pub mod output;
pub mod preset;
pub mod runner;
pub mod validate;

pub use config::{ConfigFile, RunConfig};
pub use manifest::RunManifest;
pub use preset::{Axis, Preset};
pub use runner::{execute, run_scan, write_run, RunOptions, RunOutput, ScanRequest, ScanResult};
