//! Configuration and orchestration behind the `cmcflow` binary.

pub mod config;
pub mod execute;

pub use config::{parse_config, parse_str, Command, ConfigError, RunSpec};
pub use execute::{execute, exit_code, ExecError, Execution, Options};
