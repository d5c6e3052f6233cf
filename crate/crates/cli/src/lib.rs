//! Experiment harness: configuration, the `geometry`, `estimate`, `sweep` and
//! `array-study` commands, and their CSV/JSON artifacts.
//!
//! Every command writes `manifest.json` last. It holds the full configuration,
//! so passing it back through `--config` reproduces the run byte for byte.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

pub use config::{ExperimentConfig, Method, SweepAxis, SweepSpec};
pub use error::HarnessError;

use cli::{apply_sweep, Command};
use commands::RecordedInput;

/// Resolve the configuration and run one subcommand.
pub fn run(command: &Command) -> Result<PathBuf, HarnessError> {
    match command {
        Command::Geometry(common) => commands::cmd_geometry(&common.resolve()?),
        Command::Estimate {
            common,
            snapshots_csv,
            geometry_csv,
        } => {
            let config = common.resolve()?;
            let input = snapshots_csv.as_deref().map(|s| RecordedInput {
                geometry_csv: geometry_csv.as_deref(),
                snapshots_csv: s,
            });
            commands::cmd_estimate(&config, input)
        }
        Command::Sweep { common, axis, values } => {
            let mut config = common.resolve()?;
            apply_sweep(&mut config, *axis, values.as_deref())?;
            commands::cmd_sweep(&config)
        }
        Command::ArrayStudy {
            common,
            layouts,
            sensor_counts,
            apertures,
        } => {
            let mut config = common.resolve()?;
            if let Some(l) = layouts {
                config.array_study.layouts = l.clone();
            }
            if let Some(m) = sensor_counts {
                config.array_study.sensors = m.clone();
            }
            if let Some(v) = apertures {
                config.array_study.apertures = config::parse_values(v).map_err(HarnessError::Config)?;
            }
            commands::cmd_array_study(&config)
        }
    }
}

/// Worker count from `DOALAB_THREADS`; `None` leaves the choice to rayon.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, HarnessError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::Config(format!("DOALAB_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}
