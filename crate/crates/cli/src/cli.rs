use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use doalab_core::geometry::LayoutKind;
use doalab_core::ssfns::Threshold;

use crate::config::{parse_seeds, parse_threshold, parse_values, ExperimentConfig, Method, SweepAxis, SweepSpec};
use crate::error::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "doalab", version, about = "Direction-of-arrival experiments on planar sensor arrays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an array layout and write it as CSV.
    Geometry(Common),
    /// Estimate source directions on simulated or recorded snapshots.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Recorded snapshots (one row per sensor, re,im pairs per snapshot).
        #[arg(long, value_name = "CSV")]
        snapshots_csv: Option<PathBuf>,
        /// Sensor positions for the recorded snapshots (`id,x_m,y_m`).
        #[arg(long, value_name = "CSV", requires = "snapshots_csv")]
        geometry_csv: Option<PathBuf>,
    },
    /// Sweep one axis and write long-format metrics.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// snr, snapshots, k, iterations, aperture or m.
        #[arg(long)]
        axis: Option<SweepAxis>,
        /// `lo:hi:step` (inclusive) or a comma list.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
    },
    /// Preliminary-filter figures of merit across layouts, sizes and apertures.
    ArrayStudy {
        #[command(flatten)]
        common: Common,
        /// Comma list of layouts.
        #[arg(long, value_delimiter = ',')]
        layouts: Option<Vec<LayoutKind>>,
        /// Comma list of sensor counts.
        #[arg(long, value_delimiter = ',')]
        sensor_counts: Option<Vec<usize>>,
        /// Apertures in meters, `lo:hi:step` or a comma list.
        #[arg(long)]
        apertures: Option<String>,
    },
}

/// Config file plus per-field overrides shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON config (or a previous run's manifest.json).
    #[arg(long, short = 'c', value_name = "JSON")]
    pub config: Option<PathBuf>,
    #[arg(long, short = 'o', value_name = "DIR")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<LayoutKind>,
    /// Sensor count M.
    #[arg(long, short = 'm')]
    pub sensors: Option<usize>,
    /// Aperture V in meters.
    #[arg(long)]
    pub aperture: Option<f64>,
    /// Grid resolution in degrees.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Elevation in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub elevation: Option<f64>,
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub frequency: Option<f64>,
    /// Number of random sources K.
    #[arg(long, short = 'k')]
    pub sources: Option<usize>,
    /// Explicit source azimuths in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub angles: Option<Vec<f64>>,
    /// Snapshot count T.
    #[arg(long, short = 't')]
    pub snapshots: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<f64>,
    /// Noise-free scene; `estimate` then asserts exact recovery.
    #[arg(long)]
    pub noise_off: bool,
    #[arg(long)]
    pub coherent: bool,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// SSFNS iteration limit I.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// auto, disabled or a fixed power.
    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<Threshold>,
    #[arg(long)]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Do not tell SSFNS the source count; stop and select by threshold.
    #[arg(long)]
    pub blind: bool,
    /// `lo..hi` or a comma list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Use one array for every seed.
    #[arg(long)]
    pub array_seed: Option<u64>,
}

impl Common {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { c.$target = v; })*
            };
        }
        set!(
            output => output_dir,
            layout => layout,
            sensors => sensors,
            aperture => aperture,
            delta => delta_deg,
            elevation => elevation,
            speed => speed,
            frequency => frequency,
            snapshots => snapshots,
            methods => methods,
            threshold => threshold,
            contrast => contrast,
            gamma => gamma,
        );
        if let Some(text) = &self.seeds {
            c.seeds = parse_seeds(text).map_err(HarnessError::Config)?;
        }
        if let Some(k) = self.sources {
            c.sources = k;
            c.angles_deg = None;
        }
        if let Some(a) = &self.angles {
            c.angles_deg = Some(a.clone());
        }
        if let Some(snr) = self.snr {
            c.snr_db = snr;
        }
        if self.noise_off {
            c.noise_off = true;
        }
        if self.coherent {
            c.coherent = true;
        }
        if self.blind {
            c.known_k = false;
        }
        if self.iterations.is_some() {
            c.iterations = self.iterations;
        }
        if self.array_seed.is_some() {
            c.array_seed = self.array_seed;
        }
        Ok(c)
    }
}

/// Merge sweep flags into a resolved config.
pub fn apply_sweep(c: &mut ExperimentConfig, axis: Option<SweepAxis>, values: Option<&str>) -> Result<(), HarnessError> {
    let values = values.map(parse_values).transpose().map_err(HarnessError::Config)?;
    match (axis, values, c.sweep.take()) {
        (Some(axis), Some(values), _) => c.sweep = Some(SweepSpec { axis, values }),
        (Some(axis), None, Some(old)) => c.sweep = Some(SweepSpec { axis, values: old.values }),
        (None, Some(values), Some(old)) => c.sweep = Some(SweepSpec { axis: old.axis, values }),
        (None, None, old) => c.sweep = old,
        (Some(_), None, None) => return Err(HarnessError::Config("sweep axis given without --values".into())),
        (None, Some(_), None) => return Err(HarnessError::Config("sweep values given without --axis".into())),
    }
    Ok(())
}
