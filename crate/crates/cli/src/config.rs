//! Experiment configuration: JSON on disk, overridden field by field from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use doalab_core::geometry::LayoutKind;
use doalab_core::manifold::{GridSpec, WaveConfig};
use doalab_core::scenesim::NoiseLevel;
use doalab_core::ssfns::{SsfnsConfig, Threshold, DEFAULT_CONTRAST};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ssfns,
    Cbf,
    Mvdr,
    Music,
    L1,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ssfns, Method::Cbf, Method::Mvdr, Method::Music, Method::L1];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ssfns => "ssfns",
            Method::Cbf => "cbf",
            Method::Mvdr => "mvdr",
            Method::Music => "music",
            Method::L1 => "l1",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected ssfns, cbf, mvdr, music or l1)"))
    }
}

/// The quantity varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    Snapshots,
    K,
    Iterations,
    Aperture,
    M,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::Snr,
        SweepAxis::Snapshots,
        SweepAxis::K,
        SweepAxis::Iterations,
        SweepAxis::Aperture,
        SweepAxis::M,
    ];

    /// Column value written to `axis_name`.
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::Snapshots => "snapshots",
            SweepAxis::K => "k",
            SweepAxis::Iterations => "iterations",
            SweepAxis::Aperture => "aperture_m",
            SweepAxis::M => "m",
        }
    }

    fn is_integral(self) -> bool {
        !matches!(self, SweepAxis::Snr | SweepAxis::Aperture)
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "snr" | "snr_db" => Ok(SweepAxis::Snr),
            "snapshots" | "t" => Ok(SweepAxis::Snapshots),
            "k" | "sources" => Ok(SweepAxis::K),
            "iterations" | "i" => Ok(SweepAxis::Iterations),
            "aperture" | "aperture_m" => Ok(SweepAxis::Aperture),
            "m" | "sensors" => Ok(SweepAxis::M),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected snr, snapshots, k, iterations, aperture or m)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Grid of the `array-study` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayStudySpec {
    pub layouts: Vec<LayoutKind>,
    pub sensors: Vec<usize>,
    pub apertures: Vec<f64>,
    /// Random layouts use at most this many of the configured seeds.
    pub max_seeds: usize,
}

impl Default for ArrayStudySpec {
    fn default() -> Self {
        Self {
            layouts: LayoutKind::GENERATED.to_vec(),
            sensors: vec![8, 16, 32, 64],
            // one wavelength at the default 1500 m/s, 100 Hz up to 10 km
            apertures: vec![15.0, 100.0, 1000.0, 5000.0, 10000.0],
            max_seeds: 5,
        }
    }
}

/// Everything needed to reproduce a run. Serialized verbatim into every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub layout: LayoutKind,
    pub sensors: usize,
    /// Aperture `V` in meters.
    pub aperture: f64,
    pub delta_deg: f64,
    /// Elevation angle in radians.
    pub elevation: f64,
    pub speed: f64,
    pub frequency: f64,
    /// Number of sources `K`; ignored when `angles_deg` is given.
    pub sources: usize,
    /// Explicit source azimuths, snapped to the grid.
    pub angles_deg: Option<Vec<f64>>,
    /// Minimum spacing of randomly drawn sources.
    pub min_separation_deg: f64,
    pub snapshots: usize,
    pub snr_db: f64,
    pub noise_off: bool,
    pub coherent: bool,
    pub methods: Vec<Method>,
    /// SSFNS iteration limit `I`; `None` uses the estimator default.
    pub iterations: Option<usize>,
    pub threshold: Threshold,
    pub contrast: f64,
    pub gamma: f64,
    /// Tell SSFNS the source count: run `K` iterations and report the `K`
    /// strongest candidates. Off means threshold-based stopping and selection.
    pub known_k: bool,
    /// MVDR diagonal loading; `None` uses `1e-3 tr(R)/M`.
    pub mvdr_loading: Option<f64>,
    pub l1_lambda: Option<f64>,
    pub l1_max_iter: usize,
    /// Fixed array seed; by default every scene seed draws its own array.
    pub array_seed: Option<u64>,
    pub seeds: Vec<u64>,
    pub sweep: Option<SweepSpec>,
    pub array_study: ArrayStudySpec,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            layout: LayoutKind::UniformRandom2d,
            sensors: 16,
            aperture: 8000.0,
            delta_deg: 0.1,
            elevation: 0.0,
            speed: 1500.0,
            frequency: 100.0,
            sources: 3,
            angles_deg: None,
            min_separation_deg: 2.0,
            snapshots: 1,
            snr_db: 20.0,
            noise_off: false,
            coherent: false,
            methods: vec![Method::Ssfns],
            iterations: None,
            threshold: Threshold::Auto,
            contrast: DEFAULT_CONTRAST,
            gamma: 0.0,
            known_k: true,
            mvdr_loading: None,
            l1_lambda: None,
            l1_max_iter: 500,
            array_seed: None,
            seeds: (0..20).collect(),
            sweep: None,
            array_study: ArrayStudySpec::default(),
            output_dir: PathBuf::from("doalab-out"),
        }
    }
}

impl ExperimentConfig {
    /// Read a config file. A run manifest is accepted too; its `config` entry is used.
    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let bad = |e: &dyn fmt::Display| HarnessError::Config(format!("bad config {}: {e}", path.display()));
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        if value.get("tool").is_some() {
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
        }
        serde_json::from_value(value).map_err(|e| bad(&e))
    }

    pub fn grid(&self) -> Result<GridSpec, HarnessError> {
        Ok(GridSpec::new(self.delta_deg, self.elevation)?)
    }

    pub fn wave(&self) -> Result<WaveConfig, HarnessError> {
        Ok(WaveConfig::new(self.speed, self.frequency)?)
    }

    pub fn noise(&self) -> NoiseLevel {
        if self.noise_off {
            NoiseLevel::Off
        } else {
            NoiseLevel::SnrDb(self.snr_db)
        }
    }

    /// Source count: the explicit angle list wins over `sources`.
    pub fn k(&self) -> usize {
        self.angles_deg.as_ref().map_or(self.sources, Vec::len)
    }

    pub fn ssfns(&self) -> SsfnsConfig {
        SsfnsConfig {
            max_iterations: self.iterations,
            threshold: self.threshold,
            known_k: self.known_k.then(|| self.k()),
            contrast: self.contrast,
            gamma: self.gamma,
            track_q: false,
        }
    }

    /// Grid cells between randomly drawn sources.
    pub fn min_separation_cells(&self) -> usize {
        (self.min_separation_deg / self.delta_deg).round().max(1.0) as usize
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.grid()?;
        self.wave()?;
        if self.sensors == 0 {
            return bad("the array needs at least one sensor".into());
        }
        if !(self.aperture > 0.0 && self.aperture.is_finite()) {
            return bad(format!("aperture must be positive, got {}", self.aperture));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.methods.is_empty() {
            return bad("method list is empty".into());
        }
        if self.snapshots == 0 {
            return bad("need at least one snapshot".into());
        }
        if !self.snr_db.is_finite() {
            return bad(format!("snr must be finite, got {}", self.snr_db));
        }
        let k = self.k();
        if k == 0 {
            return bad("need at least one source".into());
        }
        if k >= self.sensors {
            return bad(format!("{k} sources need more than {k} sensors, got {}", self.sensors));
        }
        if let Some(angles) = &self.angles_deg {
            if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
                return bad(format!("source angle {a} is not finite"));
            }
        }
        if let Some(i) = self.iterations {
            if i >= self.sensors {
                return bad(format!("iteration limit {i} must be below the sensor count {}", self.sensors));
            }
        }
        if let Threshold::Fixed(p) = self.threshold {
            if !(p >= 0.0) {
                return bad(format!("threshold must be nonnegative, got {p}"));
            }
        }
        if !(self.contrast >= 0.0) || !(self.gamma >= 0.0) {
            return bad("contrast and gamma must be nonnegative".into());
        }
        if !(self.min_separation_deg >= 0.0) {
            return bad("minimum separation must be nonnegative".into());
        }
        Ok(())
    }

    /// The sweep spec, checked against the rest of the configuration.
    pub fn checked_sweep(&self) -> Result<&SweepSpec, HarnessError> {
        let Some(sweep) = &self.sweep else {
            return Err(HarnessError::Config("no sweep axis given".into()));
        };
        if sweep.values.is_empty() {
            return Err(HarnessError::Config(format!("sweep over {} has no values", sweep.axis.as_str())));
        }
        for &v in &sweep.values {
            if !v.is_finite() {
                return Err(HarnessError::Config(format!("sweep value {v} is not finite")));
            }
            if sweep.axis.is_integral() && (v < 0.0 || v.fract() != 0.0) {
                return Err(HarnessError::Config(format!(
                    "sweep over {} needs nonnegative integers, got {v}",
                    sweep.axis.as_str()
                )));
            }
        }
        for &v in &sweep.values {
            self.at(sweep.axis, v).validate()?;
        }
        Ok(sweep)
    }

    /// This configuration with one axis set to `value`.
    pub fn at(&self, axis: SweepAxis, value: f64) -> ExperimentConfig {
        let mut c = self.clone();
        match axis {
            SweepAxis::Snr => {
                c.snr_db = value;
                c.noise_off = false;
            }
            SweepAxis::Snapshots => c.snapshots = value as usize,
            SweepAxis::K => {
                c.sources = value as usize;
                c.angles_deg = None;
            }
            SweepAxis::Iterations => c.iterations = Some(value as usize),
            SweepAxis::Aperture => c.aperture = value,
            SweepAxis::M => c.sensors = value as usize,
        }
        c
    }
}

/// Parse `a:b:step` (inclusive) or a comma list into numbers.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [lo, hi, step] => {
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"));
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() {
                return Err(format!("bad range {text}: step must be positive and bounds finite"));
            }
            let n = ((hi - lo) / step + 1e-9).floor();
            if n < 0.0 {
                return Ok(Vec::new());
            }
            // multiply instead of accumulating so 0.1-steps stay clean
            Ok((0..=n as usize).map(|i| lo + i as f64 * step).collect())
        }
        [_] => text
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}")))
            .collect(),
        _ => Err(format!("expected `lo:hi:step` or a comma list, got `{text}`")),
    }
}

/// Parse `lo..hi` (exclusive) or a comma list of seeds.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|e| format!("bad seed `{lo}`: {e}"))?;
        let hi: u64 = hi.trim().parse().map_err(|e| format!("bad seed `{hi}`: {e}"))?;
        return Ok((lo..hi).collect());
    }
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| format!("bad seed `{s}`: {e}")))
        .collect()
}

/// `auto`, `disabled` or a fixed power level.
pub fn parse_threshold(text: &str) -> Result<Threshold, String> {
    match text {
        "auto" => Ok(Threshold::Auto),
        "disabled" | "off" | "none" => Ok(Threshold::Disabled),
        other => other
            .parse::<f64>()
            .map(Threshold::Fixed)
            .map_err(|_| format!("threshold must be auto, disabled or a number, got `{other}`")),
    }
}
