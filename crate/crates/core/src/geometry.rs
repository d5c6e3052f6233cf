//! Planar sensor layouts.
//!
//! Random layouts are drawn once in a unit box (or a unit-scale normal) and then
//! multiplied by the aperture, so an aperture sweep at a fixed seed moves the same
//! relative pattern.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};

/// Default tightness of the spiral arms, in radians per meter of radius.
pub const DEFAULT_SPIRAL_C: f64 = 0.5;

const ARMS: usize = 8;
const RING_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    UniformRandom2d,
    NormalRandom2d,
    UniformCircle,
    ConcentricCircles,
    Spiral,
    UniformLinear,
    /// Loaded from a CSV file.
    External,
}

impl LayoutKind {
    pub const GENERATED: [LayoutKind; 6] = [
        LayoutKind::UniformRandom2d,
        LayoutKind::NormalRandom2d,
        LayoutKind::UniformCircle,
        LayoutKind::ConcentricCircles,
        LayoutKind::Spiral,
        LayoutKind::UniformLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::UniformRandom2d => "uniform_random_2d",
            LayoutKind::NormalRandom2d => "normal_random_2d",
            LayoutKind::UniformCircle => "uniform_circle",
            LayoutKind::ConcentricCircles => "concentric_circles",
            LayoutKind::Spiral => "spiral",
            LayoutKind::UniformLinear => "uniform_linear",
            LayoutKind::External => "external",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, LayoutKind::UniformRandom2d | LayoutKind::NormalRandom2d)
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutKind {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "uniform_random_2d" => LayoutKind::UniformRandom2d,
            "normal_random_2d" => LayoutKind::NormalRandom2d,
            "uniform_circle" => LayoutKind::UniformCircle,
            "concentric_circles" => LayoutKind::ConcentricCircles,
            "spiral" => LayoutKind::Spiral,
            "uniform_linear" => LayoutKind::UniformLinear,
            "external" => LayoutKind::External,
            other => {
                return Err(DoaError::InvalidLayoutParams(format!(
                    "unknown layout kind `{other}`"
                )))
            }
        };
        Ok(kind)
    }
}

/// A sensor position in meters, in the local horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub x: f64,
    pub y: f64,
}

impl Sensor {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// The physical array: sensor coordinates plus how they were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub sensors: Vec<Sensor>,
    pub aperture: f64,
    pub layout: LayoutKind,
    pub seed: u64,
}

/// Parameters for [`generate`] beyond the essentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutParams {
    pub kind: LayoutKind,
    pub sensors: usize,
    pub aperture: f64,
    pub seed: u64,
    pub spiral_c: f64,
}

impl LayoutParams {
    pub fn new(kind: LayoutKind, sensors: usize, aperture: f64, seed: u64) -> Self {
        Self {
            kind,
            sensors,
            aperture,
            seed,
            spiral_c: DEFAULT_SPIRAL_C,
        }
    }
}

/// Generate one of the six standard layouts.
pub fn generate(kind: LayoutKind, sensors: usize, aperture: f64, seed: u64) -> Result<ArrayGeometry> {
    generate_with(LayoutParams::new(kind, sensors, aperture, seed))
}

pub fn generate_with(params: LayoutParams) -> Result<ArrayGeometry> {
    let LayoutParams {
        kind,
        sensors: m,
        aperture: v,
        seed,
        spiral_c,
    } = params;
    if m == 0 {
        return Err(DoaError::InvalidLayoutParams("array needs at least one sensor".into()));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(DoaError::InvalidLayoutParams(format!("aperture must be positive, got {v}")));
    }
    if matches!(kind, LayoutKind::ConcentricCircles | LayoutKind::Spiral) && m % 8 != 0 {
        return Err(DoaError::InvalidLayoutParams(format!(
            "{kind} layout needs a sensor count divisible by 8, got {m}"
        )));
    }
    if kind == LayoutKind::Spiral && !spiral_c.is_finite() {
        return Err(DoaError::InvalidLayoutParams("spiral tightness must be finite".into()));
    }

    let sensors = match kind {
        LayoutKind::UniformRandom2d => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m)
                .map(|_| {
                    let ux: f64 = rng.random::<f64>() - 0.5;
                    let uy: f64 = rng.random::<f64>() - 0.5;
                    Sensor::new(ux * v, uy * v)
                })
                .collect()
        }
        LayoutKind::NormalRandom2d => {
            // sigma = V/6, so the unit draw has sigma 1/6
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m)
                .map(|_| {
                    let ux: f64 = StandardNormal.sample(&mut rng);
                    let uy: f64 = StandardNormal.sample(&mut rng);
                    Sensor::new(ux / 6.0 * v, uy / 6.0 * v)
                })
                .collect()
        }
        LayoutKind::UniformCircle => circle(m, v / 2.0),
        LayoutKind::ConcentricCircles => {
            let rings = m / RING_SIZE;
            let spacing = 4.0 * v / m as f64;
            (0..rings)
                .flat_map(|k| circle(RING_SIZE, spacing * (k + 1) as f64))
                .collect()
        }
        LayoutKind::Spiral => {
            let per_arm = m / ARMS;
            let mut out = Vec::with_capacity(m);
            for arm in 0..ARMS {
                let start = 2.0 * PI * arm as f64 / ARMS as f64;
                for step in 1..=per_arm {
                    let r = v / 2.0 * step as f64 / per_arm as f64;
                    let theta = start + spiral_c * r;
                    out.push(Sensor::new(r * theta.cos(), r * theta.sin()));
                }
            }
            out
        }
        LayoutKind::UniformLinear => {
            if m == 1 {
                vec![Sensor::new(0.0, 0.0)]
            } else {
                (0..m)
                    .map(|j| {
                        let y = if j == m - 1 {
                            v / 2.0
                        } else {
                            -v / 2.0 + v * j as f64 / (m - 1) as f64
                        };
                        Sensor::new(0.0, y)
                    })
                    .collect()
            }
        }
        LayoutKind::External => {
            return Err(DoaError::InvalidLayoutParams(
                "external layouts are loaded from CSV, not generated".into(),
            ))
        }
    };

    Ok(ArrayGeometry {
        sensors,
        aperture: v,
        layout: kind,
        seed,
    })
}

fn circle(count: usize, radius: f64) -> Vec<Sensor> {
    (0..count)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / count as f64;
            Sensor::new(radius * phi.cos(), radius * phi.sin())
        })
        .collect()
}

impl ArrayGeometry {
    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Build a geometry from explicit coordinates, tagged as external.
    pub fn from_sensors(sensors: Vec<Sensor>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(DoaError::InvalidLayoutParams("array needs at least one sensor".into()));
        }
        if sensors.iter().any(|s| !s.x.is_finite() || !s.y.is_finite()) {
            return Err(DoaError::InvalidLayoutParams("sensor coordinates must be finite".into()));
        }
        let aperture = coordinate_extent(&sensors);
        Ok(Self {
            sensors,
            aperture,
            layout: LayoutKind::External,
            seed: 0,
        })
    }

    /// Largest per-axis coordinate extent, in meters.
    pub fn coordinate_extent(&self) -> f64 {
        coordinate_extent(&self.sensors)
    }

    /// Write the `id,x_m,y_m` CSV form.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["id", "x_m", "y_m"]).map_err(csv_err)?;
        for (id, s) in self.sensors.iter().enumerate() {
            w.write_record([id.to_string(), s.x.to_string(), s.y.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn coordinate_extent(sensors: &[Sensor]) -> f64 {
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in sensors {
        x_lo = x_lo.min(s.x);
        x_hi = x_hi.max(s.x);
        y_lo = y_lo.min(s.y);
        y_hi = y_hi.max(s.y);
    }
    (x_hi - x_lo).max(y_hi - y_lo)
}

fn csv_err(e: csv::Error) -> DoaError {
    DoaError::Parse(e.to_string())
}

/// Load an `id,x_m,y_m` CSV. The header row is optional.
pub fn load_geometry_csv(path: impl AsRef<Path>) -> Result<ArrayGeometry> {
    let text = std::fs::read_to_string(path)?;
    parse_geometry_csv(&text)
}

pub fn parse_geometry_csv(text: &str) -> Result<ArrayGeometry> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut sensors = Vec::new();
    let mut seen = HashSet::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != 3 {
            return Err(DoaError::Parse(format!(
                "line {}: expected 3 fields `id,x_m,y_m`, found {}",
                line + 1,
                record.len()
            )));
        }
        if line == 0 && record[1].parse::<f64>().is_err() && record[2].parse::<f64>().is_err() {
            continue;
        }
        let coord = |field: &str| {
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DoaError::Parse(format!("line {}: bad coordinate `{field}`", line + 1)))
        };
        let x = coord(&record[1])?;
        let y = coord(&record[2])?;
        let id = record[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(DoaError::DuplicateSensorId(id));
        }
        sensors.push(Sensor::new(x, y));
    }
    if sensors.is_empty() {
        return Err(DoaError::Parse("geometry file has no sensor rows".into()));
    }
    ArrayGeometry::from_sensors(sensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn four_point_circle() {
        let g = generate(LayoutKind::UniformCircle, 4, 2.0, 0).unwrap();
        let expected = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (s, (x, y)) in g.sensors.iter().zip(expected) {
            assert_abs_diff_eq!(s.x, x, epsilon = 1e-12);
            assert_abs_diff_eq!(s.y, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_point_line() {
        let g = generate(LayoutKind::UniformLinear, 3, 10.0, 0).unwrap();
        let ys: Vec<f64> = g.sensors.iter().map(|s| s.y).collect();
        assert_eq!(ys, vec![-5.0, 0.0, 5.0]);
        assert!(g.sensors.iter().all(|s| s.x == 0.0));
    }

    #[test]
    fn spiral_outer_radius_is_half_aperture() {
        let g = generate(LayoutKind::Spiral, 16, 8000.0, 0).unwrap();
        assert_eq!(g.len(), 16);
        // two elements per arm, the second is the outermost
        for arm in 0..8 {
            let outer = g.sensors[arm * 2 + 1];
            assert_abs_diff_eq!(outer.x.hypot(outer.y), 4000.0, epsilon = 1e-9);
        }
        let max_r = g.sensors.iter().map(|s| s.x.hypot(s.y)).fold(0.0, f64::max);
        assert_abs_diff_eq!(max_r, 4000.0, epsilon = 1e-9);
    }

    #[test]
    fn concentric_rings() {
        let g = generate(LayoutKind::ConcentricCircles, 32, 800.0, 0).unwrap();
        let radii: Vec<f64> = g.sensors.iter().map(|s| s.x.hypot(s.y)).collect();
        for ring in 0..4 {
            let r = 100.0 * (ring + 1) as f64;
            for k in 0..8 {
                assert_abs_diff_eq!(radii[ring * 8 + k], r, epsilon = 1e-9);
            }
            let first = g.sensors[ring * 8];
            assert_abs_diff_eq!(first.y, 0.0, epsilon = 0.0);
            assert_abs_diff_eq!(first.x, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn ring_layouts_reject_bad_counts() {
        for kind in [LayoutKind::Spiral, LayoutKind::ConcentricCircles] {
            assert!(matches!(
                generate(kind, 15, 100.0, 0),
                Err(DoaError::InvalidLayoutParams(_))
            ));
        }
        assert!(generate(LayoutKind::UniformCircle, 4, 0.0, 0).is_err());
        assert!(generate(LayoutKind::UniformCircle, 0, 1.0, 0).is_err());
    }

    #[test]
    fn random_layouts_stay_in_box_and_repeat() {
        let a = generate(LayoutKind::UniformRandom2d, 64, 8000.0, 7).unwrap();
        let b = generate(LayoutKind::UniformRandom2d, 64, 8000.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.sensors.iter().all(|s| s.x.abs() <= 4000.0 && s.y.abs() <= 4000.0));
        let c = generate(LayoutKind::UniformRandom2d, 64, 8000.0, 8).unwrap();
        assert_ne!(a.sensors, c.sensors);
    }

    #[test]
    fn normal_layout_is_not_clamped() {
        // with 4000 draws, a few land beyond 3 sigma
        let g = generate(LayoutKind::NormalRandom2d, 2000, 6.0, 3).unwrap();
        assert!(g.sensors.iter().any(|s| s.x.abs() > 3.0 || s.y.abs() > 3.0));
        let var = g.sensors.iter().map(|s| s.x * s.x).sum::<f64>() / 2000.0;
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn csv_two_sensors() {
        let g = parse_geometry_csv("0,0,0\n1,0,7.5").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.aperture, 7.5);
        assert_eq!(g.layout, LayoutKind::External);

        let with_header = parse_geometry_csv("id,x_m,y_m\n0,0,0\n1,0,7.5\n").unwrap();
        assert_eq!(with_header.sensors, g.sensors);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_geometry_csv(""), Err(DoaError::Parse(_))));
        assert!(matches!(parse_geometry_csv("id,x_m,y_m\n"), Err(DoaError::Parse(_))));
        assert!(matches!(
            parse_geometry_csv("a,0,0\na,1,1"),
            Err(DoaError::DuplicateSensorId(id)) if id == "a"
        ));
        assert!(matches!(parse_geometry_csv("0,zero,1\n1,2,3"), Err(DoaError::Parse(_))));
    }

    #[test]
    fn csv_roundtrip_25_sensors() {
        let g = generate(LayoutKind::UniformRandom2d, 25, 4000.0, 1).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = parse_geometry_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.len(), 25);
        assert_eq!(back.sensors, g.sensors);
    }

    #[test]
    fn layout_names_roundtrip() {
        for kind in LayoutKind::GENERATED {
            assert_eq!(kind.as_str().parse::<LayoutKind>().unwrap(), kind);
        }
    }
}
