//! Steering vectors over the full azimuth grid.
//!
//! Grid index `i` maps to azimuth `i * delta` degrees, measured from the +x axis
//! towards +y. Steering entries are `exp(-j * omega0 * tau)` with
//! `tau = (x cos(theta) cos(phi) + y sin(theta) cos(phi)) / c` for a planar array.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::geometry::{ArrayGeometry, Sensor};
use crate::{CMatrix, CVector, C64};

/// Narrowband propagation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveConfig {
    pub speed: f64,
    pub frequency: f64,
}

impl WaveConfig {
    pub fn new(speed: f64, frequency: f64) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) || !(frequency > 0.0 && frequency.is_finite()) {
            return Err(DoaError::InvalidArgument(format!(
                "wave speed and frequency must be positive (c={speed}, f={frequency})"
            )));
        }
        Ok(Self { speed, frequency })
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn wavelength(&self) -> f64 {
        self.speed / self.frequency
    }
}

impl Default for WaveConfig {
    /// 1500 m/s at 100 Hz.
    fn default() -> Self {
        Self {
            speed: 1500.0,
            frequency: 100.0,
        }
    }
}

/// Azimuth grid at resolution `delta_deg` and a fixed elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub delta_deg: f64,
    pub directions: usize,
    pub elevation: f64,
}

impl GridSpec {
    pub fn new(delta_deg: f64, elevation: f64) -> Result<Self> {
        if !(delta_deg > 0.0 && delta_deg <= 360.0) || !elevation.is_finite() {
            return Err(DoaError::GridNotIntegral(delta_deg));
        }
        let ratio = 360.0 / delta_deg;
        let directions = ratio.round();
        if (ratio - directions).abs() > 1e-9 * ratio.max(1.0) {
            return Err(DoaError::GridNotIntegral(delta_deg));
        }
        Ok(Self {
            delta_deg,
            directions: directions as usize,
            elevation,
        })
    }

    pub fn len(&self) -> usize {
        self.directions
    }

    pub fn is_empty(&self) -> bool {
        self.directions == 0
    }

    pub fn angle_deg(&self, index: usize) -> f64 {
        index as f64 * self.delta_deg
    }

    pub fn angle_rad(&self, index: usize) -> f64 {
        self.angle_deg(index).to_radians()
    }

    /// Nearest grid index for an azimuth in degrees (wraps).
    pub fn index_of(&self, angle_deg: f64) -> usize {
        let k = (angle_deg / self.delta_deg).round() as i64;
        k.rem_euclid(self.directions as i64) as usize
    }

    /// Circular distance between two grid indices, in cells.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b) % self.directions;
        d.min(self.directions - d)
    }
}

/// Propagation delay of a plane wave from azimuth `theta` and elevation `phi`
/// at `sensor`, relative to the origin.
pub fn delay(sensor: Sensor, theta: f64, phi: f64, speed: f64) -> f64 {
    let cp = phi.cos();
    (sensor.x * theta.cos() * cp + sensor.y * theta.sin() * cp) / speed
}

/// Steering vector for an arbitrary azimuth.
pub fn steering_vector(geometry: &ArrayGeometry, wave: &WaveConfig, theta: f64, phi: f64) -> CVector {
    let w = wave.omega0();
    CVector::from_iterator(
        geometry.len(),
        geometry
            .sensors
            .iter()
            .map(|s| C64::from_polar(1.0, -w * delay(*s, theta, phi, wave.speed))),
    )
}

/// The complete array manifold: one steering column per grid direction.
#[derive(Debug, Clone)]
pub struct ManifoldMatrix {
    pub entries: CMatrix,
    pub grid: GridSpec,
    pub wave: WaveConfig,
    pub fingerprint: u64,
}

pub fn build_manifold(geometry: &ArrayGeometry, wave: &WaveConfig, grid: &GridSpec) -> Result<ManifoldMatrix> {
    if geometry.is_empty() {
        return Err(DoaError::InvalidLayoutParams("empty geometry".into()));
    }
    // re-validate in case the grid was constructed by hand
    let grid = GridSpec::new(grid.delta_deg, grid.elevation)?;
    let m = geometry.len();
    let entries = CMatrix::from_fn(m, grid.len(), |j, i| {
        let tau = delay(geometry.sensors[j], grid.angle_rad(i), grid.elevation, wave.speed);
        C64::from_polar(1.0, -wave.omega0() * tau)
    });
    Ok(ManifoldMatrix {
        entries,
        grid,
        wave: *wave,
        fingerprint: fingerprint(geometry, wave, &grid),
    })
}

fn fingerprint(geometry: &ArrayGeometry, wave: &WaveConfig, grid: &GridSpec) -> u64 {
    let mut h = DefaultHasher::new();
    for s in &geometry.sensors {
        s.x.to_bits().hash(&mut h);
        s.y.to_bits().hash(&mut h);
    }
    wave.speed.to_bits().hash(&mut h);
    wave.frequency.to_bits().hash(&mut h);
    grid.delta_deg.to_bits().hash(&mut h);
    grid.elevation.to_bits().hash(&mut h);
    h.finish()
}

impl ManifoldMatrix {
    /// Wrap an arbitrary steering matrix (used for synthetic or calibrated manifolds).
    pub fn from_entries(entries: CMatrix, grid: GridSpec, wave: WaveConfig) -> Result<Self> {
        if entries.ncols() != grid.len() {
            return Err(DoaError::ShapeMismatch(format!(
                "manifold has {} columns but the grid has {} directions",
                entries.ncols(),
                grid.len()
            )));
        }
        let mut h = DefaultHasher::new();
        for z in entries.iter() {
            z.re.to_bits().hash(&mut h);
            z.im.to_bits().hash(&mut h);
        }
        Ok(Self {
            entries,
            grid,
            wave,
            fingerprint: h.finish(),
        })
    }

    pub fn sensors(&self) -> usize {
        self.entries.nrows()
    }

    pub fn directions(&self) -> usize {
        self.entries.ncols()
    }

    pub fn column(&self, index: usize) -> CVector {
        self.entries.column(index).into_owned()
    }

    /// Steering vectors for a set of grid indices, side by side.
    pub fn columns(&self, indices: &[usize]) -> CMatrix {
        self.entries.select_columns(indices)
    }

    /// Debug export: `sensor,dir_index,re,im`.
    pub fn write_csv<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "sensor,dir_index,re,im")?;
        for i in 0..self.directions() {
            for j in 0..self.sensors() {
                let z = self.entries[(j, i)];
                writeln!(writer, "{j},{i},{},{}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, LayoutKind};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn delay_examples() {
        assert_eq!(delay(Sensor::new(0.0, 0.0), 1.234, 0.0, 1500.0), 0.0);
        assert_eq!(delay(Sensor::new(1500.0, 0.0), 0.0, 0.0, 1500.0), 1.0);
        // y * sin(pi/2) * cos(-pi/4) / c with y = c
        let tau = delay(Sensor::new(0.0, 1500.0), FRAC_PI_2, -PI / 4.0, 1500.0);
        assert_abs_diff_eq!(tau, 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn delay_is_linear_in_position() {
        let s = Sensor::new(123.4, -56.7);
        let d = Sensor::new(2.0 * s.x, 2.0 * s.y);
        for k in 0..36 {
            let th = k as f64 * 0.17;
            assert_eq!(delay(d, th, 0.3, 1500.0), 2.0 * delay(s, th, 0.3, 1500.0));
        }
    }

    #[test]
    fn grid_resolution() {
        let g = GridSpec::new(0.1, 0.0).unwrap();
        assert_eq!(g.len(), 3600);
        assert_abs_diff_eq!(g.angle_deg(899), 89.9, epsilon = 1e-9);
        assert_eq!(g.index_of(270.5), 2705);
        assert_eq!(g.index_of(-0.1), 3599);
        assert_eq!(g.cell_distance(1, 3599), 2);
        assert!(matches!(GridSpec::new(0.7, 0.0), Err(DoaError::GridNotIntegral(_))));
        assert!(GridSpec::new(0.0, 0.0).is_err());
        assert_eq!(GridSpec::new(360.0, 0.0).unwrap().len(), 1);
    }

    #[test]
    fn single_sensor_manifold_is_all_ones() {
        let g = ArrayGeometry::from_sensors(vec![Sensor::new(0.0, 0.0)]).unwrap();
        let m = build_manifold(&g, &WaveConfig::default(), &GridSpec::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(m.entries.shape(), (1, 360));
        assert!(m.entries.iter().all(|z| *z == C64::new(1.0, 0.0)));
    }

    #[test]
    fn half_wavelength_pair_flips_sign_at_180() {
        let wave = WaveConfig::default();
        let g = ArrayGeometry::from_sensors(vec![
            Sensor::new(0.0, 0.0),
            Sensor::new(wave.wavelength() / 2.0, 0.0),
        ])
        .unwrap();
        let grid = GridSpec::new(0.1, 0.0).unwrap();
        let m = build_manifold(&g, &wave, &grid).unwrap();
        let idx = grid.index_of(180.0);
        // oracle: direct complex exponential with tau = -1/(2f)
        let tau = -1.0 / (2.0 * wave.frequency);
        let phase = -2.0 * PI * wave.frequency * tau;
        let oracle = C64::new(phase.cos(), phase.sin());
        assert_abs_diff_eq!(phase, PI, epsilon = 1e-15);
        assert_abs_diff_eq!((m.entries[(1, idx)] - oracle).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((m.entries[(1, idx)] - C64::new(-1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_modulus_and_deterministic() {
        let g = generate(LayoutKind::UniformRandom2d, 16, 8000.0, 2).unwrap();
        let grid = GridSpec::new(0.5, -0.3).unwrap();
        let a = build_manifold(&g, &WaveConfig::default(), &grid).unwrap();
        let b = build_manifold(&g, &WaveConfig::default(), &grid).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.fingerprint, b.fingerprint);
        for z in a.entries.iter() {
            assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-12);
        }
        // column i matches the free-standing steering vector
        let col = steering_vector(&g, &WaveConfig::default(), grid.angle_rad(77), grid.elevation);
        assert_eq!(a.column(77), col);
    }

    #[test]
    fn grid_wraps_at_360() {
        let g = generate(LayoutKind::UniformCircle, 8, 300.0, 0).unwrap();
        let w = WaveConfig::default();
        for k in 0..12 {
            let th = (k as f64 * 30.0).to_radians();
            let a = steering_vector(&g, &w, th, 0.0);
            let b = steering_vector(&g, &w, th + 2.0 * PI, 0.0);
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn wave_config_derived_values() {
        let w = WaveConfig::new(1500.0, 100.0).unwrap();
        assert_abs_diff_eq!(w.omega0(), 2.0 * PI * 100.0, epsilon = 1e-12 * 628.0);
        assert_eq!(w.wavelength(), 15.0);
        assert!(WaveConfig::new(0.0, 1.0).is_err());
    }
}
