//! Synthetic scenes: sparse sources on the grid, white noise, and `X = A S + N`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::manifold::ManifoldMatrix;
use crate::{CMatrix, C64};

/// Noise level of a simulated scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Per-sensor signal power over noise variance, in dB.
    SnrDb(f64),
    /// No noise at all: `X = A S` exactly.
    Off,
}

impl NoiseLevel {
    pub fn snr_db(self) -> Option<f64> {
        match self {
            NoiseLevel::SnrDb(v) => Some(v),
            NoiseLevel::Off => None,
        }
    }
}

/// Row-sparse representation of the spatial signal matrix `S` (R x T).
///
/// Only the rows listed in `indices` are stored; every other row is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSignals {
    pub indices: Vec<usize>,
    /// `indices.len()` x T waveforms, row `k` belongs to `indices[k]`.
    pub waveforms: CMatrix,
    pub directions: usize,
}

impl SourceSignals {
    pub fn empty(directions: usize, snapshots: usize) -> Self {
        Self {
            indices: Vec::new(),
            waveforms: CMatrix::zeros(0, snapshots),
            directions,
        }
    }

    /// Keep the nonzero rows of a dense R x T matrix.
    pub fn from_dense(s: &CMatrix) -> Self {
        let indices: Vec<usize> = (0..s.nrows())
            .filter(|&i| s.row(i).iter().any(|z| *z != C64::new(0.0, 0.0)))
            .collect();
        Self {
            waveforms: s.select_rows(&indices),
            indices,
            directions: s.nrows(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.directions, self.snapshots());
        for (k, &i) in self.indices.iter().enumerate() {
            s.set_row(i, &self.waveforms.row(k));
        }
        s
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn snapshots(&self) -> usize {
        self.waveforms.ncols()
    }

    /// `A S` computed from the source columns only.
    pub fn project(&self, manifold: &ManifoldMatrix) -> CMatrix {
        if self.indices.is_empty() {
            return CMatrix::zeros(manifold.sensors(), self.snapshots());
        }
        manifold.columns(&self.indices) * &self.waveforms
    }

    /// Per-row average power `(1/T) sum_t |s_i(t)|^2`, in `indices` order.
    pub fn row_powers(&self) -> Vec<f64> {
        let t = self.snapshots().max(1) as f64;
        (0..self.count())
            .map(|k| self.waveforms.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() / t)
            .collect()
    }
}

/// A simulated scene with everything needed to score an estimator.
#[derive(Debug, Clone)]
pub struct SceneGroundTruth {
    pub sources: SourceSignals,
    pub noise: CMatrix,
    pub received: CMatrix,
    pub noise_level: NoiseLevel,
    pub noise_variance: f64,
    pub coherent: bool,
    pub seed: u64,
}

impl SceneGroundTruth {
    pub fn snapshots(&self) -> usize {
        self.received.ncols()
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.sources.indices
    }

    /// Measured `10 log10(mean per-sensor signal power / mean noise power)`.
    pub fn empirical_snr_db(&self, manifold: &ManifoldMatrix) -> f64 {
        let signal = self.sources.project(manifold).norm_squared();
        let noise = self.noise.norm_squared();
        10.0 * (signal / noise).log10()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    pub k: usize,
    pub theta_s_deg: Vec<f64>,
    pub snr_db: Option<f64>,
    pub noise_off: bool,
    pub coherent: bool,
    pub t: usize,
}

impl SceneGroundTruth {
    pub fn manifest(&self, manifold: &ManifoldMatrix) -> SceneManifest {
        SceneManifest {
            seed: self.seed,
            k: self.sources.count(),
            theta_s_deg: self.sources.indices.iter().map(|&i| manifold.grid.angle_deg(i)).collect(),
            snr_db: self.noise_level.snr_db(),
            noise_off: self.noise_level == NoiseLevel::Off,
            coherent: self.coherent,
            t: self.snapshots(),
        }
    }
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Simulate `X = A S + N` with unit-power sources at the given grid indices.
///
/// Incoherent sources draw independent circular Gaussian waveforms. Coherent
/// sources share one Gaussian waveform, each scaled by a fixed random
/// unit-modulus factor. The noise variance makes the per-sensor mean signal
/// power `||A S||_F^2 / (M T)` sit `snr_db` above it; a scene without sources
/// uses unit noise variance.
pub fn simulate_scene(
    manifold: &ManifoldMatrix,
    source_indices: &[usize],
    snapshots: usize,
    noise_level: NoiseLevel,
    coherent: bool,
    seed: u64,
) -> Result<SceneGroundTruth> {
    let m = manifold.sensors();
    let r = manifold.directions();
    if snapshots == 0 {
        return Err(DoaError::InvalidArgument("scene needs at least one snapshot".into()));
    }
    let mut indices = source_indices.to_vec();
    indices.sort_unstable();
    indices.dedup();
    if indices.len() != source_indices.len() {
        return Err(DoaError::InvalidArgument("duplicate source direction".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
        return Err(DoaError::InvalidArgument(format!("source index {bad} outside grid of {r}")));
    }
    let k = indices.len();
    if k >= m {
        return Err(DoaError::TooManySources { sources: k, sensors: m });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waveforms = if coherent {
        let base: Vec<C64> = (0..snapshots).map(|_| complex_gaussian(&mut rng)).collect();
        let phases: Vec<C64> = (0..k)
            .map(|_| C64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
            .collect();
        CMatrix::from_fn(k, snapshots, |row, t| phases[row] * base[t])
    } else {
        let mut w = CMatrix::zeros(k, snapshots);
        for t in 0..snapshots {
            for row in 0..k {
                w[(row, t)] = complex_gaussian(&mut rng);
            }
        }
        w
    };
    let sources = SourceSignals {
        indices,
        waveforms,
        directions: r,
    };
    let clean = sources.project(manifold);

    let (noise, noise_variance) = match noise_level {
        NoiseLevel::Off => (CMatrix::zeros(m, snapshots), 0.0),
        NoiseLevel::SnrDb(snr_db) => {
            if !snr_db.is_finite() {
                return Err(DoaError::InvalidArgument(format!("snr must be finite, got {snr_db}")));
            }
            let signal_power = clean.norm_squared() / (m * snapshots) as f64;
            let variance = if k == 0 || signal_power == 0.0 {
                1.0
            } else {
                signal_power / 10f64.powf(snr_db / 10.0)
            };
            let scale = variance.sqrt();
            let mut n = CMatrix::zeros(m, snapshots);
            for t in 0..snapshots {
                for j in 0..m {
                    n[(j, t)] = complex_gaussian(&mut rng) * scale;
                }
            }
            (n, variance)
        }
    };
    let received = &clean + &noise;
    Ok(SceneGroundTruth {
        sources,
        noise,
        received,
        noise_level,
        noise_variance,
        coherent,
        seed,
    })
}

/// Draw `k` distinct grid indices at least `min_separation` cells apart (circularly).
pub fn random_source_indices(directions: usize, k: usize, min_separation: usize, seed: u64) -> Result<Vec<usize>> {
    if k * min_separation.max(1) > directions {
        return Err(DoaError::InvalidArgument(format!(
            "cannot place {k} sources {min_separation} cells apart on {directions} directions"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_50c5);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while chosen.len() < k {
        attempts += 1;
        if attempts > 100_000 {
            return Err(DoaError::InvalidArgument("source placement did not converge".into()));
        }
        let cand = rng.random_range(0..directions);
        let far = chosen.iter().all(|&c| {
            let d = c.abs_diff(cand);
            d.min(directions - d) >= min_separation.max(1)
        });
        if far {
            chosen.push(cand);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Load snapshots from CSV: one row per sensor, `re,im` pairs per snapshot.
pub fn load_snapshots_csv(path: impl AsRef<Path>, expected_sensors: Option<usize>) -> Result<CMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_snapshots_csv(&text, expected_sensors)
}

pub fn parse_snapshots_csv(text: &str, expected_sensors: Option<usize>) -> Result<CMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DoaError::Parse(e.to_string()))?;
        let values = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DoaError::Parse(format!("line {}: bad number `{f}`", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(DoaError::RaggedRows(format!(
                "line {} has {} values; expected interleaved re,im pairs",
                line + 1,
                values.len()
            )));
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(DoaError::Parse("snapshot file has no rows".into()));
    }
    let width = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(DoaError::RaggedRows(format!(
            "line {} has {} values, line 1 has {width}",
            bad + 1,
            rows[bad].len()
        )));
    }
    if let Some(m) = expected_sensors {
        if rows.len() != m {
            return Err(DoaError::RaggedRows(format!(
                "{} snapshot rows for a {m}-sensor geometry",
                rows.len()
            )));
        }
    }
    let t = width / 2;
    Ok(CMatrix::from_fn(rows.len(), t, |j, s| C64::new(rows[j][2 * s], rows[j][2 * s + 1])))
}

/// Write snapshots in the interleaved `re,im` CSV form.
pub fn write_snapshots_csv<W: std::io::Write>(x: &CMatrix, mut writer: W) -> Result<()> {
    for j in 0..x.nrows() {
        let line: Vec<String> = x.row(j).iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, LayoutKind};
    use crate::linalg::{numerical_rank, singular_values};
    use crate::manifold::{build_manifold, GridSpec, WaveConfig};

    fn manifold(m: usize, delta: f64) -> ManifoldMatrix {
        let g = generate(LayoutKind::UniformRandom2d, m, 8000.0, 11).unwrap();
        build_manifold(&g, &WaveConfig::default(), &GridSpec::new(delta, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn empty_source_set_is_noise_only() {
        let a = manifold(8, 1.0);
        let s = simulate_scene(&a, &[], 4, NoiseLevel::SnrDb(10.0), false, 1).unwrap();
        assert_eq!(s.sources.count(), 0);
        assert_eq!(s.received, s.noise);
        assert_eq!(s.noise_variance, 1.0);
    }

    #[test]
    fn noise_off_is_exact() {
        let a = manifold(8, 1.0);
        let s = simulate_scene(&a, &[3, 100], 3, NoiseLevel::Off, false, 1).unwrap();
        assert!(s.noise.iter().all(|z| *z == C64::new(0.0, 0.0)));
        assert_eq!(s.received, s.sources.project(&a));
    }

    #[test]
    fn appendix_style_indices_map_to_degrees() {
        let a = manifold(16, 0.1);
        let s = simulate_scene(&a, &[899, 1802, 2705], 1, NoiseLevel::SnrDb(20.0), false, 5).unwrap();
        let man = s.manifest(&a);
        let expected = [89.9, 180.2, 270.5];
        for (got, want) in man.theta_s_deg.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_sources() {
        let a = manifold(4, 1.0);
        assert!(matches!(
            simulate_scene(&a, &[1, 2, 3, 4], 1, NoiseLevel::Off, false, 0),
            Err(DoaError::TooManySources { sources: 4, sensors: 4 })
        ));
    }

    #[test]
    fn reconstruction_identity() {
        let a = manifold(12, 1.0);
        let s = simulate_scene(&a, &[10, 50, 200], 7, NoiseLevel::SnrDb(3.0), false, 9).unwrap();
        let resid = &s.received - s.sources.project(&a) - &s.noise;
        assert!(resid.norm() <= 1e-10 * s.received.norm());
        let dense = s.sources.to_dense();
        assert!((&a.entries * &dense + &s.noise - &s.received).norm() <= 1e-10 * s.received.norm());
        for i in 0..dense.nrows() {
            if !s.sources.indices.contains(&i) {
                assert!(dense.row(i).iter().all(|z| z.norm() == 0.0));
            }
        }
    }

    #[test]
    fn empirical_snr_close_to_target() {
        let a = manifold(16, 1.0);
        for snr in [-10.0, 0.0, 20.0] {
            let s = simulate_scene(&a, &[10, 150], 100, NoiseLevel::SnrDb(snr), false, 4).unwrap();
            let got = s.empirical_snr_db(&a);
            assert!((got - snr).abs() < 0.5, "target {snr} got {got}");
        }
    }

    #[test]
    fn coherent_sources_have_rank_one() {
        let a = manifold(16, 1.0);
        let s = simulate_scene(&a, &[10, 150, 300], 20, NoiseLevel::SnrDb(0.0), true, 4).unwrap();
        assert_eq!(numerical_rank(&s.sources.waveforms, 1e-10), 1);
        let inc = simulate_scene(&a, &[10, 150, 300], 20, NoiseLevel::SnrDb(0.0), false, 4).unwrap();
        assert_eq!(numerical_rank(&inc.sources.waveforms, 1e-10), 3);
        let sv = singular_values(&inc.sources.waveforms);
        assert!(sv[2] > 1e-3 * sv[0]);
    }

    #[test]
    fn determinism() {
        let a = manifold(8, 2.0);
        let x = simulate_scene(&a, &[1, 20], 5, NoiseLevel::SnrDb(5.0), false, 77).unwrap();
        let y = simulate_scene(&a, &[1, 20], 5, NoiseLevel::SnrDb(5.0), false, 77).unwrap();
        assert_eq!(x.received, y.received);
    }

    #[test]
    fn snapshot_csv_parsing() {
        let x = parse_snapshots_csv("1,0\n0,1", None).unwrap();
        assert_eq!(x.shape(), (2, 1));
        assert_eq!(x[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(x[(1, 0)], C64::new(0.0, 1.0));
        assert!(matches!(parse_snapshots_csv("1,0\n0,1", Some(3)), Err(DoaError::RaggedRows(_))));
        assert!(matches!(parse_snapshots_csv("1,0,2,2\n0,1", None), Err(DoaError::RaggedRows(_))));
        assert!(matches!(parse_snapshots_csv("1,0,2\n", None), Err(DoaError::RaggedRows(_))));
        assert!(matches!(parse_snapshots_csv("", None), Err(DoaError::Parse(_))));
        assert!(matches!(parse_snapshots_csv("a,b\n", None), Err(DoaError::Parse(_))));
    }

    #[test]
    fn snapshot_csv_25_sensors() {
        let a = manifold(25, 1.0);
        let s = simulate_scene(&a, &[40], 1, NoiseLevel::SnrDb(10.0), false, 3).unwrap();
        let mut buf = Vec::new();
        write_snapshots_csv(&s.received, &mut buf).unwrap();
        let back = parse_snapshots_csv(std::str::from_utf8(&buf).unwrap(), Some(25)).unwrap();
        assert_eq!(back, s.received);
    }

    #[test]
    fn source_placement_respects_separation() {
        let idx = random_source_indices(3600, 5, 20, 3).unwrap();
        assert_eq!(idx.len(), 5);
        for (n, a) in idx.iter().enumerate() {
            for b in &idx[n + 1..] {
                let d = a.abs_diff(*b);
                assert!(d.min(3600 - d) >= 20);
            }
        }
        assert!(random_source_indices(10, 5, 3, 0).is_err());
    }
}
