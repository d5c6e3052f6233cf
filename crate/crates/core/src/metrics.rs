//! Figures of merit for spatial filters and spectra.
//!
//! Ratios with a zero denominator (noise-free scenes, perfect filters) saturate
//! at `DB_CAP` instead of producing infinities.

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::manifold::ManifoldMatrix;
use crate::scenesim::SourceSignals;
use crate::ssfns::{SpatialFilter, SpatialSpectrum};
use crate::{CMatrix, C64};

pub const DB_CAP: f64 = 300.0;

/// A decibel value, possibly saturated at `±DB_CAP`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decibels {
    pub db: f64,
    pub capped: bool,
}

/// `10 log10(num / den)`, saturating at `±DB_CAP`.
pub fn ratio_db(num: f64, den: f64) -> Decibels {
    if den <= 0.0 {
        if num > 0.0 {
            info!("zero denominator; ratio capped at +{DB_CAP} dB");
        }
        let db = if num > 0.0 { DB_CAP } else { 0.0 };
        return Decibels { db, capped: num > 0.0 };
    }
    if num <= 0.0 {
        return Decibels { db: -DB_CAP, capped: true };
    }
    let db = 10.0 * (num / den).log10();
    if db.abs() > DB_CAP {
        Decibels {
            db: DB_CAP.copysign(db),
            capped: true,
        }
    } else {
        Decibels { db, capped: false }
    }
}

fn check_filter(filter: &SpatialFilter, rows: usize, what: &str) -> Result<()> {
    if filter.sensors() != rows {
        return Err(DoaError::ShapeMismatch(format!(
            "filter expects {} sensors, {what} has {rows} rows",
            filter.sensors()
        )));
    }
    Ok(())
}

/// Spatial signal focusing: `||B A - E||_F`.
pub fn ssfa(filter: &SpatialFilter, manifold: &ManifoldMatrix) -> Result<f64> {
    check_filter(filter, manifold.sensors(), "manifold")?;
    let m = filter.sensors();
    let b_rows = filter.weights.transpose();
    let b_rows = b_rows.as_slice();
    let a_cols = manifold.entries.as_slice();
    let mut total = 0.0;
    for i in 0..filter.directions() {
        let bi = &b_rows[i * m..(i + 1) * m];
        for j in 0..manifold.directions() {
            let aj = &a_cols[j * m..(j + 1) * m];
            let mut c: C64 = bi.iter().zip(aj).map(|(b, a)| b * a).sum();
            if i == j {
                c -= C64::new(1.0, 0.0);
            }
            total += c.norm_sqr();
        }
    }
    Ok(total.sqrt())
}

fn mean_column_norm(y: &CMatrix) -> f64 {
    let t = y.ncols();
    if t == 0 {
        return 0.0;
    }
    (0..t).map(|k| y.column(k).norm()).sum::<f64>() / t as f64
}

/// Noise suppression: `(1/T) sum_t ||B n_t||`.
pub fn nsa(filter: &SpatialFilter, noise: &CMatrix) -> Result<f64> {
    check_filter(filter, noise.nrows(), "noise")?;
    Ok(mean_column_norm(&(&filter.weights * noise)))
}

/// `B A S - S`, using only the source rows of `S`.
fn focusing_error(filter: &SpatialFilter, manifold: &ManifoldMatrix, sources: &SourceSignals) -> CMatrix {
    let mut y = &filter.weights * sources.project(manifold);
    for (k, &i) in sources.indices.iter().enumerate() {
        for t in 0..y.ncols() {
            y[(i, t)] -= sources.waveforms[(k, t)];
        }
    }
    y
}

/// Signal extraction: `(1/T) sum_t ||B A s_t - s_t||`.
pub fn esa(filter: &SpatialFilter, manifold: &ManifoldMatrix, sources: &SourceSignals) -> Result<f64> {
    check_filter(filter, manifold.sensors(), "manifold")?;
    Ok(mean_column_norm(&focusing_error(filter, manifold, sources)))
}

/// Comprehensive ability: `(1/T) sum_t ||B x_t - s_t||`.
pub fn ca(filter: &SpatialFilter, x: &CMatrix, sources: &SourceSignals) -> Result<f64> {
    check_filter(filter, x.nrows(), "snapshots")?;
    if x.ncols() != sources.snapshots() {
        return Err(DoaError::ShapeMismatch("snapshot counts of X and S differ".into()));
    }
    let mut y = &filter.weights * x;
    for (k, &i) in sources.indices.iter().enumerate() {
        for t in 0..y.ncols() {
            y[(i, t)] -= sources.waveforms[(k, t)];
        }
    }
    Ok(mean_column_norm(&y))
}

/// Per-direction average energies after filtering and the ratios built from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRatios {
    /// Mean interference energy per direction and snapshot.
    pub i_bar: f64,
    /// Mean noise energy per direction and snapshot.
    pub n_bar: f64,
    /// Mean signal energy per source and snapshot.
    pub s_bar: f64,
    pub sir: Decibels,
    pub snr: Decibels,
    pub snir: Decibels,
}

pub fn energy_ratios(
    filter: &SpatialFilter,
    manifold: &ManifoldMatrix,
    sources: &SourceSignals,
    noise: &CMatrix,
) -> Result<EnergyRatios> {
    check_filter(filter, manifold.sensors(), "manifold")?;
    check_filter(filter, noise.nrows(), "noise")?;
    let t = noise.ncols().max(1) as f64;
    let r = filter.directions() as f64;
    let i_bar = focusing_error(filter, manifold, sources).norm_squared() / (t * r);
    let n_bar = (&filter.weights * noise).norm_squared() / (t * r);
    let k = sources.count();
    let s_bar = if k == 0 {
        0.0
    } else {
        sources.waveforms.norm_squared() / (t * k as f64)
    };
    Ok(EnergyRatios {
        i_bar,
        n_bar,
        s_bar,
        sir: ratio_db(s_bar, i_bar),
        snr: ratio_db(s_bar, n_bar),
        snir: ratio_db(s_bar, i_bar + n_bar),
    })
}

/// Ratio (dB) of mean power on the true directions to mean power elsewhere.
///
/// With `tolerance > 0`, every cell within that many grid cells of a true
/// direction counts as correct.
pub fn cor(spectrum: &SpatialSpectrum, true_indices: &[usize], tolerance: usize) -> Result<Decibels> {
    let r = spectrum.len();
    let mut correct = vec![false; r];
    for &i in true_indices {
        if i >= r {
            return Err(DoaError::InvalidArgument(format!("true index {i} outside grid of {r}")));
        }
        for d in 0..=tolerance.min(r / 2) {
            correct[(i + d) % r] = true;
            correct[(i + r - d) % r] = true;
        }
    }
    let k = correct.iter().filter(|&&c| c).count();
    if k == 0 || k >= r {
        return Err(DoaError::InvalidArgument(format!(
            "COR needs 0 < K < R, got K = {k}, R = {r}"
        )));
    }
    let (mut on, mut off) = (0.0, 0.0);
    for (p, c) in spectrum.power.iter().zip(&correct) {
        if *c {
            on += p;
        } else {
            off += p;
        }
    }
    Ok(ratio_db((r - k) as f64 * on, k as f64 * off))
}

/// Every metric for one (filter, scene) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub q: f64,
    pub ssfa: f64,
    pub nsa: f64,
    pub esa: f64,
    pub ca: f64,
    pub i_bar: f64,
    pub n_bar: f64,
    pub s_bar: f64,
    pub sir_b_db: f64,
    pub snr_b_db: f64,
    pub snir_b_db: f64,
    pub cor_db: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, LayoutKind};
    use crate::manifold::{build_manifold, GridSpec, WaveConfig};
    use crate::scenesim::{simulate_scene, NoiseLevel};
    use crate::ssfns::{final_filter, masked_filter, preliminary_filter, FilterStage};
    use approx::assert_abs_diff_eq;

    fn manifold(m: usize, delta: f64, seed: u64) -> ManifoldMatrix {
        let g = generate(LayoutKind::UniformRandom2d, m, 8000.0, seed).unwrap();
        build_manifold(&g, &WaveConfig::default(), &GridSpec::new(delta, 0.0).unwrap()).unwrap()
    }

    fn spec(power: Vec<f64>) -> SpatialSpectrum {
        let r = power.len();
        SpatialSpectrum {
            power,
            grid: GridSpec::new(360.0 / r as f64, 0.0).unwrap(),
            snapshots_averaged: 1,
        }
    }

    #[test]
    fn ssfa_of_perfect_filter_is_zero() {
        // a square unitary manifold scaled so that B A = E exactly
        let grid = GridSpec::new(90.0, 0.0).unwrap();
        let entries = CMatrix::identity(4, 4);
        let a = ManifoldMatrix::from_entries(entries.clone(), grid, WaveConfig::default()).unwrap();
        let f = SpatialFilter {
            weights: entries,
            masked: vec![],
            stage: FilterStage::Preliminary,
            manifold_fingerprint: a.fingerprint,
            degenerate: vec![],
        };
        assert_eq!(ssfa(&f, &a).unwrap(), 0.0);
    }

    #[test]
    fn ssfa_shrinks_with_more_sensors() {
        let small = manifold(16, 2.0, 1);
        let large = manifold(64, 2.0, 1);
        let s16 = ssfa(&preliminary_filter(&small), &small).unwrap();
        let s64 = ssfa(&preliminary_filter(&large), &large).unwrap();
        assert!(s64 < s16, "{s64} !< {s16}");
    }

    #[test]
    fn nsa_is_linear() {
        let a = manifold(8, 5.0, 2);
        let f = preliminary_filter(&a);
        assert_eq!(nsa(&f, &CMatrix::zeros(8, 3)).unwrap(), 0.0);
        let scene = simulate_scene(&a, &[], 3, NoiseLevel::SnrDb(0.0), false, 1).unwrap();
        let n1 = nsa(&f, &scene.noise).unwrap();
        let n2 = nsa(&f, &(&scene.noise * C64::new(2.0, 0.0))).unwrap();
        assert_eq!(n2, 2.0 * n1);
    }

    #[test]
    fn nsa_improves_with_more_sensors() {
        let mut vals = Vec::new();
        for m in [16, 256] {
            let a = manifold(m, 5.0, 3);
            let scene = simulate_scene(&a, &[], 20, NoiseLevel::SnrDb(0.0), false, 2).unwrap();
            vals.push(nsa(&preliminary_filter(&a), &scene.noise).unwrap());
        }
        assert!(vals[1] < vals[0], "{vals:?}");
    }

    #[test]
    fn esa_and_ca_vanish_with_exact_masking() {
        let a = manifold(16, 1.0, 4);
        let truth = [20, 170, 290];
        let scene = simulate_scene(&a, &truth, 2, NoiseLevel::Off, false, 4).unwrap();
        let f = final_filter(&a, &truth).unwrap();
        assert!(esa(&f, &a, &scene.sources).unwrap() < 1e-9);
        let ca_v = ca(&f, &scene.received, &scene.sources).unwrap();
        assert!(ca_v < 1e-9);
        // N = 0 makes CA equal ESA
        let p = preliminary_filter(&a);
        assert_eq!(
            ca(&p, &scene.received, &scene.sources).unwrap(),
            esa(&p, &a, &scene.sources).unwrap()
        );
        let empty = SourceSignals::empty(a.directions(), 2);
        assert_eq!(esa(&p, &a, &empty).unwrap(), 0.0);
    }

    #[test]
    fn energy_ratio_properties() {
        let a = manifold(16, 1.0, 5);
        let truth = [20, 170, 290];
        let scene = simulate_scene(&a, &truth, 4, NoiseLevel::SnrDb(0.0), false, 4).unwrap();
        let f = masked_filter(&a, &[20]).unwrap();
        let e = energy_ratios(&f, &a, &scene.sources, &scene.noise).unwrap();
        assert!(e.snir.db <= e.sir.db.min(e.snr.db));

        let zero = CMatrix::zeros(16, 4);
        let e0 = energy_ratios(&f, &a, &scene.sources, &zero).unwrap();
        assert_eq!(e0.snr.db, DB_CAP);
        assert!(e0.snr.capped);

        // doubling S scales both S and the interference identically
        let mut doubled = scene.sources.clone();
        doubled.waveforms *= C64::new(2.0, 0.0);
        let e2 = energy_ratios(&f, &a, &doubled, &scene.noise).unwrap();
        assert_abs_diff_eq!(e2.sir.db, e.sir.db, epsilon = 1e-9);
    }

    #[test]
    fn cor_examples() {
        let flat = spec(vec![2.0; 36]);
        assert_eq!(cor(&flat, &[3, 9], 0).unwrap().db, 0.0);
        let mut ind = vec![0.0; 36];
        ind[3] = 1.0;
        ind[9] = 1.0;
        let c = cor(&spec(ind), &[3, 9], 0).unwrap();
        assert_eq!(c.db, DB_CAP);
        assert!(c.capped);
        assert!(cor(&flat, &[], 0).is_err());

        let mut p: Vec<f64> = (0..36).map(|i| 1.0 + (i as f64 * 0.7).sin().abs()).collect();
        let base = cor(&spec(p.clone()), &[3, 9], 0).unwrap().db;
        p.iter_mut().for_each(|v| *v *= 17.0);
        assert_abs_diff_eq!(cor(&spec(p), &[3, 9], 0).unwrap().db, base, epsilon = 1e-12);
    }

    #[test]
    fn cor_tolerance_widens_correct_set() {
        let mut p = vec![1.0; 36];
        p[4] = 50.0;
        let strict = cor(&spec(p.clone()), &[3], 0).unwrap().db;
        let loose = cor(&spec(p), &[3], 1).unwrap().db;
        assert!(loose > strict);
    }
}
