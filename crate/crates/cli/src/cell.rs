//! One experiment cell: an array, a scene and the estimators run on it.

use doalab_core::baselines::{cbf_spectrum, l1_spectrum, music_spectrum, mvdr_spectrum, L1Config, Loading};
use doalab_core::geometry::{generate, ArrayGeometry};
use doalab_core::manifold::{build_manifold, ManifoldMatrix};
use doalab_core::scenesim::{random_source_indices, simulate_scene, SceneGroundTruth};
use doalab_core::ssfns::{run_ssfns, SpatialSpectrum, SsfnsResult};
use doalab_core::CMatrix;
use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::error::HarnessError;

/// Scene seeds are decorrelated from array seeds so that reusing a seed for
/// both does not replay the same random stream.
pub fn scene_seed(seed: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Grid angle in degrees, free of accumulated rounding (`180.2`, not `180.20000000000002`).
pub fn angle_deg(manifold: &ManifoldMatrix, index: usize) -> f64 {
    (manifold.grid.angle_deg(index) * 1e9).round() / 1e9
}

pub struct Cell {
    pub geometry: ArrayGeometry,
    pub manifold: ManifoldMatrix,
    pub scene: SceneGroundTruth,
}

pub fn array_for(config: &ExperimentConfig, seed: u64) -> Result<(ArrayGeometry, ManifoldMatrix), HarnessError> {
    let geometry = generate(config.layout, config.sensors, config.aperture, config.array_seed.unwrap_or(seed))?;
    let manifold = build_manifold(&geometry, &config.wave()?, &config.grid()?)?;
    Ok((geometry, manifold))
}

/// Grid indices of the true sources: the explicit angles snapped to the grid,
/// or a random draw.
pub fn source_indices(config: &ExperimentConfig, manifold: &ManifoldMatrix, seed: u64) -> Result<Vec<usize>, HarnessError> {
    let grid = &manifold.grid;
    match &config.angles_deg {
        Some(angles) => {
            let mut idx: Vec<usize> = angles.iter().map(|&a| grid.index_of(a)).collect();
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Err(HarnessError::Config(format!(
                    "source angles {angles:?} fall on the same {}-degree grid cell",
                    grid.delta_deg
                )));
            }
            Ok(idx)
        }
        None => Ok(random_source_indices(
            grid.len(),
            config.sources,
            config.min_separation_cells(),
            seed,
        )?),
    }
}

pub fn simulate(config: &ExperimentConfig, seed: u64) -> Result<Cell, HarnessError> {
    let (geometry, manifold) = array_for(config, seed)?;
    let truth = source_indices(config, &manifold, seed)?;
    let scene = simulate_scene(
        &manifold,
        &truth,
        config.snapshots,
        config.noise(),
        config.coherent,
        scene_seed(seed),
    )?;
    Ok(Cell {
        geometry,
        manifold,
        scene,
    })
}

/// Method-specific facts worth keeping next to the spectrum.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodDetail {
    Ssfns {
        candidates_deg: Vec<f64>,
        stop_reason: doalab_core::ssfns::StopReason,
        degenerate_rows: usize,
        trace: Vec<TraceEntry>,
    },
    Cbf,
    Mvdr {
        rank_deficient: bool,
        loading: f64,
    },
    Music,
    L1 {
        lambda: f64,
        iterations: usize,
        converged: bool,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub index: usize,
    pub angle_deg: f64,
    pub peak: f64,
    /// `None` when q was not tracked.
    pub q: Option<f64>,
}

pub struct MethodRun {
    pub method: Method,
    pub spectrum: SpatialSpectrum,
    pub estimated: Vec<usize>,
    pub detail: MethodDetail,
    pub ssfns: Option<SsfnsResult>,
}

/// Run one estimator. Baselines report their `k` strongest peaks.
pub fn run_method(
    method: Method,
    config: &ExperimentConfig,
    manifold: &ManifoldMatrix,
    x: &CMatrix,
    k: usize,
) -> Result<MethodRun, HarnessError> {
    let peaks = |s: &SpatialSpectrum| {
        let mut p = s.peaks(k);
        p.sort_unstable();
        p
    };
    let run = match method {
        Method::Ssfns => {
            let res = run_ssfns(manifold, x, &config.ssfns())?;
            let detail = MethodDetail::Ssfns {
                candidates_deg: res.candidates.iter().map(|&i| angle_deg(manifold, i)).collect(),
                stop_reason: res.stop_reason,
                degenerate_rows: res.final_filter.degenerate.len(),
                trace: res
                    .trace
                    .iter()
                    .map(|r| TraceEntry {
                        index: r.index,
                        angle_deg: angle_deg(manifold, r.index),
                        peak: r.peak,
                        q: (!r.q.is_nan()).then_some(r.q),
                    })
                    .collect(),
            };
            MethodRun {
                method,
                spectrum: res.spectrum.clone(),
                estimated: res.estimated.clone(),
                detail,
                ssfns: Some(res),
            }
        }
        Method::Cbf => {
            let spectrum = cbf_spectrum(manifold, x)?;
            MethodRun {
                method,
                estimated: peaks(&spectrum),
                spectrum,
                detail: MethodDetail::Cbf,
                ssfns: None,
            }
        }
        Method::Mvdr => {
            let loading = config.mvdr_loading.map_or(Loading::Default, Loading::Fixed);
            let (spectrum, cov) = mvdr_spectrum(manifold, x, loading)?;
            MethodRun {
                method,
                estimated: peaks(&spectrum),
                spectrum,
                detail: MethodDetail::Mvdr {
                    rank_deficient: cov.is_rank_deficient(),
                    loading: cov.loading,
                },
                ssfns: None,
            }
        }
        Method::Music => {
            let spectrum = music_spectrum(manifold, x, k)?;
            MethodRun {
                method,
                estimated: peaks(&spectrum),
                spectrum,
                detail: MethodDetail::Music,
                ssfns: None,
            }
        }
        Method::L1 => {
            let l1 = L1Config {
                lambda: config.l1_lambda,
                max_iter: config.l1_max_iter,
                ..L1Config::default()
            };
            let out = l1_spectrum(manifold, x, &l1)?;
            MethodRun {
                method,
                estimated: peaks(&out.spectrum),
                spectrum: out.spectrum,
                detail: MethodDetail::L1 {
                    lambda: out.lambda,
                    iterations: out.iterations,
                    converged: out.converged,
                },
                ssfns: None,
            }
        }
    };
    Ok(run)
}

/// Mean circular distance in degrees from each true direction to the nearest estimate.
pub fn mean_abs_error_deg(manifold: &ManifoldMatrix, truth: &[usize], estimated: &[usize]) -> f64 {
    if truth.is_empty() || estimated.is_empty() {
        return f64::NAN;
    }
    let grid = &manifold.grid;
    let total: usize = truth
        .iter()
        .map(|&t| estimated.iter().map(|&e| grid.cell_distance(t, e)).min().unwrap_or(0))
        .sum();
    total as f64 * grid.delta_deg / truth.len() as f64
}
