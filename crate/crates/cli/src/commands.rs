//! The four subcommands. Each returns the path of the manifest it wrote.

use std::io::Write;
use std::path::{Path, PathBuf};

use doalab_core::geometry::{load_geometry_csv, ArrayGeometry, LayoutKind};
use doalab_core::manifold::build_manifold;
use doalab_core::metrics::{ca, cor, energy_ratios, esa, nsa, ssfa};
use doalab_core::scenesim::{load_snapshots_csv, simulate_scene, write_snapshots_csv, NoiseLevel, SceneManifest};
use doalab_core::ssfns::{masked_filter, preliminary_filter, run_ssfns, spectrum, weight_stats, SsfnsConfig, Threshold};
use doalab_core::{CMatrix, DoaError};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{angle_deg, array_for, mean_abs_error_deg, run_method, scene_seed, simulate, MethodDetail};
use crate::config::{ExperimentConfig, Method, SweepAxis};
use crate::error::HarnessError;
use crate::output::Artifacts;

#[derive(Serialize)]
struct GeometrySummary {
    layout: LayoutKind,
    sensors: usize,
    aperture_m: f64,
    seed: u64,
    coordinate_extent_m: f64,
    min_spacing_m: f64,
    wavelength_m: f64,
}

fn min_spacing(g: &ArrayGeometry) -> f64 {
    let s = &g.sensors;
    let mut best = f64::INFINITY;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            best = best.min((s[i].x - s[j].x).hypot(s[i].y - s[j].y));
        }
    }
    best
}

/// Write the array layout as CSV plus a JSON summary.
pub fn cmd_geometry(config: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    if config.sensors == 0 {
        return Err(HarnessError::Config("the array needs at least one sensor".into()));
    }
    let wave = config.wave()?;
    let seed = config.array_seed.unwrap_or(config.seeds.first().copied().unwrap_or(0));
    let geometry = doalab_core::geometry::generate(config.layout, config.sensors, config.aperture, seed)?;
    let out = Artifacts::create(&config.output_dir)?;
    out.write_with("geometry.csv", |w| Ok(geometry.write_csv(w)?))?;
    let summary = GeometrySummary {
        layout: geometry.layout,
        sensors: geometry.len(),
        aperture_m: geometry.aperture,
        seed,
        coordinate_extent_m: geometry.coordinate_extent(),
        min_spacing_m: min_spacing(&geometry),
        wavelength_m: wave.wavelength(),
    };
    out.write_json("geometry.json", &summary)?;
    out.finish("geometry", config, &summary)
}

/// Snapshots supplied on disk instead of simulated.
pub struct RecordedInput<'a> {
    pub geometry_csv: Option<&'a Path>,
    pub snapshots_csv: &'a Path,
}

#[derive(Serialize)]
struct MethodResult<'a> {
    method: Method,
    seed: Option<u64>,
    k: usize,
    theta_true_deg: Option<Vec<f64>>,
    estimated_deg: Vec<f64>,
    exact_recovery: Option<bool>,
    cor_db: Option<f64>,
    detail: &'a MethodDetail,
}

#[derive(Serialize, Default)]
struct EstimateDetails {
    scenes: Vec<SceneManifest>,
    failures: Vec<String>,
    input: Option<[String; 2]>,
}

/// Run every configured method on one simulated scene per seed, or once on recorded snapshots.
pub fn cmd_estimate(config: &ExperimentConfig, input: Option<RecordedInput<'_>>) -> Result<PathBuf, HarnessError> {
    config.validate()?;
    if let Some(input) = input {
        return estimate_recorded(config, input);
    }
    let out = Artifacts::create(&config.output_dir)?;
    let k = config.k();
    let per_seed: Vec<Result<(SceneManifest, Vec<String>), HarnessError>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let cell = simulate(config, seed)?;
            let dir = format!("seed_{seed}");
            let truth = cell.scene.source_indices().to_vec();
            let deg = |v: &[usize]| v.iter().map(|&i| angle_deg(&cell.manifold, i)).collect::<Vec<_>>();
            out.write_with(&format!("{dir}/geometry.csv"), |w| Ok(cell.geometry.write_csv(w)?))?;
            out.write_with(&format!("{dir}/snapshots.csv"), |w| Ok(write_snapshots_csv(&cell.scene.received, w)?))?;
            let mut manifest = cell.scene.manifest(&cell.manifold);
            manifest.theta_s_deg = deg(&truth);
            out.write_json(&format!("{dir}/scene.json"), &manifest)?;
            let mut failures = Vec::new();
            for &method in &config.methods {
                let run = run_method(method, config, &cell.manifold, &cell.scene.received, k)?;
                let exact = run.estimated == truth;
                if method == Method::Ssfns && config.noise_off && !exact {
                    failures.push(format!(
                        "seed {seed}: noise-free SSFNS estimated {:?} deg, truth {:?} deg",
                        deg(&run.estimated),
                        manifest.theta_s_deg
                    ));
                }
                out.write_with(&format!("{dir}/{method}_spectrum.csv"), |w| Ok(run.spectrum.write_csv(w)?))?;
                let result = MethodResult {
                    method,
                    seed: Some(seed),
                    k,
                    theta_true_deg: Some(manifest.theta_s_deg.clone()),
                    estimated_deg: deg(&run.estimated),
                    exact_recovery: Some(exact),
                    cor_db: Some(cor(&run.spectrum, &truth, 0)?.db),
                    detail: &run.detail,
                };
                out.write_json(&format!("{dir}/{method}.json"), &result)?;
            }
            Ok((manifest, failures))
        })
        .collect();
    let mut details = EstimateDetails::default();
    for r in per_seed {
        let (scene, failures) = r?;
        details.scenes.push(scene);
        details.failures.extend(failures);
    }
    let failures = details.failures.clone();
    let manifest = out.finish("estimate", config, &details)?;
    if failures.is_empty() {
        Ok(manifest)
    } else {
        Err(HarnessError::Numerical(format!(
            "exact recovery failed in {} of {} noise-free scenes: {}",
            failures.len(),
            config.seeds.len(),
            failures.join("; ")
        )))
    }
}

fn estimate_recorded(config: &ExperimentConfig, input: RecordedInput<'_>) -> Result<PathBuf, HarnessError> {
    if config.noise_off {
        return Err(HarnessError::Config("noise_off needs simulated snapshots with known sources".into()));
    }
    let (geometry, manifold) = match input.geometry_csv {
        Some(path) => {
            let g = load_geometry_csv(path)?;
            let a = build_manifold(&g, &config.wave()?, &config.grid()?)?;
            (g, a)
        }
        None => array_for(config, config.array_seed.unwrap_or(config.seeds[0]))?,
    };
    let x: CMatrix = load_snapshots_csv(input.snapshots_csv, Some(geometry.len()))?;
    let k = config.k();
    if k >= geometry.len() {
        return Err(DoaError::TooManySources {
            sources: k,
            sensors: geometry.len(),
        }
        .into());
    }
    let out = Artifacts::create(&config.output_dir)?;
    out.write_with("geometry.csv", |w| Ok(geometry.write_csv(w)?))?;
    for &method in &config.methods {
        let run = run_method(method, config, &manifold, &x, k)?;
        out.write_with(&format!("{method}_spectrum.csv"), |w| Ok(run.spectrum.write_csv(w)?))?;
        let result = MethodResult {
            method,
            seed: None,
            k,
            theta_true_deg: None,
            estimated_deg: run.estimated.iter().map(|&i| angle_deg(&manifold, i)).collect(),
            exact_recovery: None,
            cor_db: None,
            detail: &run.detail,
        };
        out.write_json(&format!("{method}.json"), &result)?;
    }
    let details = EstimateDetails {
        input: Some([
            input.geometry_csv.map_or_else(String::new, |p| p.display().to_string()),
            input.snapshots_csv.display().to_string(),
        ]),
        ..Default::default()
    };
    out.finish("estimate", config, &details)
}

/// One line of the long-format sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: Method,
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub seed: u64,
    pub metric: &'static str,
    pub value: f64,
}

pub const SWEEP_HEADER: &str = "method,axis_name,axis_value,seed,metric_name,metric_value";

fn sweep_cell(config: &ExperimentConfig, axis: SweepAxis, value: f64, seed: u64) -> Result<Vec<MetricRow>, HarnessError> {
    let row = |method, metric, v| MetricRow {
        method,
        axis,
        axis_value: value,
        seed,
        metric,
        value: v,
    };
    let cfg = config.at(axis, value);
    let cell = simulate(&cfg, seed)?;
    let (a, scene) = (&cell.manifold, &cell.scene);
    let truth = scene.source_indices();
    let mut rows = Vec::new();

    if axis == SweepAxis::Iterations {
        // the filter after exactly `value` maskings, as the iteration proceeds
        let ssfns = SsfnsConfig {
            max_iterations: cfg.iterations,
            threshold: Threshold::Disabled,
            known_k: None,
            track_q: false,
            ..cfg.ssfns()
        };
        let res = run_ssfns(a, &scene.received, &ssfns)?;
        let filter = if res.candidates.is_empty() {
            preliminary_filter(a)
        } else {
            masked_filter(a, &res.candidates)?
        };
        let spec = spectrum(&filter, &scene.received, &a.grid)?;
        let m = Method::Ssfns;
        rows.push(row(m, "q", weight_stats(&filter, a, &res.candidates)?.q));
        rows.push(row(m, "esa", esa(&filter, a, &scene.sources)?));
        rows.push(row(m, "nsa", nsa(&filter, &scene.noise)?));
        rows.push(row(m, "ca", ca(&filter, &scene.received, &scene.sources)?));
        rows.push(row(m, "cor_db", cor(&spec, truth, 0)?.db));
        rows.push(row(m, "masked", res.candidates.len() as f64));
        return Ok(rows);
    }

    let k = cfg.k();
    for &method in &cfg.methods {
        let run = run_method(method, &cfg, a, &scene.received, k)?;
        rows.push(row(method, "cor_db", cor(&run.spectrum, truth, 0)?.db));
        rows.push(row(method, "success", f64::from(u8::from(run.estimated == truth))));
        rows.push(row(method, "mean_abs_error_deg", mean_abs_error_deg(a, truth, &run.estimated)));
        match (&run.detail, &run.ssfns) {
            (MethodDetail::Mvdr { rank_deficient, .. }, _) => {
                rows.push(row(method, "rank_deficient", f64::from(u8::from(*rank_deficient))));
            }
            (_, Some(res)) => {
                let f = &res.final_filter;
                rows.push(row(method, "esa", esa(f, a, &scene.sources)?));
                rows.push(row(method, "nsa", nsa(f, &scene.noise)?));
                rows.push(row(method, "ca", ca(f, &scene.received, &scene.sources)?));
                rows.push(row(method, "snir_db", energy_ratios(f, a, &scene.sources, &scene.noise)?.snir.db));
            }
            _ => {}
        }
    }
    Ok(rows)
}

/// Mean and sample standard deviation of one metric over seeds, NaNs skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub metric: &'static str,
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, SweepAxis, u64, &'static str)> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let key = (r.method, r.axis, r.axis_value.to_bits(), r.metric);
        let slot = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                values.push(Vec::new());
                keys.len() - 1
            }
        };
        if !r.value.is_nan() {
            values[slot].push(r.value);
        }
    }
    keys.into_iter()
        .zip(values)
        .map(|((method, axis, bits, metric), v)| {
            let n = v.len();
            let mean = if n == 0 { f64::NAN } else { v.iter().sum::<f64>() / n as f64 };
            let stddev = if n < 2 {
                0.0
            } else {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            SummaryRow {
                method,
                axis,
                axis_value: f64::from_bits(bits),
                metric,
                mean,
                stddev,
                count: n,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SweepDetails {
    axis: SweepAxis,
    values: Vec<f64>,
    rows: usize,
}

/// Vary one axis; every (value, seed) cell runs every method on a shared scene.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let sweep = config.checked_sweep()?;
    config.validate()?;
    if sweep.axis == SweepAxis::Iterations && config.methods.iter().any(|&m| m != Method::Ssfns) {
        warn!("iteration sweeps only apply to ssfns; other methods are skipped");
    }
    let cells: Vec<(f64, u64)> = sweep
        .values
        .iter()
        .flat_map(|&v| config.seeds.iter().map(move |&s| (v, s)))
        .collect();
    info!("sweep over {}: {} cells", sweep.axis.as_str(), cells.len());
    let rows: Vec<MetricRow> = cells
        .par_iter()
        .map(|&(v, s)| sweep_cell(config, sweep.axis, v, s))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    let out = Artifacts::create(&config.output_dir)?;
    out.write_with("sweep.csv", |w| {
        writeln!(w, "{SWEEP_HEADER}")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{},{}", r.method, r.axis.as_str(), r.axis_value, r.seed, r.metric, r.value)?;
        }
        Ok(())
    })?;
    out.write_with("summary.csv", |w| {
        writeln!(w, "method,axis_name,axis_value,metric_name,mean,stddev,count")?;
        for s in summarize(&rows) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.method,
                s.axis.as_str(),
                s.axis_value,
                s.metric,
                s.mean,
                s.stddev,
                s.count
            )?;
        }
        Ok(())
    })?;
    let details = SweepDetails {
        axis: sweep.axis,
        values: sweep.values.clone(),
        rows: rows.len(),
    };
    out.finish("sweep", config, &details)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrayStudyRow {
    pub layout: LayoutKind,
    pub m: usize,
    pub aperture_m: f64,
    pub seed: u64,
    pub q: f64,
    pub ssfa: f64,
    pub nsa: f64,
}

fn study_cell(config: &ExperimentConfig, layout: LayoutKind, m: usize, v: f64, seed: u64) -> Result<Option<ArrayStudyRow>, HarnessError> {
    let cfg = ExperimentConfig {
        layout,
        sensors: m,
        aperture: v,
        array_seed: None,
        ..config.clone()
    };
    let (_, a) = match array_for(&cfg, seed) {
        Ok(pair) => pair,
        Err(e) => {
            // e.g. spiral or concentric layouts with M not divisible by 8
            warn!("skipping {layout} M={m} V={v}: {e}");
            return Ok(None);
        }
    };
    let f = preliminary_filter(&a);
    // unit-variance white noise, no sources
    let noise = simulate_scene(&a, &[], cfg.snapshots, NoiseLevel::SnrDb(0.0), false, scene_seed(seed))?.noise;
    Ok(Some(ArrayStudyRow {
        layout,
        m,
        aperture_m: v,
        seed,
        q: weight_stats(&f, &a, &[])?.q,
        ssfa: ssfa(&f, &a)?,
        nsa: nsa(&f, &noise)?,
    }))
}

/// q, SSFA and NSA of the preliminary filter over layouts, sizes and apertures.
///
/// Deterministic layouts are evaluated once; random ones once per seed.
pub fn cmd_array_study(config: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let study = &config.array_study;
    config.grid()?;
    config.wave()?;
    if study.layouts.is_empty() || study.sensors.is_empty() || study.apertures.is_empty() || config.seeds.is_empty() {
        return Err(HarnessError::Config("array study needs layouts, sensor counts, apertures and seeds".into()));
    }
    if study.layouts.contains(&LayoutKind::External) {
        return Err(HarnessError::Config("the array study only covers generated layouts".into()));
    }
    if let Some(v) = study.apertures.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(HarnessError::Config(format!("aperture must be positive, got {v}")));
    }
    let mut cells = Vec::new();
    for &layout in &study.layouts {
        for &m in &study.sensors {
            for &v in &study.apertures {
                let n = if layout.is_random() { study.max_seeds.clamp(1, config.seeds.len()) } else { 1 };
                let seeds = &config.seeds[..n];
                cells.extend(seeds.iter().map(|&s| (layout, m, v, s)));
            }
        }
    }
    info!("array study: {} cells", cells.len());
    let rows: Vec<ArrayStudyRow> = cells
        .par_iter()
        .map(|&(layout, m, v, s)| study_cell(config, layout, m, v, s))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let out = Artifacts::create(&config.output_dir)?;
    out.write_with("array_study.csv", |w| {
        writeln!(w, "layout,m,aperture_m,seed,q,ssfa,nsa")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{},{},{}", r.layout, r.m, r.aperture_m, r.seed, r.q, r.ssfa, r.nsa)?;
        }
        Ok(())
    })?;
    out.finish("array-study", config, rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, value: f64) -> MetricRow {
        MetricRow {
            method: Method::Cbf,
            axis: SweepAxis::Snr,
            axis_value: 5.0,
            seed,
            metric: "cor_db",
            value,
        }
    }

    #[test]
    fn summary_skips_nan_and_uses_sample_deviation() {
        let rows = [row(0, 1.0), row(1, 3.0), row(2, f64::NAN)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].count, 2);
        assert_eq!(s[0].mean, 2.0);
        assert!((s[0].stddev - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn summary_keeps_first_seen_order() {
        let mut rows = vec![row(0, 1.0)];
        rows.push(MetricRow { axis_value: -5.0, ..row(0, 2.0) });
        rows.push(MetricRow { metric: "success", ..row(1, 1.0) });
        let s = summarize(&rows);
        let keys: Vec<(f64, &str)> = s.iter().map(|r| (r.axis_value, r.metric)).collect();
        assert_eq!(keys, vec![(5.0, "cor_db"), (-5.0, "cor_db"), (5.0, "success")]);
    }
}
