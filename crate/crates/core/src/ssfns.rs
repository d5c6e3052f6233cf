//! Spatial signal focusing and noise suppression.
//!
//! A spatial filter `B` (R x M) maps sensor snapshots to one output per grid
//! direction. The estimator starts from the equal-modulus matched filter, then
//! repeatedly takes the strongest direction of `|B X|^2`, adds it to the masked
//! set and rebuilds every row as the minimum-norm filter that passes its own
//! direction with unit gain and places nulls on all masked directions:
//!
//! ```text
//! b_i = (Q^H a_i)^H Q^H / ||Q^H a_i||^2,   Q = orthonormal basis of N(A'^H)
//! ```
//!
//! where `A'` stacks the steering vectors of the masked directions. The final
//! filter gives every masked direction its own row built from the other masked
//! directions, so each candidate is measured free of interference from the rest.

use std::cmp::Ordering;
use std::io::Write;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::linalg::null_space_of_adjoint;
use crate::manifold::{GridSpec, ManifoldMatrix};
use crate::{CMatrix, C64};

/// A row is degenerate when `||Q^H a_i||` falls below this fraction of `||a_i||`.
///
/// Rounding leaves masked steering vectors with a residual of order 1e-14
/// relative in the complement, and a row's leak onto them scales with
/// `1 / ||Q^H a_i||`. At this cutoff the leak stays near 1e-10.
pub const DEGENERATE_REL: f64 = 1e-4;

/// Spectrum power relative to the first peak below which the data is treated as exhausted.
pub const EXHAUSTED_REL: f64 = 1e-20;

pub const DEFAULT_CONTRAST: f64 = 10.0;
pub const AUTO_THRESHOLD_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    Preliminary,
    Iterated,
    Final,
}

#[derive(Debug, Clone)]
pub struct SpatialFilter {
    /// R x M filter weights; row `i` is `b_i`.
    pub weights: CMatrix,
    /// Masked directions in the order they were found.
    pub masked: Vec<usize>,
    pub stage: FilterStage,
    pub manifold_fingerprint: u64,
    /// Unmasked rows left at zero because their direction is indistinguishable
    /// from the masked span.
    pub degenerate: Vec<usize>,
}

impl SpatialFilter {
    pub fn directions(&self) -> usize {
        self.weights.nrows()
    }

    pub fn sensors(&self) -> usize {
        self.weights.ncols()
    }

    /// Worst-case deviation from the constraints of this filter's stage.
    pub fn constraint_residuals(&self, manifold: &ManifoldMatrix) -> ConstraintResiduals {
        let a = &manifold.entries;
        let mut res = ConstraintResiduals::default();
        for i in 0..self.directions() {
            if self.degenerate.contains(&i) {
                continue;
            }
            let row = self.weights.row(i);
            let gain = (row * a.column(i))[(0, 0)];
            let in_mask = self.masked.contains(&i);
            match self.stage {
                FilterStage::Preliminary => {
                    res.max_target_error = res.max_target_error.max((gain.norm() - 1.0).abs());
                    let (lo, hi) = row
                        .iter()
                        .fold((f64::INFINITY, 0.0f64), |(lo, hi), z| (lo.min(z.norm()), hi.max(z.norm())));
                    res.max_modulus_spread = res.max_modulus_spread.max(hi - lo);
                }
                FilterStage::Iterated | FilterStage::Final => {
                    let target = if in_mask && self.stage == FilterStage::Iterated {
                        0.0
                    } else {
                        1.0
                    };
                    res.max_target_error = res.max_target_error.max((gain - C64::new(target, 0.0)).norm());
                    for &k in &self.masked {
                        if k == i {
                            continue;
                        }
                        let leak = (row * a.column(k))[(0, 0)].norm();
                        res.max_leak = res.max_leak.max(leak);
                    }
                }
            }
        }
        res
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    /// Largest `|b_i a_k|` over masked directions `k` that row `i` must null.
    pub max_leak: f64,
    /// Largest deviation of `b_i a_i` from its target (modulus 1 for the
    /// preliminary filter, exactly 1 or 0 otherwise).
    pub max_target_error: f64,
    /// Preliminary filter only: largest spread of `|b_ij|` within a row.
    pub max_modulus_spread: f64,
}

impl ConstraintResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.max_leak < tol && self.max_target_error < tol && self.max_modulus_spread < tol
    }
}

/// The equal-modulus filter: `b_ij = conj(a_ij) / (|a_ij| sum_j |a_ij|)`.
///
/// Among filters whose entries share one modulus and pass direction `i` with
/// unit gain, this one has the smallest modulus. On an ideal manifold it is
/// `A^H / M`.
pub fn preliminary_filter(manifold: &ManifoldMatrix) -> SpatialFilter {
    let a = &manifold.entries;
    let (m, r) = a.shape();
    let mut weights = CMatrix::zeros(r, m);
    for i in 0..r {
        let col = a.column(i);
        let total: f64 = col.iter().map(|z| z.norm()).sum();
        for j in 0..m {
            let z = col[j];
            let modulus = z.norm();
            weights[(i, j)] = if modulus > 0.0 {
                z.conj() / (modulus * total)
            } else {
                C64::new(0.0, 0.0)
            };
        }
    }
    SpatialFilter {
        weights,
        masked: Vec::new(),
        stage: FilterStage::Preliminary,
        manifold_fingerprint: manifold.fingerprint,
        degenerate: Vec::new(),
    }
}

fn check_mask(manifold: &ManifoldMatrix, masked: &[usize]) -> Result<()> {
    let m = manifold.sensors();
    if let Some(&bad) = masked.iter().find(|&&i| i >= manifold.directions()) {
        return Err(DoaError::InvalidArgument(format!("masked index {bad} outside the grid")));
    }
    let mut sorted = masked.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() >= m {
        return Err(DoaError::NullspaceRank {
            masked: sorted.len(),
            sensors: m,
        });
    }
    Ok(())
}

/// Fill `rows` of `weights` with the minimum-norm rows that keep unit gain on
/// their own direction and vanish on the span orthogonal to `q`.
/// Returns the rows that turned out degenerate.
fn project_rows(manifold: &ManifoldMatrix, q: &CMatrix, rows: &[usize], weights: &mut CMatrix) -> Vec<usize> {
    let a = &manifold.entries;
    let qh = q.adjoint();
    let steering = a.select_columns(rows);
    // column k holds Q^H a_{rows[k]}
    let projected = &qh * &steering;
    let mut degenerate = Vec::new();
    for (k, &i) in rows.iter().enumerate() {
        let coeffs = projected.column(k);
        let energy = coeffs.norm_squared();
        if energy.sqrt() < DEGENERATE_REL * steering.column(k).norm() {
            weights.row_mut(i).fill(C64::new(0.0, 0.0));
            degenerate.push(i);
            continue;
        }
        // b_i = coeffs^H Q^H / energy
        let row = coeffs.adjoint() * &qh / C64::new(energy, 0.0);
        weights.row_mut(i).copy_from(&row);
    }
    degenerate
}

/// Filter whose rows all null the steering vectors of `masked`.
///
/// Rows outside the mask keep unit gain on their own direction; rows inside the
/// mask come out as zero vectors (their own direction is nulled too).
pub fn masked_filter(manifold: &ManifoldMatrix, masked: &[usize]) -> Result<SpatialFilter> {
    check_mask(manifold, masked)?;
    let (m, r) = manifold.entries.shape();
    let q = null_space_of_adjoint(&manifold.columns(masked));
    let mut weights = CMatrix::zeros(r, m);
    let rows: Vec<usize> = (0..r).collect();
    let degenerate: Vec<usize> = project_rows(manifold, &q, &rows, &mut weights)
        .into_iter()
        .filter(|i| !masked.contains(i))
        .collect();
    if !degenerate.is_empty() {
        warn!(
            "{} grid directions are indistinguishable from the masked span; rows zeroed",
            degenerate.len()
        );
    }
    Ok(SpatialFilter {
        weights,
        masked: masked.to_vec(),
        stage: FilterStage::Iterated,
        manifold_fingerprint: manifold.fingerprint,
        degenerate,
    })
}

/// Final filter for a candidate set: rows outside the set null every
/// candidate; the row of each candidate nulls all the other candidates.
pub fn final_filter(manifold: &ManifoldMatrix, candidates: &[usize]) -> Result<SpatialFilter> {
    let mut filter = masked_filter(manifold, candidates)?;
    filter.stage = FilterStage::Final;
    for (pos, &i) in candidates.iter().enumerate() {
        let others: Vec<usize> = candidates
            .iter()
            .enumerate()
            .filter(|&(p, _)| p != pos)
            .map(|(_, &k)| k)
            .collect();
        let q = null_space_of_adjoint(&manifold.columns(&others));
        let bad = project_rows(manifold, &q, &[i], &mut filter.weights);
        if !bad.is_empty() {
            warn!("candidate direction {i} is degenerate against the other candidates");
            filter.degenerate.extend(bad);
        }
    }
    Ok(filter)
}

/// Interference statistics of the weight matrix `C = B A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrixStats {
    pub q: f64,
    /// Per-row worst off-diagonal magnitude; zero for excluded rows.
    pub q_i: Vec<f64>,
    pub excluded: Vec<usize>,
}

/// `q_i = max_{j != i} |c_ij|` and `q = max_i q_i`, skipping excluded rows and columns.
pub fn weight_stats(filter: &SpatialFilter, manifold: &ManifoldMatrix, excluded: &[usize]) -> Result<WeightMatrixStats> {
    if filter.sensors() != manifold.sensors() {
        return Err(DoaError::ShapeMismatch(format!(
            "filter has {} columns, manifold has {} sensors",
            filter.sensors(),
            manifold.sensors()
        )));
    }
    let r = filter.directions();
    let m = filter.sensors();
    let mut skip = vec![false; manifold.directions()];
    for &e in excluded {
        if e < skip.len() {
            skip[e] = true;
        }
    }
    // contiguous copies: rows of B and columns of A
    let b_rows = filter.weights.transpose();
    let b_rows = b_rows.as_slice();
    let a_cols = manifold.entries.as_slice();
    let mut q_i = vec![0.0; r];
    for i in 0..r {
        if skip.get(i).copied().unwrap_or(false) {
            continue;
        }
        let bi = &b_rows[i * m..(i + 1) * m];
        let mut worst = 0.0f64;
        for j in 0..manifold.directions() {
            if j == i || skip[j] {
                continue;
            }
            let aj = &a_cols[j * m..(j + 1) * m];
            let c: C64 = bi.iter().zip(aj).map(|(b, a)| b * a).sum();
            worst = worst.max(c.norm_sqr());
        }
        q_i[i] = worst.sqrt();
    }
    let q = q_i.iter().copied().fold(0.0, f64::max);
    Ok(WeightMatrixStats {
        q,
        q_i,
        excluded: excluded.to_vec(),
    })
}

/// Same statistics from an explicit weight matrix.
pub fn weight_stats_from_matrix(c: &CMatrix, excluded: &[usize]) -> WeightMatrixStats {
    let (r, cols) = c.shape();
    let mut q_i = vec![0.0; r];
    for (i, qi) in q_i.iter_mut().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        *qi = (0..cols)
            .filter(|&j| j != i && !excluded.contains(&j))
            .map(|j| c[(i, j)].norm())
            .fold(0.0, f64::max);
    }
    WeightMatrixStats {
        q: q_i.iter().copied().fold(0.0, f64::max),
        q_i,
        excluded: excluded.to_vec(),
    }
}

/// Nonnegative power per grid direction, averaged over snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSpectrum {
    pub power: Vec<f64>,
    pub grid: GridSpec,
    pub snapshots_averaged: usize,
}

impl SpatialSpectrum {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest power outside `skip`; ties go to the lowest index.
    pub fn argmax_excluding(&self, skip: &[usize]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &p) in self.power.iter().enumerate() {
            if skip.contains(&i) || p.is_nan() {
                continue;
            }
            match best {
                Some((_, bp)) if p <= bp => {}
                _ => best = Some((i, p)),
            }
        }
        best
    }

    pub fn argmax(&self) -> Option<(usize, f64)> {
        self.argmax_excluding(&[])
    }

    /// Median power over the directions not in `skip`.
    pub fn median_excluding(&self, skip: &[usize]) -> f64 {
        let mut vals: Vec<f64> = self
            .power
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, &p)| p)
            .collect();
        if vals.is_empty() {
            return 0.0;
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        let n = vals.len();
        if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        }
    }

    /// The `count` strongest circular local maxima, strongest first.
    pub fn peaks(&self, count: usize) -> Vec<usize> {
        let r = self.power.len();
        if r == 0 {
            return Vec::new();
        }
        let mut local: Vec<usize> = (0..r)
            .filter(|&i| {
                let p = self.power[i];
                let prev = self.power[(i + r - 1) % r];
                let next = self.power[(i + 1) % r];
                r == 1 || (p > prev && p >= next)
            })
            .collect();
        local.sort_by(|&a, &b| {
            self.power[b]
                .partial_cmp(&self.power[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        local.truncate(count);
        local
    }

    /// Spectrum CSV: `angle_deg,power`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "angle_deg,power")?;
        for (i, p) in self.power.iter().enumerate() {
            // strip the rounding of index * delta so angles print as 180.2, not 180.20000000000002
            let angle = (self.grid.angle_deg(i) * 1e9).round() / 1e9;
            writeln!(writer, "{angle},{p}")?;
        }
        Ok(())
    }
}

/// `power[i] = (1/T) sum_t |b_i x_t|^2`.
pub fn spectrum(filter: &SpatialFilter, x: &CMatrix, grid: &GridSpec) -> Result<SpatialSpectrum> {
    if filter.sensors() != x.nrows() {
        return Err(DoaError::ShapeMismatch(format!(
            "filter expects {} sensors, snapshots have {} rows",
            filter.sensors(),
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(DoaError::InvalidArgument("no snapshots".into()));
    }
    let t = x.ncols();
    let y = &filter.weights * x;
    let power = (0..y.nrows())
        .map(|i| y.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() / t as f64)
        .collect();
    Ok(SpatialSpectrum {
        power,
        grid: *grid,
        snapshots_averaged: t,
    })
}

/// Stopping threshold on the peak power of the iterated spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `AUTO_THRESHOLD_FACTOR` x median of the current spectrum.
    Auto,
    Fixed(f64),
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfnsConfig {
    /// Maximum number of masking iterations; defaults to `known_k` or `min(M-1, 15)`.
    pub max_iterations: Option<usize>,
    pub threshold: Threshold,
    /// If set, iterate exactly this many times (unless overridden) without a threshold
    /// and report the `K` strongest candidates.
    pub known_k: Option<usize>,
    /// A candidate is reported when its final power is at least `contrast` times the
    /// median of the final spectrum.
    pub contrast: f64,
    /// ... and at least `gamma` times the strongest candidate's power.
    pub gamma: f64,
    /// Compute `q` of every intermediate filter (costs R^2 M per iteration).
    pub track_q: bool,
}

impl Default for SsfnsConfig {
    fn default() -> Self {
        Self {
            max_iterations: None,
            threshold: Threshold::Auto,
            known_k: None,
            contrast: DEFAULT_CONTRAST,
            gamma: 0.0,
            track_q: false,
        }
    }
}

impl SsfnsConfig {
    pub fn with_known_k(k: usize) -> Self {
        Self {
            known_k: Some(k),
            ..Self::default()
        }
    }

    pub fn iteration_limit(&self, sensors: usize) -> usize {
        self.max_iterations
            .or(self.known_k)
            .unwrap_or_else(|| sensors.saturating_sub(1).min(15))
    }

    fn effective_threshold(&self) -> Threshold {
        if self.known_k.is_some() {
            Threshold::Disabled
        } else {
            self.threshold
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Direction added to the mask at this iteration.
    pub index: usize,
    /// Its power in the spectrum it was picked from.
    pub peak: f64,
    /// `q` of the filter that produced that spectrum (NaN when not tracked).
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct SsfnsResult {
    /// Candidate directions in the order found.
    pub candidates: Vec<usize>,
    pub final_filter: SpatialFilter,
    pub spectrum: SpatialSpectrum,
    /// Reported source directions, ascending.
    pub estimated: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    IterationLimit,
    BelowThreshold,
    Exhausted,
}

/// Run the full estimator on snapshots `x` (M x T).
pub fn run_ssfns(manifold: &ManifoldMatrix, x: &CMatrix, config: &SsfnsConfig) -> Result<SsfnsResult> {
    let m = manifold.sensors();
    if x.nrows() != m {
        return Err(DoaError::ShapeMismatch(format!(
            "snapshots have {} rows, manifold has {m} sensors",
            x.nrows()
        )));
    }
    let limit = config.iteration_limit(m);
    if limit >= m {
        return Err(DoaError::InvalidArgument(format!(
            "iteration limit {limit} must be below the sensor count {m}"
        )));
    }
    if let Threshold::Fixed(p) = config.threshold {
        if !(p >= 0.0) {
            return Err(DoaError::InvalidArgument(format!("threshold must be nonnegative, got {p}")));
        }
    }
    let grid = manifold.grid;

    let mut filter = preliminary_filter(manifold);
    let mut current = spectrum(&filter, x, &grid)?;
    let initial_peak = current.max();
    let mut masked: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::IterationLimit;

    for t in 1..=limit {
        let skip: Vec<usize> = masked.iter().chain(&filter.degenerate).copied().collect();
        let Some((best, peak)) = current.argmax_excluding(&skip) else {
            if t == 1 {
                return Err(DoaError::EmptySpectrum);
            }
            stop_reason = StopReason::Exhausted;
            break;
        };
        if !(peak > EXHAUSTED_REL * initial_peak) || peak == 0.0 {
            stop_reason = StopReason::Exhausted;
            break;
        }
        let threshold = match config.effective_threshold() {
            Threshold::Auto => AUTO_THRESHOLD_FACTOR * current.median_excluding(&skip),
            Threshold::Fixed(p) => p,
            Threshold::Disabled => f64::NEG_INFINITY,
        };
        if peak < threshold {
            stop_reason = StopReason::BelowThreshold;
            break;
        }
        let q = if config.track_q {
            weight_stats(&filter, manifold, &masked)?.q
        } else {
            f64::NAN
        };
        debug!("iteration {t}: masking {best} (peak {peak:.4e}, q {q:.4})");
        trace.push(IterationRecord { index: best, peak, q });
        masked.push(best);
        filter = masked_filter(manifold, &masked)?;
        current = spectrum(&filter, x, &grid)?;
    }

    let final_filter = final_filter(manifold, &masked)?;
    let final_spectrum = spectrum(&final_filter, x, &grid)?;
    let estimated = select_sources(&final_spectrum, &masked, &final_filter.degenerate, config);
    Ok(SsfnsResult {
        candidates: masked,
        final_filter,
        spectrum: final_spectrum,
        estimated,
        trace,
        stop_reason,
    })
}

/// Pick the reported sources out of the candidate set using the final spectrum.
fn select_sources(spec: &SpatialSpectrum, candidates: &[usize], degenerate: &[usize], config: &SsfnsConfig) -> Vec<usize> {
    let usable: Vec<usize> = candidates.iter().copied().filter(|i| !degenerate.contains(i)).collect();
    let top = usable.iter().map(|&i| spec.power[i]).fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    let mut chosen: Vec<usize> = if let Some(k) = config.known_k {
        let mut ranked = usable.clone();
        ranked.sort_by(|&a, &b| spec.power[b].total_cmp(&spec.power[a]).then(a.cmp(&b)));
        ranked.truncate(k);
        ranked
    } else {
        let floor = spec.median_excluding(degenerate);
        usable
            .into_iter()
            .filter(|&i| {
                let p = spec.power[i];
                p >= config.contrast * floor && p >= config.gamma * top && p > EXHAUSTED_REL.sqrt() * top
            })
            .collect()
    };
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, LayoutKind};
    use crate::manifold::{build_manifold, WaveConfig};
    use crate::scenesim::{simulate_scene, NoiseLevel};
    use approx::assert_abs_diff_eq;

    fn manifold(m: usize, delta: f64, seed: u64) -> ManifoldMatrix {
        let g = generate(LayoutKind::UniformRandom2d, m, 8000.0, seed).unwrap();
        build_manifold(&g, &WaveConfig::default(), &GridSpec::new(delta, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn preliminary_single_sensor() {
        let a = manifold(1, 1.0, 0);
        let f = preliminary_filter(&a);
        for i in 0..a.directions() {
            let b = f.weights[(i, 0)];
            assert_abs_diff_eq!((b - a.entries[(0, i)].conj()).norm(), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(b.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn preliminary_moduli_are_one_over_m() {
        let a = manifold(16, 1.0, 1);
        let f = preliminary_filter(&a);
        for z in f.weights.iter() {
            assert_abs_diff_eq!(z.norm(), 1.0 / 16.0, epsilon = 1e-15);
        }
        assert!(f.constraint_residuals(&a).within(1e-9));
        // matched filter on an ideal manifold
        let matched = a.entries.adjoint() / C64::new(16.0, 0.0);
        assert!((&f.weights - matched).norm() < 1e-12);
    }

    #[test]
    fn empty_mask_is_matched_filter() {
        let a = manifold(8, 2.0, 2);
        let f = masked_filter(&a, &[]).unwrap();
        let matched = a.entries.adjoint() / C64::new(8.0, 0.0);
        assert!((&f.weights - matched).norm() < 1e-12);
        assert!(f.degenerate.is_empty());
    }

    #[test]
    fn masked_filter_nulls_and_unit_gain() {
        let a = manifold(12, 1.0, 3);
        let mask = [17, 200, 301];
        let f = masked_filter(&a, &mask).unwrap();
        let res = f.constraint_residuals(&a);
        assert!(res.within(1e-9), "{res:?}");
        for &k in &mask {
            assert!(f.weights.row(k).iter().all(|z| z.norm() == 0.0 || z.norm() < 1e-12));
        }
        // direct check of the null constraints
        for i in 0..a.directions() {
            for &k in &mask {
                let c = (f.weights.row(i) * a.entries.column(k))[(0, 0)];
                assert!(c.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn masking_twice_is_idempotent() {
        let a = manifold(10, 2.0, 4);
        let f1 = masked_filter(&a, &[5, 90]).unwrap();
        let f2 = masked_filter(&a, &[5, 90, 90]).unwrap();
        assert!((&f1.weights - &f2.weights).norm() < 1e-10 * f1.weights.norm());
    }

    #[test]
    fn mask_too_large() {
        let a = manifold(4, 10.0, 5);
        assert!(matches!(
            masked_filter(&a, &[0, 1, 2, 3]),
            Err(DoaError::NullspaceRank { masked: 4, sensors: 4 })
        ));
    }

    #[test]
    fn final_filter_constraints() {
        let a = manifold(16, 1.0, 6);
        let cands = [10, 100, 250, 300];
        let f = final_filter(&a, &cands).unwrap();
        assert_eq!(f.stage, FilterStage::Final);
        assert!(f.constraint_residuals(&a).within(1e-9));
        for &i in &cands {
            let gain = (f.weights.row(i) * a.entries.column(i))[(0, 0)];
            assert_abs_diff_eq!((gain - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn weight_stats_examples() {
        let eye = CMatrix::identity(5, 5);
        assert_eq!(weight_stats_from_matrix(&eye, &[]).q, 0.0);
        let c = CMatrix::from_fn(3, 3, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.2, 0.0) });
        assert_abs_diff_eq!(weight_stats_from_matrix(&c, &[]).q, 0.2, epsilon = 1e-15);
        let mut c2 = c.clone();
        c2[(0, 2)] = C64::new(0.0, 0.9);
        assert_abs_diff_eq!(weight_stats_from_matrix(&c2, &[]).q, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(weight_stats_from_matrix(&c2, &[2]).q, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn weight_stats_matches_explicit_product() {
        let a = manifold(8, 5.0, 7);
        let f = masked_filter(&a, &[3]).unwrap();
        let c = &f.weights * &a.entries;
        let direct = weight_stats_from_matrix(&c, &[3]);
        let fast = weight_stats(&f, &a, &[3]).unwrap();
        assert_abs_diff_eq!(direct.q, fast.q, epsilon = 1e-12);
        for (x, y) in direct.q_i.iter().zip(&fast.q_i) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectrum_averages_snapshots() {
        let a = manifold(8, 2.0, 8);
        let f = preliminary_filter(&a);
        let scene = simulate_scene(&a, &[20], 1, NoiseLevel::SnrDb(10.0), false, 1).unwrap();
        let x1 = scene.received.clone();
        let mut x2 = CMatrix::zeros(8, 2);
        x2.set_column(0, &x1.column(0));
        x2.set_column(1, &x1.column(0));
        let s1 = spectrum(&f, &x1, &a.grid).unwrap();
        let s2 = spectrum(&f, &x2, &a.grid).unwrap();
        assert_eq!(s2.snapshots_averaged, 2);
        for (p, q) in s1.power.iter().zip(&s2.power) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-15 * p.max(1.0));
        }
        let y = &f.weights * &x1;
        for (i, p) in s1.power.iter().enumerate() {
            assert_abs_diff_eq!(*p, y[(i, 0)].norm_sqr(), epsilon = 1e-15);
        }
    }

    #[test]
    fn spectrum_scales_with_amplitude() {
        let a = manifold(8, 2.0, 9);
        let f = masked_filter(&a, &[44]).unwrap();
        let scene = simulate_scene(&a, &[20, 100], 3, NoiseLevel::SnrDb(5.0), false, 2).unwrap();
        let alpha = C64::new(0.5, -1.5);
        let base = spectrum(&f, &scene.received, &a.grid).unwrap();
        let scaled = spectrum(&f, &(&scene.received * alpha), &a.grid).unwrap();
        for (p, q) in base.power.iter().zip(&scaled.power) {
            assert_abs_diff_eq!(*q, alpha.norm_sqr() * p, epsilon = 1e-12 * q.max(1.0));
        }
        assert_eq!(base.argmax().unwrap().0, scaled.argmax().unwrap().0);
    }

    #[test]
    fn argmax_tie_goes_to_lowest_index() {
        let spec = SpatialSpectrum {
            power: vec![1.0, 3.0, 2.0, 3.0],
            grid: GridSpec::new(90.0, 0.0).unwrap(),
            snapshots_averaged: 1,
        };
        assert_eq!(spec.argmax(), Some((1, 3.0)));
        assert_eq!(spec.argmax_excluding(&[1]), Some((3, 3.0)));
        assert_eq!(spec.median_excluding(&[]), 2.5);
        assert_eq!(spec.peaks(2), vec![1, 3]);
    }

    #[test]
    fn noise_free_recovery_small() {
        let a = manifold(16, 1.0, 10);
        let truth = [40, 130, 250];
        let scene = simulate_scene(&a, &truth, 1, NoiseLevel::Off, false, 3).unwrap();
        let res = run_ssfns(&a, &scene.received, &SsfnsConfig::default()).unwrap();
        assert_eq!(res.stop_reason, StopReason::Exhausted);
        let mut found = res.candidates.clone();
        found.sort_unstable();
        assert_eq!(found, truth);
        assert_eq!(res.estimated, truth);
        for (k, &i) in scene.sources.indices.iter().enumerate() {
            let p = scene.sources.waveforms[(k, 0)].norm_sqr();
            assert_abs_diff_eq!(res.spectrum.power[i], p, epsilon = 1e-9 * p);
        }
    }

    #[test]
    fn known_k_limits_iterations() {
        let a = manifold(16, 1.0, 11);
        let scene = simulate_scene(&a, &[40, 130], 1, NoiseLevel::SnrDb(20.0), false, 3).unwrap();
        let res = run_ssfns(&a, &scene.received, &SsfnsConfig::with_known_k(2)).unwrap();
        assert_eq!(res.candidates.len(), 2);
        assert_eq!(res.estimated, vec![40, 130]);
    }

    #[test]
    fn iteration_limit_must_be_below_sensor_count() {
        let a = manifold(4, 10.0, 12);
        let x = CMatrix::from_element(4, 1, C64::new(1.0, 0.0));
        let cfg = SsfnsConfig {
            max_iterations: Some(4),
            ..SsfnsConfig::default()
        };
        assert!(run_ssfns(&a, &x, &cfg).is_err());
        assert!(run_ssfns(&a, &CMatrix::zeros(3, 1), &SsfnsConfig::default()).is_err());
    }

    #[test]
    fn fixed_threshold_stops_early() {
        let a = manifold(16, 1.0, 13);
        let scene = simulate_scene(&a, &[40], 1, NoiseLevel::SnrDb(20.0), false, 3).unwrap();
        let cfg = SsfnsConfig {
            threshold: Threshold::Fixed(1e9),
            ..SsfnsConfig::default()
        };
        let res = run_ssfns(&a, &scene.received, &cfg).unwrap();
        assert!(res.candidates.is_empty());
        assert_eq!(res.stop_reason, StopReason::BelowThreshold);
        assert!(res.estimated.is_empty());
    }
}
