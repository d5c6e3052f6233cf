//! Brute-force reference implementations used to check `doalab-core`.
//!
//! Everything here works on plain `Vec<Vec<C64>>` with explicit loops so it
//! shares no code path with the library under test.

#![allow(clippy::needless_range_loop)]

use doalab_core::geometry::{generate, LayoutKind};
use doalab_core::manifold::{build_manifold, GridSpec, ManifoldMatrix, WaveConfig};
use doalab_core::{CMatrix, C64};

pub type Rows = Vec<Vec<C64>>;

pub fn manifold(kind: LayoutKind, sensors: usize, aperture: f64, delta: f64, seed: u64) -> ManifoldMatrix {
    let geometry = generate(kind, sensors, aperture, seed).expect("layout");
    let grid = GridSpec::new(delta, 0.0).expect("grid");
    build_manifold(&geometry, &WaveConfig::default(), &grid).expect("manifold")
}

pub fn rows_of(m: &CMatrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= rel * scale || (a - b).abs() < 1e-300
}

/// `C = B A` by triple loop; `b` is R x M, `a` is M x R.
pub fn weight_matrix(b: &Rows, a: &Rows) -> Rows {
    let r = b.len();
    let m = a.len();
    let cols = a[0].len();
    let mut c = vec![vec![C64::new(0.0, 0.0); cols]; r];
    for i in 0..r {
        for j in 0..cols {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..m {
                acc += b[i][k] * a[k][j];
            }
            c[i][j] = acc;
        }
    }
    c
}

pub fn apply(b: &Rows, x: &Rows) -> Rows {
    weight_matrix(b, x)
}

pub fn q_oracle(c: &Rows, excluded: &[usize]) -> f64 {
    let mut q = 0.0f64;
    for i in 0..c.len() {
        if excluded.contains(&i) {
            continue;
        }
        for j in 0..c[i].len() {
            if j != i && !excluded.contains(&j) {
                q = q.max(c[i][j].norm());
            }
        }
    }
    q
}

pub fn ssfa_oracle(b: &Rows, a: &Rows) -> f64 {
    let c = weight_matrix(b, a);
    let mut total = 0.0;
    for (i, row) in c.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            let e = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            total += (z - e).norm_sqr();
        }
    }
    total.sqrt()
}

fn column_norm_mean(y: &Rows) -> f64 {
    let t = y[0].len();
    let mut sum = 0.0;
    for col in 0..t {
        let mut e = 0.0;
        for row in y {
            e += row[col].norm_sqr();
        }
        sum += e.sqrt();
    }
    sum / t as f64
}

fn sub(mut y: Rows, s: &Rows) -> Rows {
    for (row, srow) in y.iter_mut().zip(s) {
        for (z, w) in row.iter_mut().zip(srow) {
            *z -= w;
        }
    }
    y
}

pub fn nsa_oracle(b: &Rows, n: &Rows) -> f64 {
    column_norm_mean(&apply(b, n))
}

/// `s` is the dense R x T source matrix.
pub fn esa_oracle(b: &Rows, a: &Rows, s: &Rows) -> f64 {
    let c = weight_matrix(b, a);
    column_norm_mean(&sub(apply(&c, s), s))
}

pub fn ca_oracle(b: &Rows, x: &Rows, s: &Rows) -> f64 {
    column_norm_mean(&sub(apply(b, x), s))
}

fn energy(y: &Rows) -> f64 {
    y.iter().flatten().map(|z| z.norm_sqr()).sum()
}

/// `(I, N, S)` mean energies.
pub fn energy_oracle(b: &Rows, a: &Rows, s: &Rows, n: &Rows, k: usize) -> (f64, f64, f64) {
    let r = b.len() as f64;
    let t = s[0].len() as f64;
    let c = weight_matrix(b, a);
    let i_bar = energy(&sub(apply(&c, s), s)) / (r * t);
    let n_bar = energy(&apply(b, n)) / (r * t);
    let s_bar = energy(s) / (k as f64 * t);
    (i_bar, n_bar, s_bar)
}

pub fn db(num: f64, den: f64) -> f64 {
    10.0 * (num / den).log10()
}

/// Ratio in dB of mean power on `truth` to mean power elsewhere.
pub fn cor_oracle(power: &[f64], truth: &[usize]) -> f64 {
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for (i, p) in power.iter().enumerate() {
        if truth.contains(&i) {
            on += p;
            n_on += 1;
        } else {
            off += p;
            n_off += 1;
        }
    }
    db(on / n_on as f64, off / n_off as f64)
}

pub fn spectrum_oracle(b: &Rows, x: &Rows) -> Vec<f64> {
    let t = x[0].len();
    b.iter()
        .map(|row| {
            let mut p = 0.0;
            for col in 0..t {
                let mut acc = C64::new(0.0, 0.0);
                for (k, w) in row.iter().enumerate() {
                    acc += w * x[k][col];
                }
                p += acc.norm_sqr();
            }
            p / t as f64
        })
        .collect()
}

/// Equal-modulus row of minimum modulus with `|b a| = 1`, found by searching
/// over the phases of a three-element row.
///
/// With `b_j = rho e^{i phi_j}` the gain constraint fixes `rho = 1 / |sum_j e^{i phi_j} a_j|`,
/// so the smallest `rho` maximizes that sum. `phi_0` is pinned and the other two
/// phases go through a coarse grid followed by a compass search. The global
/// phase is then chosen so that `b a` is real and positive.
pub fn qp_equal_modulus_row(a: &[C64; 3]) -> [C64; 3] {
    let objective = |p1: f64, p2: f64| {
        (a[0] + C64::from_polar(1.0, p1) * a[1] + C64::from_polar(1.0, p2) * a[2]).norm()
    };
    let steps = 180;
    let h = std::f64::consts::TAU / steps as f64;
    let (mut best, mut p1, mut p2) = (f64::NEG_INFINITY, 0.0, 0.0);
    for u in 0..steps {
        for v in 0..steps {
            let (x, y) = (u as f64 * h, v as f64 * h);
            let f = objective(x, y);
            if f > best {
                (best, p1, p2) = (f, x, y);
            }
        }
    }
    let mut step = h;
    while step > 1e-13 {
        let mut moved = false;
        for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let f = objective(p1 + dx, p2 + dy);
            if f > best {
                (best, p1, p2) = (f, p1 + dx, p2 + dy);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let rho = 1.0 / best;
    let mut b = [
        C64::new(rho, 0.0),
        C64::from_polar(rho, p1),
        C64::from_polar(rho, p2),
    ];
    let gain: C64 = (0..3).map(|j| b[j] * a[j]).sum();
    let fix = C64::from_polar(1.0, -gain.arg());
    for z in &mut b {
        *z *= fix;
    }
    b
}
