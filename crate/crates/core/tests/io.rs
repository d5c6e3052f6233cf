use std::fs::File;

use doalab_core::geometry::{generate, load_geometry_csv, LayoutKind};
use doalab_core::manifold::{build_manifold, GridSpec, WaveConfig};
use doalab_core::scenesim::{load_snapshots_csv, simulate_scene, write_snapshots_csv, NoiseLevel};
use doalab_core::DoaError;

#[test]
fn geometry_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("array.csv");
    let g = generate(LayoutKind::NormalRandom2d, 12, 900.0, 4).unwrap();
    g.write_csv(File::create(&path).unwrap()).unwrap();
    let back = load_geometry_csv(&path).unwrap();
    assert_eq!(back.layout, LayoutKind::External);
    assert_eq!(back.len(), 12);
    for (a, b) in g.sensors.iter().zip(&back.sensors) {
        assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
    }
}

#[test]
fn snapshots_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let g = generate(LayoutKind::UniformCircle, 6, 60.0, 0).unwrap();
    let a = build_manifold(&g, &WaveConfig::default(), &GridSpec::new(1.0, 0.0).unwrap()).unwrap();
    let scene = simulate_scene(&a, &[10, 200], 7, NoiseLevel::SnrDb(10.0), false, 2).unwrap();
    write_snapshots_csv(&scene.received, File::create(&path).unwrap()).unwrap();
    let x = load_snapshots_csv(&path, Some(6)).unwrap();
    assert_eq!(x.shape(), (6, 7));
    assert!((x - &scene.received).norm() < 1e-9 * scene.received.norm());
    assert!(matches!(load_snapshots_csv(&path, Some(8)), Err(DoaError::ShapeMismatch(_) | DoaError::RaggedRows(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_geometry_csv(dir.path().join("nope.csv")), Err(DoaError::Io(_))));
}
