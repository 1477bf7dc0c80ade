use panosplat::formats::*;
use panosplat_core::gaussians::{Splat, SplatSet};
use panosplat_core::sweep::DepthResult;
use panosplat_core::{DepthMap, ErpGrid, ErpImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn depth_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ErpGrid::new(32, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // values already representable in f32 survive exactly
    let data: Vec<f64> = (0..grid.len())
        .map(|_| rng.random_range(0.1f32..10.0) as f64)
        .collect();
    let depth = DepthMap::new(grid, data).unwrap();
    let result = DepthResult {
        depth: depth.clone(),
        confidence: (0..grid.len())
            .map(|_| rng.random::<f32>() as f64)
            .collect(),
    };
    let path = dir.path().join("d.sdpt");
    write_depth_result(&path, &result).unwrap();
    assert!(dir.path().join("d.confidence.sdpt").is_file());
    assert_eq!(read_depth_result(&path).unwrap(), result);

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"SDPT");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 32);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16);
    assert_eq!(bytes.len(), 12 + 4 * 32 * 16);
}

#[test]
fn corrupt_depth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.sdpt");
    let mut bytes = encode_depth(4, 2, &[1.0; 8]);
    bytes.pop();
    std::fs::write(&path, &bytes).unwrap();
    let err = read_depth(&path).unwrap_err().to_string();
    assert!(err.contains("bad.sdpt"), "{err}");
    std::fs::write(&path, b"NOPE\0\0\0\0\0\0\0\0").unwrap();
    assert!(read_depth(&path).is_err());
}

fn random_splats(n: usize, seed: u64) -> SplatSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SplatSet::from_splats(
        (0..n)
            .map(|_| {
                let q: [f64; 4] = core::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                Splat {
                    center: core::array::from_fn(|_| rng.random_range(-5.0..5.0)),
                    rotation: q.map(|v| v / norm),
                    scale: core::array::from_fn(|_| rng.random_range(0.001..0.1)),
                    opacity: rng.random(),
                    color: core::array::from_fn(|_| rng.random()),
                }
            })
            .collect(),
    )
}

#[test]
fn splat_files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.splt");
    let set = random_splats(500, 3);
    write_splats(&path, &set).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"SPLT");
    assert_eq!(bytes.len(), 8 + 500 * 14 * 4);
    let back = read_splats(&path).unwrap();
    assert_eq!(back.len(), 500);
    assert_eq!(encode_splats(&back), bytes);
    for (a, b) in back.splats().iter().zip(set.splats()) {
        assert_eq!(a.center[0], b.center[0] as f32 as f64);
        assert_eq!(a.opacity, b.opacity as f32 as f64);
    }
}

#[test]
fn empty_and_truncated_splat_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.splt");
    write_splats(&path, &SplatSet::default()).unwrap();
    assert!(read_splats(&path).unwrap().is_empty());
    let mut bytes = encode_splats(&random_splats(2, 0));
    bytes.truncate(bytes.len() - 4);
    std::fs::write(&path, bytes).unwrap();
    assert!(read_splats(&path).is_err());
}

#[test]
fn png_round_trip_is_exact_for_8_bit_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.png");
    let grid = ErpGrid::new(16, 8).unwrap();
    let img = ErpImage::from_fn(grid, 3, |x, y, px| {
        px[0] = x as f64 * 16.0 / 255.0;
        px[1] = y as f64 * 30.0 / 255.0;
        px[2] = 1.0;
    });
    write_png(&path, &img).unwrap();
    let back = read_png(&path).unwrap();
    for (a, b) in back.data().iter().zip(img.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn png_must_be_a_panorama() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sq.png");
    write_rgb8_png(&path, 8, 8, &[0; 8 * 8 * 3]).unwrap();
    assert!(read_png(&path).is_err());
}
