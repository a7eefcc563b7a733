//! Geometric covariance of the SIFT detector and descriptor on textured
//! fixtures.

use vcd_core::fixtures::textured;
use vcd_core::sift::{build_scale_space, detect_keypoints, extract_sift, SiftParams};
use vcd_core::Feature;

fn cosine(a: &Feature, b: &Feature) -> f64 {
    a.descriptor
        .values()
        .iter()
        .zip(b.descriptor.values())
        .map(|(x, y)| (*x as f64) * (*y as f64))
        .sum::<f64>()
        / (a.descriptor.norm() * b.descriptor.norm())
}

#[test]
fn textured_fixture_has_at_least_fifty_keypoints() {
    for seed in 0..3 {
        let n = extract_sift(&textured(256, 256, seed), &SiftParams::default())
            .unwrap()
            .len();
        assert!(n >= 50, "seed {seed}: {n} keypoints");
    }
}

#[test]
fn extraction_is_deterministic() {
    let img = textured(128, 96, 4);
    let p = SiftParams::default();
    assert_eq!(extract_sift(&img, &p).unwrap(), extract_sift(&img, &p).unwrap());
}

// Odd sides keep every octave's sampling grid aligned under rotation.
#[test]
fn quarter_turn_maps_keypoints_and_preserves_descriptors() {
    let p = SiftParams::default();
    let img = textured(257, 257, 7);
    let side = img.height() as f64;
    let base = extract_sift(&img, &p).unwrap();
    let rotated = extract_sift(&img.rotate90(), &p).unwrap();
    assert!(base.len() >= 50);

    let mut matched = 0;
    for f in &base {
        let (ex, ey) = (side - 1.0 - f.keypoint.y, f.keypoint.x);
        let best = rotated
            .iter()
            .filter(|g| {
                (g.keypoint.x - ex).hypot(g.keypoint.y - ey) <= 1.5
                    && (g.keypoint.scale / f.keypoint.scale - 1.0).abs() < 0.05
            })
            .map(|g| cosine(f, g))
            .fold(f64::NEG_INFINITY, f64::max);
        if best >= 0.9 {
            matched += 1;
        }
    }
    assert!(
        matched as f64 >= 0.95 * base.len() as f64,
        "{matched} of {} keypoints matched",
        base.len()
    );
}

#[test]
fn half_resolution_copy_halves_keypoint_scales() {
    let p = SiftParams::default();
    for seed in 0..3 {
        let img = textured(257, 257, seed);
        let full = detect_keypoints(&build_scale_space(&img, &p).unwrap());
        let small = img.downsample2();
        let (w, h) = (small.width() as f64, small.height() as f64);
        let margin = 10.0;
        let interior: Vec<_> = detect_keypoints(&build_scale_space(&small, &p).unwrap())
            .into_iter()
            .filter(|k| k.x > margin && k.y > margin && k.x < w - margin && k.y < h - margin)
            .collect();
        assert!(!interior.is_empty());
        let hits = interior
            .iter()
            .filter(|k| {
                full.iter().any(|q| {
                    (q.x / 2.0 - k.x).hypot(q.y / 2.0 - k.y) <= 1.0
                        && (q.scale / (2.0 * k.scale) - 1.0).abs() < 0.25
                })
            })
            .count();
        assert!(
            hits as f64 >= 0.75 * interior.len() as f64,
            "seed {seed}: {hits} of {}",
            interior.len()
        );
    }
}
