use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screwgrasp::geometry::{oriented_box_pca, PointCloud, RigidTransform, Vec3};

/// Points on the surface of an axis-aligned box `[0, ext]`.
fn box_surface(ext: Vec3, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut p = Vec3::new(
                rng.random_range(0.0..1.0) * ext.x,
                rng.random_range(0.0..1.0) * ext.y,
                rng.random_range(0.0..1.0) * ext.z,
            );
            let k = rng.random_range(0..3);
            p[k] = ext[k] * rng.random_range(0..2) as f64;
            p
        })
        .collect()
}

/// `box_surface` closed under the two in-plane reflections of the box, so the
/// footprint covariance is exactly diagonal.
fn symmetric_box_surface(ext: Vec3, n: usize, seed: u64) -> Vec<Vec3> {
    box_surface(ext, n, seed)
        .into_iter()
        .flat_map(|p| {
            let (mx, my) = (ext.x - p.x, ext.y - p.y);
            [p, Vec3::new(mx, p.y, p.z), Vec3::new(p.x, my, p.z), Vec3::new(mx, my, p.z)]
        })
        .collect()
}

fn cloud(pts: Vec<Vec3>) -> PointCloud {
    PointCloud::new(pts, "world").unwrap()
}

/// Smallest footprint area over rectangles rotated in 1 degree steps.
fn brute_force_min_area(pts: &[Vec3]) -> f64 {
    (0..180)
        .map(|deg| {
            let t = (deg as f64).to_radians();
            let (s, c) = t.sin_cos();
            let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in pts {
                let (u, v) = (c * p.x + s * p.y, -s * p.x + c * p.y);
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            (u1 - u0) * (v1 - v0)
        })
        .fold(f64::INFINITY, f64::min)
}

fn footprint_area(h: &Vec3) -> f64 {
    4.0 * h.x * h.y
}

#[test]
fn aligned_box_recovers_world_axes() {
    let ext = Vec3::new(0.2, 0.06, 0.1);
    let pts = symmetric_box_surface(ext, 1000, 1);
    let fit = oriented_box_pca(&cloud(pts), &Vec3::z()).unwrap();
    assert!(!fit.fell_back);
    let r = fit.bbox.rotation;
    for k in 0..3 {
        let col = r.column(k);
        let largest = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!((largest - 1.0).abs() < 1e-9, "axis {k} not aligned: {col:?}");
    }
    let vol = fit.bbox.half_extents.iter().product::<f64>() * 8.0;
    assert!((vol - ext.iter().product::<f64>()).abs() < 1e-9 * vol);
}

#[test]
fn rotated_box_footprint_is_near_minimal() {
    let ext = Vec3::new(0.2, 0.06, 0.1);
    let rot = RigidTransform::from_axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_4, Vec3::zeros()).unwrap();
    let pts: Vec<Vec3> = symmetric_box_surface(ext, 1000, 2).iter().map(|p| rot.apply_point(p)).collect();
    let fit = oriented_box_pca(&cloud(pts.clone()), &Vec3::z()).unwrap();
    let area = footprint_area(&fit.bbox.half_extents);
    let (mut lo, mut hi) = (Vec3::repeat(f64::MAX), Vec3::repeat(f64::MIN));
    for p in &pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let aabb = (hi.x - lo.x) * (hi.y - lo.y);
    assert!(area <= aabb);
    let best = brute_force_min_area(&pts);
    assert!(area <= 1.02 * best, "pca {area} vs sweep {best}");
}

#[test]
fn mirrored_cloud_keeps_extents() {
    let ext = Vec3::new(0.18, 0.07, 0.1);
    let rot = RigidTransform::from_axis_angle(Vec3::z(), 0.4, Vec3::zeros()).unwrap();
    let pts: Vec<Vec3> = box_surface(ext, 2000, 3).iter().map(|p| rot.apply_point(p)).collect();
    let mirrored: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p.x, -p.y, p.z)).collect();
    let a = oriented_box_pca(&cloud(pts), &Vec3::z()).unwrap().bbox;
    let b = oriented_box_pca(&cloud(mirrored), &Vec3::z()).unwrap().bbox;
    assert!((a.half_extents - b.half_extents).norm() < 1e-9);
    assert!((b.rotation.determinant() - 1.0).abs() < 1e-12);
    assert!((b.rotation.column(2) - Vec3::z()).norm() < 1e-12);
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    RigidTransform::from_axis_angle(axis, rng.random_range(-3.0..3.0), Vec3::zeros())
        .map(|t| t.rotation)
        .unwrap_or_else(|_| Matrix3::identity())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn local_coordinates_are_rigid_invariant(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ext = Vec3::new(rng.random_range(0.05..0.3), rng.random_range(0.02..0.1), rng.random_range(0.02..0.2));
        let n = rng.random_range(50..500);
        let pts = box_surface(ext, n, seed);
        let t = RigidTransform::new(random_rotation(&mut rng), Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let moved: Vec<Vec3> = pts.iter().map(|p| t.apply_point(p)).collect();
        let a = oriented_box_pca(&cloud(pts.clone()), &Vec3::z()).unwrap().bbox;
        let b = oriented_box_pca(&cloud(moved.clone()), &t.apply_vector(&Vec3::z())).unwrap().bbox;
        prop_assert!((a.half_extents - b.half_extents).norm() < 1e-9);
        for (p, q) in pts.iter().zip(&moved) {
            let la = a.rotation.transpose() * (p - a.center);
            let lb = b.rotation.transpose() * (q - b.center);
            prop_assert!((la - lb).norm() < 1e-9, "{la:?} vs {lb:?}");
        }
    }
}
