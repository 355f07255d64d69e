//! Plane-parameter maps to depth conversion.

use crate::camera::CameraIntrinsics;
use crate::img::{ImageRgb, ScalarMap};
use crate::num::Real;

/// Denominators below this magnitude mark the pixel invalid.
pub const DENOM_EPS: f64 = 1e-6;

/// Convert a normal map and plane-distance map into a depth map:
/// D(p) = distance(p) / dot(normal(p), K^-1 p~), with p~ the homogeneous
/// pixel coordinate at the pixel center. Pixels with a near-zero denominator
/// are flagged invalid rather than rejected.
pub fn depth_from_plane<T: Real>(
    normal: &ImageRgb<T>,
    distance: &ScalarMap<T>,
    k: &CameraIntrinsics<T>,
) -> (ScalarMap<T>, Vec<bool>) {
    assert_eq!(normal.width, distance.width);
    assert_eq!(normal.height, distance.height);
    let (w, h) = (normal.width, normal.height);
    let mut depth = ScalarMap::new(w, h);
    let mut valid = vec![false; (w * h) as usize];
    let half = T::lit(0.5);
    let eps = T::lit(DENOM_EPS);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let n = normal.data[i];
            let dir = k.unproject_dir(T::from_u32(x).unwrap() + half, T::from_u32(y).unwrap() + half);
            let denom = n[0] * dir.x + n[1] * dir.y + n[2] * dir.z;
            if denom.abs() >= eps {
                depth.data[i] = distance.data[i] / denom;
                valid[i] = true;
            }
        }
    }
    (depth, valid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(50.0, 50.0, 8.0, 8.0, 16, 16).unwrap()
    }

    #[test]
    fn axis_aligned_normal_at_principal_point_passes_distance_through() {
        let k = CameraIntrinsics::<f64>::new(50.0, 50.0, 8.5, 8.5, 17, 17).unwrap();
        let mut normal = ImageRgb::new(17, 17);
        normal.data.fill([0.0, 0.0, 1.0]);
        let distance = ScalarMap::filled(17, 17, 3.25);
        let (depth, valid) = depth_from_plane(&normal, &distance, &k);
        // Pixel (8,8) center sits exactly on the principal point.
        assert!(valid[(8 * 17 + 8) as usize]);
        assert_eq!(depth.at(8, 8), 3.25);
    }

    #[test]
    fn fronto_parallel_plane_recovers_constant_depth() {
        let k = camera();
        let z = 5.0;
        // Plane z = 5 seen with camera-facing normal (0,0,-1):
        // distance = dot(n, X) = -5 for every point on the plane.
        let mut normal = ImageRgb::new(16, 16);
        normal.data.fill([0.0, 0.0, -1.0]);
        let mut distance = ScalarMap::new(16, 16);
        for y in 0..16u32 {
            for x in 0..16u32 {
                distance.set(x, y, -z);
            }
        }
        let (depth, valid) = depth_from_plane(&normal, &distance, &k);
        for i in 0..valid.len() {
            assert!(valid[i]);
            assert!((depth.data[i] - z).abs() < 1e-9);
        }
    }

    #[test]
    fn tilted_plane_recovers_point_depths() {
        let k = camera();
        let n = nalgebra::Vector3::new(0.3, -0.2, -1.0).normalize();
        let d = -4.0;
        let mut normal = ImageRgb::new(16, 16);
        normal.data.fill([n.x, n.y, n.z]);
        let mut distance = ScalarMap::new(16, 16);
        distance.data.fill(d);
        let (depth, valid) = depth_from_plane(&normal, &distance, &k);
        for y in 0..16u32 {
            for x in 0..16u32 {
                let i = (y * 16 + x) as usize;
                if !valid[i] {
                    continue;
                }
                // The recovered camera-space point must lie on the plane.
                let dir = k.unproject_dir(x as f64 + 0.5, y as f64 + 0.5);
                let p = dir * depth.data[i];
                assert!((n.dot(&p) - d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn orthogonal_normal_marks_invalid() {
        let k = CameraIntrinsics::<f64>::new(50.0, 50.0, 8.5, 8.5, 17, 17).unwrap();
        let mut normal = ImageRgb::new(17, 17);
        // Orthogonal to the central ray (0,0,1).
        normal.data.fill([1.0, 0.0, 0.0]);
        let distance = ScalarMap::filled(17, 17, 1.0);
        let (_, valid) = depth_from_plane(&normal, &distance, &k);
        assert!(!valid[(8 * 17 + 8) as usize]);
    }
}
