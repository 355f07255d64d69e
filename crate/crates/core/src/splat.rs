//! Gaussian primitive parameterization and camera-space EWA projection.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::num::Real;

/// Width of the per-Gaussian appearance embedding.
pub const EMBED_DIM: usize = 32;

/// Splats closer than this camera-space depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Splats whose projected mean is farther than this multiple of the image
/// diagonal from the image center are culled.
pub const FRUSTUM_DILATION: f64 = 1.3;
/// Low-pass floor added to the projected covariance diagonal (px^2).
pub const LOW_PASS_PX2: f64 = 0.3;

/// One anisotropic 3D Gaussian.
///
/// Optimizable parameters are stored unconstrained: scale through `exp`,
/// opacity through a sigmoid. The quaternion is kept unit by the optimizer
/// but every consumer normalizes it internally anyway.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat<T: Real> {
    pub mu: Vector3<T>,
    /// Rotation quaternion (w, x, y, z).
    pub rot: [T; 4],
    pub log_scale: Vector3<T>,
    pub opacity_logit: T,
    /// Base color in [0,1].
    pub base_color: [T; 3],
    /// Per-Gaussian appearance embedding.
    pub embedding: [T; EMBED_DIM],
}

impl<T: Real> Splat<T> {
    pub fn new(mu: Vector3<T>, base_color: [T; 3]) -> Self {
        Self {
            mu,
            rot: [T::one(), T::zero(), T::zero(), T::zero()],
            log_scale: Vector3::zeros(),
            opacity_logit: T::zero(),
            base_color,
            embedding: [T::zero(); EMBED_DIM],
        }
    }

    #[inline]
    pub fn scale(&self) -> Vector3<T> {
        self.log_scale.map(|v| v.exp())
    }

    #[inline]
    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    pub fn renormalize_rot(&mut self) {
        let n = quat_norm(&self.rot);
        if n > T::zero() {
            for c in &mut self.rot {
                *c /= n;
            }
        } else {
            self.rot = [T::one(), T::zero(), T::zero(), T::zero()];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|v| v.finite())
            && self.rot.iter().all(|v| v.finite())
            && self.log_scale.iter().all(|v| v.finite())
            && self.opacity_logit.finite()
            && self.base_color.iter().all(|v| v.finite())
            && self.embedding.iter().all(|v| v.finite())
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn quat_norm<T: Real>(q: &[T; 4]) -> T {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Rotation matrix of a quaternion (w, x, y, z); normalizes internally.
pub fn quat_to_matrix<T: Real>(q: &[T; 4]) -> Matrix3<T> {
    let n = quat_norm(q);
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let two = T::lit(2.0);
    Matrix3::new(
        T::one() - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        T::one() - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        T::one() - two * (x * x + y * y),
    )
}

/// Pull a gradient on the rotation matrix back to the raw quaternion,
/// including the internal normalization.
pub fn quat_backward<T: Real>(q: &[T; 4], d_rot: &Matrix3<T>) -> [T; 4] {
    let n = quat_norm(q);
    let u = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let (w, x, y, z) = (u[0], u[1], u[2], u[3]);
    let two = T::lit(2.0);

    // dR/d{w,x,y,z} for the unit-quaternion formula above.
    let dw = Matrix3::new(
        T::zero(),
        -two * z,
        two * y,
        two * z,
        T::zero(),
        -two * x,
        -two * y,
        two * x,
        T::zero(),
    );
    let dx = Matrix3::new(
        T::zero(),
        two * y,
        two * z,
        two * y,
        -two * two * x,
        -two * w,
        two * z,
        two * w,
        -two * two * x,
    );
    let dy = Matrix3::new(
        -two * two * y,
        two * x,
        two * w,
        two * x,
        T::zero(),
        two * z,
        -two * w,
        two * z,
        -two * two * y,
    );
    let dz = Matrix3::new(
        -two * two * z,
        -two * w,
        two * x,
        two * w,
        -two * two * z,
        two * y,
        two * x,
        two * y,
        T::zero(),
    );

    let dot = |m: &Matrix3<T>| {
        let mut s = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                s += d_rot[(i, j)] * m[(i, j)];
            }
        }
        s
    };
    let d_unit = [dot(&dw), dot(&dx), dot(&dy), dot(&dz)];

    // Through u = q / |q|: dq = (I - u u^T)/|q| * du.
    let mut proj = [T::zero(); 4];
    let udot = u[0] * d_unit[0] + u[1] * d_unit[1] + u[2] * d_unit[2] + u[3] * d_unit[3];
    for i in 0..4 {
        proj[i] = (d_unit[i] - u[i] * udot) / n;
    }
    proj
}

/// World-space covariance R S S^T R^T from unconstrained parameters.
pub fn build_covariance<T: Real>(log_scale: &Vector3<T>, rot: &[T; 4]) -> Matrix3<T> {
    let r = quat_to_matrix(rot);
    let s = log_scale.map(|v| v.exp());
    let d2 = Matrix3::from_diagonal(&Vector3::new(s.x * s.x, s.y * s.y, s.z * s.z));
    r * d2 * r.transpose()
}

/// A splat projected into one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected2D<T: Real> {
    pub mu2d: Vector2<T>,
    /// 2x2 image-space covariance including the low-pass floor.
    pub cov2d: Matrix2<T>,
    pub view_z: T,
    /// Splat plane normal in camera space (unit, oriented toward the camera).
    pub plane_normal: Vector3<T>,
    /// dot(plane_normal, camera-space mean).
    pub plane_distance: T,
}

/// Index of the smallest scale component, lowest index on ties.
pub fn min_scale_axis<T: Real>(s: &Vector3<T>) -> usize {
    let mut k = 0;
    if s.y < s[k] {
        k = 1;
    }
    if s.z < s[k] {
        k = 2;
    }
    k
}

/// Jacobian of the perspective projection at a camera-space point.
pub fn projection_jacobian<T: Real>(
    k: &CameraIntrinsics<T>,
    p: &Vector3<T>,
) -> nalgebra::Matrix2x3<T> {
    let inv_z = T::one() / p.z;
    let inv_z2 = inv_z * inv_z;
    nalgebra::Matrix2x3::new(
        k.fx * inv_z,
        T::zero(),
        -k.fx * p.x * inv_z2,
        T::zero(),
        k.fy * inv_z,
        -k.fy * p.y * inv_z2,
    )
}

/// Project a splat into a camera; `None` means culled.
pub fn project_gaussian<T: Real>(
    splat: &Splat<T>,
    pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
) -> Option<Projected2D<T>> {
    let p_cam = pose.to_camera(&splat.mu);
    if p_cam.z <= T::lit(NEAR_PLANE) {
        return None;
    }
    let mu2d = k.project(&p_cam);
    let max_dist = T::lit(FRUSTUM_DILATION) * k.image_diagonal();
    if (mu2d - k.center()).norm() > max_dist {
        return None;
    }

    let w = pose.rotation_matrix();
    let sigma = build_covariance(&splat.log_scale, &splat.rot);
    let sigma_cam = w * sigma * w.transpose();
    let j = projection_jacobian(k, &p_cam);
    let mut cov2d = j * sigma_cam * j.transpose();
    let floor = T::lit(LOW_PASS_PX2);
    cov2d[(0, 0)] += floor;
    cov2d[(1, 1)] += floor;

    let r = quat_to_matrix(&splat.rot);
    let axis = min_scale_axis(&splat.scale());
    let n_world = r.column(axis).into_owned();
    let mut plane_normal = w * n_world;
    if plane_normal.dot(&p_cam) > T::zero() {
        plane_normal = -plane_normal;
    }
    let plane_distance = plane_normal.dot(&p_cam);

    Some(Projected2D {
        mu2d,
        cov2d,
        view_z: p_cam.z,
        plane_normal,
        plane_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_quat(rng: &mut StdRng) -> [f64; 4] {
        let q = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = quat_norm(&q);
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    }

    #[test]
    fn identity_quaternion_unit_scale_gives_identity() {
        let cov = build_covariance(&Vector3::<f64>::zeros(), &[1.0, 0.0, 0.0, 0.0]);
        assert!((cov - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn axis_aligned_scales_square_on_the_diagonal() {
        let ls = Vector3::new(2.0f64.ln(), 0.0, 0.0);
        let cov = build_covariance(&ls, &[1.0, 0.0, 0.0, 0.0]);
        let expected = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        assert!((cov - expected).norm() < 1e-12);
    }

    #[test]
    fn eigenvalues_match_squared_scales() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let q = random_quat(&mut rng);
            let ls = Vector3::new(
                rng.random_range(-1.5..0.5),
                rng.random_range(-1.5..0.5),
                rng.random_range(-1.5..0.5),
            );
            let cov = build_covariance(&ls, &q);
            let mut eig: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
            let mut expect: Vec<f64> = ls.iter().map(|l| (2.0 * l).exp()).collect();
            eig.sort_by(|a, b| a.total_cmp(b));
            expect.sort_by(|a, b| a.total_cmp(b));
            for (e, x) in eig.iter().zip(expect.iter()) {
                assert!((e - x).abs() < 1e-10, "eigen {e} vs scale^2 {x}");
            }
        }
    }

    #[test]
    fn covariance_invariant_to_quaternion_sign() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let q = random_quat(&mut rng);
            let neg = [-q[0], -q[1], -q[2], -q[3]];
            let ls = Vector3::new(0.1, -0.4, 0.7);
            let a = build_covariance(&ls, &q);
            let b = build_covariance(&ls, &neg);
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn on_axis_splat_projects_to_principal_point() {
        let k = CameraIntrinsics::<f64>::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = CameraPose::identity();
        let splat = Splat::new(Vector3::new(0.0, 0.0, 5.0), [0.5; 3]);
        let p = project_gaussian(&splat, &pose, &k).unwrap();
        assert_eq!(p.mu2d, Vector2::new(32.0, 32.0));
        assert_eq!(p.view_z, 5.0);
    }

    #[test]
    fn splat_behind_camera_is_culled() {
        let k = CameraIntrinsics::<f64>::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = CameraPose::identity();
        let splat = Splat::new(Vector3::new(0.0, 0.0, -1.0), [0.5; 3]);
        assert!(project_gaussian(&splat, &pose, &k).is_none());
    }

    #[test]
    fn isotropic_splat_cov2d_matches_first_order_expansion() {
        let k = CameraIntrinsics::<f64>::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = CameraPose::identity();
        let sigma: f64 = 0.02;
        let z = 5.0;
        let mut splat = Splat::new(Vector3::new(0.1, -0.2, z), [0.5; 3]);
        splat.log_scale = Vector3::from_element(sigma.ln());
        let p = project_gaussian(&splat, &pose, &k).unwrap();
        let expected = (50.0 * sigma / z).powi(2);
        for i in 0..2 {
            let got = p.cov2d[(i, i)] - LOW_PASS_PX2;
            assert!(
                (got - expected).abs() / expected < 0.05,
                "diag {got} vs {expected}"
            );
        }
    }

    #[test]
    fn plane_normal_faces_camera_and_distance_is_consistent() {
        let k = CameraIntrinsics::<f64>::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = CameraPose::identity();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..30 {
            let mut splat = Splat::new(
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(2.0..8.0),
                ),
                [0.5; 3],
            );
            splat.rot = random_quat(&mut rng);
            splat.log_scale = Vector3::new(
                rng.random_range(-2.0..0.0),
                rng.random_range(-2.0..0.0),
                rng.random_range(-2.0..0.0),
            );
            let p = project_gaussian(&splat, &pose, &k).unwrap();
            let p_cam = pose.to_camera(&splat.mu);
            assert!(p.plane_normal.dot(&p_cam) <= 0.0);
            assert!((p.plane_normal.norm() - 1.0).abs() < 1e-12);
            assert!((p.plane_distance - p.plane_normal.dot(&p_cam)).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_motion_equivariance() {
        let k = CameraIntrinsics::<f64>::new(48.0, 52.0, 30.0, 33.0, 64, 64).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..25 {
            let pose_q = random_quat(&mut rng);
            let pose = CameraPose::new(
                UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
                    pose_q[0], pose_q[1], pose_q[2], pose_q[3],
                )),
                Vector3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ),
            );
            let mut splat = Splat::new(
                Vector3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(3.0..6.0),
                ),
                [0.5; 3],
            );
            splat.rot = random_quat(&mut rng);
            splat.log_scale = Vector3::new(-1.0, -0.5, -1.5);
            let Some(base) = project_gaussian(&splat, &pose, &k) else {
                continue;
            };

            // Rotate the world (and the camera with it) by Q.
            let gq = random_quat(&mut rng);
            let g = UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
                gq[0], gq[1], gq[2], gq[3],
            ));
            let mut splat2 = splat.clone();
            splat2.mu = g * splat.mu;
            let rq = nalgebra::Quaternion::new(
                splat.rot[0],
                splat.rot[1],
                splat.rot[2],
                splat.rot[3],
            );
            let combined = g.quaternion() * rq;
            splat2.rot = [combined.w, combined.i, combined.j, combined.k];
            let pose2 = CameraPose::new(pose.rotation * g.inverse(), pose.translation);

            let moved = project_gaussian(&splat2, &pose2, &k).unwrap();
            assert!((moved.mu2d - base.mu2d).norm() < 1e-9);
            assert!((moved.cov2d - base.cov2d).norm() < 1e-9);
            assert!((moved.plane_normal - base.plane_normal).norm() < 1e-9);
            assert!((moved.plane_distance - base.plane_distance).abs() < 1e-9);
        }
    }
}
