//! Pinhole camera intrinsics and world-to-camera poses.
//!
//! Conventions: camera looks along +z, x right, y down. Pixel (ix, iy)
//! covers the unit square with center at (ix + 0.5, iy + 0.5).

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self> {
        let w = T::from_u32(width).unwrap();
        let h = T::from_u32(height).unwrap();
        if fx <= T::zero() || fy <= T::zero() {
            return Err(Error::InvalidArg(format!(
                "focal lengths must be positive, got fx={fx:?} fy={fy:?}"
            )));
        }
        if cx <= T::zero() || cx >= w || cy <= T::zero() || cy >= h {
            return Err(Error::InvalidArg(format!(
                "principal point ({cx:?},{cy:?}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Perspective projection of a camera-space point (z > 0 assumed).
    #[inline]
    pub fn project(&self, p: &Vector3<T>) -> Vector2<T> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// K^-1 applied to the homogeneous pixel coordinate (u, v, 1).
    #[inline]
    pub fn unproject_dir(&self, u: T, v: T) -> Vector3<T> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one())
    }

    /// Camera-space point at a given pixel and depth along +z.
    #[inline]
    pub fn unproject(&self, u: T, v: T, depth: T) -> Vector3<T> {
        self.unproject_dir(u, v) * depth
    }

    #[inline]
    pub fn image_diagonal(&self) -> T {
        let w = T::from_u32(self.width).unwrap();
        let h = T::from_u32(self.height).unwrap();
        (w * w + h * h).sqrt()
    }

    #[inline]
    pub fn center(&self) -> Vector2<T> {
        Vector2::new(
            T::from_u32(self.width).unwrap() * T::lit(0.5),
            T::from_u32(self.height).unwrap() * T::lit(0.5),
        )
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::lit(self.fx.to_f64_lossy()),
            fy: U::lit(self.fy.to_f64_lossy()),
            cx: U::lit(self.cx.to_f64_lossy()),
            cy: U::lit(self.cy.to_f64_lossy()),
            width: self.width,
            height: self.height,
        }
    }
}

/// World-to-camera pose: p_cam = rotation * p_world + translation.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose<T: Real> {
    pub rotation: UnitQuaternion<T>,
    pub translation: Vector3<T>,
    pub sequence_id: usize,
    pub image_path: String,
}

/// Normalize a quaternion unless it is already unit to within f64 rounding.
///
/// Skipping the division for already-unit input keeps parse→serialize→parse
/// round trips bitwise stable.
pub fn unit_quaternion<T: Real>(w: T, x: T, y: T, z: T) -> Option<UnitQuaternion<T>> {
    let n2 = w * w + x * x + y * y + z * z;
    if n2 < T::lit(1e-24) {
        return None;
    }
    let q = Quaternion::new(w, x, y, z);
    let tol = T::lit(1e-12);
    if (n2 - T::one()).abs() < tol {
        Some(UnitQuaternion::new_unchecked(q))
    } else {
        Some(UnitQuaternion::new_normalize(q))
    }
}

impl<T: Real> CameraPose<T> {
    pub fn new(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
            sequence_id: 0,
            image_path: String::new(),
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    #[inline]
    pub fn to_camera(&self, p_world: &Vector3<T>) -> Vector3<T> {
        self.rotation * p_world + self.translation
    }

    #[inline]
    pub fn to_world(&self, p_cam: &Vector3<T>) -> Vector3<T> {
        self.rotation.inverse() * (p_cam - self.translation)
    }

    /// Camera center in world coordinates.
    #[inline]
    pub fn center(&self) -> Vector3<T> {
        self.rotation.inverse() * (-self.translation)
    }

    /// Rotation as a matrix (the W in covariance projection).
    #[inline]
    pub fn rotation_matrix(&self) -> nalgebra::Matrix3<T> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn cast<U: Real>(&self) -> CameraPose<U> {
        let q = self.rotation.quaternion();
        let rot = unit_quaternion(
            U::lit(q.w.to_f64_lossy()),
            U::lit(q.i.to_f64_lossy()),
            U::lit(q.j.to_f64_lossy()),
            U::lit(q.k.to_f64_lossy()),
        )
        .expect("unit quaternion survives cast");
        CameraPose {
            rotation: rot,
            translation: Vector3::new(
                U::lit(self.translation.x.to_f64_lossy()),
                U::lit(self.translation.y.to_f64_lossy()),
                U::lit(self.translation.z.to_f64_lossy()),
            ),
            sequence_id: self.sequence_id,
            image_path: self.image_path.clone(),
        }
    }
}
