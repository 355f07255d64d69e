//! TSDF fusion of rendered depth maps, mesh extraction, and the
//! visible-face query used for actor placement.

mod marching;

pub use marching::extract_mesh;

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::error::{Error, Result};
use crate::img::ScalarMap;
use crate::num::Real;

/// Truncated signed-distance volume with per-voxel fusion weights.
#[derive(Debug, Clone)]
pub struct TsdfVolume<T: Real> {
    pub origin: Vector3<T>,
    pub voxel_size: T,
    pub dims: [u32; 3],
    /// Normalized truncated distances in [-1, 1].
    pub tsdf: Vec<T>,
    pub weight: Vec<T>,
    pub truncation: T,
}

impl<T: Real> TsdfVolume<T> {
    pub fn new(origin: Vector3<T>, voxel_size: T, dims: [u32; 3]) -> Self {
        let n = (dims[0] as usize) * (dims[1] as usize) * (dims[2] as usize);
        Self {
            origin,
            voxel_size,
            dims,
            tsdf: vec![T::one(); n],
            weight: vec![T::zero(); n],
            truncation: voxel_size * T::lit(4.0),
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32, z: u32) -> usize {
        ((z * self.dims[1] + y) * self.dims[0] + x) as usize
    }

    #[inline]
    pub fn voxel_center(&self, x: u32, y: u32, z: u32) -> Vector3<T> {
        let half = T::lit(0.5);
        self.origin
            + Vector3::new(
                (T::from_u32(x).unwrap() + half) * self.voxel_size,
                (T::from_u32(y).unwrap() + half) * self.voxel_size,
                (T::from_u32(z).unwrap() + half) * self.voxel_size,
            )
    }

    /// Fill from an analytic signed-distance function (test scaffolding and
    /// synthetic fixtures).
    pub fn fill_from_sdf(&mut self, sdf: impl Fn(Vector3<T>) -> T) {
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    let idx = self.index(x, y, z);
                    let d = sdf(self.voxel_center(x, y, z)) / self.truncation;
                    self.tsdf[idx] = d.max(-T::one()).min(T::one());
                    self.weight[idx] = T::one();
                }
            }
        }
    }
}

/// Integrate one depth frame into the volume: every voxel projecting into a
/// valid pixel gets the running average of the normalized truncated signed
/// distance (weight increment 1). Voxels behind the surface beyond the
/// truncation band stay untouched.
pub fn tsdf_integrate<T: Real>(
    vol: &mut TsdfVolume<T>,
    depth: &ScalarMap<T>,
    depth_valid: &[bool],
    pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
) {
    let [nx, ny, nz] = vol.dims;
    let truncation = vol.truncation;
    let origin = vol.origin;
    let voxel_size = vol.voxel_size;
    let half = T::lit(0.5);
    let slab = (nx as usize) * (ny as usize);

    let tsdf = &mut vol.tsdf;
    let weight = &mut vol.weight;
    tsdf.par_chunks_mut(slab)
        .zip(weight.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(z, (tsdf_slab, weight_slab))| {
            if z >= nz as usize {
                return;
            }
            for y in 0..ny {
                for x in 0..nx {
                    let center = origin
                        + Vector3::new(
                            (T::from_u32(x).unwrap() + half) * voxel_size,
                            (T::from_u32(y).unwrap() + half) * voxel_size,
                            (T::from_usize(z).unwrap() + half) * voxel_size,
                        );
                    let cam = pose.to_camera(&center);
                    if cam.z <= T::lit(1e-6) {
                        continue;
                    }
                    let px = k.project(&cam);
                    let (Some(u), Some(v)) = (px.x.floor().to_i64(), px.y.floor().to_i64()) else {
                        continue;
                    };
                    if u < 0 || v < 0 || u >= k.width as i64 || v >= k.height as i64 {
                        continue;
                    }
                    let pix = (v as usize) * (k.width as usize) + u as usize;
                    if !depth_valid[pix] {
                        continue;
                    }
                    let sdf = depth.data[pix] - cam.z;
                    if sdf < -truncation {
                        continue;
                    }
                    let value = (sdf / truncation).min(T::one());
                    let idx = (y * nx + x) as usize;
                    let w_old = weight_slab[idx];
                    let w_new = w_old + T::one();
                    tsdf_slab[idx] = (tsdf_slab[idx] * w_old + value) / w_new;
                    weight_slab[idx] = w_new;
                }
            }
        });
}

/// Fit volume bounds to the 1st-99th percentile box of the unprojected
/// depth samples, padded by 5% per side.
pub fn fit_bounds<T: Real>(
    frames: &[(&ScalarMap<T>, &[bool], &CameraPose<T>, &CameraIntrinsics<T>)],
) -> Result<(Vector3<T>, Vector3<T>)> {
    let mut per_axis: [Vec<T>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let half = T::lit(0.5);
    for (depth, valid, pose, k) in frames {
        for y in 0..depth.height {
            for x in 0..depth.width {
                let i = (y * depth.width + x) as usize;
                if !valid[i] {
                    continue;
                }
                let dir = k.unproject_dir(
                    T::from_u32(x).unwrap() + half,
                    T::from_u32(y).unwrap() + half,
                );
                let world = pose.to_world(&(dir * depth.data[i]));
                for axis in 0..3 {
                    per_axis[axis].push(world[axis]);
                }
            }
        }
    }
    if per_axis[0].is_empty() {
        return Err(Error::InvalidArg("no valid depth samples for bounds".into()));
    }
    let mut lo = Vector3::zeros();
    let mut hi = Vector3::zeros();
    for axis in 0..3 {
        per_axis[axis].sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let n = per_axis[axis].len();
        let p01 = per_axis[axis][(n as f64 * 0.01) as usize];
        let p99 = per_axis[axis][((n as f64 * 0.99) as usize).min(n - 1)];
        let pad = (p99 - p01).max(T::lit(1e-3)) * T::lit(0.05);
        lo[axis] = p01 - pad;
        hi[axis] = p99 + pad;
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone)]
pub struct Mesh<T: Real> {
    pub vertices: Vec<Vector3<T>>,
    pub faces: Vec<[u32; 3]>,
    pub face_normals: Vec<Vector3<T>>,
}

impl<T: Real> Mesh<T> {
    pub fn new(vertices: Vec<Vector3<T>>, faces: Vec<[u32; 3]>) -> Self {
        let face_normals = faces
            .iter()
            .map(|f| {
                let a = vertices[f[0] as usize];
                let b = vertices[f[1] as usize];
                let c = vertices[f[2] as usize];
                let n = (b - a).cross(&(c - a));
                let len = n.norm();
                if len > T::lit(1e-12) {
                    n / len
                } else {
                    Vector3::zeros()
                }
            })
            .collect();
        Self {
            vertices,
            faces,
            face_normals,
        }
    }

    pub fn face_centroid(&self, face: usize) -> Vector3<T> {
        let f = self.faces[face];
        (self.vertices[f[0] as usize] + self.vertices[f[1] as usize]
            + self.vertices[f[2] as usize])
            / T::lit(3.0)
    }

    pub fn face_area(&self, face: usize) -> T {
        let f = self.faces[face];
        let a = self.vertices[f[0] as usize];
        let b = self.vertices[f[1] as usize];
        let c = self.vertices[f[2] as usize];
        (b - a).cross(&(c - a)).norm() * T::lit(0.5)
    }

    pub fn total_area(&self) -> T {
        (0..self.faces.len()).fold(T::zero(), |acc, f| acc + self.face_area(f))
    }

    /// Count of unique undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }
}

/// Depth-buffer visibility: a face is visible from a view when its centroid
/// projects inside the image, faces the camera, and survives a z-buffer test
/// within a 1-pixel neighborhood. The result is the intersection over all
/// views.
pub fn visible_faces<T: Real>(
    mesh: &Mesh<T>,
    trajectory: &[CameraPose<T>],
    k: &CameraIntrinsics<T>,
) -> Vec<usize> {
    let mut visible = vec![true; mesh.faces.len()];
    let near = T::lit(1e-4);
    let depth_slack = T::lit(1e-3);

    for pose in trajectory {
        // Rasterize the depth buffer.
        let (w, h) = (k.width as usize, k.height as usize);
        let mut zbuf = vec![T::lit(f64::MAX); w * h];
        for f in &mesh.faces {
            let cams: Vec<Vector3<T>> = f
                .iter()
                .map(|&vi| pose.to_camera(&mesh.vertices[vi as usize]))
                .collect();
            if cams.iter().any(|c| c.z <= near) {
                continue;
            }
            let pix: Vec<nalgebra::Vector2<T>> = cams.iter().map(|c| k.project(c)).collect();
            let x0 = pix
                .iter()
                .map(|p| p.x)
                .fold(T::lit(f64::MAX), |a, b| a.min(b))
                .floor()
                .max(T::zero());
            let x1 = pix
                .iter()
                .map(|p| p.x)
                .fold(T::lit(f64::MIN), |a, b| a.max(b))
                .ceil()
                .min(T::from_usize(w).unwrap() - T::one());
            let y0 = pix
                .iter()
                .map(|p| p.y)
                .fold(T::lit(f64::MAX), |a, b| a.min(b))
                .floor()
                .max(T::zero());
            let y1 = pix
                .iter()
                .map(|p| p.y)
                .fold(T::lit(f64::MIN), |a, b| a.max(b))
                .ceil()
                .min(T::from_usize(h).unwrap() - T::one());
            let (Some(x0), Some(x1), Some(y0), Some(y1)) =
                (x0.to_i64(), x1.to_i64(), y0.to_i64(), y1.to_i64())
            else {
                continue;
            };
            let area = (pix[1] - pix[0]).perp(&(pix[2] - pix[0]));
            if area.abs() < T::lit(1e-12) {
                continue;
            }
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let p = nalgebra::Vector2::new(
                        T::from_i64(px).unwrap() + T::lit(0.5),
                        T::from_i64(py).unwrap() + T::lit(0.5),
                    );
                    let w0 = (pix[1] - p).perp(&(pix[2] - p)) / area;
                    let w1 = (pix[2] - p).perp(&(pix[0] - p)) / area;
                    let w2 = (pix[0] - p).perp(&(pix[1] - p)) / area;
                    if w0 < T::zero() || w1 < T::zero() || w2 < T::zero() {
                        continue;
                    }
                    let z = w0 * cams[0].z + w1 * cams[1].z + w2 * cams[2].z;
                    let idx = (py as usize) * w + px as usize;
                    if z < zbuf[idx] {
                        zbuf[idx] = z;
                    }
                }
            }
        }

        // Test every still-visible face.
        let center = pose.center();
        for (fi, vis) in visible.iter_mut().enumerate() {
            if !*vis {
                continue;
            }
            let centroid = mesh.face_centroid(fi);
            let cam = pose.to_camera(&centroid);
            if cam.z <= near {
                *vis = false;
                continue;
            }
            let px = k.project(&cam);
            if px.x < T::zero()
                || px.y < T::zero()
                || px.x >= T::from_u32(k.width).unwrap()
                || px.y >= T::from_u32(k.height).unwrap()
            {
                *vis = false;
                continue;
            }
            // Back-face test against the viewing direction.
            if mesh.face_normals[fi].dot(&(centroid - center)) >= T::zero() {
                *vis = false;
                continue;
            }
            // Occlusion test within a 1-pixel neighborhood.
            let (Some(cx), Some(cy)) = (px.x.floor().to_i64(), px.y.floor().to_i64()) else {
                *vis = false;
                continue;
            };
            let tol = depth_slack * cam.z + depth_slack;
            let mut unoccluded = false;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    if cam.z <= zbuf[(ny as usize) * w + nx as usize] + tol {
                        unoccluded = true;
                    }
                }
            }
            if !unoccluded {
                *vis = false;
            }
        }
    }
    (0..mesh.faces.len()).filter(|&f| visible[f]).collect()
}

/// Write the mesh as ASCII OBJ (v and f records only).
pub fn write_obj<T: Real>(path: &std::path::Path, mesh: &Mesh<T>) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!(
            "v {} {} {}\n",
            v.x.to_f64_lossy(),
            v.y.to_f64_lossy(),
            v.z.to_f64_lossy()
        ));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parse an ASCII OBJ written by [`write_obj`].
pub fn read_obj<T: Real>(path: &std::path::Path) -> Result<Mesh<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coords = [T::zero(); 3];
                for c in &mut coords {
                    *c = it
                        .next()
                        .and_then(|s| s.parse::<f64>().ok())
                        .map(T::lit)
                        .ok_or_else(|| {
                            Error::parse(path.display().to_string(), lineno + 1, "bad vertex")
                        })?;
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = [0u32; 3];
                for v in &mut idx {
                    let token = it.next().ok_or_else(|| {
                        Error::parse(path.display().to_string(), lineno + 1, "bad face")
                    })?;
                    let first = token.split('/').next().unwrap_or(token);
                    *v = first.parse::<u32>().map_err(|_| {
                        Error::parse(path.display().to_string(), lineno + 1, "bad face index")
                    })? - 1;
                }
                faces.push(idx);
            }
            _ => {}
        }
    }
    Ok(Mesh::new(vertices, faces))
}

/// Per-edge face-use counts; 2 everywhere means a closed surface.
pub fn edge_use_histogram<T: Real>(mesh: &Mesh<T>) -> HashMap<usize, usize> {
    let mut uses: HashMap<(u32, u32), usize> = HashMap::new();
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *uses.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut histogram: HashMap<usize, usize> = HashMap::new();
    for (_, n) in uses {
        *histogram.entry(n).or_default() += 1;
    }
    histogram
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::unit_quaternion;

    fn sphere_volume(dims: u32, radius: f64) -> TsdfVolume<f64> {
        let extent = 1.5 * radius;
        let voxel = 2.0 * extent / dims as f64;
        let mut vol = TsdfVolume::new(
            Vector3::new(-extent, -extent, -extent),
            voxel,
            [dims, dims, dims],
        );
        vol.fill_from_sdf(|p| p.norm() - radius);
        vol
    }

    #[test]
    fn sphere_mesh_is_accurate_closed_and_genus_zero() {
        let vol = sphere_volume(48, 1.0);
        let mesh = extract_mesh(&vol);
        assert!(!mesh.faces.is_empty());
        let mean_err = mesh
            .vertices
            .iter()
            .map(|v| (v.norm() - 1.0).abs())
            .sum::<f64>()
            / mesh.vertices.len() as f64;
        assert!(
            mean_err < vol.voxel_size / 2.0,
            "radial error {mean_err} vs half-voxel {}",
            vol.voxel_size / 2.0
        );
        // Watertight: every edge shared by exactly two faces.
        let hist = edge_use_histogram(&mesh);
        assert_eq!(hist.len(), 1, "edge histogram {hist:?}");
        assert!(hist.contains_key(&2));
        // Euler characteristic of a sphere.
        let euler =
            mesh.vertices.len() as i64 - mesh.edge_count() as i64 + mesh.faces.len() as i64;
        assert_eq!(euler, 2);
        // Outward-oriented normals.
        for f in 0..mesh.faces.len() {
            let c = mesh.face_centroid(f);
            assert!(
                mesh.face_normals[f].dot(&c) > 0.0,
                "face {f} normal points inward"
            );
        }
    }

    #[test]
    fn all_positive_field_yields_empty_mesh() {
        let mut vol = TsdfVolume::<f64>::new(Vector3::zeros(), 0.1, [8, 8, 8]);
        vol.fill_from_sdf(|_| 0.5);
        let mesh = extract_mesh(&vol);
        assert!(mesh.faces.is_empty());
    }

    #[test]
    fn unknown_voxels_suppress_faces() {
        let mut vol = sphere_volume(16, 1.0);
        vol.weight.fill(0.0);
        let mesh = extract_mesh(&vol);
        assert!(mesh.faces.is_empty());
    }

    #[test]
    fn random_smooth_field_gives_closed_interior_surface() {
        // A trigonometric blob whose level set stays inside the grid.
        let mut vol = TsdfVolume::<f64>::new(Vector3::new(-1.0, -1.0, -1.0), 2.0 / 40.0, [40, 40, 40]);
        vol.fill_from_sdf(|p| {
            p.norm() - 0.7
                + 0.1 * (4.0 * p.x).sin() * (3.0 * p.y).cos() * (2.0 * p.z + 1.0).sin()
        });
        let mesh = extract_mesh(&vol);
        assert!(!mesh.faces.is_empty());
        let hist = edge_use_histogram(&mesh);
        assert_eq!(hist.len(), 1, "open edges: {hist:?}");
    }

    #[test]
    fn fronto_parallel_plane_integrates_to_a_plane() {
        let k = CameraIntrinsics::<f64>::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let pose = CameraPose::identity();
        let depth = ScalarMap::filled(32, 32, 2.0);
        let valid = vec![true; 32 * 32];
        let mut vol = TsdfVolume::new(Vector3::new(-0.5, -0.5, 1.5), 0.025, [40, 40, 40]);
        tsdf_integrate(&mut vol, &depth, &valid, &pose, &k);
        let mesh = extract_mesh(&vol);
        assert!(!mesh.vertices.is_empty());
        for v in &mesh.vertices {
            assert!(
                (v.z - 2.0).abs() < vol.voxel_size / 2.0,
                "vertex depth {} off plane",
                v.z
            );
        }
    }

    #[test]
    fn integrating_the_same_frame_twice_changes_nothing() {
        let k = CameraIntrinsics::<f64>::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let pose = CameraPose::identity();
        let depth = ScalarMap::filled(32, 32, 2.0);
        let valid = vec![true; 32 * 32];
        let mut once = TsdfVolume::new(Vector3::new(-0.5, -0.5, 1.5), 0.05, [20, 20, 20]);
        tsdf_integrate(&mut once, &depth, &valid, &pose, &k);
        let mut twice = once.clone();
        tsdf_integrate(&mut twice, &depth, &valid, &pose, &k);
        for (a, b) in once.tsdf.iter().zip(twice.tsdf.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn voxel_outside_frustum_is_untouched() {
        let k = CameraIntrinsics::<f64>::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let pose = CameraPose::identity();
        let depth = ScalarMap::filled(32, 32, 2.0);
        let valid = vec![true; 32 * 32];
        // Volume behind the camera.
        let mut vol = TsdfVolume::new(Vector3::new(-0.5, -0.5, -3.0), 0.05, [10, 10, 10]);
        tsdf_integrate(&mut vol, &depth, &valid, &pose, &k);
        assert!(vol.weight.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn frame_order_barely_moves_the_average() {
        let k = CameraIntrinsics::<f64>::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let pose_a = CameraPose::identity();
        let pose_b = CameraPose::new(
            unit_quaternion(0.999, 0.02, -0.01, 0.0).unwrap(),
            Vector3::new(0.05, -0.02, 0.01),
        );
        let depth_a = ScalarMap::filled(32, 32, 2.0);
        let depth_b = ScalarMap::filled(32, 32, 2.1);
        let valid = vec![true; 32 * 32];
        let mut ab = TsdfVolume::new(Vector3::new(-0.5, -0.5, 1.5), 0.05, [20, 20, 20]);
        tsdf_integrate(&mut ab, &depth_a, &valid, &pose_a, &k);
        tsdf_integrate(&mut ab, &depth_b, &valid, &pose_b, &k);
        let mut ba = TsdfVolume::new(Vector3::new(-0.5, -0.5, 1.5), 0.05, [20, 20, 20]);
        tsdf_integrate(&mut ba, &depth_b, &valid, &pose_b, &k);
        tsdf_integrate(&mut ba, &depth_a, &valid, &pose_a, &k);
        for (a, b) in ab.tsdf.iter().zip(ba.tsdf.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    fn quad_mesh(z: f64, size: f64) -> Mesh<f64> {
        // Two triangles facing the -z direction (toward a camera at origin
        // looking down +z), wound so normals point to -z.
        let vertices = vec![
            Vector3::new(-size, -size, z),
            Vector3::new(size, -size, z),
            Vector3::new(size, size, z),
            Vector3::new(-size, size, z),
        ];
        let faces = vec![[0u32, 2, 1], [0, 3, 2]];
        Mesh::new(vertices, faces)
    }

    #[test]
    fn facing_quad_is_fully_visible() {
        let k = CameraIntrinsics::<f64>::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let mesh = quad_mesh(3.0, 0.5);
        let vis = visible_faces(&mesh, &[CameraPose::identity()], &k);
        assert_eq!(vis, vec![0, 1]);
    }

    #[test]
    fn back_facing_quad_is_invisible() {
        let k = CameraIntrinsics::<f64>::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let mut mesh = quad_mesh(3.0, 0.5);
        // Flip the winding so normals point away from the camera.
        for f in &mut mesh.faces {
            f.swap(1, 2);
        }
        let mesh = Mesh::new(mesh.vertices, mesh.faces);
        let vis = visible_faces(&mesh, &[CameraPose::identity()], &k);
        assert!(vis.is_empty());
    }

    #[test]
    fn stacked_quads_occlude() {
        let k = CameraIntrinsics::<f64>::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let near = quad_mesh(2.0, 0.5);
        let far = quad_mesh(4.0, 0.5);
        let mut vertices = near.vertices.clone();
        let offset = vertices.len() as u32;
        vertices.extend(far.vertices.iter().copied());
        let mut faces = near.faces.clone();
        faces.extend(far.faces.iter().map(|f| f.map(|v| v + offset)));
        let mesh = Mesh::new(vertices, faces);
        let vis = visible_faces(&mesh, &[CameraPose::identity()], &k);
        assert_eq!(vis, vec![0, 1], "far quad should be occluded: {vis:?}");
    }

    #[test]
    fn obj_round_trip() {
        let mesh = quad_mesh(1.0, 0.25);
        let dir = std::env::temp_dir().join("msgs_mesh_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("quad.obj");
        write_obj(&path, &mesh).unwrap();
        let back = read_obj::<f64>(&path).unwrap();
        assert_eq!(back.faces, mesh.faces);
        for (a, b) in back.vertices.iter().zip(mesh.vertices.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
