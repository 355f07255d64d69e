//! Geometric consistency losses: single-view normal agreement, forward and
//! backward two-view reprojection error, and the plane-induced homography
//! used by the NCC loss.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::img::{ImageRgb, Mask, ScalarMap};
use crate::num::Real;
use crate::raster::RenderOutput;
use crate::splat::projection_jacobian;

/// Reprojection errors above this (pixels) are treated as outliers.
pub const MV_OUTLIER_PX: f64 = 1.0;

/// Relative transform taking reference-camera points to neighbor-camera
/// points: X_n = R * X_r + t.
pub fn relative_transform<T: Real>(
    ref_pose: &CameraPose<T>,
    nbr_pose: &CameraPose<T>,
) -> (Matrix3<T>, Vector3<T>) {
    let r_r = ref_pose.rotation_matrix();
    let r_n = nbr_pose.rotation_matrix();
    let r_rel = r_n * r_r.transpose();
    let t_rel = nbr_pose.translation - r_rel * ref_pose.translation;
    (r_rel, t_rel)
}

/// Plane-induced homography mapping reference pixels into the neighbor
/// image, for the plane n . X = d in reference-camera coordinates.
/// `None` when |d| is too small.
pub fn homography_for_patch<T: Real>(
    ref_pose: &CameraPose<T>,
    nbr_pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
    plane_normal: &Vector3<T>,
    plane_distance: T,
) -> Option<Matrix3<T>> {
    if plane_distance.abs() < T::lit(1e-6) {
        return None;
    }
    let (r_rel, t_rel) = relative_transform(ref_pose, nbr_pose);
    let k_mat = Matrix3::new(
        k.fx,
        T::zero(),
        k.cx,
        T::zero(),
        k.fy,
        k.cy,
        T::zero(),
        T::zero(),
        T::one(),
    );
    let k_inv = Matrix3::new(
        T::one() / k.fx,
        T::zero(),
        -k.cx / k.fx,
        T::zero(),
        T::one() / k.fy,
        -k.cy / k.fy,
        T::zero(),
        T::zero(),
        T::one(),
    );
    // For X on the plane, t = t * (n . X) / d, so X_n = (R + t n^T / d) X.
    let h = r_rel + t_rel * plane_normal.transpose() / plane_distance;
    Some(k_mat * h * k_inv)
}

/// Single-view normal loss: compare the rendered normal against the normal
/// of the local plane spanned by the central differences of the unprojected
/// depth map. Sum of ||N_d - N|| over pixels whose 4-neighborhood is valid
/// and not transient-masked.
///
/// Returns (loss, dL/d normal map, dL/d depth map).
pub fn svgeo_loss<T: Real>(
    render: &RenderOutput<T>,
    k: &CameraIntrinsics<T>,
    transient_mask: Option<&Mask>,
) -> (T, Vec<[T; 3]>, ScalarMap<T>) {
    svgeo_loss_maps(
        &render.depth,
        &render.depth_valid,
        &render.normal,
        k,
        transient_mask,
    )
}

pub fn svgeo_loss_maps<T: Real>(
    depth: &ScalarMap<T>,
    depth_valid: &[bool],
    normal: &ImageRgb<T>,
    k: &CameraIntrinsics<T>,
    transient_mask: Option<&Mask>,
) -> (T, Vec<[T; 3]>, ScalarMap<T>) {
    let (w, h) = (depth.width, depth.height);
    let mut loss = T::zero();
    let mut d_normal = vec![[T::zero(); 3]; (w * h) as usize];
    let mut d_depth = ScalarMap::new(w, h);
    let half = T::lit(0.5);
    let eps = T::lit(1e-12);

    let unproject = |x: u32, y: u32| -> Vector3<T> {
        let dir = k.unproject_dir(T::from_u32(x).unwrap() + half, T::from_u32(y).unwrap() + half);
        dir * depth.at(x, y)
    };

    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let idx = (y * w + x) as usize;
            if let Some(m) = transient_mask {
                if m.at(x, y) {
                    continue;
                }
            }
            let neighbors = [
                (x + 1, y),
                (x - 1, y),
                (x, y + 1),
                (x, y - 1),
            ];
            if !neighbors
                .iter()
                .all(|&(nx, ny)| depth_valid[(ny * w + nx) as usize])
            {
                continue;
            }
            let p_right = unproject(x + 1, y);
            let p_left = unproject(x - 1, y);
            let p_down = unproject(x, y + 1);
            let p_up = unproject(x, y - 1);
            let ddx = p_right - p_left;
            let ddy = p_down - p_up;
            let v = ddy.cross(&ddx);
            let v_norm = v.norm();
            if v_norm < eps {
                continue;
            }
            let n_d = v / v_norm;
            let n = Vector3::new(
                normal.data[idx][0],
                normal.data[idx][1],
                normal.data[idx][2],
            );
            let r = n_d - n;
            let r_norm = r.norm();
            loss += r_norm;
            if r_norm < eps {
                continue;
            }
            // dL/dN = -(N_d - N)/||..||
            let g_n = -r / r_norm;
            d_normal[idx] = [g_n.x, g_n.y, g_n.z];
            // dL/dN_d chains through the normalization and the cross product.
            let g_nd = r / r_norm;
            let g_v = (g_nd - n_d * n_d.dot(&g_nd)) / v_norm;
            // v = ddy x ddx
            let g_ddy = ddx.cross(&g_v);
            let g_ddx = g_v.cross(&ddy);
            let scatter = |map: &mut ScalarMap<T>, x: u32, y: u32, g: &Vector3<T>| {
                let dir = k.unproject_dir(
                    T::from_u32(x).unwrap() + half,
                    T::from_u32(y).unwrap() + half,
                );
                let i = (y * w + x) as usize;
                map.data[i] += g.dot(&dir);
            };
            scatter(&mut d_depth, x + 1, y, &g_ddx);
            scatter(&mut d_depth, x - 1, y, &(-g_ddx));
            scatter(&mut d_depth, x, y + 1, &g_ddy);
            scatter(&mut d_depth, x, y - 1, &(-g_ddy));
        }
    }
    (loss, d_normal, d_depth)
}

/// Forward-backward reprojection error between two views. For each
/// reference pixel: unproject with the reference depth, project into the
/// neighbor, sample the neighbor depth bilinearly, unproject, project back,
/// and penalize the pixel round-trip distance. Round trips farther than
/// [`MV_OUTLIER_PX`] are down-weighted to zero.
///
/// Returns (loss, dL/d reference depth, dL/d neighbor depth).
pub fn mv_geometric<T: Real>(
    ref_out: &RenderOutput<T>,
    nbr_out: &RenderOutput<T>,
    ref_pose: &CameraPose<T>,
    nbr_pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
) -> (T, ScalarMap<T>, ScalarMap<T>) {
    mv_geometric_maps(
        &ref_out.depth,
        &ref_out.depth_valid,
        &nbr_out.depth,
        &nbr_out.depth_valid,
        ref_pose,
        nbr_pose,
        k,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn mv_geometric_maps<T: Real>(
    ref_depth: &ScalarMap<T>,
    ref_valid: &[bool],
    nbr_depth: &ScalarMap<T>,
    nbr_valid: &[bool],
    ref_pose: &CameraPose<T>,
    nbr_pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
) -> (T, ScalarMap<T>, ScalarMap<T>) {
    let (w, h) = (ref_depth.width, ref_depth.height);
    let mut loss = T::zero();
    let mut d_ref = ScalarMap::new(w, h);
    let mut d_nbr = ScalarMap::new(nbr_depth.width, nbr_depth.height);
    let (r_rel, t_rel) = relative_transform(ref_pose, nbr_pose);
    let r_rel_t = r_rel.transpose();
    let half = T::lit(0.5);
    let z_eps = T::lit(1e-6);
    let phi_eps = T::lit(1e-12);
    let gate = T::lit(MV_OUTLIER_PX);

    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if !ref_valid[idx] {
                continue;
            }
            let u = T::from_u32(x).unwrap() + half;
            let v = T::from_u32(y).unwrap() + half;
            let dir_r = k.unproject_dir(u, v);
            let depth_r = ref_depth.data[idx];
            if depth_r <= z_eps {
                continue;
            }
            let x_r = dir_r * depth_r;
            let x_n = r_rel * x_r + t_rel;
            if x_n.z <= z_eps {
                continue;
            }
            let p_n = k.project(&x_n);
            // Bilinear sample of the neighbor depth, with validity checks.
            let sx = p_n.x - half;
            let sy = p_n.y - half;
            if sx < T::zero() || sy < T::zero() {
                continue;
            }
            let x0f = sx.floor();
            let y0f = sy.floor();
            let (Some(i0), Some(j0)) = (x0f.to_usize(), y0f.to_usize()) else {
                continue;
            };
            if i0 + 1 >= nbr_depth.width as usize || j0 + 1 >= nbr_depth.height as usize {
                continue;
            }
            let nw = nbr_depth.width as usize;
            let taps = [j0 * nw + i0, j0 * nw + i0 + 1, (j0 + 1) * nw + i0, (j0 + 1) * nw + i0 + 1];
            if taps.iter().any(|&t| !nbr_valid[t]) {
                continue;
            }
            let fx = sx - x0f;
            let fy = sy - y0f;
            let weights = [
                (T::one() - fx) * (T::one() - fy),
                fx * (T::one() - fy),
                (T::one() - fx) * fy,
                fx * fy,
            ];
            let d_n = weights
                .iter()
                .zip(taps.iter())
                .fold(T::zero(), |acc, (&wgt, &t)| acc + wgt * nbr_depth.data[t]);
            if d_n <= z_eps {
                continue;
            }
            // Spatial derivative of the bilinear sample.
            let d00 = nbr_depth.data[taps[0]];
            let d10 = nbr_depth.data[taps[1]];
            let d01 = nbr_depth.data[taps[2]];
            let d11 = nbr_depth.data[taps[3]];
            let ddn_du = (d10 - d00) * (T::one() - fy) + (d11 - d01) * fy;
            let ddn_dv = (d01 - d00) * (T::one() - fx) + (d11 - d10) * fx;

            let dir_n = k.unproject_dir(p_n.x, p_n.y);
            let x_np = dir_n * d_n;
            let x_rp = r_rel_t * (x_np - t_rel);
            if x_rp.z <= z_eps {
                continue;
            }
            let p_back = k.project(&x_rp);
            let diff = p_back - Vector2::new(u, v);
            let phi = diff.norm();
            if phi > gate {
                continue;
            }
            loss += phi;
            if phi < phi_eps {
                continue;
            }

            // Backward chain.
            let g_pback = diff / phi;
            let j_back = projection_jacobian(k, &x_rp);
            let g_xrp = j_back.transpose() * g_pback;
            let g_xnp = r_rel * g_xrp;
            let g_dn = g_xnp.dot(&dir_n);
            let g_dirn = g_xnp * d_n;
            // dir_n = ((p_n.x - cx)/fx, (p_n.y - cy)/fy, 1).
            let mut g_pn = Vector2::new(g_dirn.x / k.fx, g_dirn.y / k.fy);
            g_pn.x += g_dn * ddn_du;
            g_pn.y += g_dn * ddn_dv;
            let j_fwd = projection_jacobian(k, &x_n);
            let g_xn = j_fwd.transpose() * g_pn;
            let g_depth_r = g_xn.dot(&(r_rel * dir_r));
            d_ref.data[idx] += g_depth_r;
            for (wgt, t) in weights.iter().zip(taps.iter()) {
                d_nbr.data[*t] += g_dn * *wgt;
            }
        }
    }
    (loss, d_ref, d_nbr)
}
