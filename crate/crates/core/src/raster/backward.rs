//! Analytic gradients of the tiled renderer.
//!
//! The backward pass replays the forward blend per pixel (same binning, same
//! sort, same termination), runs a reverse sweep with suffix accumulators for
//! the color/distance/normal blends, and then chains per-splat image-space
//! gradients through the EWA projection back to the splat parameters.
//!
//! Per-splat accumulation is tile-local and merged in fixed tile order, so
//! results are bitwise reproducible at any thread count.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::num::Real;
use crate::splat::{
    build_covariance, min_scale_axis, projection_jacobian, quat_backward, quat_to_matrix, Splat,
};

use super::{bin_splats, prepare, PreparedSplat, RasterConfig, RenderOutput, TileGrid};

/// Upstream gradients with respect to rendered maps; absent maps are zero.
#[derive(Debug, Clone, Default)]
pub struct RenderGrads<T: Real> {
    /// dL/d color, per pixel per channel.
    pub d_color: Option<Vec<[T; 3]>>,
    /// dL/d depth, per pixel (ignored at invalid-depth pixels).
    pub d_depth: Option<Vec<T>>,
    /// dL/d unit-normal map, per pixel.
    pub d_normal: Option<Vec<[T; 3]>>,
}

/// Per-splat parameter gradients; zero for culled splats.
#[derive(Debug, Clone)]
pub struct GradientBuffer<T: Real> {
    pub d_mu: Vec<Vector3<T>>,
    pub d_rot: Vec<[T; 4]>,
    pub d_log_scale: Vec<Vector3<T>>,
    pub d_opacity_logit: Vec<T>,
    pub d_toned_color: Vec<[T; 3]>,
}

impl<T: Real> GradientBuffer<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            d_mu: vec![Vector3::zeros(); n],
            d_rot: vec![[T::zero(); 4]; n],
            d_log_scale: vec![Vector3::zeros(); n],
            d_opacity_logit: vec![T::zero(); n],
            d_toned_color: vec![[T::zero(); 3]; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_mu.iter().all(|v| v.iter().all(|x| x.finite()))
            && self.d_rot.iter().all(|v| v.iter().all(|x| x.finite()))
            && self
                .d_log_scale
                .iter()
                .all(|v| v.iter().all(|x| x.finite()))
            && self.d_opacity_logit.iter().all(|x| x.finite())
            && self
                .d_toned_color
                .iter()
                .all(|v| v.iter().all(|x| x.finite()))
    }

    /// Elementwise sum with another buffer over the same splat list.
    pub fn accumulate(&mut self, other: &Self) {
        assert_eq!(self.d_mu.len(), other.d_mu.len());
        for i in 0..self.d_mu.len() {
            self.d_mu[i] += other.d_mu[i];
            self.d_log_scale[i] += other.d_log_scale[i];
            self.d_opacity_logit[i] += other.d_opacity_logit[i];
            for c in 0..4 {
                self.d_rot[i][c] += other.d_rot[i][c];
            }
            for c in 0..3 {
                self.d_toned_color[i][c] += other.d_toned_color[i][c];
            }
        }
    }
}

/// Image-space gradient totals for one retained splat.
#[derive(Debug, Clone, Copy)]
struct Accum<T: Real> {
    d_color: [T; 3],
    /// dL/d opacity (pre-activation chain).
    d_opacity: T,
    /// dL/d (A, B, C) of the conic with q = A dx^2 + 2B dx dy + C dy^2.
    d_conic: [T; 3],
    d_mu2d: [T; 2],
    d_dist: T,
    d_ncam: [T; 3],
}

impl<T: Real> Accum<T> {
    fn zero() -> Self {
        Self {
            d_color: [T::zero(); 3],
            d_opacity: T::zero(),
            d_conic: [T::zero(); 3],
            d_mu2d: [T::zero(); 2],
            d_dist: T::zero(),
            d_ncam: [T::zero(); 3],
        }
    }

    fn add(&mut self, other: &Self) {
        for c in 0..3 {
            self.d_color[c] += other.d_color[c];
            self.d_conic[c] += other.d_conic[c];
            self.d_ncam[c] += other.d_ncam[c];
        }
        self.d_opacity += other.d_opacity;
        self.d_mu2d[0] += other.d_mu2d[0];
        self.d_mu2d[1] += other.d_mu2d[1];
        self.d_dist += other.d_dist;
    }
}

struct Contributor<T: Real> {
    bin_pos: usize,
    alpha: T,
    g: T,
    dx: T,
    dy: T,
    clamped: bool,
}

pub fn render_backward<T: Real>(
    splats: &[Splat<T>],
    toned_colors: &[[T; 3]],
    pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
    cfg: &RasterConfig<T>,
    output: &RenderOutput<T>,
    grads: &RenderGrads<T>,
) -> GradientBuffer<T> {
    let (width, height) = (k.width, k.height);
    assert_eq!(output.width, width);
    assert_eq!(output.height, height);
    let items = prepare(splats, pose, k, cfg);
    let grid = TileGrid::new(width, height, cfg.tile_size);
    let bins = bin_splats(&items, &grid, width, height);
    let n_tiles = bins.len();

    let tile_partials: Vec<Vec<Accum<T>>> = (0..n_tiles)
        .into_par_iter()
        .map(|tile| {
            backward_tile(
                tile, &grid, &bins[tile], &items, toned_colors, k, cfg, output, grads, width,
                height,
            )
        })
        .collect();

    // Merge tile-local accumulators in fixed tile order.
    let mut totals = vec![Accum::zero(); items.len()];
    for (tile, partial) in tile_partials.iter().enumerate() {
        for (pos, acc) in partial.iter().enumerate() {
            totals[bins[tile][pos] as usize].add(acc);
        }
    }

    // Chain image-space totals through the projection, per splat.
    let per_item: Vec<(usize, SplatGrad<T>)> = items
        .par_iter()
        .zip(totals.par_iter())
        .map(|(item, acc)| (item.index, chain_to_splat(&splats[item.index], pose, k, item, acc)))
        .collect();

    let mut buf = GradientBuffer::zeros(splats.len());
    for (index, g) in per_item {
        buf.d_mu[index] = g.d_mu;
        buf.d_rot[index] = g.d_rot;
        buf.d_log_scale[index] = g.d_log_scale;
        buf.d_opacity_logit[index] = g.d_opacity_logit;
        buf.d_toned_color[index] = g.d_toned_color;
    }
    buf
}

#[allow(clippy::too_many_arguments)]
fn backward_tile<T: Real>(
    tile: usize,
    grid: &TileGrid,
    bin: &[u32],
    items: &[PreparedSplat<T>],
    toned_colors: &[[T; 3]],
    k: &CameraIntrinsics<T>,
    cfg: &RasterConfig<T>,
    output: &RenderOutput<T>,
    grads: &RenderGrads<T>,
    width: u32,
    height: u32,
) -> Vec<Accum<T>> {
    let mut partial = vec![Accum::zero(); bin.len()];
    if bin.is_empty() {
        return partial;
    }
    let ts = grid.tile_size;
    let tx = (tile as u32) % grid.tiles_x;
    let ty = (tile as u32) / grid.tiles_x;
    let x0 = tx * ts;
    let y0 = ty * ts;
    let x1 = (x0 + ts).min(width);
    let y1 = (y0 + ts).min(height);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let eps_norm = T::lit(1e-12);
    let mut contributors: Vec<Contributor<T>> = Vec::with_capacity(bin.len());

    for py in y0..y1 {
        for px in x0..x1 {
            let pix = (py * width + px) as usize;

            // Assemble upstream gradients for this pixel.
            let mut dc = grads
                .d_color
                .as_ref()
                .map(|g| g[pix])
                .unwrap_or([T::zero(); 3]);
            let dd = grads.d_depth.as_ref().map(|g| g[pix]).unwrap_or(T::zero());
            let dn_unit = grads
                .d_normal
                .as_ref()
                .map(|g| g[pix])
                .unwrap_or([T::zero(); 3]);

            let mut d_raw_dist = T::zero();
            let mut d_raw_n = Vector3::zeros();
            let raw = output.normal_raw.data[pix];
            let raw_v = Vector3::new(raw[0], raw[1], raw[2]);
            if dd != T::zero() && output.depth_valid[pix] {
                let dir = k.unproject_dir(
                    T::from_u32(px).unwrap() + half,
                    T::from_u32(py).unwrap() + half,
                );
                let denom = raw_v.dot(&dir);
                d_raw_dist += dd / denom;
                d_raw_n += dir * (-dd * output.distance.data[pix] / (denom * denom));
            }
            let dn = Vector3::new(dn_unit[0], dn_unit[1], dn_unit[2]);
            if dn != Vector3::zeros() {
                let norm = raw_v.norm();
                if norm > eps_norm {
                    let nh = raw_v / norm;
                    d_raw_n += (dn - nh * nh.dot(&dn)) / norm;
                }
            }
            if dc == [T::zero(); 3] && d_raw_dist == T::zero() && d_raw_n == Vector3::zeros() {
                continue;
            }

            // Forward replay: collect contributors exactly as `render` did.
            let fx = T::from_u32(px).unwrap() + half;
            let fy = T::from_u32(py).unwrap() + half;
            contributors.clear();
            let support_q = cfg.support_q();
            let mut transmittance = T::one();
            let mut preclamp = [
                T::zero(),
                T::zero(),
                T::zero(),
            ];
            for (pos, &i) in bin.iter().enumerate() {
                let item = &items[i as usize];
                let dx = fx - item.mu2d.x;
                let dy = fy - item.mu2d.y;
                let [a, b, c] = item.conic;
                let q = a * dx * dx + two * b * dx * dy + c * dy * dy;
                if q > support_q {
                    continue;
                }
                let g = (-half * q).exp();
                let raw_alpha = item.opacity * g;
                let alpha = raw_alpha.min(cfg.alpha_clamp);
                if alpha <= T::zero() {
                    continue;
                }
                let weight = alpha * transmittance;
                let toned = toned_colors[item.index];
                for ch in 0..3 {
                    preclamp[ch] += weight * toned[ch];
                }
                contributors.push(Contributor {
                    bin_pos: pos,
                    alpha,
                    g,
                    dx,
                    dy,
                    clamped: raw_alpha > cfg.alpha_clamp,
                });
                transmittance *= T::one() - alpha;
                if transmittance < cfg.term_transmittance {
                    break;
                }
            }
            let t_final = transmittance;
            for ch in 0..3 {
                preclamp[ch] += cfg.background[ch] * t_final;
                // Color map is clamped to [0,1]; gradient stops outside.
                if preclamp[ch] < T::zero() || preclamp[ch] > T::one() {
                    dc[ch] = T::zero();
                }
            }

            // Reverse sweep with suffix accumulators.
            let mut t_after = t_final;
            let mut suffix_c = [
                cfg.background[0] * t_final,
                cfg.background[1] * t_final,
                cfg.background[2] * t_final,
            ];
            let mut suffix_d = T::zero();
            let mut suffix_n = Vector3::zeros();
            for contrib in contributors.iter().rev() {
                let item = &items[bin[contrib.bin_pos] as usize];
                let one_minus = T::one() - contrib.alpha;
                let t_before = t_after / one_minus;
                let weight = contrib.alpha * t_before;
                let toned = toned_colors[item.index];
                let acc = &mut partial[contrib.bin_pos];

                let mut d_alpha = T::zero();
                for ch in 0..3 {
                    acc.d_color[ch] += weight * dc[ch];
                    d_alpha += dc[ch] * (t_before * toned[ch] - suffix_c[ch] / one_minus);
                }
                acc.d_dist += weight * d_raw_dist;
                d_alpha +=
                    d_raw_dist * (t_before * item.plane_distance - suffix_d / one_minus);
                acc.d_ncam[0] += weight * d_raw_n.x;
                acc.d_ncam[1] += weight * d_raw_n.y;
                acc.d_ncam[2] += weight * d_raw_n.z;
                d_alpha += d_raw_n.x
                    * (t_before * item.plane_normal.x - suffix_n.x / one_minus)
                    + d_raw_n.y * (t_before * item.plane_normal.y - suffix_n.y / one_minus)
                    + d_raw_n.z * (t_before * item.plane_normal.z - suffix_n.z / one_minus);

                if !contrib.clamped {
                    acc.d_opacity += d_alpha * contrib.g;
                    let dg = d_alpha * item.opacity;
                    let dq = -half * contrib.g * dg;
                    let (dx, dy) = (contrib.dx, contrib.dy);
                    acc.d_conic[0] += dq * dx * dx;
                    acc.d_conic[1] += dq * two * dx * dy;
                    acc.d_conic[2] += dq * dy * dy;
                    let [a, b, c] = item.conic;
                    acc.d_mu2d[0] -= dq * (two * a * dx + two * b * dy);
                    acc.d_mu2d[1] -= dq * (two * b * dx + two * c * dy);
                }

                for ch in 0..3 {
                    suffix_c[ch] += toned[ch] * weight;
                }
                suffix_d += item.plane_distance * weight;
                suffix_n += item.plane_normal * weight;
                t_after = t_before;
            }
        }
    }
    partial
}

struct SplatGrad<T: Real> {
    d_mu: Vector3<T>,
    d_rot: [T; 4],
    d_log_scale: Vector3<T>,
    d_opacity_logit: T,
    d_toned_color: [T; 3],
}

fn chain_to_splat<T: Real>(
    splat: &Splat<T>,
    pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
    item: &PreparedSplat<T>,
    acc: &Accum<T>,
) -> SplatGrad<T> {
    let two = T::lit(2.0);
    let half = T::lit(0.5);

    let o = item.opacity;
    let d_opacity_logit = acc.d_opacity * o * (T::one() - o);

    // Conic -> 2D covariance.
    let [qa, qb, qc] = item.conic;
    let q_mat = Matrix2::new(qa, qb, qb, qc);
    let g_q = Matrix2::new(
        acc.d_conic[0],
        half * acc.d_conic[1],
        half * acc.d_conic[1],
        acc.d_conic[2],
    );
    let g_m = -(q_mat * g_q * q_mat);

    // Recompute the projection chain.
    let p_cam = pose.to_camera(&splat.mu);
    let w = pose.rotation_matrix();
    let sigma = build_covariance(&splat.log_scale, &splat.rot);
    let sigma_cam = w * sigma * w.transpose();
    let j: Matrix2x3<T> = projection_jacobian(k, &p_cam);

    let d_sigma_cam = j.transpose() * g_m * j;
    let d_j = (g_m + g_m.transpose()) * j * sigma_cam;

    let mut d_p_cam = Vector3::zeros();
    {
        let z = p_cam.z;
        let inv_z2 = T::one() / (z * z);
        let inv_z3 = inv_z2 / z;
        d_p_cam.x += d_j[(0, 2)] * (-k.fx * inv_z2);
        d_p_cam.y += d_j[(1, 2)] * (-k.fy * inv_z2);
        d_p_cam.z += d_j[(0, 0)] * (-k.fx * inv_z2)
            + d_j[(0, 2)] * (two * k.fx * p_cam.x * inv_z3)
            + d_j[(1, 1)] * (-k.fy * inv_z2)
            + d_j[(1, 2)] * (two * k.fy * p_cam.y * inv_z3);
    }
    let d_mu2d = Vector2::new(acc.d_mu2d[0], acc.d_mu2d[1]);
    d_p_cam += j.transpose() * d_mu2d;

    let d_sigma = w.transpose() * d_sigma_cam * w;

    let s = splat.scale();
    let d2 = Matrix3::from_diagonal(&Vector3::new(s.x * s.x, s.y * s.y, s.z * s.z));
    let r = quat_to_matrix(&splat.rot);
    let mut d_r = (d_sigma * r * d2) * two;
    let rt_ds_r = r.transpose() * d_sigma * r;
    let mut d_log_scale = Vector3::zeros();
    for axis in 0..3 {
        let ds = two * s[axis] * rt_ds_r[(axis, axis)];
        d_log_scale[axis] = ds * s[axis];
    }

    // Plane normal and distance.
    let axis = min_scale_axis(&s);
    let n_world = r.column(axis).into_owned();
    let n_unflipped = w * n_world;
    let flip = if n_unflipped.dot(&p_cam) > T::zero() {
        -T::one()
    } else {
        T::one()
    };
    let d_ncam = Vector3::new(acc.d_ncam[0], acc.d_ncam[1], acc.d_ncam[2])
        + p_cam * acc.d_dist;
    d_p_cam += item.plane_normal * acc.d_dist;
    let d_col = w.transpose() * d_ncam * flip;
    for row in 0..3 {
        d_r[(row, axis)] += d_col[row];
    }

    let d_mu = w.transpose() * d_p_cam;
    let d_rot = quat_backward(&splat.rot, &d_r);

    SplatGrad {
        d_mu,
        d_rot,
        d_log_scale,
        d_opacity_logit,
        d_toned_color: acc.d_color,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::render;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn camera(width: u32, height: u32) -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(
            40.0,
            40.0,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
        .unwrap()
    }

    fn fd_scene(rng: &mut StdRng, n: usize) -> (Vec<Splat<f64>>, Vec<[f64; 3]>) {
        let mut splats = Vec::new();
        let mut colors = Vec::new();
        for _ in 0..n {
            let mut s = Splat::new(
                Vector3::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(3.0..7.0),
                ),
                [0.5; 3],
            );
            let q: [f64; 4] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(0.3);
            s.rot = [q[0] / qn, q[1] / qn, q[2] / qn, q[3] / qn];
            s.log_scale = Vector3::new(
                rng.random_range(-2.2..-0.8),
                rng.random_range(-2.2..-0.8),
                rng.random_range(-2.2..-0.8),
            );
            // Moderate opacity keeps alpha clear of the 0.99 clamp.
            s.opacity_logit = rng.random_range(-1.5..1.0);
            splats.push(s);
            colors.push([
                rng.random_range(0.1..0.8),
                rng.random_range(0.1..0.8),
                rng.random_range(0.1..0.8),
            ]);
        }
        (splats, colors)
    }

    /// Scalar loss: weighted sums of the color and (valid) depth maps.
    fn scalar_loss(
        out: &RenderOutput<f64>,
        wc: &[[f64; 3]],
        wd: &[f64],
        wn: &[[f64; 3]],
    ) -> f64 {
        let mut loss = 0.0;
        for (i, px) in out.color.data.iter().enumerate() {
            for c in 0..3 {
                loss += wc[i][c] * px[c];
            }
        }
        for i in 0..out.depth.data.len() {
            if out.depth_valid[i] {
                loss += wd[i] * out.depth.data[i];
            }
            for c in 0..3 {
                loss += wn[i][c] * out.normal.data[i][c];
            }
        }
        loss
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_buffer() {
        let mut rng = StdRng::seed_from_u64(1);
        let (splats, colors) = fd_scene(&mut rng, 5);
        let k = camera(24, 24);
        let cfg = RasterConfig::default();
        let pose = CameraPose::identity();
        let out = render(&splats, &colors, &pose, &k, &cfg);
        let grads = RenderGrads::default();
        let buf = render_backward(&splats, &colors, &pose, &k, &cfg, &out, &grads);
        assert!(buf.d_mu.iter().all(|v| v.norm() == 0.0));
        assert!(buf.d_opacity_logit.iter().all(|&v| v == 0.0));
        assert!(buf.d_toned_color.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn toned_color_gradient_equals_blend_weight() {
        // One splat, loss = sum of one pixel's color: the toned-color
        // gradient is that pixel's blending weight.
        let k = CameraIntrinsics::new(40.0, 40.0, 8.5, 8.5, 17, 17).unwrap();
        let cfg = RasterConfig::default();
        let pose = CameraPose::identity();
        let mut s = Splat::new(Vector3::new(0.0, 0.0, 5.0), [0.5; 3]);
        s.opacity_logit = 0.4;
        s.log_scale = Vector3::from_element((0.3f64).ln());
        let colors = [[0.3, 0.5, 0.7]];
        let out = render(&[s.clone()], &colors, &pose, &k, &cfg);
        let pix = (8 * 17 + 8) as usize;
        let mut dc = vec![[0.0; 3]; 17 * 17];
        dc[pix] = [1.0, 1.0, 1.0];
        let grads = RenderGrads {
            d_color: Some(dc),
            ..Default::default()
        };
        let buf = render_backward(&[s.clone()], &colors, &pose, &k, &cfg, &out, &grads);
        let weight = out.alpha.data[pix]; // single splat: weight = alpha
        for c in 0..3 {
            assert!((buf.d_toned_color[0][c] - weight).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_differences_match_analytic_gradients() {
        let mut rng = StdRng::seed_from_u64(12345);
        let (splats, colors) = fd_scene(&mut rng, 10);
        let k = camera(24, 24);
        let cfg = RasterConfig::default();
        let pose = CameraPose::identity();
        let npix = (k.width * k.height) as usize;
        let out = render(&splats, &colors, &pose, &k, &cfg);
        let wc: Vec<[f64; 3]> = (0..npix)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        // Depth and normal weights only where coverage is solid, away from
        // the depth-validity and renormalization guards.
        let wd: Vec<f64> = (0..npix)
            .map(|i| {
                if out.alpha.data[i] >= 0.2 && out.depth_valid[i] {
                    rng.random_range(-0.1..0.1)
                } else {
                    0.0
                }
            })
            .collect();
        let wn: Vec<[f64; 3]> = (0..npix)
            .map(|i| {
                if out.alpha.data[i] >= 0.2 {
                    [
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    ]
                } else {
                    [0.0; 3]
                }
            })
            .collect();
        let grads = RenderGrads {
            d_color: Some(wc.clone()),
            d_depth: Some(wd.clone()),
            d_normal: Some(wn.clone()),
        };
        let buf = render_backward(&splats, &colors, &pose, &k, &cfg, &out, &grads);

        let h = 1e-4;
        let eval = |splats: &[Splat<f64>], colors: &[[f64; 3]]| {
            scalar_loss(&render(splats, colors, &pose, &k, &cfg), &wc, &wd, &wn)
        };
        let check = |analytic: f64, fd: f64, what: &str| {
            let denom = analytic.abs().max(fd.abs()).max(1e-4);
            let rel = (analytic - fd).abs() / denom;
            assert!(rel < 1e-3, "{what}: analytic {analytic} vs fd {fd} rel {rel}");
        };

        for i in 0..splats.len() {
            for axis in 0..3 {
                let mut plus = splats.to_vec();
                plus[i].mu[axis] += h;
                let mut minus = splats.to_vec();
                minus[i].mu[axis] -= h;
                let fd = (eval(&plus, &colors) - eval(&minus, &colors)) / (2.0 * h);
                check(buf.d_mu[i][axis], fd, &format!("mu[{i}][{axis}]"));
            }
            for c in 0..4 {
                let mut plus = splats.to_vec();
                plus[i].rot[c] += h;
                let mut minus = splats.to_vec();
                minus[i].rot[c] -= h;
                let fd = (eval(&plus, &colors) - eval(&minus, &colors)) / (2.0 * h);
                check(buf.d_rot[i][c], fd, &format!("rot[{i}][{c}]"));
            }
            for axis in 0..3 {
                let mut plus = splats.to_vec();
                plus[i].log_scale[axis] += h;
                let mut minus = splats.to_vec();
                minus[i].log_scale[axis] -= h;
                let fd = (eval(&plus, &colors) - eval(&minus, &colors)) / (2.0 * h);
                check(buf.d_log_scale[i][axis], fd, &format!("log_scale[{i}][{axis}]"));
            }
            {
                let mut plus = splats.to_vec();
                plus[i].opacity_logit += h;
                let mut minus = splats.to_vec();
                minus[i].opacity_logit -= h;
                let fd = (eval(&plus, &colors) - eval(&minus, &colors)) / (2.0 * h);
                check(buf.d_opacity_logit[i], fd, &format!("opacity[{i}]"));
            }
            for c in 0..3 {
                let mut plus = colors.to_vec();
                plus[i][c] += h;
                let mut minus = colors.to_vec();
                minus[i][c] -= h;
                let fd = (eval(&splats, &plus) - eval(&splats, &minus)) / (2.0 * h);
                check(buf.d_toned_color[i][c], fd, &format!("toned[{i}][{c}]"));
            }
        }
    }
}
