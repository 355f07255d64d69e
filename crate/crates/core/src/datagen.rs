//! UAV camera-trajectory synthesis, actor placement over the visible mesh
//! area, and foreground/background compositing with motion blur.
//!
//! Camera orientations follow the Blender convention: Euler angles
//! (rx, ry, rz) compose as Rz * Ry * Rx acting on a camera that looks along
//! its local -Z with +Y up, so rz spins the camera about the world vertical.
//! Generated poses are converted to the world-to-camera, x-right/y-down/
//! z-forward convention used everywhere else.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::error::{Error, Result};
use crate::img::{ImageRgb, ScalarMap};
use crate::losses::ssim::{blur, gaussian_kernel};
use crate::meshing::{visible_faces, Mesh};
use crate::num::Real;

#[derive(Debug, Clone)]
pub enum TrajectoryKind<T: Real> {
    /// Straight-line motion with fixed orientation.
    Translational { direction: Vector3<T>, span: T },
    /// Fixed position, horizontal sweep of rz across the given range.
    Yaw { range: (T, T) },
    /// Circular path about a center, camera aimed at it. The base
    /// translation's z is the height offset above the center.
    Orbit { radius: T, center: Vector3<T> },
    /// Fixed x/y, altitude sweep across the given z range.
    Altitude { z_range: (T, T) },
}

#[derive(Debug, Clone)]
pub struct TrajectorySpec<T: Real> {
    pub kind: TrajectoryKind<T>,
    pub base_t: Vector3<T>,
    /// Blender-convention Euler angles (radians).
    pub base_r: Vector3<T>,
    pub noise_sigma_t: Vector3<T>,
    pub noise_sigma_r: Vector3<T>,
    pub frames: usize,
}

/// Camera-to-world rotation for Blender Euler angles, already converted to
/// the x-right/y-down/z-forward camera frame.
pub fn euler_to_camera_rotation<T: Real>(r: &Vector3<T>) -> Matrix3<T> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), r.x).into_inner();
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), r.y).into_inner();
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), r.z).into_inner();
    // Blender camera axes -> render camera axes: x right, y down, z forward.
    let flip = Matrix3::from_diagonal(&Vector3::new(T::one(), -T::one(), -T::one()));
    rz * ry * rx * flip
}

fn pose_from_camera_to_world<T: Real>(r_wc: Matrix3<T>, position: Vector3<T>) -> CameraPose<T> {
    let r_cw = r_wc.transpose();
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r_cw));
    CameraPose::new(rotation, -(r_cw * position))
}

/// Look-at rotation (camera-to-world) aiming the +z forward axis at a
/// target, with the image's down direction following -world-up.
fn look_at<T: Real>(position: &Vector3<T>, target: &Vector3<T>) -> Matrix3<T> {
    let forward = (target - position).normalize();
    let mut up = Vector3::new(T::zero(), T::zero(), T::one());
    if forward.cross(&up).norm() < T::lit(1e-9) {
        up = Vector3::new(T::zero(), T::one(), T::zero());
    }
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    Matrix3::from_columns(&[right, down, forward])
}

/// Generate the camera poses of a trajectory; deterministic per seed.
pub fn gen_trajectory<T: Real>(spec: &TrajectorySpec<T>, seed: u64) -> Result<Vec<CameraPose<T>>> {
    if spec.frames == 0 {
        return Err(Error::InvalidArg("trajectory needs at least one frame".into()));
    }
    if let TrajectoryKind::Orbit { radius, .. } = &spec.kind {
        if *radius <= T::zero() {
            return Err(Error::InvalidArg("orbit radius must be positive".into()));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let frames = spec.frames;
    let mut poses = Vec::with_capacity(frames);
    let step = |i: usize, n: usize| -> T {
        if n <= 1 {
            T::zero()
        } else {
            T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap()
        }
    };

    for i in 0..frames {
        // Fixed draw order regardless of sigma so the stream is stable.
        let mut draw3 = |sigma: &Vector3<T>| -> Vector3<T> {
            Vector3::new(
                sigma.x * T::lit(StandardNormal.sample(&mut rng)),
                sigma.y * T::lit(StandardNormal.sample(&mut rng)),
                sigma.z * T::lit(StandardNormal.sample(&mut rng)),
            )
        };
        let eps_t = draw3(&spec.noise_sigma_t);
        let eps_r = draw3(&spec.noise_sigma_r);

        let pose = match &spec.kind {
            TrajectoryKind::Translational { direction, span } => {
                let position = spec.base_t + direction * (*span * step(i, frames)) + eps_t;
                let r = spec.base_r + eps_r;
                pose_from_camera_to_world(euler_to_camera_rotation(&r), position)
            }
            TrajectoryKind::Yaw { range } => {
                let position = spec.base_t + eps_t;
                let rz = range.0
                    + (range.1 - range.0) * T::from_usize(i).unwrap()
                        / T::from_usize(frames).unwrap();
                let r = Vector3::new(spec.base_r.x, spec.base_r.y, rz) + eps_r;
                pose_from_camera_to_world(euler_to_camera_rotation(&r), position)
            }
            TrajectoryKind::Orbit { radius, center } => {
                let phi = T::lit(2.0) * T::pi() * T::from_usize(i).unwrap()
                    / T::from_usize(frames).unwrap();
                let position = Vector3::new(
                    *radius * phi.cos() + center.x,
                    *radius * phi.sin() + center.y,
                    spec.base_t.z + center.z,
                ) + eps_t;
                let mut r_wc = look_at(&position, center);
                // Rotation noise perturbs the aim in the camera frame.
                if eps_r != Vector3::zeros() {
                    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), eps_r.x);
                    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), eps_r.y);
                    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), eps_r.z);
                    r_wc *= (rz * ry * rx).into_inner();
                }
                pose_from_camera_to_world(r_wc, position)
            }
            TrajectoryKind::Altitude { z_range } => {
                let z = z_range.0 + (z_range.1 - z_range.0) * step(i, frames);
                let position = Vector3::new(spec.base_t.x, spec.base_t.y, z) + eps_t;
                let r = spec.base_r + eps_r;
                pose_from_camera_to_world(euler_to_camera_rotation(&r), position)
            }
        };
        poses.push(pose);
    }
    Ok(poses)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: usize,
    /// World-to-camera rotation (w, x, y, z).
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

pub fn trajectory_to_jsonl<T: Real>(poses: &[CameraPose<T>]) -> String {
    let mut out = String::new();
    for (i, pose) in poses.iter().enumerate() {
        let q = pose.rotation.quaternion();
        let record = PoseRecord {
            frame: i,
            quaternion: [
                q.w.to_f64_lossy(),
                q.i.to_f64_lossy(),
                q.j.to_f64_lossy(),
                q.k.to_f64_lossy(),
            ],
            translation: [
                pose.translation.x.to_f64_lossy(),
                pose.translation.y.to_f64_lossy(),
                pose.translation.z.to_f64_lossy(),
            ],
        };
        out.push_str(&serde_json::to_string(&record).expect("pose serializes"));
        out.push('\n');
    }
    out
}

pub fn trajectory_from_jsonl<T: Real>(text: &str, origin: &str) -> Result<Vec<CameraPose<T>>> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PoseRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, i + 1, format!("bad pose record: {e}")))?;
        let [w, x, y, z] = record.quaternion;
        let rotation =
            crate::camera::unit_quaternion(T::lit(w), T::lit(x), T::lit(y), T::lit(z))
                .ok_or_else(|| Error::parse(origin, i + 1, "quaternion has zero norm"))?;
        poses.push(CameraPose::new(
            rotation,
            Vector3::new(
                T::lit(record.translation[0]),
                T::lit(record.translation[1]),
                T::lit(record.translation[2]),
            ),
        ));
    }
    Ok(poses)
}

#[derive(Debug, Clone)]
pub struct ActorPlacement<T: Real> {
    pub actor_id: usize,
    pub position: Vector3<T>,
    pub heading: T,
    pub scale: T,
}

/// Mean position of all actors.
pub fn actor_center<T: Real>(placements: &[ActorPlacement<T>]) -> Result<Vector3<T>> {
    if placements.is_empty() {
        return Err(Error::InvalidArg("no actors to average".into()));
    }
    let sum = placements
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.position);
    Ok(sum / T::from_usize(placements.len()).unwrap())
}

/// Sample actor positions over the mesh faces visible from every pose of the
/// trajectory: area-weighted face choice, uniform barycentric placement,
/// rejection below the spacing minimum.
#[allow(clippy::too_many_arguments)]
pub fn place_actors<T: Real>(
    mesh: &Mesh<T>,
    trajectory: &[CameraPose<T>],
    k: &CameraIntrinsics<T>,
    n_actors: usize,
    min_spacing: T,
    actor_scale: T,
    seed: u64,
) -> Result<Vec<ActorPlacement<T>>> {
    if mesh.faces.is_empty() {
        return Err(Error::InvalidArg("mesh has no faces".into()));
    }
    let visible = visible_faces(mesh, trajectory, k);
    let mut cdf = Vec::with_capacity(visible.len());
    let mut total = T::zero();
    for &f in &visible {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if visible.is_empty() || total <= T::zero() {
        return Err(Error::InvalidArg(
            "no visible mesh area for actor placement".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut placements: Vec<ActorPlacement<T>> = Vec::with_capacity(n_actors);
    let max_attempts = 1000 * n_actors.max(1);
    let mut attempts = 0;
    while placements.len() < n_actors && attempts < max_attempts {
        attempts += 1;
        let u = T::lit(rng.random_range(0.0..1.0)) * total;
        let slot = cdf.partition_point(|&c| c < u).min(visible.len() - 1);
        let f = mesh.faces[visible[slot]];
        let (r1, r2): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let sq = T::lit(r1.sqrt());
        let a = T::one() - sq;
        let b = sq * (T::one() - T::lit(r2));
        let c = sq * T::lit(r2);
        let p = mesh.vertices[f[0] as usize] * a
            + mesh.vertices[f[1] as usize] * b
            + mesh.vertices[f[2] as usize] * c;
        if placements
            .iter()
            .any(|q| (q.position - p).norm() < min_spacing)
        {
            continue;
        }
        let heading = T::lit(rng.random_range(0.0..std::f64::consts::TAU));
        placements.push(ActorPlacement {
            actor_id: placements.len(),
            position: p,
            heading,
            scale: actor_scale,
        });
    }
    if placements.len() < n_actors {
        return Err(Error::InvalidArg(format!(
            "could not place {n_actors} actors with spacing {min_spacing:?}; placed {}",
            placements.len()
        )));
    }
    Ok(placements)
}

/// Normalized detector-style box annotation: class, center, size in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct BoxAnnotation {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

pub fn annotations_to_string(boxes: &[BoxAnnotation]) -> String {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format!("{} {} {} {} {}\n", b.class_id, b.cx, b.cy, b.w, b.h));
    }
    out
}

pub fn annotations_from_string(text: &str, origin: &str) -> Result<Vec<BoxAnnotation>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(origin, i + 1, "expected 5 fields"));
        }
        let bad = |what: &str| Error::parse(origin, i + 1, format!("bad {what}"));
        boxes.push(BoxAnnotation {
            class_id: fields[0].parse().map_err(|_| bad("class id"))?,
            cx: fields[1].parse().map_err(|_| bad("cx"))?,
            cy: fields[2].parse().map_err(|_| bad("cy"))?,
            w: fields[3].parse().map_err(|_| bad("w"))?,
            h: fields[4].parse().map_err(|_| bad("h"))?,
        });
    }
    Ok(boxes)
}

/// Foreground RGBA layer plus compositing parameters.
#[derive(Debug, Clone)]
pub struct CompositeJob<T: Real> {
    pub fg_color: ImageRgb<T>,
    pub fg_alpha: ScalarMap<T>,
    /// Set when fg_color is premultiplied by alpha.
    pub premultiplied: bool,
    pub bg: ImageRgb<T>,
    pub blur_sigma: T,
    /// Blur the alpha map alongside the foreground (off by default: the
    /// matte stays sharp while the foreground content blurs).
    pub co_blur_alpha: bool,
    pub annotations: Vec<BoxAnnotation>,
}

/// Gaussian motion blur of the foreground followed by straight alpha
/// blending over the background, clamped to [0,1].
pub fn composite<T: Real>(job: &CompositeJob<T>) -> Result<ImageRgb<T>> {
    let (w, h) = (job.bg.width, job.bg.height);
    if job.fg_color.width != w
        || job.fg_color.height != h
        || job.fg_alpha.width != w
        || job.fg_alpha.height != h
    {
        return Err(Error::Mismatch(format!(
            "foreground {}x{} vs background {w}x{h}",
            job.fg_color.width, job.fg_color.height
        )));
    }
    let mut fg = job.fg_color.clone();
    if job.premultiplied {
        for (px, &a) in fg.data.iter_mut().zip(job.fg_alpha.data.iter()) {
            if a > T::lit(1e-6) {
                for c in 0..3 {
                    px[c] /= a;
                }
            }
        }
    }
    let sigma = job.blur_sigma.to_f64_lossy();
    let (blurred, alpha) = if sigma > 0.0 {
        let radius = (3.0 * sigma).ceil() as usize;
        let kernel = gaussian_kernel::<T>(radius, sigma);
        let mut out = fg.clone();
        for ch in 0..3 {
            let b = blur(&fg.channel(ch), &kernel);
            for (px, v) in out.data.iter_mut().zip(b.data.iter()) {
                px[ch] = *v;
            }
        }
        let alpha = if job.co_blur_alpha {
            blur(&job.fg_alpha, &kernel)
        } else {
            job.fg_alpha.clone()
        };
        (out, alpha)
    } else {
        (fg, job.fg_alpha.clone())
    };

    let mut out = ImageRgb::new(w, h);
    for i in 0..out.data.len() {
        let a = alpha.data[i];
        for c in 0..3 {
            let v = a * blurred.data[i][c] + (T::one() - a) * job.bg.data[i][c];
            out.data[i][c] = v.max(T::zero()).min(T::one());
        }
    }
    Ok(out)
}

/// Fallback foreground renderer: actors as two-tone textured billboards
/// standing on their placement point, so the composition path runs without
/// any external renderer. Returns the RGBA layer plus per-actor boxes.
pub fn render_billboards<T: Real>(
    placements: &[ActorPlacement<T>],
    pose: &CameraPose<T>,
    k: &CameraIntrinsics<T>,
) -> (ImageRgb<T>, ScalarMap<T>, Vec<BoxAnnotation>) {
    let (w, h) = (k.width, k.height);
    let mut color = ImageRgb::new(w, h);
    let mut alpha = ScalarMap::new(w, h);
    let mut zbuf = ScalarMap::filled(w, h, T::lit(f64::MAX));
    let mut boxes = Vec::new();
    let up = Vector3::new(T::zero(), T::zero(), T::one());

    // Far to near, so closer actors overwrite.
    let mut order: Vec<usize> = (0..placements.len()).collect();
    order.sort_by(|&a, &b| {
        let za = pose.to_camera(&placements[a].position).z;
        let zb = pose.to_camera(&placements[b].position).z;
        zb.partial_cmp(&za).unwrap_or(std::cmp::Ordering::Equal)
    });

    for &ai in &order {
        let actor = &placements[ai];
        let foot = pose.to_camera(&actor.position);
        let head = pose.to_camera(&(actor.position + up * actor.scale));
        if foot.z <= T::lit(0.05) || head.z <= T::lit(0.05) {
            continue;
        }
        let foot_px = k.project(&foot);
        let head_px = k.project(&head);
        let height_px = (foot_px.y - head_px.y).abs().max(T::one());
        let width_px = (height_px * T::lit(0.45)).max(T::one());
        let cx = (foot_px.x + head_px.x) * T::lit(0.5);
        let cy = (foot_px.y + head_px.y) * T::lit(0.5);
        let x0 = cx - width_px * T::lit(0.5);
        let x1 = cx + width_px * T::lit(0.5);
        let y0 = cy - height_px * T::lit(0.5);
        let y1 = cy + height_px * T::lit(0.5);

        // Two-tone texture split at the waist, shaded by heading.
        let shade = T::lit(0.75) + T::lit(0.25) * actor.heading.cos();
        let torso = [T::lit(0.8) * shade, T::lit(0.2) * shade, T::lit(0.2) * shade];
        let legs = [T::lit(0.15) * shade, T::lit(0.15) * shade, T::lit(0.6) * shade];

        let px0 = x0.floor().to_i64().unwrap_or(0).max(0);
        let px1 = x1.ceil().to_i64().unwrap_or(0).min(w as i64 - 1);
        let py0 = y0.floor().to_i64().unwrap_or(0).max(0);
        let py1 = y1.ceil().to_i64().unwrap_or(0).min(h as i64 - 1);
        if px0 > px1 || py0 > py1 {
            continue;
        }
        let depth = foot.z;
        for py in py0..=py1 {
            for px in px0..=px1 {
                let fx = T::from_i64(px).unwrap() + T::lit(0.5);
                let fy = T::from_i64(py).unwrap() + T::lit(0.5);
                if fx < x0 || fx > x1 || fy < y0 || fy > y1 {
                    continue;
                }
                let i = (py as u32 * w + px as u32) as usize;
                if depth >= zbuf.data[i] {
                    continue;
                }
                zbuf.data[i] = depth;
                let t = (fy - y0) / (y1 - y0).max(T::lit(1e-9));
                color.data[i] = if t < T::lit(0.55) { torso } else { legs };
                alpha.data[i] = T::one();
            }
        }
        let wf = w as f64;
        let hf = h as f64;
        let bx0 = x0.to_f64_lossy().max(0.0);
        let bx1 = x1.to_f64_lossy().min(wf);
        let by0 = y0.to_f64_lossy().max(0.0);
        let by1 = y1.to_f64_lossy().min(hf);
        if bx1 > bx0 && by1 > by0 {
            boxes.push(BoxAnnotation {
                class_id: 0,
                cx: (bx0 + bx1) / 2.0 / wf,
                cy: (by0 + by1) / 2.0 / hf,
                w: (bx1 - bx0) / wf,
                h: (by1 - by0) / hf,
            });
        }
    }
    (color, alpha, boxes)
}
