//! Shared synthetic-scene fixtures: a ground-truth splat scene, cameras on
//! a small rig, and dataset assembly for training experiments.

#![allow(dead_code)]

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

use msgs_core::camera::{CameraIntrinsics, CameraPose};
use msgs_core::dataset::{Frame, MaskSet, MultiSequenceDataset, ScenePoint};
use msgs_core::img::ImageRgb;
use msgs_core::num::Real;
use msgs_core::raster::{render, RasterConfig};
use msgs_core::splat::Splat;

pub const IMG_SIZE: u32 = 64;

pub fn fixture_intrinsics<T: Real>() -> CameraIntrinsics<T> {
    CameraIntrinsics::new(
        T::lit(70.0),
        T::lit(70.0),
        T::lit(IMG_SIZE as f64 / 2.0),
        T::lit(IMG_SIZE as f64 / 2.0),
        IMG_SIZE,
        IMG_SIZE,
    )
    .unwrap()
}

/// Ground-truth scene: a dense flat "terrain" wall of splats at z ~ 5 plus
/// floating blobs in front of it. Colors stay in [0.1, 0.7] so affine tints
/// keep images inside [0, 1].
pub fn ground_truth_scene<T: Real>(seed: u64, n_blobs: usize) -> Vec<Splat<T>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut splats = Vec::new();
    let grid = 12u32;
    for gy in 0..grid {
        for gx in 0..grid {
            let x = -2.4 + 4.8 * (gx as f64 + 0.5) / grid as f64;
            let y = -2.4 + 4.8 * (gy as f64 + 0.5) / grid as f64;
            let mut s = Splat::new(
                Vector3::new(T::lit(x), T::lit(y), T::lit(5.0 + rng.random_range(-0.05..0.05))),
                [
                    T::lit(0.15 + 0.5 * ((x * 1.4).sin() * 0.5 + 0.5)),
                    T::lit(0.15 + 0.5 * ((y * 1.1 + 0.7).cos() * 0.5 + 0.5)),
                    T::lit(0.15 + 0.5 * (((x + y) * 0.9).sin() * 0.5 + 0.5)),
                ],
            );
            s.log_scale = Vector3::new(T::lit(0.26f64.ln()), T::lit(0.26f64.ln()), T::lit(0.02f64.ln()));
            s.opacity_logit = T::lit(6.0);
            splats.push(s);
        }
    }
    for _ in 0..n_blobs {
        let mut s = Splat::new(
            Vector3::new(
                T::lit(rng.random_range(-1.6..1.6)),
                T::lit(rng.random_range(-1.6..1.6)),
                T::lit(rng.random_range(3.6..4.6)),
            ),
            [
                T::lit(rng.random_range(0.1..0.7)),
                T::lit(rng.random_range(0.1..0.7)),
                T::lit(rng.random_range(0.1..0.7)),
            ],
        );
        let q: [f64; 4] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
        s.rot = [
            T::lit(q[0] / n),
            T::lit(q[1] / n),
            T::lit(q[2] / n),
            T::lit(q[3] / n),
        ];
        s.log_scale = Vector3::new(
            T::lit(rng.random_range(-2.6..-1.6)),
            T::lit(rng.random_range(-2.6..-1.6)),
            T::lit(rng.random_range(-3.4..-2.6)),
        );
        s.opacity_logit = T::lit(rng.random_range(1.5..3.0));
        splats.push(s);
    }
    splats
}

/// Camera rig: positions jittered on a small grid in front of the scene,
/// looking along +z.
pub fn rig_poses<T: Real>(n: usize, seed: u64) -> Vec<CameraPose<T>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let gx = (i % 3) as f64 - 1.0;
            let gy = ((i / 3) % 3) as f64 - 1.0;
            let pos = Vector3::new(
                T::lit(0.55 * gx + rng.random_range(-0.1..0.1)),
                T::lit(0.55 * gy + rng.random_range(-0.1..0.1)),
                T::lit(rng.random_range(-0.25..0.25)),
            );
            // Identity rotation: camera looks along +z; world-to-camera
            // translation is -position.
            CameraPose::new(nalgebra::UnitQuaternion::identity(), -pos)
        })
        .collect()
}

/// Render ground-truth images for the given poses.
pub fn render_gt<T: Real>(
    splats: &[Splat<T>],
    poses: &[CameraPose<T>],
    k: &CameraIntrinsics<T>,
    background: [T; 3],
) -> Vec<ImageRgb<T>> {
    let cfg = RasterConfig::with_background(background);
    let colors: Vec<[T; 3]> = splats.iter().map(|s| s.base_color).collect();
    poses
        .iter()
        .map(|pose| render(splats, &colors, pose, k, &cfg).color)
        .collect()
}

/// Global affine color transform, clamped to [0,1].
pub fn tint_image<T: Real>(img: &ImageRgb<T>, alpha: [f64; 3], beta: [f64; 3]) -> ImageRgb<T> {
    let mut out = img.clone();
    for px in &mut out.data {
        for c in 0..3 {
            let v = T::lit(alpha[c]) * px[c] + T::lit(beta[c]);
            px[c] = v.max(T::zero()).min(T::one());
        }
    }
    out
}

pub struct FrameSpec<T: Real> {
    pub pose: CameraPose<T>,
    pub image: ImageRgb<T>,
    pub sequence_id: usize,
    pub eval: bool,
    pub masks: Option<MaskSet>,
}

/// Assemble an in-memory dataset; initial points are subsampled ground-truth
/// splat positions with their colors (standing in for a sparse
/// reconstruction).
pub fn build_dataset<T: Real>(
    gt_splats: &[Splat<T>],
    frames: Vec<FrameSpec<T>>,
    k: &CameraIntrinsics<T>,
) -> MultiSequenceDataset<T> {
    let mut intrinsics = BTreeMap::new();
    intrinsics.insert(1u32, *k);
    let mut num_sequences = 0;
    let frames: Vec<Frame<T>> = frames
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            num_sequences = num_sequences.max(spec.sequence_id + 1);
            let mut pose = spec.pose;
            pose.sequence_id = spec.sequence_id;
            pose.image_path = format!("frame_{i:04}.png");
            let (w, h) = (spec.image.width, spec.image.height);
            Frame {
                pose,
                camera_id: 1,
                image: spec.image,
                masks: spec.masks.unwrap_or_else(|| MaskSet::empty(w, h)),
                eval: spec.eval,
            }
        })
        .collect();
    let points = gt_splats
        .iter()
        .map(|s| ScenePoint {
            position: s.mu,
            color: s.base_color,
        })
        .collect();
    MultiSequenceDataset {
        intrinsics,
        frames,
        points,
        num_sequences,
    }
}
