//! Quick profiling harness for the synthetic trainer path.

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

use msgs_core::camera::{CameraIntrinsics, CameraPose};
use msgs_core::dataset::{Frame, MaskSet, MultiSequenceDataset, ScenePoint};
use msgs_core::raster::{render, RasterConfig};
use msgs_core::splat::Splat;
use msgs_core::trainer::{train, TrainConfig};

fn main() {
    let n_iter: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let k = CameraIntrinsics::<f32>::new(70.0, 70.0, 32.0, 32.0, 64, 64).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let mut gt: Vec<Splat<f32>> = Vec::new();
    let grid = 12u32;
    for gy in 0..grid {
        for gx in 0..grid {
            let x = -2.4 + 4.8 * (gx as f32 + 0.5) / grid as f32;
            let y = -2.4 + 4.8 * (gy as f32 + 0.5) / grid as f32;
            let mut s = Splat::new(
                Vector3::new(x, y, 5.0),
                [0.3 + 0.2 * (x).sin(), 0.4, 0.3 + 0.2 * (y).cos()],
            );
            s.log_scale = Vector3::new(0.26f32.ln(), 0.26f32.ln(), 0.02f32.ln());
            s.opacity_logit = 6.0;
            gt.push(s);
        }
    }
    for _ in 0..40 {
        let mut s = Splat::new(
            Vector3::new(
                rng.random_range(-1.6..1.6),
                rng.random_range(-1.6..1.6),
                rng.random_range(3.6..4.6),
            ),
            [
                rng.random_range(0.1..0.7),
                rng.random_range(0.1..0.7),
                rng.random_range(0.1..0.7),
            ],
        );
        s.log_scale = Vector3::new(-2.0, -2.0, -3.0);
        s.opacity_logit = 2.0;
        gt.push(s);
    }
    let poses: Vec<CameraPose<f32>> = (0..12)
        .map(|i| {
            let gx = (i % 3) as f32 - 1.0;
            let gy = ((i / 3) % 3) as f32 - 1.0;
            CameraPose::new(
                nalgebra::UnitQuaternion::identity(),
                -Vector3::new(0.55 * gx, 0.55 * gy, 0.0),
            )
        })
        .collect();
    let cfg_raster = RasterConfig::with_background([0.0; 3]);
    let colors: Vec<[f32; 3]> = gt.iter().map(|s| s.base_color).collect();
    let frames: Vec<Frame<f32>> = poses
        .iter()
        .map(|pose| Frame {
            pose: pose.clone(),
            camera_id: 1,
            image: render(&gt, &colors, pose, &k, &cfg_raster).color,
            masks: MaskSet::empty(64, 64),
            eval: false,
        })
        .collect();
    let mut intrinsics = BTreeMap::new();
    intrinsics.insert(1u32, k);
    let dataset = MultiSequenceDataset {
        intrinsics,
        frames,
        points: gt
            .iter()
            .map(|s| ScenePoint {
                position: s.mu,
                color: s.base_color,
            })
            .collect(),
        num_sequences: 1,
    };
    let stage2: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(n_iter / 2);
    let mut config = TrainConfig::<f32> {
        iterations: n_iter,
        stage2_start: Some(stage2),
        seed: 11,
        ..TrainConfig::desk_preset()
    };
    config.progress_every = 0;
    config.densify.max_splats = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(800);
    let start = std::time::Instant::now();
    let model = train(&dataset, &config).unwrap();
    let dt = start.elapsed();
    eprintln!(
        "{} iters in {:.2?} ({:.1} ms/iter), final splats {}",
        n_iter,
        dt,
        dt.as_secs_f64() * 1000.0 / n_iter as f64,
        model.splats.len()
    );
    for r in model.loss_log.iter().step_by((n_iter / 16).max(1)) {
        eprintln!(
            "it {:4}: pho {:.4} scale {:.2} svgeo {:.3} mvgeo {:.3} mvpho {:.4}",
            r.iteration, r.pho, r.scale, r.svgeo, r.mvgeo, r.mvpho
        );
    }
}
