//! Two-stage training loop: stage 1 fits splats and the appearance model
//! under the masked photometric loss plus scale regularization; stage 2
//! switches to refined masks and adds the single-view normal and multi-view
//! consistency terms. One uniformly sampled frame per iteration, Adam on
//! every parameter group, densify/prune on a schedule.
//!
//! Training is bitwise deterministic for a fixed seed and config at any
//! thread count: the loop is single-writer, all parallel inner kernels
//! reduce in fixed order, and every random draw comes from one seeded
//! generator.

mod adam;
mod checkpoint;
mod densify;

pub use adam::{adam_step, adam_step_default, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint_bytes, save_checkpoint, write_checkpoint_bytes,
    CHECKPOINT_MAGIC,
};
pub use densify::{densify_and_prune, DensifyConfig, DensifyOutcome, GradStats};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::appearance::{appearance_backward, modulate_colors, AppearanceModel, SEQ_EMBED_DIM};
use crate::dataset::MultiSequenceDataset;
use crate::error::{Error, Result};
use crate::img::{Mask, ScalarMap};
use crate::losses::ncc::NccPatch;
use crate::losses::{
    homography_for_patch, mv_geometric, mv_photometric_ncc, photometric_error_map,
    photometric_loss, scale_loss, svgeo_loss, LossWeights,
};
use crate::mask_refine::{refine_masks, RefineParams};
use crate::num::Real;
use crate::raster::{render, render_backward, RasterConfig, RenderGrads};
use crate::splat::{Splat, EMBED_DIM};

#[derive(Debug, Clone)]
pub struct LearningRates<T: Real> {
    pub position: T,
    pub position_final: T,
    pub rotation: T,
    pub scale: T,
    pub opacity: T,
    pub base_color: T,
    /// MLP weights and both embedding kinds.
    pub appearance: T,
}

impl<T: Real> Default for LearningRates<T> {
    fn default() -> Self {
        Self {
            position: T::lit(1.6e-4),
            position_final: T::lit(1.6e-6),
            rotation: T::lit(1e-3),
            scale: T::lit(5e-3),
            opacity: T::lit(5e-2),
            base_color: T::lit(2.5e-3),
            appearance: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T: Real> {
    pub iterations: usize,
    /// Stage 2 begins here; defaults to iterations / 2.
    pub stage2_start: Option<usize>,
    pub weights: LossWeights<T>,
    pub rates: LearningRates<T>,
    pub densify: DensifyConfig<T>,
    pub refine: RefineParams,
    pub background: [T; 3],
    pub seed: u64,
    /// Train with transient masks (stage-1 SAM, stage-2 refined).
    pub use_masks: bool,
    /// Run mask refinement at the stage-2 boundary.
    pub use_refinement: bool,
    pub ncc_patch_size: usize,
    pub ncc_stride: usize,
    /// Print a progress line every N iterations (0 = silent).
    pub progress_every: usize,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            stage2_start: None,
            weights: LossWeights::default(),
            rates: LearningRates::default(),
            densify: DensifyConfig::default(),
            refine: RefineParams::default(),
            background: [T::zero(); 3],
            seed: 0,
            use_masks: true,
            use_refinement: true,
            ncc_patch_size: 7,
            ncc_stride: 4,
            progress_every: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    /// Desk-scale preset used by the synthetic experiments.
    pub fn desk_preset() -> Self {
        Self {
            iterations: 2000,
            densify: DensifyConfig {
                max_splats: 2000,
                ..DensifyConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn stage2_begin(&self) -> usize {
        self.stage2_start.unwrap_or(self.iterations / 2)
    }

    pub fn raster(&self) -> RasterConfig<T> {
        RasterConfig::with_background(self.background)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LossRecord<T: Real> {
    pub iteration: usize,
    pub pho: T,
    pub scale: T,
    pub svgeo: T,
    pub mvgeo: T,
    pub mvpho: T,
    pub total: T,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T: Real> {
    pub splats: Vec<Splat<T>>,
    pub appearance: AppearanceModel<T>,
    pub loss_log: Vec<LossRecord<T>>,
    /// Refined transient masks per frame, filled at the stage-2 boundary.
    pub refined_masks: Vec<Option<Mask>>,
}

/// Seed splats from the reconstruction points: base color from the point,
/// isotropic scale from the mean distance to the 3 nearest neighbors.
pub fn init_splats_from_points<T: Real>(dataset: &MultiSequenceDataset<T>) -> Vec<Splat<T>> {
    let points = &dataset.points;
    let opacity_logit = T::lit((0.1f64 / 0.9).ln());
    let mut splats = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut dists: Vec<T> = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| (q.position - p.position).norm())
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let k = dists.len().min(3);
        let sigma = if k == 0 {
            T::lit(0.1)
        } else {
            let sum = dists[..k].iter().fold(T::zero(), |s, &d| s + d);
            (sum / T::from_usize(k).unwrap()).max(T::lit(1e-4))
        };
        let mut s = Splat::new(p.position, p.color);
        s.log_scale = Vector3::from_element(sigma.ln());
        s.opacity_logit = opacity_logit;
        splats.push(s);
    }
    splats
}

pub fn scene_extent<T: Real>(dataset: &MultiSequenceDataset<T>) -> T {
    if dataset.points.is_empty() {
        return T::one();
    }
    let n = T::from_usize(dataset.points.len()).unwrap();
    let centroid = dataset
        .points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.position)
        / n;
    let extent = dataset
        .points
        .iter()
        .fold(T::zero(), |m, p| m.max((p.position - centroid).norm()));
    extent.max(T::lit(1e-6))
}

/// Per-frame unmasked photometric error maps of the current model.
pub fn compute_error_maps<T: Real>(
    splats: &[Splat<T>],
    appearance: &AppearanceModel<T>,
    dataset: &MultiSequenceDataset<T>,
    config: &TrainConfig<T>,
) -> Result<Vec<ScalarMap<T>>> {
    let raster_cfg = config.raster();
    let mut maps = Vec::with_capacity(dataset.frames.len());
    for frame in &dataset.frames {
        let k = dataset.intrinsics_for(frame);
        let toned = modulate_colors(appearance, splats, frame.pose.sequence_id, &frame.pose)?;
        let out = render(splats, &toned.values, &frame.pose, k, &raster_cfg);
        maps.push(photometric_error_map(
            &out.color,
            &frame.image,
            config.weights.lambda_pho,
        ));
    }
    Ok(maps)
}

/// Nearest same-sequence frame by camera-center distance, excluding self.
fn neighbor_frames<T: Real>(dataset: &MultiSequenceDataset<T>, train: &[usize]) -> Vec<Option<usize>> {
    let centers: Vec<Vector3<T>> = dataset.frames.iter().map(|f| f.pose.center()).collect();
    dataset
        .frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let mut best: Option<(usize, T)> = None;
            for &j in train {
                if j == i || dataset.frames[j].pose.sequence_id != frame.pose.sequence_id {
                    continue;
                }
                let d = (centers[j] - centers[i]).norm();
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

struct GroupStates<T: Real> {
    mu: AdamState<T>,
    rot: AdamState<T>,
    log_scale: AdamState<T>,
    opacity: AdamState<T>,
    base_color: AdamState<T>,
    embedding: AdamState<T>,
    layers: Vec<AdamState<T>>,
    seq: AdamState<T>,
}

impl<T: Real> GroupStates<T> {
    fn new(n: usize, model: &AppearanceModel<T>) -> Self {
        Self {
            mu: AdamState::new(3 * n),
            rot: AdamState::new(4 * n),
            log_scale: AdamState::new(3 * n),
            opacity: AdamState::new(n),
            base_color: AdamState::new(3 * n),
            embedding: AdamState::new(EMBED_DIM * n),
            layers: model
                .layers
                .iter()
                .map(|l| AdamState::new(l.weight.len() + l.bias.len()))
                .collect(),
            seq: AdamState::new(SEQ_EMBED_DIM * model.num_sequences()),
        }
    }

    fn remap(&mut self, keep: &[Option<usize>]) {
        self.mu = self.mu.remap(keep, 3);
        self.rot = self.rot.remap(keep, 4);
        self.log_scale = self.log_scale.remap(keep, 3);
        self.opacity = self.opacity.remap(keep, 1);
        self.base_color = self.base_color.remap(keep, 3);
        self.embedding = self.embedding.remap(keep, EMBED_DIM);
    }
}

pub fn train<T: Real>(
    dataset: &MultiSequenceDataset<T>,
    config: &TrainConfig<T>,
) -> Result<TrainedModel<T>> {
    dataset.validate()?;
    if dataset.points.is_empty() {
        return Err(Error::InvalidArg("dataset has no initial points".into()));
    }
    for seq in 0..dataset.num_sequences {
        if dataset.frames_of_sequence(seq).is_empty() {
            return Err(Error::InvalidArg(format!("sequence {seq} has no frames")));
        }
    }

    let mut splats = init_splats_from_points(dataset);
    let mut model = AppearanceModel::<T>::new(dataset.num_sequences, config.seed);
    let mut refined_masks: Vec<Option<Mask>> = vec![None; dataset.frames.len()];
    let mut log = Vec::with_capacity(config.iterations);
    if config.iterations == 0 {
        return Ok(TrainedModel {
            splats,
            appearance: model,
            loss_log: log,
            refined_masks,
        });
    }

    let raster_cfg = config.raster();
    let extent = scene_extent(dataset);
    let train_frames = dataset.train_frame_indices();
    if train_frames.is_empty() {
        return Err(Error::InvalidArg("no training frames".into()));
    }
    let neighbors = neighbor_frames(dataset, &train_frames);
    let stage2 = config.stage2_begin();
    let densify_end = (config.densify.end_fraction * config.iterations as f64) as usize;

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut states = GroupStates::new(splats.len(), &model);
    let mut stats = GradStats::new(splats.len());

    for it in 0..config.iterations {
        // Densify/prune on schedule, using stats gathered since last pass.
        if it >= config.densify.start
            && it <= densify_end
            && config.densify.interval > 0
            && (it - config.densify.start) % config.densify.interval == 0
            && stats.count > 0
        {
            if !splats.iter().all(|s| s.is_finite()) || !model.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite parameter detected at iteration {it}"
                )));
            }
            let mean_grads: Vec<T> = stats
                .accum_norm
                .iter()
                .map(|&a| a / T::from_u64(stats.count).unwrap())
                .collect();
            let outcome = densify_and_prune(&splats, &stats, &config.densify, extent, &mut rng);
            if config.progress_every > 0 {
                let mut sorted = mean_grads;
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                let p50 = sorted[sorted.len() / 2];
                let p90 = sorted[sorted.len() * 9 / 10];
                eprintln!(
                    "it {it}: densify {} -> {} (cloned {}, split {}, pruned {}); grad p50 {:.2e} p90 {:.2e}",
                    splats.len(),
                    outcome.splats.len(),
                    outcome.cloned,
                    outcome.split,
                    outcome.pruned,
                    p50.to_f64_lossy(),
                    p90.to_f64_lossy(),
                );
            }
            splats = outcome.splats;
            states.remap(&outcome.state_map);
            stats = GradStats::new(splats.len());
        }

        // Stage boundary: refine the transient masks once.
        if it == stage2 && config.use_refinement && config.use_masks {
            let err_maps = compute_error_maps(&splats, &model, dataset, config)?;
            for &fi in &train_frames {
                let frame = &dataset.frames[fi];
                refined_masks[fi] = Some(refine_masks(
                    &frame.masks.sam,
                    &frame.masks.entity,
                    &err_maps[fi],
                    &config.refine,
                ));
            }
        }

        let frame_idx = train_frames[rng.random_range(0..train_frames.len())];
        let frame = &dataset.frames[frame_idx];
        let k = dataset.intrinsics_for(frame);
        let in_stage2 = it >= stage2;
        let mask: Option<&Mask> = if config.use_masks {
            if in_stage2 {
                refined_masks[frame_idx].as_ref().or(Some(&frame.masks.sam))
            } else {
                Some(&frame.masks.sam)
            }
        } else {
            None
        };

        let toned = modulate_colors(&model, &splats, frame.pose.sequence_id, &frame.pose)?;
        let out = render(&splats, &toned.values, &frame.pose, k, &raster_cfg);

        let (l_pho, mut d_color) =
            photometric_loss(&out.color, &frame.image, mask, config.weights.lambda_pho);
        let (l_scale, d_scale) = scale_loss(&splats, config.weights.lambda_s);

        let mut record = LossRecord {
            iteration: it,
            pho: l_pho,
            scale: l_scale,
            ..Default::default()
        };

        let mut d_depth = vec![T::zero(); d_color.len()];
        let mut d_normal = vec![[T::zero(); 3]; d_color.len()];
        // Deferred neighbor backward inputs: (frame index, toned, render,
        // scaled depth gradient).
        let mut neighbor_pass = None;

        if in_stage2 {
            // The geometric losses are pixel/patch sums; normalize them so
            // the paper's lambda values weigh them against the mean-valued
            // photometric loss.
            let inv_npix = T::one() / T::from_usize(d_color.len()).unwrap();

            // Single-view normal consistency.
            let (l_sv, d_n_sv, d_d_sv) = svgeo_loss(&out, k, mask);
            let w_sv = config.weights.lambda_c * inv_npix;
            record.svgeo = w_sv * l_sv;
            for i in 0..d_normal.len() {
                for c in 0..3 {
                    d_normal[i][c] += w_sv * d_n_sv[i][c];
                }
                d_depth[i] += w_sv * d_d_sv.data[i];
            }

            if let Some(nbr_idx) = neighbors[frame_idx] {
                let nbr = &dataset.frames[nbr_idx];
                let toned_nbr =
                    modulate_colors(&model, &splats, nbr.pose.sequence_id, &nbr.pose)?;
                let out_nbr = render(&splats, &toned_nbr.values, &nbr.pose, k, &raster_cfg);

                let (l_mv, d_ref_depth, d_nbr_depth) =
                    mv_geometric(&out, &out_nbr, &frame.pose, &nbr.pose, k);
                let w_mv = config.weights.lambda_a * inv_npix;
                record.mvgeo = w_mv * l_mv;
                for i in 0..d_depth.len() {
                    d_depth[i] += w_mv * d_ref_depth.data[i];
                }

                // NCC patches over the reference gray render.
                let ref_gray = out.color.to_gray();
                let nbr_gray = out_nbr.color.to_gray();
                let patches = build_ncc_patches(&out, k, &frame.pose, &nbr.pose, mask, config);
                let (l_ncc, d_gray) =
                    mv_photometric_ncc(&ref_gray, &nbr_gray, &patches, config.ncc_patch_size);
                let w_ncc = config.weights.lambda_b
                    / T::from_usize(patches.len().max(1)).unwrap();
                record.mvpho = w_ncc * l_ncc;
                let third = T::lit(1.0 / 3.0);
                for i in 0..d_color.len() {
                    let g = w_ncc * d_gray.data[i] * third;
                    for c in 0..3 {
                        d_color[i][c] += g;
                    }
                }

                let d_nbr_scaled: Vec<T> = d_nbr_depth
                    .data
                    .iter()
                    .map(|&v| w_mv * v)
                    .collect();
                neighbor_pass = Some((nbr_idx, toned_nbr, out_nbr, d_nbr_scaled));
            }
        }

        record.total = record.pho + record.scale + record.svgeo + record.mvgeo + record.mvpho;
        for (term, value) in [
            ("pho", record.pho),
            ("scale", record.scale),
            ("svgeo", record.svgeo),
            ("mvgeo", record.mvgeo),
            ("mvpho", record.mvpho),
        ] {
            if !value.finite() {
                return Err(Error::NonFiniteLoss {
                    iteration: it,
                    term: term.into(),
                });
            }
        }

        let grads = RenderGrads {
            d_color: Some(d_color),
            d_depth: Some(d_depth),
            d_normal: Some(d_normal),
        };
        let mut buf =
            render_backward(&splats, &toned.values, &frame.pose, k, &raster_cfg, &out, &grads);
        let mut app = appearance_backward(&model, &splats, &toned, &buf.d_toned_color);

        // Fold in the neighbor render's depth-path gradients before the
        // single optimizer step.
        if let Some((nbr_idx, toned_nbr, out_nbr, d_nbr_depth)) = neighbor_pass {
            let nbr = &dataset.frames[nbr_idx];
            let grads_nbr = RenderGrads {
                d_depth: Some(d_nbr_depth),
                ..Default::default()
            };
            let buf_nbr = render_backward(
                &splats,
                &toned_nbr.values,
                &nbr.pose,
                k,
                &raster_cfg,
                &out_nbr,
                &grads_nbr,
            );
            let app_nbr =
                appearance_backward(&model, &splats, &toned_nbr, &buf_nbr.d_toned_color);
            buf.accumulate(&buf_nbr);
            app.accumulate(&app_nbr);
        }

        apply_updates(
            &mut splats,
            &mut model,
            &mut states,
            &mut stats,
            buf,
            app,
            Some(&d_scale),
            config,
            it,
        )?;

        if config.progress_every > 0 && (it % config.progress_every == 0 || it + 1 == config.iterations)
        {
            eprintln!(
                "it {it}: pho {:.4} scale {:.3} svgeo {:.4} mvgeo {:.4} mvpho {:.4} splats {}",
                record.pho.to_f64_lossy(),
                record.scale.to_f64_lossy(),
                record.svgeo.to_f64_lossy(),
                record.mvgeo.to_f64_lossy(),
                record.mvpho.to_f64_lossy(),
                splats.len()
            );
        }
        log.push(record);
    }

    if !splats.iter().all(|s| s.is_finite()) || !model.is_finite() {
        return Err(Error::Format("non-finite parameter after training".into()));
    }
    Ok(TrainedModel {
        splats,
        appearance: model,
        loss_log: log,
        refined_masks,
    })
}

fn build_ncc_patches<T: Real>(
    out: &crate::raster::RenderOutput<T>,
    k: &crate::camera::CameraIntrinsics<T>,
    ref_pose: &crate::camera::CameraPose<T>,
    nbr_pose: &crate::camera::CameraPose<T>,
    mask: Option<&Mask>,
    config: &TrainConfig<T>,
) -> Vec<NccPatch<T>> {
    let ps = config.ncc_patch_size as u32;
    let stride = config.ncc_stride as u32;
    let half = T::lit(0.5);
    let mut patches = Vec::new();
    let mut y0 = 0;
    while y0 + ps <= out.height {
        let mut x0 = 0;
        while x0 + ps <= out.width {
            let cx = x0 + ps / 2;
            let cy = y0 + ps / 2;
            let idx = (cy * out.width + cx) as usize;
            let masked = mask.map(|m| m.data[idx]).unwrap_or(false);
            if out.depth_valid[idx] && !masked {
                let n = out.normal.data[idx];
                let n = Vector3::new(n[0], n[1], n[2]);
                let dir = k.unproject_dir(
                    T::from_u32(cx).unwrap() + half,
                    T::from_u32(cy).unwrap() + half,
                );
                let d = out.depth.data[idx] * n.dot(&dir);
                if let Some(h) = homography_for_patch(ref_pose, nbr_pose, k, &n, d) {
                    patches.push(NccPatch {
                        x0,
                        y0,
                        homography: h,
                    });
                }
            }
            x0 += stride;
        }
        y0 += stride;
    }
    patches
}

#[allow(clippy::too_many_arguments)]
fn apply_updates<T: Real>(
    splats: &mut [Splat<T>],
    model: &mut AppearanceModel<T>,
    states: &mut GroupStates<T>,
    stats: &mut GradStats<T>,
    buf: crate::raster::GradientBuffer<T>,
    app: crate::appearance::AppearanceGrads<T>,
    d_scale: Option<&[Vector3<T>]>,
    config: &TrainConfig<T>,
    it: usize,
) -> Result<()> {
    let n = splats.len();
    let rates = &config.rates;
    // Exponential decay of the position rate toward its final value.
    let progress = T::from_usize(it).unwrap() / T::from_usize(config.iterations.max(1)).unwrap();
    let lr_pos = rates.position * (rates.position_final / rates.position).powf(progress);

    stats.record(&buf.d_mu);

    // Gather / step / scatter per parameter group.
    let mut flat = vec![T::zero(); 3 * n];
    let mut grad = vec![T::zero(); 3 * n];
    for i in 0..n {
        for c in 0..3 {
            flat[3 * i + c] = splats[i].mu[c];
            grad[3 * i + c] = buf.d_mu[i][c];
        }
    }
    adam_step_default(&mut flat, &grad, &mut states.mu, lr_pos);
    for i in 0..n {
        for c in 0..3 {
            splats[i].mu[c] = flat[3 * i + c];
        }
    }

    let mut flat = vec![T::zero(); 4 * n];
    let mut grad = vec![T::zero(); 4 * n];
    for i in 0..n {
        for c in 0..4 {
            flat[4 * i + c] = splats[i].rot[c];
            grad[4 * i + c] = buf.d_rot[i][c];
        }
    }
    adam_step_default(&mut flat, &grad, &mut states.rot, rates.rotation);
    for i in 0..n {
        for c in 0..4 {
            splats[i].rot[c] = flat[4 * i + c];
        }
        splats[i].renormalize_rot();
    }

    let mut flat = vec![T::zero(); 3 * n];
    let mut grad = vec![T::zero(); 3 * n];
    for i in 0..n {
        for c in 0..3 {
            flat[3 * i + c] = splats[i].log_scale[c];
            grad[3 * i + c] =
                buf.d_log_scale[i][c] + d_scale.map_or(T::zero(), |d| d[i][c]);
        }
    }
    adam_step_default(&mut flat, &grad, &mut states.log_scale, rates.scale);
    for i in 0..n {
        for c in 0..3 {
            splats[i].log_scale[c] = flat[3 * i + c].max(T::lit(-12.0)).min(T::lit(6.0));
        }
    }

    let mut flat: Vec<T> = splats.iter().map(|s| s.opacity_logit).collect();
    adam_step_default(
        &mut flat,
        &buf.d_opacity_logit,
        &mut states.opacity,
        rates.opacity,
    );
    for (s, v) in splats.iter_mut().zip(flat.iter()) {
        s.opacity_logit = *v;
    }

    let mut flat = vec![T::zero(); 3 * n];
    let mut grad = vec![T::zero(); 3 * n];
    for i in 0..n {
        for c in 0..3 {
            flat[3 * i + c] = splats[i].base_color[c];
            grad[3 * i + c] = app.d_base_color[i][c];
        }
    }
    adam_step_default(&mut flat, &grad, &mut states.base_color, rates.base_color);
    for i in 0..n {
        for c in 0..3 {
            splats[i].base_color[c] = flat[3 * i + c].max(T::zero()).min(T::one());
        }
    }

    let mut flat = vec![T::zero(); EMBED_DIM * n];
    let mut grad = vec![T::zero(); EMBED_DIM * n];
    for i in 0..n {
        for c in 0..EMBED_DIM {
            flat[EMBED_DIM * i + c] = splats[i].embedding[c];
            grad[EMBED_DIM * i + c] = app.d_splat_embedding[i][c];
        }
    }
    adam_step_default(&mut flat, &grad, &mut states.embedding, rates.appearance);
    for i in 0..n {
        for c in 0..EMBED_DIM {
            splats[i].embedding[c] = flat[EMBED_DIM * i + c];
        }
    }

    for (li, layer) in model.layers.iter_mut().enumerate() {
        let mut flat: Vec<T> = layer.weight.iter().chain(layer.bias.iter()).copied().collect();
        let grad: Vec<T> = app.d_layers[li]
            .weight
            .iter()
            .chain(app.d_layers[li].bias.iter())
            .copied()
            .collect();
        adam_step_default(&mut flat, &grad, &mut states.layers[li], rates.appearance);
        let nw = layer.weight.len();
        layer.weight.copy_from_slice(&flat[..nw]);
        layer.bias.copy_from_slice(&flat[nw..]);
    }

    let n_seq = model.num_sequences();
    let mut flat = vec![T::zero(); SEQ_EMBED_DIM * n_seq];
    let mut grad = vec![T::zero(); SEQ_EMBED_DIM * n_seq];
    for s in 0..n_seq {
        for c in 0..SEQ_EMBED_DIM {
            flat[SEQ_EMBED_DIM * s + c] = model.sequence_embeddings[s][c];
            grad[SEQ_EMBED_DIM * s + c] = app.d_sequence_embeddings[s][c];
        }
    }
    adam_step_default(&mut flat, &grad, &mut states.seq, rates.appearance);
    for s in 0..n_seq {
        for c in 0..SEQ_EMBED_DIM {
            model.sequence_embeddings[s][c] = flat[SEQ_EMBED_DIM * s + c];
        }
    }
    Ok(())
}

/// Write the per-iteration loss log as CSV.
pub fn write_loss_log<T: Real>(path: &std::path::Path, log: &[LossRecord<T>]) -> Result<()> {
    let mut out = String::from("iteration,pho,scale,svgeo,mvgeo,mvpho,total\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration,
            r.pho.to_f64_lossy(),
            r.scale.to_f64_lossy(),
            r.svgeo.to_f64_lossy(),
            r.mvgeo.to_f64_lossy(),
            r.mvpho.to_f64_lossy(),
            r.total.to_f64_lossy()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
