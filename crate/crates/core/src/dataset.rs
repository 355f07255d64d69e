//! The in-memory multi-sequence dataset and its on-disk layout.
//!
//! A dataset root holds a manifest plus the files it points to:
//!
//! ```text
//! [paths]
//! colmap = sparse          # cameras.txt / images.txt / points3D.txt
//! images = images
//! sam_masks = masks_sam    # optional; single-channel PNG, nonzero = transient
//! entity_maps = entities   # optional; 16-bit single-channel PNG of label ids
//!
//! [sequences]
//! <image name> = <sequence id>
//!
//! [eval]
//! frames = <name>, <name>  # held-out frames; their masks are evaluation masks
//! ```
//!
//! Sequence count N is max assigned id + 1. Missing mask files default to
//! all-zero (nothing transient, nothing labeled). The dataset is immutable
//! after load.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::colmap::{load_colmap_dir, ColmapScene};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::img::{load_image_rgb, load_label_map_png, load_mask_png, ImageRgb, LabelMap, Mask};
use crate::num::Real;

/// Transient/entity masks attached to one frame.
#[derive(Debug, Clone)]
pub struct MaskSet {
    /// Binary transient mask; true = transient = excluded from loss.
    pub sam: Mask,
    /// Entity label map; 0 = unlabeled.
    pub entity: LabelMap,
    /// Refined transient mask, present after mask refinement ran.
    pub refined: Option<Mask>,
}

impl MaskSet {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            sam: Mask::new(width, height),
            entity: LabelMap::new(width, height),
            refined: None,
        }
    }

    /// The mask stage 2 trains against: refined when present, SAM otherwise.
    pub fn effective(&self) -> &Mask {
        self.refined.as_ref().unwrap_or(&self.sam)
    }
}

#[derive(Debug, Clone)]
pub struct Frame<T: Real> {
    pub pose: CameraPose<T>,
    pub camera_id: u32,
    pub image: ImageRgb<T>,
    pub masks: MaskSet,
    /// Marked in the manifest as a held-out evaluation frame.
    pub eval: bool,
}

#[derive(Debug, Clone)]
pub struct ScenePoint<T: Real> {
    pub position: Vector3<T>,
    pub color: [T; 3],
}

#[derive(Debug, Clone)]
pub struct MultiSequenceDataset<T: Real> {
    pub intrinsics: BTreeMap<u32, CameraIntrinsics<T>>,
    pub frames: Vec<Frame<T>>,
    pub points: Vec<ScenePoint<T>>,
    pub num_sequences: usize,
}

impl<T: Real> MultiSequenceDataset<T> {
    pub fn intrinsics_for(&self, frame: &Frame<T>) -> &CameraIntrinsics<T> {
        &self.intrinsics[&frame.camera_id]
    }

    pub fn train_frame_indices(&self) -> Vec<usize> {
        (0..self.frames.len())
            .filter(|&i| !self.frames[i].eval)
            .collect()
    }

    pub fn eval_frame_indices(&self) -> Vec<usize> {
        (0..self.frames.len())
            .filter(|&i| self.frames[i].eval)
            .collect()
    }

    pub fn frames_of_sequence(&self, sequence_id: usize) -> Vec<usize> {
        (0..self.frames.len())
            .filter(|&i| self.frames[i].pose.sequence_id == sequence_id)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for frame in &self.frames {
            if frame.pose.sequence_id >= self.num_sequences {
                return Err(Error::Format(format!(
                    "frame {} has sequence id {} >= N={}",
                    frame.pose.image_path, frame.pose.sequence_id, self.num_sequences
                )));
            }
            if !self.intrinsics.contains_key(&frame.camera_id) {
                return Err(Error::Format(format!(
                    "frame {} references unknown camera {}",
                    frame.pose.image_path, frame.camera_id
                )));
            }
            let (w, h) = (frame.image.width, frame.image.height);
            if frame.masks.sam.width != w || frame.masks.sam.height != h {
                return Err(Error::Mismatch(format!(
                    "sam mask of {} is {}x{}, image is {w}x{h}",
                    frame.pose.image_path, frame.masks.sam.width, frame.masks.sam.height
                )));
            }
            if frame.masks.entity.width != w || frame.masks.entity.height != h {
                return Err(Error::Mismatch(format!(
                    "entity map of {} is {}x{}, image is {w}x{h}",
                    frame.pose.image_path, frame.masks.entity.width, frame.masks.entity.height
                )));
            }
        }
        Ok(())
    }
}

/// Load a dataset from `root_dir` given its parsed manifest.
pub fn load_dataset<T: Real>(root_dir: &Path, manifest: &Config) -> Result<MultiSequenceDataset<T>> {
    let colmap_dir = root_dir.join(manifest.get("paths", "colmap").unwrap_or("sparse"));
    let images_dir = root_dir.join(manifest.get("paths", "images").unwrap_or("images"));
    let sam_dir = manifest.get("paths", "sam_masks").map(|d| root_dir.join(d));
    let entity_dir = manifest.get("paths", "entity_maps").map(|d| root_dir.join(d));

    let scene: ColmapScene<T> = load_colmap_dir(&colmap_dir)?;
    build_dataset(scene, manifest, &images_dir, sam_dir.as_deref(), entity_dir.as_deref())
}

/// Load a dataset whose manifest lives at `root_dir/manifest.cfg` (or a
/// custom file name).
pub fn load_dataset_from_manifest<T: Real>(manifest_path: &Path) -> Result<MultiSequenceDataset<T>> {
    let manifest = Config::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    load_dataset(root, &manifest)
}

fn build_dataset<T: Real>(
    scene: ColmapScene<T>,
    manifest: &Config,
    images_dir: &Path,
    sam_dir: Option<&Path>,
    entity_dir: Option<&Path>,
) -> Result<MultiSequenceDataset<T>> {
    let mut assignments: BTreeMap<&str, usize> = BTreeMap::new();
    for (name, id) in manifest.entries("sequences") {
        let id: usize = id.parse().map_err(|_| {
            Error::InvalidArg(format!("[sequences] {name} = {id}: bad sequence id"))
        })?;
        assignments.insert(name, id);
    }
    let eval_frames: Vec<String> = manifest.get_list("eval", "frames");

    let mut intrinsics = BTreeMap::new();
    for cam in &scene.cameras {
        intrinsics.insert(cam.camera_id, cam.intrinsics);
    }

    let mut num_sequences = 0usize;
    let mut frames = Vec::with_capacity(scene.images.len());
    for im in &scene.images {
        let sequence_id = *assignments.get(im.name.as_str()).ok_or_else(|| {
            Error::Format(format!("image {} not assigned to a sequence", im.name))
        })?;
        num_sequences = num_sequences.max(sequence_id + 1);

        let image_path = images_dir.join(&im.name);
        let image = load_image_rgb::<T>(&image_path)?;
        let (w, h) = (image.width, image.height);

        let mask_name = Path::new(&im.name).with_extension("png");
        let sam = match sam_dir.map(|d| d.join(&mask_name)) {
            Some(p) if p.is_file() => {
                let m = load_mask_png(&p)?;
                if m.width != w || m.height != h {
                    return Err(Error::Mismatch(format!(
                        "mask {} is {}x{} but image {} is {w}x{h}",
                        p.display(),
                        m.width,
                        m.height,
                        image_path.display()
                    )));
                }
                m
            }
            _ => Mask::new(w, h),
        };
        let entity = match entity_dir.map(|d| d.join(&mask_name)) {
            Some(p) if p.is_file() => {
                let m = load_label_map_png(&p)?;
                if m.width != w || m.height != h {
                    return Err(Error::Mismatch(format!(
                        "entity map {} is {}x{} but image {} is {w}x{h}",
                        p.display(),
                        m.width,
                        m.height,
                        image_path.display()
                    )));
                }
                m
            }
            _ => LabelMap::new(w, h),
        };

        let mut pose = CameraPose::new(im.rotation, im.translation);
        pose.sequence_id = sequence_id;
        pose.image_path = im.name.clone();
        frames.push(Frame {
            pose,
            camera_id: im.camera_id,
            image,
            masks: MaskSet {
                sam,
                entity,
                refined: None,
            },
            eval: eval_frames.iter().any(|n| n == &im.name),
        });
    }

    let points = scene
        .points
        .iter()
        .map(|p| ScenePoint {
            position: p.position,
            color: p.color_unit(),
        })
        .collect();

    let dataset = MultiSequenceDataset {
        intrinsics,
        frames,
        points,
        num_sequences,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colmap::{serialize_cameras, serialize_images, serialize_points};
    use crate::img::save_image_png;
    use std::fs;

    fn write_fixture(root: &Path, n_sequences: usize, per_seq: usize, with_masks: bool) {
        use crate::colmap::{CameraModel, ColmapCamera, ColmapImage, ColmapPoint};
        fs::create_dir_all(root.join("sparse")).unwrap();
        fs::create_dir_all(root.join("images")).unwrap();
        if with_masks {
            fs::create_dir_all(root.join("masks_sam")).unwrap();
        }
        let cam = ColmapCamera {
            camera_id: 1,
            model: CameraModel::SimplePinhole,
            intrinsics: CameraIntrinsics::<f64>::new(10.0, 10.0, 4.0, 4.0, 8, 8).unwrap(),
        };
        let mut images = Vec::new();
        let mut manifest = String::from("[paths]\ncolmap = sparse\nimages = images\n");
        if with_masks {
            manifest.push_str("sam_masks = masks_sam\n");
        }
        manifest.push_str("\n[sequences]\n");
        let mut id = 1;
        for s in 0..n_sequences {
            for k in 0..per_seq {
                let name = format!("s{s}_f{k}.png");
                images.push(ColmapImage {
                    image_id: id,
                    rotation: nalgebra::UnitQuaternion::identity(),
                    translation: Vector3::new(0.0, 0.0, k as f64),
                    camera_id: 1,
                    name: name.clone(),
                });
                manifest.push_str(&format!("{name} = {s}\n"));
                let img = ImageRgb::<f64>::from_fn(8, 8, |x, y| {
                    [x as f64 / 8.0, y as f64 / 8.0, 0.5]
                });
                save_image_png(&root.join("images").join(&name), &img).unwrap();
                if with_masks {
                    let mut m = Mask::new(8, 8);
                    m.set(1, 1, true);
                    crate::img::save_mask_png(&root.join("masks_sam").join(&name), &m).unwrap();
                }
                id += 1;
            }
        }
        let points = vec![ColmapPoint::<f64> {
            point_id: 1,
            position: Vector3::new(0.0, 0.0, 5.0),
            rgb: [10, 20, 30],
            error: 0.1,
        }];
        fs::write(root.join("sparse/cameras.txt"), serialize_cameras(&[cam])).unwrap();
        fs::write(root.join("sparse/images.txt"), serialize_images(&images)).unwrap();
        fs::write(root.join("sparse/points3D.txt"), serialize_points(&points)).unwrap();
        fs::write(root.join("manifest.cfg"), manifest).unwrap();
    }

    #[test]
    fn two_sequences_of_three_images() {
        let root = std::env::temp_dir().join("msgs_ds_2x3");
        let _ = fs::remove_dir_all(&root);
        write_fixture(&root, 2, 3, false);
        let ds = load_dataset_from_manifest::<f64>(&root.join("manifest.cfg")).unwrap();
        assert_eq!(ds.num_sequences, 2);
        assert_eq!(ds.frames.len(), 6);
        // No mask files -> every sam mask identically zero.
        assert!(ds.frames.iter().all(|f| f.masks.sam.count() == 0));
        assert!(ds.frames.iter().all(|f| !f.eval));
    }

    #[test]
    fn mask_files_are_picked_up() {
        let root = std::env::temp_dir().join("msgs_ds_masks");
        let _ = fs::remove_dir_all(&root);
        write_fixture(&root, 1, 2, true);
        let ds = load_dataset_from_manifest::<f64>(&root.join("manifest.cfg")).unwrap();
        assert!(ds.frames.iter().all(|f| f.masks.sam.count() == 1));
    }

    #[test]
    fn twenty_five_sequence_manifest_yields_25_embedding_slots() {
        let root = std::env::temp_dir().join("msgs_ds_25");
        let _ = fs::remove_dir_all(&root);
        write_fixture(&root, 25, 1, false);
        let ds = load_dataset_from_manifest::<f64>(&root.join("manifest.cfg")).unwrap();
        assert_eq!(ds.num_sequences, 25);
    }

    #[test]
    fn dimension_mismatch_names_both_files() {
        let root = std::env::temp_dir().join("msgs_ds_mismatch");
        let _ = fs::remove_dir_all(&root);
        write_fixture(&root, 1, 1, true);
        // Overwrite the mask with a wrong-sized one.
        let bad = Mask::new(4, 4);
        crate::img::save_mask_png(&root.join("masks_sam/s0_f0.png"), &bad).unwrap();
        let err = load_dataset_from_manifest::<f64>(&root.join("manifest.cfg")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s0_f0.png"), "got {msg}");
        assert!(msg.contains("4x4") && msg.contains("8x8"), "got {msg}");
    }
}
