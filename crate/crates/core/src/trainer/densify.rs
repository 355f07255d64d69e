//! Adaptive densification and pruning of the splat set.

use nalgebra::Vector3;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::num::Real;
use crate::splat::{quat_to_matrix, Splat};

#[derive(Debug, Clone)]
pub struct DensifyConfig<T: Real> {
    /// First iteration at which densification may run.
    pub start: usize,
    /// Densification stops after this fraction of total iterations.
    pub end_fraction: f64,
    /// Iterations between densification passes.
    pub interval: usize,
    /// Mean positional-gradient norm above which a splat is densified.
    pub grad_threshold: T,
    /// Splats with opacity below this are pruned.
    pub prune_opacity: T,
    /// Splats larger than this fraction of the scene extent split; smaller
    /// ones clone.
    pub split_scale_fraction: T,
    /// Hard cap on the splat count (0 = unlimited).
    pub max_splats: usize,
}

impl<T: Real> Default for DensifyConfig<T> {
    fn default() -> Self {
        Self {
            start: 500,
            end_fraction: 0.6,
            interval: 100,
            grad_threshold: T::lit(2e-4),
            prune_opacity: T::lit(0.005),
            split_scale_fraction: T::lit(0.01),
            max_splats: 20_000,
        }
    }
}

/// Positional-gradient statistics accumulated between densification passes.
#[derive(Debug, Clone)]
pub struct GradStats<T: Real> {
    pub accum_norm: Vec<T>,
    pub count: u64,
}

impl<T: Real> GradStats<T> {
    pub fn new(n: usize) -> Self {
        Self {
            accum_norm: vec![T::zero(); n],
            count: 0,
        }
    }

    pub fn record(&mut self, d_mu: &[Vector3<T>]) {
        assert_eq!(d_mu.len(), self.accum_norm.len());
        for (acc, g) in self.accum_norm.iter_mut().zip(d_mu.iter()) {
            *acc += g.norm();
        }
        self.count += 1;
    }
}

/// Outcome of one densify/prune pass: the new splat list plus, per new
/// splat, the old index its optimizer state derives from (None = fresh).
pub struct DensifyOutcome<T: Real> {
    pub splats: Vec<Splat<T>>,
    pub state_map: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

pub fn densify_and_prune<T: Real>(
    splats: &[Splat<T>],
    stats: &GradStats<T>,
    config: &DensifyConfig<T>,
    scene_extent: T,
    rng: &mut ChaCha12Rng,
) -> DensifyOutcome<T> {
    let mut out = DensifyOutcome {
        splats: Vec::with_capacity(splats.len()),
        state_map: Vec::with_capacity(splats.len()),
        cloned: 0,
        split: 0,
        pruned: 0,
    };
    let count = T::from_u64(stats.count.max(1)).unwrap();
    let cap = if config.max_splats == 0 {
        usize::MAX
    } else {
        config.max_splats
    };
    let split_threshold = config.split_scale_fraction * scene_extent;

    for (i, splat) in splats.iter().enumerate() {
        if splat.opacity() < config.prune_opacity {
            out.pruned += 1;
            continue;
        }
        out.splats.push(splat.clone());
        out.state_map.push(Some(i));

        let mean_grad = stats.accum_norm[i] / count;
        if mean_grad <= config.grad_threshold || out.splats.len() >= cap {
            continue;
        }
        let scale = splat.scale();
        let max_scale = scale.x.max(scale.y).max(scale.z);
        if max_scale > split_threshold {
            // Split: replace the parent with two smaller children sampled
            // from the parent's own distribution.
            let parent = out.splats.pop().unwrap();
            out.state_map.pop();
            let shrink = T::lit(1.6_f64.ln());
            let rot = quat_to_matrix(&parent.rot);
            for _ in 0..2 {
                let xi = Vector3::new(
                    T::lit(StandardNormal.sample(rng)),
                    T::lit(StandardNormal.sample(rng)),
                    T::lit(StandardNormal.sample(rng)),
                );
                let offset = rot * Vector3::new(scale.x * xi.x, scale.y * xi.y, scale.z * xi.z);
                let mut child = parent.clone();
                child.mu += offset;
                child.log_scale -= Vector3::from_element(shrink);
                out.splats.push(child);
                out.state_map.push(None);
            }
            out.split += 1;
        } else {
            // Clone: duplicate in place; the copy starts with fresh
            // optimizer moments so the pair separates under training.
            out.splats.push(splat.clone());
            out.state_map.push(None);
            out.cloned += 1;
        }
    }
    out
}
