//! Training objectives with analytic gradients with respect to rendered maps.

pub mod geometric;
pub mod ncc;
pub mod ssim;

pub use geometric::{homography_for_patch, mv_geometric, svgeo_loss};
pub use ncc::{mv_photometric_ncc, NccPatch};
pub use ssim::ssim;

use nalgebra::Vector3;

use crate::img::{ImageRgb, Mask, ScalarMap};
use crate::num::Real;
use crate::splat::Splat;

/// Loss term weights.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights<T: Real> {
    /// SSIM share of the photometric loss.
    pub lambda_pho: T,
    /// Scale regularization.
    pub lambda_s: T,
    /// Multi-view geometric consistency.
    pub lambda_a: T,
    /// Multi-view photometric (NCC) consistency.
    pub lambda_b: T,
    /// Single-view normal consistency.
    pub lambda_c: T,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            lambda_pho: T::lit(0.2),
            lambda_s: T::lit(100.0),
            lambda_a: T::lit(0.01),
            lambda_b: T::lit(0.2),
            lambda_c: T::lit(0.05),
        }
    }
}

/// Per-pixel photometric error (1-lambda)*|d|_mean + lambda*(1-SSIM),
/// used for error maps. `None` masks nothing.
pub fn photometric_error_map<T: Real>(
    rendered: &ImageRgb<T>,
    target: &ImageRgb<T>,
    lambda_pho: T,
) -> ScalarMap<T> {
    let (_, ssim_map) = ssim::ssim(rendered, target).expect("error-map inputs match");
    let third = T::lit(1.0 / 3.0);
    let mut out = ScalarMap::new(rendered.width, rendered.height);
    for i in 0..out.data.len() {
        let a = rendered.data[i];
        let b = target.data[i];
        let l1 = ((a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()) * third;
        out.data[i] = (T::one() - lambda_pho) * l1 + lambda_pho * (T::one() - ssim_map.data[i]);
    }
    out
}

/// Masked photometric loss: (1-lambda)*L1 + lambda*(1-SSIM), averaged over
/// included pixels. The mask marks transient pixels (1 = excluded); inside
/// the excluded region the rendered image is substituted by the target before
/// the windowed SSIM so the loss is invariant to whatever gets rendered there.
///
/// Returns the scalar loss and dL/d rendered.
pub fn photometric_loss<T: Real>(
    rendered: &ImageRgb<T>,
    target: &ImageRgb<T>,
    transient_mask: Option<&Mask>,
    lambda_pho: T,
) -> (T, Vec<[T; 3]>) {
    let n_pix = rendered.data.len();
    assert_eq!(n_pix, target.data.len(), "image shapes must match");
    let include: Vec<bool> = match transient_mask {
        Some(m) => {
            assert_eq!(m.data.len(), n_pix, "mask shape must match image");
            m.data.iter().map(|&t| !t).collect()
        }
        None => vec![true; n_pix],
    };
    let n_inc = include.iter().filter(|&&b| b).count();
    let mut grad = vec![[T::zero(); 3]; n_pix];
    if n_inc == 0 {
        return (T::zero(), grad);
    }
    let inv_n = T::one() / T::from_usize(n_inc).unwrap();
    let inv_3n = inv_n / T::lit(3.0);

    // L1 over included pixels and channels.
    let mut l1 = T::zero();
    for i in 0..n_pix {
        if !include[i] {
            continue;
        }
        for c in 0..3 {
            let d = rendered.data[i][c] - target.data[i][c];
            l1 += d.abs() * inv_3n;
            let s = if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            grad[i][c] += (T::one() - lambda_pho) * s * inv_3n;
        }
    }

    // SSIM on the substituted image.
    let mut effective = rendered.clone();
    for i in 0..n_pix {
        if !include[i] {
            effective.data[i] = target.data[i];
        }
    }
    let (_, ssim_map) = ssim::ssim(&effective, target).expect("shapes already checked");
    let mut mean_ssim = T::zero();
    for i in 0..n_pix {
        if include[i] {
            mean_ssim += ssim_map.data[i] * inv_n;
        }
    }

    let kernel = ssim::gaussian_kernel::<T>(ssim::WINDOW_RADIUS, ssim::WINDOW_SIGMA);
    // dL/d ssim_ch(p) = lambda * (-1) * include(p)/n / 3.
    let mut upstream = ScalarMap::new(rendered.width, rendered.height);
    for i in 0..n_pix {
        if include[i] {
            upstream.data[i] = -lambda_pho * inv_3n;
        }
    }
    for ch in 0..3 {
        let x = effective.channel(ch);
        let y = target.channel(ch);
        let g = ssim::ssim_backward_channel(&x, &y, &upstream, &kernel);
        for i in 0..n_pix {
            if include[i] {
                grad[i][ch] += g.data[i];
            }
        }
    }

    let loss = (T::one() - lambda_pho) * l1 + lambda_pho * (T::one() - mean_ssim);
    (loss, grad)
}

/// Scale regularization: lambda_s * |min scale| summed over splats, pushing
/// every splat toward a flat disc. Subgradient at ties goes to the
/// lowest-index axis.
pub fn scale_loss<T: Real>(splats: &[Splat<T>], lambda_s: T) -> (T, Vec<Vector3<T>>) {
    let mut loss = T::zero();
    let mut grads = vec![Vector3::zeros(); splats.len()];
    for (i, splat) in splats.iter().enumerate() {
        let s = splat.scale();
        let axis = crate::splat::min_scale_axis(&s);
        loss += lambda_s * s[axis].abs();
        grads[i][axis] = lambda_s * s[axis];
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_image(rng: &mut StdRng, w: u32, h: u32) -> ImageRgb<f64> {
        ImageRgb::from_fn(w, h, |_, _| {
            [
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            ]
        })
    }

    #[test]
    fn zero_loss_on_identical_images() {
        let mut rng = StdRng::seed_from_u64(5);
        let a = random_image(&mut rng, 16, 16);
        let (loss, grad) = photometric_loss(&a, &a, None, 0.2);
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.iter().all(|&v| v.abs() < 1e-12)));
    }

    #[test]
    fn pure_l1_on_constant_offset() {
        let a = ImageRgb::<f64>::from_fn(16, 16, |_, _| [0.5; 3]);
        let b = ImageRgb::<f64>::from_fn(16, 16, |_, _| [0.6; 3]);
        let (loss, _) = photometric_loss(&a, &b, None, 0.0);
        assert!((loss - 0.1).abs() < 1e-12);
    }

    #[test]
    fn matches_independent_recomputation() {
        let mut rng = StdRng::seed_from_u64(6);
        let a = random_image(&mut rng, 16, 16);
        let b = random_image(&mut rng, 16, 16);
        let (loss, _) = photometric_loss(&a, &b, None, 0.2);
        // Straight-line recomputation from the published pieces.
        let mut l1 = 0.0;
        for i in 0..a.data.len() {
            for c in 0..3 {
                l1 += (a.data[i][c] - b.data[i][c]).abs();
            }
        }
        l1 /= (a.data.len() * 3) as f64;
        let (mean_ssim, _) = ssim(&a, &b).unwrap();
        let expected = 0.8 * l1 + 0.2 * (1.0 - mean_ssim);
        assert!((loss - expected).abs() < 1e-8, "{loss} vs {expected}");
    }

    #[test]
    fn fully_masked_frame_is_zero_with_zero_gradient() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = random_image(&mut rng, 12, 12);
        let b = random_image(&mut rng, 12, 12);
        let mut mask = Mask::new(12, 12);
        mask.data.fill(true);
        let (loss, grad) = photometric_loss(&a, &b, Some(&mask), 0.2);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == [0.0; 3]));
    }

    #[test]
    fn masked_region_changes_do_not_move_the_loss() {
        let mut rng = StdRng::seed_from_u64(8);
        let a = random_image(&mut rng, 16, 16);
        let b = random_image(&mut rng, 16, 16);
        let mut mask = Mask::new(16, 16);
        for y in 4..9 {
            for x in 3..12 {
                mask.set(x, y, true);
            }
        }
        let (loss1, _) = photometric_loss(&a, &b, Some(&mask), 0.2);
        let mut a2 = a.clone();
        for y in 4..9u32 {
            for x in 3..12u32 {
                *a2.at_mut(x, y) = [rng.random_range(0.0..1.0); 3];
            }
        }
        let (loss2, _) = photometric_loss(&a2, &b, Some(&mask), 0.2);
        assert_eq!(loss1, loss2);
    }

    #[test]
    fn photometric_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(9);
        let a = random_image(&mut rng, 12, 12);
        let b = random_image(&mut rng, 12, 12);
        let mut mask = Mask::new(12, 12);
        for i in 0..mask.data.len() {
            mask.data[i] = rng.random_range(0.0..1.0) < 0.2;
        }
        let (_, grad) = photometric_loss(&a, &b, Some(&mask), 0.2);
        let h = 1e-6;
        for idx in (0..a.data.len()).step_by(11) {
            for c in 0..3 {
                let mut ap = a.clone();
                ap.data[idx][c] += h;
                let mut am = a.clone();
                am.data[idx][c] -= h;
                let (lp, _) = photometric_loss(&ap, &b, Some(&mask), 0.2);
                let (lm, _) = photometric_loss(&am, &b, Some(&mask), 0.2);
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (grad[idx][c] - fd).abs() < 1e-6 * fd.abs().max(1.0),
                    "pixel {idx} ch {c}: {} vs {fd}",
                    grad[idx][c]
                );
            }
        }
    }

    #[test]
    fn scale_loss_examples() {
        let mut s1 = Splat::<f64>::new(Vector3::zeros(), [0.5; 3]);
        s1.log_scale = Vector3::new(1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln());
        let (loss, grads) = scale_loss(&[s1], 100.0);
        assert!((loss - 100.0).abs() < 1e-9);
        assert!((grads[0][0] - 100.0).abs() < 1e-9);
        assert_eq!(grads[0][1], 0.0);

        // Five random splats against a brute-force sum.
        let mut rng = StdRng::seed_from_u64(10);
        let splats: Vec<Splat<f64>> = (0..5)
            .map(|_| {
                let mut s = Splat::new(Vector3::zeros(), [0.5; 3]);
                s.log_scale = Vector3::new(
                    rng.random_range(-2.0..1.0),
                    rng.random_range(-2.0..1.0),
                    rng.random_range(-2.0..1.0),
                );
                s
            })
            .collect();
        let (loss, _) = scale_loss(&splats, 100.0);
        let brute: f64 = splats
            .iter()
            .map(|s| {
                100.0
                    * s.scale()
                        .iter()
                        .copied()
                        .fold(f64::INFINITY, f64::min)
            })
            .sum();
        assert!((loss - brute).abs() < 1e-9);
    }

    #[test]
    fn scale_loss_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        let mut s = Splat::<f64>::new(Vector3::zeros(), [0.5; 3]);
        s.log_scale = Vector3::new(
            rng.random_range(-1.0..0.0),
            rng.random_range(-1.0..0.0),
            rng.random_range(-1.0..0.0),
        );
        let (_, grads) = scale_loss(std::slice::from_ref(&s), 100.0);
        let h = 1e-6;
        for axis in 0..3 {
            let mut sp = s.clone();
            sp.log_scale[axis] += h;
            let mut sm = s.clone();
            sm.log_scale[axis] -= h;
            let (lp, _) = scale_loss(std::slice::from_ref(&sp), 100.0);
            let (lm, _) = scale_loss(std::slice::from_ref(&sm), 100.0);
            let fd = (lp - lm) / (2.0 * h);
            assert!((grads[0][axis] - fd).abs() < 1e-5);
        }
    }
}
