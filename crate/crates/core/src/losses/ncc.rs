//! Patch-based normalized cross-correlation between a reference gray render
//! and a neighbor gray render warped through a per-patch plane homography.

use nalgebra::{Matrix3, Vector3};

use crate::img::ScalarMap;
use crate::num::Real;

/// One NCC patch: top-left pixel corner plus the reference-to-neighbor
/// homography induced by the local plane.
#[derive(Debug, Clone)]
pub struct NccPatch<T: Real> {
    pub x0: u32,
    pub y0: u32,
    pub homography: Matrix3<T>,
}

/// Bilinear sample at continuous pixel coordinates (pixel centers at +0.5).
/// None outside the valid interpolation domain.
fn bilinear<T: Real>(map: &ScalarMap<T>, u: T, v: T) -> Option<(T, [(usize, T); 4])> {
    let x = u - T::lit(0.5);
    let y = v - T::lit(0.5);
    if x < T::zero() || y < T::zero() {
        return None;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let i0 = x0.to_usize()?;
    let j0 = y0.to_usize()?;
    if i0 + 1 >= map.width as usize || j0 + 1 >= map.height as usize {
        return None;
    }
    let fx = x - x0;
    let fy = y - y0;
    let w = map.width as usize;
    let idx00 = j0 * w + i0;
    let idx10 = idx00 + 1;
    let idx01 = idx00 + w;
    let idx11 = idx01 + 1;
    let w00 = (T::one() - fx) * (T::one() - fy);
    let w10 = fx * (T::one() - fy);
    let w01 = (T::one() - fx) * fy;
    let w11 = fx * fy;
    let value = map.data[idx00] * w00
        + map.data[idx10] * w10
        + map.data[idx01] * w01
        + map.data[idx11] * w11;
    Some((
        value,
        [(idx00, w00), (idx10, w10), (idx01, w01), (idx11, w11)],
    ))
}

/// Sum over patches of (1 - NCC) between the reference patch and the
/// homography-warped neighbor patch, with per-patch mean/variance
/// normalization and bilinear sampling in the neighbor image.
///
/// Patches that fall outside the neighbor image or have (near-)zero variance
/// on either side are skipped. Returns the loss and its gradient with
/// respect to the reference intensities.
pub fn mv_photometric_ncc<T: Real>(
    ref_gray: &ScalarMap<T>,
    nbr_gray: &ScalarMap<T>,
    patches: &[NccPatch<T>],
    patch_size: usize,
) -> (T, ScalarMap<T>) {
    let mut loss = T::zero();
    let mut grad = ScalarMap::new(ref_gray.width, ref_gray.height);
    let n = patch_size * patch_size;
    let eps = T::lit(1e-12);
    let mut a_vals = vec![T::zero(); n];
    let mut b_vals = vec![T::zero(); n];
    let mut a_idx = vec![0usize; n];

    'patches: for patch in patches {
        if patch.x0 as usize + patch_size > ref_gray.width as usize
            || patch.y0 as usize + patch_size > ref_gray.height as usize
        {
            continue;
        }
        for j in 0..patch_size {
            for i in 0..patch_size {
                let px = patch.x0 + i as u32;
                let py = patch.y0 + j as u32;
                let idx = (py * ref_gray.width + px) as usize;
                let p = Vector3::new(
                    T::from_u32(px).unwrap() + T::lit(0.5),
                    T::from_u32(py).unwrap() + T::lit(0.5),
                    T::one(),
                );
                let q = patch.homography * p;
                if q.z.abs() < eps {
                    continue 'patches;
                }
                let Some((value, _)) = bilinear(nbr_gray, q.x / q.z, q.y / q.z) else {
                    continue 'patches;
                };
                let k = j * patch_size + i;
                a_vals[k] = ref_gray.data[idx];
                b_vals[k] = value;
                a_idx[k] = idx;
            }
        }
        let n_t = T::from_usize(n).unwrap();
        let mean_a = a_vals.iter().fold(T::zero(), |s, &v| s + v) / n_t;
        let mean_b = b_vals.iter().fold(T::zero(), |s, &v| s + v) / n_t;
        let mut suu = T::zero();
        let mut svv = T::zero();
        let mut suv = T::zero();
        for k in 0..n {
            let u = a_vals[k] - mean_a;
            let v = b_vals[k] - mean_b;
            suu += u * u;
            svv += v * v;
            suv += u * v;
        }
        if suu < eps || svv < eps {
            continue; // degenerate patch
        }
        let denom = (suu * svv).sqrt();
        let ncc = suv / denom;
        loss += T::one() - ncc;
        // d(1-NCC)/da_k = -(v_k - (Suv/Suu) u_k)/sqrt(Suu*Svv); the mean
        // terms drop because u and v are centered.
        for k in 0..n {
            let u = a_vals[k] - mean_a;
            let v = b_vals[k] - mean_b;
            grad.data[a_idx[k]] -= (v - (suv / suu) * u) / denom;
        }
    }
    (loss, grad)
}
