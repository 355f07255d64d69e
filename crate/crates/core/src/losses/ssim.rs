//! SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
//! computed per channel and averaged. Windows clamp to the image edge, so
//! the map is defined at every pixel.

use crate::error::{Error, Result};
use crate::img::{ImageRgb, ScalarMap};
use crate::num::Real;

pub const WINDOW_RADIUS: usize = 5;
pub const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 1e-4;
const C2: f64 = 9e-4;

/// Normalized 1D Gaussian kernel of `2 * radius + 1` taps.
pub fn gaussian_kernel<T: Real>(radius: usize, sigma: f64) -> Vec<T> {
    let mut k: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            T::lit((-d * d / (2.0 * sigma * sigma)).exp())
        })
        .collect();
    let sum = k.iter().fold(T::zero(), |a, &b| a + b);
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn conv_h<T: Real>(map: &ScalarMap<T>, kernel: &[T]) -> ScalarMap<T> {
    let r = kernel.len() as i64 / 2;
    let (w, h) = (map.width as i64, map.height as i64);
    let mut out = ScalarMap::new(map.width, map.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = (x + ki as i64 - r).clamp(0, w - 1);
                acc += kv * map.data[(y * w + sx) as usize];
            }
            out.data[(y * w + x) as usize] = acc;
        }
    }
    out
}

fn conv_v<T: Real>(map: &ScalarMap<T>, kernel: &[T]) -> ScalarMap<T> {
    let r = kernel.len() as i64 / 2;
    let (w, h) = (map.width as i64, map.height as i64);
    let mut out = ScalarMap::new(map.width, map.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - r).clamp(0, h - 1);
                acc += kv * map.data[(sy * w + x) as usize];
            }
            out.data[(y * w + x) as usize] = acc;
        }
    }
    out
}

pub fn blur<T: Real>(map: &ScalarMap<T>, kernel: &[T]) -> ScalarMap<T> {
    conv_v(&conv_h(map, kernel), kernel)
}

fn conv_h_adjoint<T: Real>(map: &ScalarMap<T>, kernel: &[T]) -> ScalarMap<T> {
    let r = kernel.len() as i64 / 2;
    let (w, h) = (map.width as i64, map.height as i64);
    let mut out = ScalarMap::new(map.width, map.height);
    for y in 0..h {
        for x in 0..w {
            let v = map.data[(y * w + x) as usize];
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = (x + ki as i64 - r).clamp(0, w - 1);
                out.data[(y * w + sx) as usize] += kv * v;
            }
        }
    }
    out
}

fn conv_v_adjoint<T: Real>(map: &ScalarMap<T>, kernel: &[T]) -> ScalarMap<T> {
    let r = kernel.len() as i64 / 2;
    let (w, h) = (map.width as i64, map.height as i64);
    let mut out = ScalarMap::new(map.width, map.height);
    for y in 0..h {
        for x in 0..w {
            let v = map.data[(y * w + x) as usize];
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - r).clamp(0, h - 1);
                out.data[(sy * w + x) as usize] += kv * v;
            }
        }
    }
    out
}

/// Adjoint of `blur` (edge clamping makes it differ from blur itself).
pub fn blur_adjoint<T: Real>(map: &ScalarMap<T>, kernel: &[T]) -> ScalarMap<T> {
    conv_h_adjoint(&conv_v_adjoint(map, kernel), kernel)
}

struct ChannelStats<T: Real> {
    mu_x: ScalarMap<T>,
    mu_y: ScalarMap<T>,
    sxx: ScalarMap<T>,
    syy: ScalarMap<T>,
    sxy: ScalarMap<T>,
}

fn channel_stats<T: Real>(x: &ScalarMap<T>, y: &ScalarMap<T>, kernel: &[T]) -> ChannelStats<T> {
    let mut x2 = x.clone();
    let mut y2 = y.clone();
    let mut xy = x.clone();
    for i in 0..x.data.len() {
        x2.data[i] = x.data[i] * x.data[i];
        y2.data[i] = y.data[i] * y.data[i];
        xy.data[i] = x.data[i] * y.data[i];
    }
    ChannelStats {
        mu_x: blur(x, kernel),
        mu_y: blur(y, kernel),
        sxx: blur(&x2, kernel),
        syy: blur(&y2, kernel),
        sxy: blur(&xy, kernel),
    }
}

fn ssim_channel_map<T: Real>(stats: &ChannelStats<T>) -> ScalarMap<T> {
    let c1 = T::lit(C1);
    let c2 = T::lit(C2);
    let two = T::lit(2.0);
    let mut out = ScalarMap::new(stats.mu_x.width, stats.mu_x.height);
    for i in 0..out.data.len() {
        let (mx, my) = (stats.mu_x.data[i], stats.mu_y.data[i]);
        let var_x = stats.sxx.data[i] - mx * mx;
        let var_y = stats.syy.data[i] - my * my;
        let cov = stats.sxy.data[i] - mx * my;
        let a1 = two * mx * my + c1;
        let a2 = two * cov + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = var_x + var_y + c2;
        out.data[i] = a1 * a2 / (b1 * b2);
    }
    out
}

/// SSIM between two RGB images: (mean over all pixels, per-pixel map
/// averaged over channels).
pub fn ssim<T: Real>(a: &ImageRgb<T>, b: &ImageRgb<T>) -> Result<(T, ScalarMap<T>)> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Mismatch(format!(
            "ssim inputs {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let win = 2 * WINDOW_RADIUS as u32 + 1;
    if a.width < win || a.height < win {
        return Err(Error::InvalidArg(format!(
            "image {}x{} smaller than the {win}x{win} SSIM window",
            a.width, a.height
        )));
    }
    let kernel = gaussian_kernel::<T>(WINDOW_RADIUS, WINDOW_SIGMA);
    let third = T::lit(1.0 / 3.0);
    let mut map = ScalarMap::new(a.width, a.height);
    for ch in 0..3 {
        let stats = channel_stats(&a.channel(ch), &b.channel(ch), &kernel);
        let m = ssim_channel_map(&stats);
        for i in 0..map.data.len() {
            map.data[i] += m.data[i] * third;
        }
    }
    let n = T::from_usize(map.data.len()).unwrap();
    let mean = map.data.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    Ok((mean, map))
}

/// dL/dx for one channel given per-pixel upstream dL/d ssim(p).
///
/// `x` is the channel being differentiated, `y` the reference channel.
pub fn ssim_backward_channel<T: Real>(
    x: &ScalarMap<T>,
    y: &ScalarMap<T>,
    upstream: &ScalarMap<T>,
    kernel: &[T],
) -> ScalarMap<T> {
    let stats = channel_stats(x, y, kernel);
    let c1 = T::lit(C1);
    let c2 = T::lit(C2);
    let two = T::lit(2.0);
    let n = x.data.len();
    let mut d_mu_x = ScalarMap::new(x.width, x.height);
    let mut d_sxx = ScalarMap::new(x.width, x.height);
    let mut d_sxy = ScalarMap::new(x.width, x.height);
    for i in 0..n {
        let t = upstream.data[i];
        if t == T::zero() {
            continue;
        }
        let (mx, my) = (stats.mu_x.data[i], stats.mu_y.data[i]);
        let var_x = stats.sxx.data[i] - mx * mx;
        let var_y = stats.syy.data[i] - my * my;
        let cov = stats.sxy.data[i] - mx * my;
        let a1 = two * mx * my + c1;
        let a2 = two * cov + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = var_x + var_y + c2;
        let denom = b1 * b2;
        let d_a1 = a2 / denom;
        let d_a2 = a1 / denom;
        let d_b1 = -a1 * a2 / (b1 * denom);
        let d_b2 = -a1 * a2 / (b2 * denom);
        d_mu_x.data[i] = t
            * (two * my * d_a1 - two * my * d_a2 + two * mx * d_b1 - two * mx * d_b2);
        d_sxx.data[i] = t * d_b2;
        d_sxy.data[i] = t * two * d_a2;
    }
    let g_mu = blur_adjoint(&d_mu_x, kernel);
    let g_sxx = blur_adjoint(&d_sxx, kernel);
    let g_sxy = blur_adjoint(&d_sxy, kernel);
    let mut out = ScalarMap::new(x.width, x.height);
    for i in 0..n {
        out.data[i] = g_mu.data[i] + two * x.data[i] * g_sxx.data[i] + y.data[i] * g_sxy.data[i];
    }
    out
}
