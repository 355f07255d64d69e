//! Evaluation metrics and the CSV report format.

use crate::error::{Error, Result};
use crate::img::{ImageRgb, Mask};
use crate::num::Real;

/// PSNR in dB with peak 1.0 over included pixels. The optional mask marks
/// transient pixels to exclude. Identical images report +infinity.
pub fn psnr<T: Real>(a: &ImageRgb<T>, b: &ImageRgb<T>, exclude: Option<&Mask>) -> Result<T> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Mismatch(format!(
            "psnr inputs {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut mse = T::zero();
    let mut count = 0usize;
    for i in 0..a.data.len() {
        if let Some(m) = exclude {
            if m.data[i] {
                continue;
            }
        }
        for c in 0..3 {
            let d = a.data[i][c] - b.data[i][c];
            mse += d * d;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArg("all pixels excluded from PSNR".into()));
    }
    mse /= T::from_usize(3 * count).unwrap();
    if mse == T::zero() {
        return Ok(T::lit(f64::INFINITY));
    }
    Ok(T::lit(10.0) * (T::one() / mse).log10())
}

/// Masked mean of an SSIM map (or plain mean without a mask).
pub fn masked_mean_ssim<T: Real>(ssim_map: &crate::img::ScalarMap<T>, exclude: Option<&Mask>) -> Result<T> {
    let mut sum = T::zero();
    let mut count = 0usize;
    for i in 0..ssim_map.data.len() {
        if let Some(m) = exclude {
            if m.data[i] {
                continue;
            }
        }
        sum += ssim_map.data[i];
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArg("all pixels excluded from SSIM".into()));
    }
    Ok(sum / T::from_usize(count).unwrap())
}

#[derive(Debug, Clone)]
pub struct FrameMetrics {
    pub name: String,
    pub sequence_id: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub masked_psnr: Option<f64>,
    pub masked_ssim: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl EvalReport {
    /// CSV with one row per frame, then per-sequence means, then an overall
    /// mean row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("kind,name,sequence,psnr,ssim,masked_psnr,masked_ssim\n");
        for f in &self.frames {
            out.push_str(&format!(
                "frame,{},{},{},{},{},{}\n",
                f.name,
                f.sequence_id,
                fmt_db(f.psnr),
                f.ssim,
                f.masked_psnr.map(fmt_db).unwrap_or_default(),
                f.masked_ssim.map(|v| format!("{v}")).unwrap_or_default()
            ));
        }
        let mut sequences: Vec<usize> = self.frames.iter().map(|f| f.sequence_id).collect();
        sequences.sort_unstable();
        sequences.dedup();
        let mean = |values: Vec<f64>| -> Option<f64> {
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let mut rows = Vec::new();
        for seq in sequences {
            let of_seq: Vec<&FrameMetrics> = self
                .frames
                .iter()
                .filter(|f| f.sequence_id == seq)
                .collect();
            rows.push((
                format!("sequence_mean,seq{seq},{seq}"),
                mean(of_seq.iter().map(|f| f.psnr).collect()),
                mean(of_seq.iter().map(|f| f.ssim).collect()),
                mean(of_seq.iter().filter_map(|f| f.masked_psnr).collect()),
                mean(of_seq.iter().filter_map(|f| f.masked_ssim).collect()),
            ));
        }
        rows.push((
            "overall_mean,all,".to_string(),
            mean(self.frames.iter().map(|f| f.psnr).collect()),
            mean(self.frames.iter().map(|f| f.ssim).collect()),
            mean(self.frames.iter().filter_map(|f| f.masked_psnr).collect()),
            mean(self.frames.iter().filter_map(|f| f.masked_ssim).collect()),
        ));
        for (prefix, p, s, mp, ms) in rows {
            out.push_str(&format!(
                "{prefix},{},{},{},{}\n",
                p.map(fmt_db).unwrap_or_default(),
                s.map(|v| format!("{v}")).unwrap_or_default(),
                mp.map(fmt_db).unwrap_or_default(),
                ms.map(|v| format!("{v}")).unwrap_or_default()
            ));
        }
        out
    }
}
