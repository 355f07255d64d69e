//! Trained-model checkpoints: splats plus the appearance model in one
//! little-endian binary file, written atomically (temp file then rename).
//!
//! Layout: magic "MSGSCKP1", u32 splat count, then per splat 46 f32 values
//! (mu xyz, quaternion wxyz, log scale xyz, opacity logit, base color rgb,
//! 32-dim embedding), then the appearance model in its own "MSGSAPP1" block.

use std::path::Path;

use nalgebra::Vector3;

use crate::appearance::{
    read_appearance_bytes, write_appearance_bytes, AppearanceModel, ByteReader,
};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::splat::{Splat, EMBED_DIM};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSGSCKP1";

pub fn write_checkpoint_bytes<T: Real>(
    splats: &[Splat<T>],
    model: &AppearanceModel<T>,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + splats.len() * 46 * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(splats.len() as u32).to_le_bytes());
    {
        let mut push = |v: T| out.extend_from_slice(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
        for s in splats {
            for i in 0..3 {
                push(s.mu[i]);
            }
            for &q in &s.rot {
                push(q);
            }
            for i in 0..3 {
                push(s.log_scale[i]);
            }
            push(s.opacity_logit);
            for &c in &s.base_color {
                push(c);
            }
            for &e in &s.embedding {
                push(e);
            }
        }
    }
    write_appearance_bytes(model, &mut out);
    out
}

pub fn read_checkpoint_bytes<T: Real>(
    bytes: &[u8],
    origin: &str,
) -> Result<(Vec<Splat<T>>, AppearanceModel<T>)> {
    let mut reader = ByteReader::new(bytes, origin);
    if reader.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{origin}: missing MSGSCKP1 magic")));
    }
    let count = reader.u32()? as usize;
    let mut splats = Vec::with_capacity(count);
    for _ in 0..count {
        let mut mu = Vector3::zeros();
        for i in 0..3 {
            mu[i] = reader.f32()?;
        }
        let mut rot = [T::zero(); 4];
        for q in &mut rot {
            *q = reader.f32()?;
        }
        let mut log_scale = Vector3::zeros();
        for i in 0..3 {
            log_scale[i] = reader.f32()?;
        }
        let opacity_logit = reader.f32()?;
        let mut base_color = [T::zero(); 3];
        for c in &mut base_color {
            *c = reader.f32()?;
        }
        let mut embedding = [T::zero(); EMBED_DIM];
        for e in &mut embedding {
            *e = reader.f32()?;
        }
        splats.push(Splat {
            mu,
            rot,
            log_scale,
            opacity_logit,
            base_color,
            embedding,
        });
    }
    let model = read_appearance_bytes(&mut reader)?;
    if !reader.done() {
        return Err(Error::Format(format!("{origin}: trailing bytes")));
    }
    Ok((splats, model))
}

pub fn save_checkpoint<T: Real>(
    path: &Path,
    splats: &[Splat<T>],
    model: &AppearanceModel<T>,
) -> Result<()> {
    let bytes = write_checkpoint_bytes(splats, model);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(Vec<Splat<T>>, AppearanceModel<T>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint_bytes(&bytes, &path.display().to_string())
}
