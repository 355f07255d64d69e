//! In-memory image buffers and the on-disk formats they map to.
//!
//! - RGB images: 8-bit PNG or binary PPM (P6), converted to floating color
//!   in [0,1] on load.
//! - Transient masks: single-channel 8-bit PNG, nonzero = transient.
//! - Entity label maps: single-channel 16-bit PNG of label ids, 0 = unlabeled.
//! - Float maps: raw little-endian f32 with an "MSGSMAP1" header followed by
//!   u32 width and u32 height; the channel count is implied by the payload
//!   size (width * height * channels floats).

use std::fs;
use std::io::Read;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::num::Real;

pub const MAP_MAGIC: &[u8; 8] = b"MSGSMAP1";

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb<T> {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[T; 3]>,
}

impl<T: Real> ImageRgb<T> {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![[T::zero(); 3]; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [T; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[(y * width + x) as usize] = f(x, y);
            }
        }
        img
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> [T; 3] {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn at_mut(&mut self, x: u32, y: u32) -> &mut [T; 3] {
        &mut self.data[(y * self.width + x) as usize]
    }

    pub fn channel(&self, c: usize) -> ScalarMap<T> {
        ScalarMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|px| px[c]).collect(),
        }
    }

    /// Per-pixel mean of the three channels.
    pub fn to_gray(&self) -> ScalarMap<T> {
        let third = T::lit(1.0 / 3.0);
        ScalarMap {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|px| (px[0] + px[1] + px[2]) * third)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap<T> {
    pub width: u32,
    pub height: u32,
    pub data: Vec<T>,
}

impl<T: Real> ScalarMap<T> {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![T::zero(); (width * height) as usize],
        }
    }

    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; (width * height) as usize],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> T {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: T) {
        self.data[(y * self.width + x) as usize] = v;
    }
}

/// Binary mask; `true` marks a set pixel (transient for SAM masks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Dense entity labeling; 0 = unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> u32 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u32) {
        self.data[(y * self.width + x) as usize] = v;
    }
}

fn u8_to_unit<T: Real>(v: u8) -> T {
    T::from_u8(v).unwrap() / T::lit(255.0)
}

fn unit_to_u8<T: Real>(v: T) -> u8 {
    let clamped = v.max(T::zero()).min(T::one());
    (clamped * T::lit(255.0))
        .round()
        .to_u8()
        .unwrap_or(u8::MAX)
}

pub fn load_image_rgb<T: Real>(path: &Path) -> Result<ImageRgb<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        return parse_ppm(path, &bytes);
    }
    let decoded = image::load_from_memory(&bytes)
        .map_err(|e| Error::Image {
            path: path.into(),
            source: e,
        })?
        .to_rgb8();
    let (width, height) = decoded.dimensions();
    let data = decoded
        .pixels()
        .map(|p| [u8_to_unit(p[0]), u8_to_unit(p[1]), u8_to_unit(p[2])])
        .collect();
    Ok(ImageRgb {
        width,
        height,
        data,
    })
}

fn parse_ppm<T: Real>(path: &Path, bytes: &[u8]) -> Result<ImageRgb<T>> {
    // P6 header: magic, width, height, maxval as whitespace-separated tokens
    // (comments start with '#'), then a single whitespace byte and raw data.
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(&bytes[start..pos]);
    }
    let bad = |msg: &str| Error::parse(path.display().to_string(), 1, msg);
    if tokens.len() < 4 || tokens[0] != b"P6" {
        return Err(bad("not a binary PPM (P6) file"));
    }
    let parse_dim = |t: &[u8], what: &str| -> Result<u32> {
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what}")))
    };
    let width = parse_dim(tokens[1], "width")?;
    let height = parse_dim(tokens[2], "height")?;
    let maxval = parse_dim(tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(bad("only maxval 255 PPM supported"));
    }
    pos += 1; // single whitespace after maxval
    let need = (width * height * 3) as usize;
    if bytes.len() < pos + need {
        return Err(bad("truncated PPM payload"));
    }
    let data = bytes[pos..pos + need]
        .chunks_exact(3)
        .map(|c| [u8_to_unit(c[0]), u8_to_unit(c[1]), u8_to_unit(c[2])])
        .collect();
    Ok(ImageRgb {
        width,
        height,
        data,
    })
}

pub fn save_image_png<T: Real>(path: &Path, img: &ImageRgb<T>) -> Result<()> {
    let out: RgbImage = ImageBuffer::from_fn(img.width, img.height, |x, y| {
        let px = img.at(x, y);
        Rgb([unit_to_u8(px[0]), unit_to_u8(px[1]), unit_to_u8(px[2])])
    });
    out.save(path).map_err(|e| Error::Image {
        path: path.into(),
        source: e,
    })
}

pub fn save_image_ppm<T: Real>(path: &Path, img: &ImageRgb<T>) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for px in &img.data {
        bytes.push(unit_to_u8(px[0]));
        bytes.push(unit_to_u8(px[1]));
        bytes.push(unit_to_u8(px[2]));
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_mask_png(path: &Path) -> Result<Mask> {
    let decoded = image::open(path)
        .map_err(|e| Error::Image {
            path: path.into(),
            source: e,
        })?
        .to_luma8();
    let (width, height) = decoded.dimensions();
    Ok(Mask {
        width,
        height,
        data: decoded.pixels().map(|p| p[0] != 0).collect(),
    })
}

pub fn save_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let out: GrayImage = ImageBuffer::from_fn(mask.width, mask.height, |x, y| {
        Luma([if mask.at(x, y) { 255u8 } else { 0 }])
    });
    out.save(path).map_err(|e| Error::Image {
        path: path.into(),
        source: e,
    })
}

pub fn load_label_map_png(path: &Path) -> Result<LabelMap> {
    let decoded = image::open(path)
        .map_err(|e| Error::Image {
            path: path.into(),
            source: e,
        })?
        .to_luma16();
    let (width, height) = decoded.dimensions();
    Ok(LabelMap {
        width,
        height,
        data: decoded.pixels().map(|p| p[0] as u32).collect(),
    })
}

pub fn save_label_map_png(path: &Path, labels: &LabelMap) -> Result<()> {
    let out: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(labels.width, labels.height, |x, y| {
            Luma([labels.at(x, y).min(u16::MAX as u32) as u16])
        });
    out.save(path).map_err(|e| Error::Image {
        path: path.into(),
        source: e,
    })
}

/// Write a raw float map: header (magic, width, height) then
/// `width * height * channels` little-endian f32 values, row-major with
/// channels interleaved.
pub fn write_raw_map<T: Real>(path: &Path, width: u32, height: u32, values: &[T]) -> Result<()> {
    let pixels = (width * height) as usize;
    assert!(
        pixels > 0 && values.len() % pixels == 0,
        "payload must hold a whole number of channels"
    );
    let mut bytes = Vec::with_capacity(16 + values.len() * 4);
    bytes.extend_from_slice(MAP_MAGIC);
    bytes.extend_from_slice(&width.to_le_bytes());
    bytes.extend_from_slice(&height.to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a raw float map; returns (width, height, channels, values).
pub fn read_raw_map<T: Real>(path: &Path) -> Result<(u32, u32, usize, Vec<T>)> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[0..8] != MAP_MAGIC {
        return Err(bad("missing MSGSMAP1 header"));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let payload = &bytes[16..];
    let pixels = (width as usize) * (height as usize);
    if pixels == 0 || payload.len() % 4 != 0 {
        return Err(bad("corrupt payload"));
    }
    let count = payload.len() / 4;
    if count % pixels != 0 {
        return Err(bad("payload size is not a multiple of width*height"));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Ok((width, height, count / pixels, values))
}
