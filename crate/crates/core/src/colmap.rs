//! COLMAP text-export reader and writer (cameras.txt, images.txt,
//! points3D.txt).
//!
//! Comment lines start with '#', blank lines are skipped, and images.txt
//! carries two lines per image; the second (2D observations) is ignored.
//! Floats are printed with Rust's shortest round-trip formatting so that
//! serialize → parse reproduces field values bitwise.

use nalgebra::{UnitQuaternion, Vector3};

use crate::camera::{unit_quaternion, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
}

impl CameraModel {
    pub fn name(self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapCamera<T: Real> {
    pub camera_id: u32,
    pub model: CameraModel,
    pub intrinsics: CameraIntrinsics<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapImage<T: Real> {
    pub image_id: u32,
    /// World-to-camera rotation.
    pub rotation: UnitQuaternion<T>,
    pub translation: Vector3<T>,
    pub camera_id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapPoint<T: Real> {
    pub point_id: u64,
    pub position: Vector3<T>,
    pub rgb: [u8; 3],
    pub error: T,
}

impl<T: Real> ColmapPoint<T> {
    /// Color as floating RGB in [0,1].
    pub fn color_unit(&self) -> [T; 3] {
        let s = T::lit(1.0 / 255.0);
        [
            T::from_u8(self.rgb[0]).unwrap() * s,
            T::from_u8(self.rgb[1]).unwrap() * s,
            T::from_u8(self.rgb[2]).unwrap() * s,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapScene<T: Real> {
    pub cameras: Vec<ColmapCamera<T>>,
    pub images: Vec<ColmapImage<T>>,
    pub points: Vec<ColmapPoint<T>>,
}

impl<T: Real> ColmapScene<T> {
    pub fn camera_by_id(&self, id: u32) -> Option<&ColmapCamera<T>> {
        self.cameras.iter().find(|c| c.camera_id == id)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<'a, V: std::str::FromStr>(
    fields: &mut impl Iterator<Item = &'a str>,
    file: &str,
    line: usize,
    what: &str,
) -> Result<V> {
    fields
        .next()
        .ok_or_else(|| Error::parse(file, line, format!("missing {what}")))?
        .parse::<V>()
        .map_err(|_| Error::parse(file, line, format!("unparseable {what}")))
}

pub fn parse_cameras<T: Real>(text: &str) -> Result<Vec<ColmapCamera<T>>> {
    const FILE: &str = "cameras.txt";
    let mut cameras = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut f = line.split_whitespace();
        let camera_id: u32 = field(&mut f, FILE, line_no, "camera id")?;
        let model_name: String = field(&mut f, FILE, line_no, "camera model")?;
        let width: u32 = field(&mut f, FILE, line_no, "width")?;
        let height: u32 = field(&mut f, FILE, line_no, "height")?;
        let (model, fx, fy, cx, cy) = match model_name.as_str() {
            "SIMPLE_PINHOLE" => {
                let fl: f64 = field(&mut f, FILE, line_no, "focal length")?;
                let cx: f64 = field(&mut f, FILE, line_no, "cx")?;
                let cy: f64 = field(&mut f, FILE, line_no, "cy")?;
                (CameraModel::SimplePinhole, fl, fl, cx, cy)
            }
            "PINHOLE" => {
                let fx: f64 = field(&mut f, FILE, line_no, "fx")?;
                let fy: f64 = field(&mut f, FILE, line_no, "fy")?;
                let cx: f64 = field(&mut f, FILE, line_no, "cx")?;
                let cy: f64 = field(&mut f, FILE, line_no, "cy")?;
                (CameraModel::Pinhole, fx, fy, cx, cy)
            }
            other => {
                return Err(Error::parse(
                    FILE,
                    line_no,
                    format!("unknown camera model {other}"),
                ))
            }
        };
        let intrinsics = CameraIntrinsics::new(
            T::lit(fx),
            T::lit(fy),
            T::lit(cx),
            T::lit(cy),
            width,
            height,
        )?;
        cameras.push(ColmapCamera {
            camera_id,
            model,
            intrinsics,
        });
    }
    Ok(cameras)
}

pub fn parse_images<T: Real>(text: &str) -> Result<Vec<ColmapImage<T>>> {
    const FILE: &str = "images.txt";
    let mut images = Vec::new();
    let mut expect_observations = false;
    for (line_no, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if raw.starts_with('#') {
            continue;
        }
        if expect_observations {
            // Line of 2D observations; may be empty; contents ignored.
            expect_observations = false;
            continue;
        }
        if raw.is_empty() {
            continue;
        }
        let line = raw;
        let mut f = line.split_whitespace();
        let image_id: u32 = field(&mut f, FILE, line_no, "image id")?;
        let qw: f64 = field(&mut f, FILE, line_no, "qw")?;
        let qx: f64 = field(&mut f, FILE, line_no, "qx")?;
        let qy: f64 = field(&mut f, FILE, line_no, "qy")?;
        let qz: f64 = field(&mut f, FILE, line_no, "qz")?;
        let tx: f64 = field(&mut f, FILE, line_no, "tx")?;
        let ty: f64 = field(&mut f, FILE, line_no, "ty")?;
        let tz: f64 = field(&mut f, FILE, line_no, "tz")?;
        let camera_id: u32 = field(&mut f, FILE, line_no, "camera id")?;
        let name: String = field(&mut f, FILE, line_no, "image name")?;
        let rotation = unit_quaternion(T::lit(qw), T::lit(qx), T::lit(qy), T::lit(qz))
            .ok_or_else(|| Error::parse(FILE, line_no, "quaternion has zero norm"))?;
        images.push(ColmapImage {
            image_id,
            rotation,
            translation: Vector3::new(T::lit(tx), T::lit(ty), T::lit(tz)),
            camera_id,
            name,
        });
        expect_observations = true;
    }
    Ok(images)
}

/// Note: blank observation lines are legal and common, so an image whose
/// observation line was elided entirely is also accepted (the parser treats
/// the next image header as data because blank lines never reach it).
pub fn parse_points<T: Real>(text: &str) -> Result<Vec<ColmapPoint<T>>> {
    const FILE: &str = "points3D.txt";
    let mut points = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut f = line.split_whitespace();
        let point_id: u64 = field(&mut f, FILE, line_no, "point id")?;
        let x: f64 = field(&mut f, FILE, line_no, "x")?;
        let y: f64 = field(&mut f, FILE, line_no, "y")?;
        let z: f64 = field(&mut f, FILE, line_no, "z")?;
        let r: u8 = field(&mut f, FILE, line_no, "r")?;
        let g: u8 = field(&mut f, FILE, line_no, "g")?;
        let b: u8 = field(&mut f, FILE, line_no, "b")?;
        let error: f64 = field(&mut f, FILE, line_no, "error")?;
        points.push(ColmapPoint {
            point_id,
            position: Vector3::new(T::lit(x), T::lit(y), T::lit(z)),
            rgb: [r, g, b],
            error: T::lit(error),
        });
    }
    Ok(points)
}

pub fn parse_colmap<T: Real>(
    cameras_text: &str,
    images_text: &str,
    points_text: &str,
) -> Result<ColmapScene<T>> {
    Ok(ColmapScene {
        cameras: parse_cameras(cameras_text)?,
        images: parse_images(images_text)?,
        points: parse_points(points_text)?,
    })
}

pub fn serialize_cameras<T: Real>(cameras: &[ColmapCamera<T>]) -> String {
    let mut out = String::from("# Camera list with one line of data per camera:\n");
    for c in cameras {
        let k = &c.intrinsics;
        match c.model {
            CameraModel::SimplePinhole => {
                out.push_str(&format!(
                    "{} SIMPLE_PINHOLE {} {} {} {} {}\n",
                    c.camera_id,
                    k.width,
                    k.height,
                    k.fx.to_f64_lossy(),
                    k.cx.to_f64_lossy(),
                    k.cy.to_f64_lossy()
                ));
            }
            CameraModel::Pinhole => {
                out.push_str(&format!(
                    "{} PINHOLE {} {} {} {} {} {}\n",
                    c.camera_id,
                    k.width,
                    k.height,
                    k.fx.to_f64_lossy(),
                    k.fy.to_f64_lossy(),
                    k.cx.to_f64_lossy(),
                    k.cy.to_f64_lossy()
                ));
            }
        }
    }
    out
}

pub fn serialize_images<T: Real>(images: &[ColmapImage<T>]) -> String {
    let mut out = String::from("# Image list with two lines of data per image:\n");
    for im in images {
        let q = im.rotation.quaternion();
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {}\n\n",
            im.image_id,
            q.w.to_f64_lossy(),
            q.i.to_f64_lossy(),
            q.j.to_f64_lossy(),
            q.k.to_f64_lossy(),
            im.translation.x.to_f64_lossy(),
            im.translation.y.to_f64_lossy(),
            im.translation.z.to_f64_lossy(),
            im.camera_id,
            im.name
        ));
    }
    out
}

pub fn serialize_points<T: Real>(points: &[ColmapPoint<T>]) -> String {
    let mut out = String::from("# 3D point list with one line of data per point:\n");
    for p in points {
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            p.point_id,
            p.position.x.to_f64_lossy(),
            p.position.y.to_f64_lossy(),
            p.position.z.to_f64_lossy(),
            p.rgb[0],
            p.rgb[1],
            p.rgb[2],
            p.error.to_f64_lossy()
        ));
    }
    out
}

/// Read cameras.txt, images.txt, and points3D.txt from a directory.
pub fn load_colmap_dir<T: Real>(dir: &std::path::Path) -> Result<ColmapScene<T>> {
    let read = |name: &str| -> Result<String> {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
    };
    parse_colmap(
        &read("cameras.txt")?,
        &read("images.txt")?,
        &read("points3D.txt")?,
    )
}
