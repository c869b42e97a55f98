//! Text export of a structure-from-motion reconstruction: `cameras.txt`
//! and `images.txt`.
//!
//! `cameras.txt` lines are `CAMERA_ID MODEL WIDTH HEIGHT PARAMS...`.
//! `images.txt` alternates a pose line
//! `IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME` with a line of 2D points
//! (possibly empty), which is skipped. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use streetfield_core::camera::Camera;
use streetfield_core::math::{Quat, Vec3};

use crate::error::{io_err, parse_err, AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CameraModel {
    Pinhole,
    SimplePinhole,
}

impl CameraModel {
    pub fn name(self) -> &'static str {
        match self {
            CameraModel::Pinhole => "PINHOLE",
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
        }
    }

    fn param_count(self) -> usize {
        match self {
            CameraModel::Pinhole => 4,
            CameraModel::SimplePinhole => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfmCamera {
    pub id: u32,
    pub model: CameraModel,
    pub width: usize,
    pub height: usize,
    pub params: Vec<f64>,
}

impl SfmCamera {
    /// `(fx, fy, cx, cy)`.
    pub fn intrinsics(&self) -> (f64, f64, f64, f64) {
        let p = &self.params;
        match self.model {
            CameraModel::Pinhole => (p[0], p[1], p[2], p[3]),
            CameraModel::SimplePinhole => (p[0], p[0], p[1], p[2]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfmImage {
    pub id: u32,
    /// World-to-camera rotation `(qw, qx, qy, qz)`.
    pub qvec: [f64; 4],
    pub tvec: [f64; 3],
    pub camera_id: u32,
    pub name: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SfmModel {
    pub cameras: Vec<SfmCamera>,
    pub images: Vec<SfmImage>,
}

impl SfmModel {
    pub fn camera(&self, image: &SfmImage) -> AppResult<Camera> {
        let c = self
            .cameras
            .iter()
            .find(|c| c.id == image.camera_id)
            .ok_or_else(|| AppError::Dataset(format!("image {} refers to missing camera {}", image.name, image.camera_id)))?;
        let (fx, fy, cx, cy) = c.intrinsics();
        let [w, x, y, z] = image.qvec;
        let cam = Camera {
            width: c.width,
            height: c.height,
            fx,
            fy,
            cx,
            cy,
            rotation: Quat::new(w, x, y, z).normalized(),
            translation: Vec3(image.tvec),
        };
        cam.validate()?;
        Ok(cam)
    }
}

fn is_comment(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

fn field<T: std::str::FromStr>(tok: Option<&str>, what: &str, file: &Path, line: usize) -> AppResult<T> {
    let tok = tok.ok_or_else(|| parse_err(file, line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(file, line, format!("bad {what} {tok:?}")))
}

pub fn parse_cameras(text: &str, file: &Path) -> AppResult<Vec<SfmCamera>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if is_comment(line) || line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let id = field(tok.next(), "camera id", file, n)?;
        let model = match tok.next() {
            Some("PINHOLE") => CameraModel::Pinhole,
            Some("SIMPLE_PINHOLE") => CameraModel::SimplePinhole,
            Some(other) => return Err(AppError::UnsupportedCameraModel(other.to_string())),
            None => return Err(parse_err(file, n, "missing camera model")),
        };
        let width = field(tok.next(), "width", file, n)?;
        let height = field(tok.next(), "height", file, n)?;
        let params = tok
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(file, n, format!("bad camera parameter {t:?}"))))
            .collect::<AppResult<Vec<f64>>>()?;
        if params.len() != model.param_count() {
            return Err(parse_err(
                file,
                n,
                format!("{} takes {} parameters, found {}", model.name(), model.param_count(), params.len()),
            ));
        }
        out.push(SfmCamera { id, model, width, height, params });
    }
    Ok(out)
}

pub fn parse_images(text: &str, file: &Path) -> AppResult<Vec<SfmImage>> {
    let mut out = Vec::new();
    let mut expect_points = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if is_comment(line) {
            continue;
        }
        if expect_points {
            expect_points = false;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let id = field(tok.next(), "image id", file, n)?;
        let mut q = [0.0; 4];
        for (k, v) in q.iter_mut().enumerate() {
            *v = field(tok.next(), ["qw", "qx", "qy", "qz"][k], file, n)?;
        }
        let mut t = [0.0; 3];
        for (k, v) in t.iter_mut().enumerate() {
            *v = field(tok.next(), ["tx", "ty", "tz"][k], file, n)?;
        }
        let camera_id = field(tok.next(), "camera id", file, n)?;
        let name = tok.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(parse_err(file, n, "missing image name"));
        }
        if q.iter().all(|v| *v == 0.0) {
            return Err(parse_err(file, n, "zero quaternion"));
        }
        out.push(SfmImage { id, qvec: q, tvec: t, camera_id, name });
        expect_points = true;
    }
    Ok(out)
}

/// Reads `cameras.txt` and `images.txt` from `dir`.
pub fn parse_sfm_text(dir: &Path) -> AppResult<SfmModel> {
    let cp = dir.join("cameras.txt");
    let ip = dir.join("images.txt");
    let cameras = parse_cameras(&std::fs::read_to_string(&cp).map_err(io_err(&cp))?, &cp)?;
    let images = parse_images(&std::fs::read_to_string(&ip).map_err(io_err(&ip))?, &ip)?;
    Ok(SfmModel { cameras, images })
}

pub fn cameras_text(cameras: &[SfmCamera]) -> String {
    let mut s = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    for c in cameras {
        let _ = write!(s, "{} {} {} {}", c.id, c.model.name(), c.width, c.height);
        for p in &c.params {
            let _ = write!(s, " {p}");
        }
        s.push('\n');
    }
    s
}

pub fn images_text(images: &[SfmImage]) -> String {
    let mut s = String::from(
        "# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n",
    );
    for im in images {
        let [qw, qx, qy, qz] = im.qvec;
        let [tx, ty, tz] = im.tvec;
        let _ = writeln!(s, "{} {qw} {qx} {qy} {qz} {tx} {ty} {tz} {} {}", im.id, im.camera_id, im.name);
        s.push('\n');
    }
    s
}

pub fn write_sfm_text(model: &SfmModel, dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cp = dir.join("cameras.txt");
    std::fs::write(&cp, cameras_text(&model.cameras)).map_err(io_err(&cp))?;
    let ip = dir.join("images.txt");
    std::fs::write(&ip, images_text(&model.images)).map_err(io_err(&ip))?;
    Ok(())
}

/// One camera entry per image; all share intrinsics-derived ids.
pub fn model_from_cameras(cams: &[(String, Camera)]) -> SfmModel {
    let mut m = SfmModel::default();
    for (i, (name, c)) in cams.iter().enumerate() {
        let id = i as u32 + 1;
        m.cameras.push(SfmCamera { id, model: CameraModel::Pinhole, width: c.width, height: c.height, params: vec![c.fx, c.fy, c.cx, c.cy] });
        let q = c.rotation;
        m.images.push(SfmImage { id, qvec: [q.w, q.x, q.y, q.z], tvec: c.translation.0, camera_id: id, name: name.clone() });
    }
    m
}
