//! Dataset directories on disk.
//!
//! ```text
//! <root>/sparse/0/cameras.txt, images.txt
//! <root>/images/<name>
//! <root>/masks/<stem>.{transient,sky,ground}.png
//! <root>/depth/<stem>.png + depth/meta.txt     (synthetic only)
//! <root>/appearance_gt.txt                      (synthetic only)
//! <root>/scene_box.txt
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use log::warn;
use streetfield_core::field::AffineColorMap;
use streetfield_core::image::{Bitmap, Image, ScalarMap};
use streetfield_core::math::{Aabb, Mat3, Vec3};
use streetfield_core::scene::{Frame, MaskSet, SceneDataset};

use crate::error::{io_err, parse_err, AppError, AppResult};
use crate::sfm::{model_from_cameras, parse_sfm_text, write_sfm_text};

/// Depth maps store `round(depth / DEPTH_SCALE)` as 16-bit integers.
pub const DEPTH_SCALE: f64 = 0.001;

pub const MASK_KINDS: [&str; 3] = ["transient", "sky", "ground"];

fn stem(name: &str) -> &str {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
}

pub fn mask_path(root: &Path, image_name: &str, kind: &str) -> PathBuf {
    root.join("masks").join(format!("{}.{kind}.png", stem(image_name)))
}

pub fn load_image(path: &Path) -> AppResult<Image> {
    let img = image::open(path).map_err(|source| AppError::Image { path: path.into(), source })?.to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = Image::new(w as usize, h as usize);
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            out.data[3 * i + c] = p.0[c] as f32 / 255.0;
        }
    }
    Ok(out)
}

pub fn save_image(path: &Path, img: &Image) -> AppResult<()> {
    let mut buf = RgbImage::new(img.width as u32, img.height as u32);
    for (i, p) in buf.pixels_mut().enumerate() {
        for c in 0..3 {
            p.0[c] = (img.data[3 * i + c].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    buf.save(path).map_err(|source| AppError::Image { path: path.into(), source })
}

/// 8-bit grayscale thresholded at 128; `None` when the file is absent.
pub fn load_mask(path: &Path, width: usize, height: usize) -> AppResult<Option<Bitmap>> {
    if !path.exists() {
        return Ok(None);
    }
    let img = image::open(path).map_err(|source| AppError::Image { path: path.into(), source })?.to_luma8();
    if img.width() as usize != width || img.height() as usize != height {
        return Err(AppError::Dataset(format!(
            "{}: mask is {}x{}, image is {width}x{height}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    let mut m = Bitmap::zeros(width, height);
    for (i, p) in img.pixels().enumerate() {
        m.bits[i] = (p.0[0] >= 128) as u8;
    }
    Ok(Some(m))
}

pub fn save_mask(path: &Path, m: &Bitmap) -> AppResult<()> {
    let img: GrayImage = ImageBuffer::from_fn(m.width as u32, m.height as u32, |x, y| {
        Luma([if m.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|source| AppError::Image { path: path.into(), source })
}

/// Loads the three masks of one image; a missing file yields an all-zero
/// mask and a warning.
pub fn load_mask_set(root: &Path, image_name: &str, width: usize, height: usize) -> AppResult<MaskSet> {
    let mut set = MaskSet::empty(width, height);
    for kind in MASK_KINDS {
        let p = mask_path(root, image_name, kind);
        match load_mask(&p, width, height)? {
            Some(m) => match kind {
                "transient" => set.transient = m,
                "sky" => set.sky = m,
                _ => set.ground = m,
            },
            None => warn!("missing {kind} mask {}; using all zeros", p.display()),
        }
    }
    Ok(set)
}

pub fn save_depth(path: &Path, d: &ScalarMap) -> AppResult<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(d.width as u32, d.height as u32, |x, y| {
        let v = d.get(y as usize, x as usize) as f64 / DEPTH_SCALE;
        Luma([v.round().clamp(0.0, u16::MAX as f64) as u16])
    });
    img.save(path).map_err(|source| AppError::Image { path: path.into(), source })
}

pub fn load_depth(path: &Path) -> AppResult<ScalarMap> {
    let img = image::open(path).map_err(|source| AppError::Image { path: path.into(), source })?.to_luma16();
    let mut d = ScalarMap::new(img.width() as usize, img.height() as usize);
    for (i, p) in img.pixels().enumerate() {
        d.data[i] = (p.0[0] as f64 * DEPTH_SCALE) as f32;
    }
    Ok(d)
}

pub fn depth_meta_text() -> String {
    format!("# 16-bit depth maps: distance along the ray = value * scale\nscale = {DEPTH_SCALE}\nmissing = 0\n")
}

pub fn appearance_text(maps: &[AffineColorMap<f64>]) -> String {
    let mut s = String::from("# per image: T (row-major, 9 values) then b (3 values)\n");
    for m in maps {
        let vals: Vec<String> = m.matrix.0.iter().flatten().chain(m.shift.0.iter()).map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
    }
    s
}

pub fn parse_appearance(text: &str, file: &Path) -> AppResult<Vec<AffineColorMap<f64>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(file, i + 1, format!("bad number {t:?}"))))
            .collect::<AppResult<_>>()?;
        if v.len() != 12 {
            return Err(parse_err(file, i + 1, format!("expected 12 values, found {}", v.len())));
        }
        let mut m = Mat3::zero();
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] = v[3 * r + c];
            }
        }
        out.push(AffineColorMap { matrix: m, shift: Vec3::new(v[9], v[10], v[11]) });
    }
    Ok(out)
}

pub fn parse_scene_box(text: &str, file: &Path) -> AppResult<Aabb<f64>> {
    let v: Vec<f64> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .map(|t| t.parse().map_err(|_| parse_err(file, 1, format!("bad number {t:?}"))))
        .collect::<AppResult<_>>()?;
    if v.len() != 6 {
        return Err(parse_err(file, 1, "scene box needs 6 numbers: min xyz then max xyz"));
    }
    let b = Aabb::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
    if !b.is_valid() {
        return Err(parse_err(file, 1, "scene box must have positive extent"));
    }
    Ok(b)
}

fn scene_box_text(b: &Aabb<f64>) -> String {
    format!(
        "# min x y z, max x y z\n{} {} {}\n{} {} {}\n",
        b.min.x(),
        b.min.y(),
        b.min.z(),
        b.max.x(),
        b.max.y(),
        b.max.z()
    )
}

fn create(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> AppResult<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes a dataset in the directory layout above.
pub fn write_dataset(ds: &SceneDataset, root: &Path) -> AppResult<()> {
    for d in ["images", "masks"] {
        create(&root.join(d))?;
    }
    let cams: Vec<(String, _)> = ds.frames.iter().map(|f| (f.name.clone(), f.camera.clone())).collect();
    write_sfm_text(&model_from_cameras(&cams), &root.join("sparse").join("0"))?;
    for f in &ds.frames {
        save_image(&root.join("images").join(&f.name), &f.image)?;
        for (kind, m) in MASK_KINDS.iter().zip([&f.masks.transient, &f.masks.sky, &f.masks.ground]) {
            save_mask(&mask_path(root, &f.name, kind), m)?;
        }
        if let Some(d) = &f.depth {
            create(&root.join("depth"))?;
            save_depth(&root.join("depth").join(format!("{}.png", stem(&f.name))), d)?;
        }
    }
    if ds.frames.iter().any(|f| f.depth.is_some()) {
        write_text(&root.join("depth").join("meta.txt"), &depth_meta_text())?;
    }
    if let Some(gt) = &ds.appearance_gt {
        write_text(&root.join("appearance_gt.txt"), &appearance_text(gt))?;
    }
    write_text(&root.join("scene_box.txt"), &scene_box_text(&ds.scene_box))
}

/// Loads a dataset directory. Images are ordered as listed in `images.txt`.
pub fn load_dataset(root: &Path) -> AppResult<SceneDataset> {
    let sfm = parse_sfm_text(&root.join("sparse").join("0"))?;
    let bp = root.join("scene_box.txt");
    let scene_box = parse_scene_box(&std::fs::read_to_string(&bp).map_err(io_err(&bp))?, &bp)?;
    let mut frames = Vec::with_capacity(sfm.images.len());
    for im in &sfm.images {
        let camera = sfm.camera(im)?;
        let image = load_image(&root.join("images").join(&im.name))?;
        if image.width != camera.width || image.height != camera.height {
            return Err(AppError::Dataset(format!(
                "{}: image is {}x{}, camera says {}x{}",
                im.name, image.width, image.height, camera.width, camera.height
            )));
        }
        let masks = load_mask_set(root, &im.name, camera.width, camera.height)?;
        let dp = root.join("depth").join(format!("{}.png", stem(&im.name)));
        let depth = if dp.exists() { Some(load_depth(&dp)?) } else { None };
        frames.push(Frame { name: im.name.clone(), camera, image, masks, depth });
    }
    let ap = root.join("appearance_gt.txt");
    let appearance_gt = if ap.exists() {
        Some(parse_appearance(&std::fs::read_to_string(&ap).map_err(io_err(&ap))?, &ap)?)
    } else {
        None
    };
    let ds = SceneDataset { frames, scene_box, appearance_gt };
    ds.validate()?;
    Ok(ds)
}
