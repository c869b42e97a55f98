//! Checkpoint container.
//!
//! Layout (little-endian): magic `SGNF`, `u32` format version, then named
//! blocks until end of file, each `u32` name length, UTF-8 name, `u64`
//! payload length, payload. Parameter blocks use the field block names;
//! optimizer moments are `adam_m.<block>` / `adam_v.<block>`. All arrays are
//! 32-bit floats.

use std::collections::BTreeMap;
use std::path::Path;

use streetfield_core::camera::Camera;
use streetfield_core::field::{BlockId, FieldModel, FieldParams};
use streetfield_core::math::{Aabb, Quat, Vec3};
use streetfield_core::optim::AdamState;

use crate::config::{self, RunConfig};
use crate::error::{io_err, AppError, AppResult};

pub const MAGIC: &[u8; 4] = b"SGNF";
pub const VERSION: u32 = 1;

/// Everything needed to resume training or render.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: FieldParams<f32>,
    pub adam: AdamState<f32>,
    /// Completed iterations.
    pub iteration: u64,
    /// Intrinsics used by `render` when none are given.
    pub camera: Option<Camera>,
}

impl Checkpoint {
    pub fn model(&self) -> AppResult<FieldModel> {
        let model = FieldModel::new(self.config.train.field.clone())?;
        model.check_params(&self.params)?;
        model.check_params(&self.adam.m)?;
        model.check_params(&self.adam.v)?;
        Ok(model)
    }
}

fn put_block(out: &mut Vec<u8>, name: &str, payload: &[u8]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn f32s(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn f64s(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_block(&mut out, "config", config::to_text(&ck.config).as_bytes());
    let f = &ck.config.train.field;
    let b = f.scene_box;
    put_block(&mut out, "scene_box", &f64s(&[b.min.x(), b.min.y(), b.min.z(), b.max.x(), b.max.y(), b.max.z()]));
    put_block(&mut out, "image_count", &(f.image_count as u64).to_le_bytes());
    for id in BlockId::ALL {
        put_block(&mut out, id.name(), &f32s(ck.params.block(id)));
    }
    for id in BlockId::ALL {
        put_block(&mut out, &format!("adam_m.{}", id.name()), &f32s(ck.adam.m.block(id)));
        put_block(&mut out, &format!("adam_v.{}", id.name()), &f32s(ck.adam.v.block(id)));
    }
    put_block(&mut out, "adam_step", &ck.adam.step.to_le_bytes());
    put_block(&mut out, "iteration", &ck.iteration.to_le_bytes());
    // Batch sampling and stratification are keyed by (seed, iteration).
    let rng = [ck.config.train.seed.to_le_bytes(), ck.iteration.to_le_bytes()].concat();
    put_block(&mut out, "rng", &rng);
    if let Some(c) = &ck.camera {
        let q = c.rotation;
        let t = c.translation;
        put_block(
            &mut out,
            "camera",
            &f64s(&[c.width as f64, c.height as f64, c.fx, c.fy, c.cx, c.cy, q.w, q.x, q.y, q.z, t.x(), t.y(), t.z()]),
        );
    }
    out
}

fn bad(msg: impl Into<String>) -> AppError {
    AppError::Checkpoint(msg.into())
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> AppResult<&'a [u8]> {
    if buf.len() < n {
        return Err(bad("truncated file"));
    }
    let (a, b) = buf.split_at(n);
    *buf = b;
    Ok(a)
}

fn to_f32s(p: &[u8]) -> AppResult<Vec<f32>> {
    if p.len() % 4 != 0 {
        return Err(bad("float block length not a multiple of 4"));
    }
    Ok(p.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn to_f64s(p: &[u8]) -> AppResult<Vec<f64>> {
    if p.len() % 8 != 0 {
        return Err(bad("float block length not a multiple of 8"));
    }
    Ok(p.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn to_u64(p: &[u8]) -> AppResult<u64> {
    Ok(u64::from_le_bytes(p.get(..8).ok_or_else(|| bad("short integer block"))?.try_into().unwrap()))
}

pub fn decode(bytes: &[u8]) -> AppResult<Checkpoint> {
    let mut buf = bytes;
    if take(&mut buf, 4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut buf, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let mut blocks: BTreeMap<String, &[u8]> = BTreeMap::new();
    while !buf.is_empty() {
        let n = u32::from_le_bytes(take(&mut buf, 4)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut buf, n)?).map_err(|_| bad("block name not UTF-8"))?.to_string();
        let len = u64::from_le_bytes(take(&mut buf, 8)?.try_into().unwrap()) as usize;
        blocks.insert(name, take(&mut buf, len)?);
    }
    let get = |name: &str| blocks.get(name).copied().ok_or_else(|| bad(format!("missing block {name}")));
    let text = std::str::from_utf8(get("config")?).map_err(|_| bad("config not UTF-8"))?;
    let mut cfg = config::parse(text, Path::new("<checkpoint>"))?;
    let b = to_f64s(get("scene_box")?)?;
    if b.len() != 6 {
        return Err(bad("scene_box needs 6 values"));
    }
    cfg.train.field.scene_box = Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
    cfg.train.field.image_count = to_u64(get("image_count")?)? as usize;
    let model = FieldModel::new(cfg.train.field.clone())?;
    let mut params = FieldParams::zeros_like(&model);
    let mut adam = AdamState::new(&model);
    for id in BlockId::ALL {
        *params.block_mut(id) = to_f32s(get(id.name())?)?;
        *adam.m.block_mut(id) = to_f32s(get(&format!("adam_m.{}", id.name()))?)?;
        *adam.v.block_mut(id) = to_f32s(get(&format!("adam_v.{}", id.name()))?)?;
    }
    adam.step = to_u64(get("adam_step")?)?;
    let iteration = to_u64(get("iteration")?)?;
    let camera = match blocks.get("camera") {
        Some(p) => {
            let v = to_f64s(p)?;
            if v.len() != 13 {
                return Err(bad("camera needs 13 values"));
            }
            Some(Camera {
                width: v[0] as usize,
                height: v[1] as usize,
                fx: v[2],
                fy: v[3],
                cx: v[4],
                cy: v[5],
                rotation: Quat::new(v[6], v[7], v[8], v[9]),
                translation: Vec3::new(v[10], v[11], v[12]),
            })
        }
        None => None,
    };
    let ck = Checkpoint { config: cfg, params, adam, iteration, camera };
    ck.model()?;
    Ok(ck)
}

/// Writes atomically: a temporary sibling file is renamed over `path`.
pub fn save(ck: &Checkpoint, path: &Path) -> AppResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(ck)).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load(path: &Path) -> AppResult<Checkpoint> {
    decode(&std::fs::read(path).map_err(io_err(path))?)
}
