//! The trainable radiance field.
//!
//! A point is encoded by the hash grid and by an integrated positional
//! embedding; the density MLP consumes both, with the hash features also
//! injected into the pre-activation of its second layer. Its second hidden
//! layer doubles as the bottleneck for the color MLP, which additionally
//! sees the encoded view direction. A separate MLP maps the view direction
//! alone to the sky color, and a linear decoder maps each image's latent
//! code to an affine color transform.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{direction_dim, direction_encode_into, ipe_dim, ipe_encode_into};
use crate::hash_grid::{HashGrid, HashGridConfig, LevelCorners};
use crate::math::{Aabb, Mat3, Vec3};
use crate::mlp::{sigmoid, softplus, softplus_with_deriv, stack, Dense};
use crate::{Error, Real, Result};

/// Tolerance on `|d| - 1` for view directions.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub grid: HashGridConfig,
    pub scene_box: Aabb<f64>,
    pub ipe_levels: usize,
    pub density_width: usize,
    pub color_width: usize,
    pub sky_width: usize,
    pub direction_levels: usize,
    pub sky_direction_levels: usize,
    pub latent_dim: usize,
    pub image_count: usize,
    /// Initial bias of the density output unit; the field starts at the
    /// uniform density `softplus(density_bias_init)`.
    pub density_bias_init: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            grid: HashGridConfig::default(),
            scene_box: Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0)),
            ipe_levels: 4,
            density_width: 64,
            color_width: 64,
            sky_width: 64,
            direction_levels: 2,
            sky_direction_levels: 3,
            latent_dim: 16,
            image_count: 1,
            density_bias_init: -4.0,
        }
    }
}

/// Named parameter blocks, in checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockId {
    Hash,
    MlpDensity,
    MlpColor,
    MlpSky,
    AppearanceLatents,
    AppearanceDecoder,
}

impl BlockId {
    pub const ALL: [BlockId; 6] = [
        BlockId::Hash,
        BlockId::MlpDensity,
        BlockId::MlpColor,
        BlockId::MlpSky,
        BlockId::AppearanceLatents,
        BlockId::AppearanceDecoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockId::Hash => "hash",
            BlockId::MlpDensity => "mlp_density",
            BlockId::MlpColor => "mlp_color",
            BlockId::MlpSky => "mlp_sky",
            BlockId::AppearanceLatents => "appearance_latents",
            BlockId::AppearanceDecoder => "appearance_decoder",
        }
    }

    pub fn from_name(name: &str) -> Option<BlockId> {
        BlockId::ALL.into_iter().find(|b| b.name() == name)
    }
}

/// All trainable state, one flat vector per block.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams<R> {
    pub hash: Vec<R>,
    pub mlp_density: Vec<R>,
    pub mlp_color: Vec<R>,
    pub mlp_sky: Vec<R>,
    pub appearance_latents: Vec<R>,
    pub appearance_decoder: Vec<R>,
}

impl<R: Real> FieldParams<R> {
    pub fn zeros_like(model: &FieldModel) -> Self {
        let s = model.block_sizes();
        FieldParams {
            hash: vec![R::zero(); s[0]],
            mlp_density: vec![R::zero(); s[1]],
            mlp_color: vec![R::zero(); s[2]],
            mlp_sky: vec![R::zero(); s[3]],
            appearance_latents: vec![R::zero(); s[4]],
            appearance_decoder: vec![R::zero(); s[5]],
        }
    }

    pub fn block(&self, id: BlockId) -> &[R] {
        match id {
            BlockId::Hash => &self.hash,
            BlockId::MlpDensity => &self.mlp_density,
            BlockId::MlpColor => &self.mlp_color,
            BlockId::MlpSky => &self.mlp_sky,
            BlockId::AppearanceLatents => &self.appearance_latents,
            BlockId::AppearanceDecoder => &self.appearance_decoder,
        }
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut Vec<R> {
        match id {
            BlockId::Hash => &mut self.hash,
            BlockId::MlpDensity => &mut self.mlp_density,
            BlockId::MlpColor => &mut self.mlp_color,
            BlockId::MlpSky => &mut self.mlp_sky,
            BlockId::AppearanceLatents => &mut self.appearance_latents,
            BlockId::AppearanceDecoder => &mut self.appearance_decoder,
        }
    }

    pub fn param_count(&self) -> usize {
        BlockId::ALL.iter().map(|b| self.block(*b).len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        BlockId::ALL.iter().all(|b| self.block(*b).iter().all(|v| v.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for b in BlockId::ALL {
            self.block_mut(b).iter_mut().for_each(|v| *v = R::zero());
        }
    }

    /// `self += other`, block by block.
    pub fn add_assign(&mut self, other: &Self) {
        for b in BlockId::ALL {
            for (a, o) in self.block_mut(b).iter_mut().zip(other.block(b)) {
                *a += *o;
            }
        }
    }

    pub fn scale(&mut self, s: R) {
        for b in BlockId::ALL {
            self.block_mut(b).iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn cast<S: Real>(&self) -> FieldParams<S> {
        let c = |v: &Vec<R>| v.iter().map(|x| S::of(x.as_f64())).collect::<Vec<S>>();
        FieldParams {
            hash: c(&self.hash),
            mlp_density: c(&self.mlp_density),
            mlp_color: c(&self.mlp_color),
            mlp_sky: c(&self.mlp_sky),
            appearance_latents: c(&self.appearance_latents),
            appearance_decoder: c(&self.appearance_decoder),
        }
    }

    pub fn latent(&self, model: &FieldModel, image: usize) -> &[R] {
        let b = model.config.latent_dim;
        &self.appearance_latents[image * b..(image + 1) * b]
    }
}

/// Radiance and density at one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample<R> {
    pub density: R,
    pub color: [R; 3],
}

/// Per-image affine color transform `c' = T c + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineColorMap<R> {
    pub matrix: Mat3<R>,
    pub shift: Vec3<R>,
}

impl<R: Real> AffineColorMap<R> {
    pub fn identity() -> Self {
        AffineColorMap { matrix: Mat3::identity(), shift: Vec3::zero() }
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.0.iter().flatten().all(|v| v.is_finite()) && self.shift.is_finite()
    }
}

/// `T c + b`, unclamped. Losses are computed on this value.
pub fn apply_appearance<R: Real>(c: &[R; 3], map: &AffineColorMap<R>) -> [R; 3] {
    (map.matrix.mul_vec(&Vec3(*c)) + map.shift).0
}

/// Clamps a color to `[0, 1]` for emission.
pub fn emit_color<R: Real>(c: &[R; 3]) -> [R; 3] {
    c.map(|v| v.max(R::zero()).min(R::one()))
}

/// Layer layout derived from a [`FieldConfig`]; holds no parameters.
#[derive(Clone, Debug)]
pub struct FieldModel {
    pub config: FieldConfig,
    pub grid: HashGrid,
    pub density: [Dense; 3],
    pub color: [Dense; 3],
    pub sky: [Dense; 4],
    density_len: usize,
    color_len: usize,
    sky_len: usize,
    ipe_scale: f64,
}

impl FieldModel {
    pub fn new(config: FieldConfig) -> Result<Self> {
        if !config.scene_box.is_valid() {
            return Err(Error::InvalidConfig("scene box must have positive extent"));
        }
        if config.density_width == 0 || config.color_width == 0 || config.sky_width == 0 {
            return Err(Error::InvalidConfig("MLP widths must be positive"));
        }
        if config.image_count == 0 {
            return Err(Error::InvalidConfig("field needs at least one image slot"));
        }
        if !config.density_bias_init.is_finite() {
            return Err(Error::NonFinite("initial density bias"));
        }
        let grid = HashGrid::new(config.grid.clone())?;
        let hf = config.grid.output_dim();
        let h = config.density_width;
        let hc = config.color_width;
        let hs = config.sky_width;
        let (d, density_len) = stack(&[(hf + ipe_dim(config.ipe_levels), h), (h + hf, h), (h, 1)]);
        let (c, color_len) = stack(&[(h + direction_dim(config.direction_levels), hc), (hc, hc), (hc, 3)]);
        let sd = direction_dim(config.sky_direction_levels);
        let (s, sky_len) = stack(&[(sd, hs), (hs, hs), (hs, hs), (hs, 3)]);
        let ext = config.scene_box.extent();
        let half = 0.5 * ext.x().max(ext.y()).max(ext.z());
        Ok(FieldModel {
            grid,
            density: [d[0], d[1], d[2]],
            color: [c[0], c[1], c[2]],
            sky: [s[0], s[1], s[2], s[3]],
            density_len,
            color_len,
            sky_len,
            ipe_scale: 1.0 / half,
            config,
        })
    }

    pub fn block_sizes(&self) -> [usize; 6] {
        [
            self.config.grid.param_count(),
            self.density_len,
            self.color_len,
            self.sky_len,
            self.config.image_count * self.config.latent_dim,
            12 * self.config.latent_dim,
        ]
    }

    /// Fresh parameters: small uniform hash entries, Glorot hidden layers,
    /// zero output layers (except the density bias) and a zero appearance decoder (every latent then
    /// decodes to the identity map).
    pub fn init_params<R: Real>(&self, seed: u64) -> FieldParams<R> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = FieldParams::zeros_like(self);
        for v in &mut p.hash {
            *v = R::of(rng.random_range(-1e-4..1e-4));
        }
        for (i, l) in self.density.iter().enumerate() {
            if i + 1 == self.density.len() {
                l.init_zero(&mut p.mlp_density);
                l.bias_mut(&mut p.mlp_density)[0] = R::of(self.config.density_bias_init);
            } else {
                l.init_glorot(&mut p.mlp_density, &mut rng);
            }
        }
        for (i, l) in self.color.iter().enumerate() {
            if i + 1 == self.color.len() {
                l.init_zero(&mut p.mlp_color);
            } else {
                l.init_glorot(&mut p.mlp_color, &mut rng);
            }
        }
        for (i, l) in self.sky.iter().enumerate() {
            if i + 1 == self.sky.len() {
                l.init_zero(&mut p.mlp_sky);
            } else {
                l.init_glorot(&mut p.mlp_sky, &mut rng);
            }
        }
        for v in &mut p.appearance_latents {
            *v = R::of(rng.random_range(-0.1..0.1));
        }
        p
    }

    pub fn check_params<R: Real>(&self, params: &FieldParams<R>) -> Result<()> {
        for (b, n) in BlockId::ALL.iter().zip(self.block_sizes()) {
            let found = params.block(*b).len();
            if found != n {
                return Err(Error::LengthMismatch { expected: n, found });
            }
        }
        Ok(())
    }

    /// Maps a world point into the unit cube used by the hash grid.
    pub fn normalize<R: Real>(&self, x: &Vec3<R>) -> Vec3<R> {
        let b = &self.config.scene_box;
        let mut u = *x;
        for a in 0..3 {
            u[a] = (x[a] - R::of(b.min[a])) / R::of(b.max[a] - b.min[a]);
        }
        u
    }

    fn ipe_coords<R: Real>(&self, x: &Vec3<R>) -> Vec3<R> {
        let c = self.config.scene_box.center();
        let s = R::of(self.ipe_scale);
        let mut u = *x;
        for a in 0..3 {
            u[a] = (x[a] - R::of(c[a])) * s;
        }
        u
    }

    pub fn direction_dim(&self) -> usize {
        direction_dim(self.config.direction_levels)
    }

    pub fn new_sample_tape<R: Real>(&self) -> SampleTape<R> {
        let hf = self.config.grid.output_dim();
        let h = self.config.density_width;
        let hc = self.config.color_width;
        SampleTape {
            corners: vec![LevelCorners::default(); self.config.grid.levels],
            z0: vec![R::zero(); hf + ipe_dim(self.config.ipe_levels)],
            h1: vec![R::zero(); h],
            d1: vec![R::zero(); h],
            x1: vec![R::zero(); h + hf],
            h2: vec![R::zero(); h],
            d2: vec![R::zero(); h],
            sigma_raw: R::zero(),
            xc: vec![R::zero(); h + self.direction_dim()],
            c1: vec![R::zero(); hc],
            dc1: vec![R::zero(); hc],
            c2: vec![R::zero(); hc],
            dc2: vec![R::zero(); hc],
            color: [R::zero(); 3],
            clamped: false,
        }
    }

    /// Forward pass for one sample, recording everything the backward pass
    /// needs. `dir_enc` is the encoded view direction (shared per ray).
    pub fn forward_sample<R: Real>(
        &self,
        params: &FieldParams<R>,
        x: &Vec3<R>,
        dir_enc: &[R],
        variance: R,
        tape: &mut SampleTape<R>,
    ) -> Result<FieldSample<R>> {
        let hf = self.config.grid.output_dim();
        let h = self.config.density_width;
        let u = self.normalize(x);
        tape.clamped = self.grid.encode_into(&u, &params.hash, &mut tape.z0[..hf], &mut tape.corners)?;
        let scale = R::of(self.ipe_scale);
        ipe_encode_into(&self.ipe_coords(x), variance * scale * scale, self.config.ipe_levels, &mut tape.z0[hf..])?;

        let [d0, d1, d2] = &self.density;
        d0.forward(&params.mlp_density, &tape.z0, &mut tape.h1);
        softplus_with_deriv(&mut tape.h1, &mut tape.d1);
        tape.x1[..h].copy_from_slice(&tape.h1);
        tape.x1[h..].copy_from_slice(&tape.z0[..hf]);
        d1.forward(&params.mlp_density, &tape.x1, &mut tape.h2);
        softplus_with_deriv(&mut tape.h2, &mut tape.d2);
        let mut raw = [R::zero()];
        d2.forward(&params.mlp_density, &tape.h2, &mut raw);
        tape.sigma_raw = raw[0];

        let [c0, c1, c2] = &self.color;
        tape.xc[..h].copy_from_slice(&tape.h2);
        tape.xc[h..].copy_from_slice(dir_enc);
        c0.forward(&params.mlp_color, &tape.xc, &mut tape.c1);
        softplus_with_deriv(&mut tape.c1, &mut tape.dc1);
        c1.forward(&params.mlp_color, &tape.c1, &mut tape.c2);
        softplus_with_deriv(&mut tape.c2, &mut tape.dc2);
        let mut rgb = [R::zero(); 3];
        c2.forward(&params.mlp_color, &tape.c2, &mut rgb);
        tape.color = rgb.map(sigmoid);
        Ok(FieldSample { density: softplus(tape.sigma_raw), color: tape.color })
    }

    /// Backpropagates `d loss / d sigma` and `d loss / d color` of one
    /// sample into `grads`.
    pub fn backward_sample<R: Real>(
        &self,
        params: &FieldParams<R>,
        tape: &SampleTape<R>,
        g_sigma: R,
        g_color: &[R; 3],
        grads: &mut FieldParams<R>,
        scratch: &mut BackwardScratch<R>,
    ) {
        let hf = self.config.grid.output_dim();
        let h = self.config.density_width;
        let [c0, c1, c2] = &self.color;
        let mut g_raw = [R::zero(); 3];
        for k in 0..3 {
            let c = tape.color[k];
            g_raw[k] = g_color[k] * c * (R::one() - c);
        }
        let s = scratch;
        s.g_c2.iter_mut().for_each(|v| *v = R::zero());
        c2.backward(&params.mlp_color, &tape.c2, &g_raw, Some(&mut s.g_c2), &mut grads.mlp_color);
        for (g, d) in s.g_c2.iter_mut().zip(&tape.dc2) {
            *g *= *d;
        }
        s.g_c1.iter_mut().for_each(|v| *v = R::zero());
        c1.backward(&params.mlp_color, &tape.c1, &s.g_c2, Some(&mut s.g_c1), &mut grads.mlp_color);
        for (g, d) in s.g_c1.iter_mut().zip(&tape.dc1) {
            *g *= *d;
        }
        s.g_xc.iter_mut().for_each(|v| *v = R::zero());
        c0.backward(&params.mlp_color, &tape.xc, &s.g_c1, Some(&mut s.g_xc), &mut grads.mlp_color);

        let [d0, d1, d2] = &self.density;
        let g_sraw = [g_sigma * sigmoid(tape.sigma_raw)];
        s.g_h2.copy_from_slice(&s.g_xc[..h]);
        d2.backward(&params.mlp_density, &tape.h2, &g_sraw, Some(&mut s.g_h2), &mut grads.mlp_density);
        for (g, d) in s.g_h2.iter_mut().zip(&tape.d2) {
            *g *= *d;
        }
        s.g_x1.iter_mut().for_each(|v| *v = R::zero());
        d1.backward(&params.mlp_density, &tape.x1, &s.g_h2, Some(&mut s.g_x1), &mut grads.mlp_density);
        for (k, d) in tape.d1.iter().enumerate() {
            s.g_x1[k] *= *d;
        }
        s.g_z0.iter_mut().for_each(|v| *v = R::zero());
        d0.backward(&params.mlp_density, &tape.z0, &s.g_x1[..h], Some(&mut s.g_z0), &mut grads.mlp_density);
        for k in 0..hf {
            s.g_z0[k] += s.g_x1[h + k];
        }
        self.grid.backward(&tape.corners, &s.g_z0[..hf], &mut grads.hash);
    }

    pub fn new_backward_scratch<R: Real>(&self) -> BackwardScratch<R> {
        let hf = self.config.grid.output_dim();
        let h = self.config.density_width;
        let hc = self.config.color_width;
        let hs = self.config.sky_width;
        BackwardScratch {
            g_c2: vec![R::zero(); hc],
            g_c1: vec![R::zero(); hc],
            g_xc: vec![R::zero(); h + self.direction_dim()],
            g_h2: vec![R::zero(); h],
            g_x1: vec![R::zero(); h + hf],
            g_z0: vec![R::zero(); hf + ipe_dim(self.config.ipe_levels)],
            g_s: [vec![R::zero(); hs], vec![R::zero(); hs], vec![R::zero(); hs]],
        }
    }

    pub fn new_sky_tape<R: Real>(&self) -> SkyTape<R> {
        let hs = self.config.sky_width;
        SkyTape {
            enc: vec![R::zero(); direction_dim(self.config.sky_direction_levels)],
            h: [vec![R::zero(); hs], vec![R::zero(); hs], vec![R::zero(); hs]],
            d: [vec![R::zero(); hs], vec![R::zero(); hs], vec![R::zero(); hs]],
            color: [R::zero(); 3],
        }
    }

    pub fn forward_sky<R: Real>(&self, params: &FieldParams<R>, d: &Vec3<R>, tape: &mut SkyTape<R>) -> [R; 3] {
        direction_encode_into(d, self.config.sky_direction_levels, &mut tape.enc);
        let p = &params.mlp_sky;
        self.sky[0].forward(p, &tape.enc, &mut tape.h[0]);
        softplus_with_deriv(&mut tape.h[0], &mut tape.d[0]);
        for i in 1..3 {
            let (prev, cur) = tape.h.split_at_mut(i);
            self.sky[i].forward(p, &prev[i - 1], &mut cur[0]);
            softplus_with_deriv(&mut cur[0], &mut tape.d[i]);
        }
        let mut raw = [R::zero(); 3];
        self.sky[3].forward(p, &tape.h[2], &mut raw);
        tape.color = raw.map(sigmoid);
        tape.color
    }

    pub fn backward_sky<R: Real>(
        &self,
        params: &FieldParams<R>,
        tape: &SkyTape<R>,
        g_color: &[R; 3],
        grads: &mut FieldParams<R>,
        scratch: &mut BackwardScratch<R>,
    ) {
        let p = &params.mlp_sky;
        let g = &mut grads.mlp_sky;
        let mut g_raw = [R::zero(); 3];
        for k in 0..3 {
            let c = tape.color[k];
            g_raw[k] = g_color[k] * c * (R::one() - c);
        }
        let gs = &mut scratch.g_s;
        gs[2].iter_mut().for_each(|v| *v = R::zero());
        self.sky[3].backward(p, &tape.h[2], &g_raw, Some(&mut gs[2]), g);
        for i in (0..3).rev() {
            for (gv, d) in gs[i].iter_mut().zip(&tape.d[i]) {
                *gv *= *d;
            }
            if i == 0 {
                self.sky[0].backward(p, &tape.enc, &gs[0], None, g);
            } else {
                let (lo, hi) = gs.split_at_mut(i);
                lo[i - 1].iter_mut().for_each(|v| *v = R::zero());
                self.sky[i].backward(p, &tape.h[i - 1], &hi[0], Some(&mut lo[i - 1]), g);
            }
        }
    }

    /// Decodes a latent code: `T = I + W_T beta`, `b = W_b beta`.
    pub fn decode_appearance<R: Real>(&self, params: &FieldParams<R>, latent: &[R]) -> AffineColorMap<R> {
        let b = self.config.latent_dim;
        let w = &params.appearance_decoder;
        let mut out = [R::zero(); 12];
        for (o, v) in out.iter_mut().enumerate() {
            *v = crate::mlp::dot(&w[o * b..(o + 1) * b], &latent[..b]);
        }
        let mut map = AffineColorMap::identity();
        for i in 0..3 {
            for j in 0..3 {
                map.matrix.0[i][j] += out[3 * i + j];
            }
            map.shift[i] = out[9 + i];
        }
        map
    }

    /// Map for image `image`, or the identity when appearance is disabled.
    pub fn image_appearance<R: Real>(&self, params: &FieldParams<R>, image: Option<usize>) -> Result<AffineColorMap<R>> {
        match image {
            None => Ok(AffineColorMap::identity()),
            Some(i) if i < self.config.image_count => Ok(self.decode_appearance(params, params.latent(self, i))),
            Some(i) => Err(Error::ImageIndex { index: i, count: self.config.image_count }),
        }
    }

    /// Backpropagates `d loss / d T` and `d loss / d b` into the decoder and
    /// the latent of image `image`.
    pub fn backward_appearance<R: Real>(
        &self,
        params: &FieldParams<R>,
        image: usize,
        g_matrix: &Mat3<R>,
        g_shift: &Vec3<R>,
        grads: &mut FieldParams<R>,
    ) {
        let b = self.config.latent_dim;
        let mut g_out = [R::zero(); 12];
        for i in 0..3 {
            for j in 0..3 {
                g_out[3 * i + j] = g_matrix.0[i][j];
            }
            g_out[9 + i] = g_shift[i];
        }
        let latent = params.latent(self, image);
        let w = &params.appearance_decoder;
        for (o, g) in g_out.iter().enumerate() {
            if *g == R::zero() {
                continue;
            }
            crate::mlp::axpy(*g, latent, &mut grads.appearance_decoder[o * b..(o + 1) * b]);
            crate::mlp::axpy(*g, &w[o * b..(o + 1) * b], &mut grads.appearance_latents[image * b..(image + 1) * b]);
        }
    }
}

/// Forward activations of one field sample.
#[derive(Clone, Debug)]
pub struct SampleTape<R> {
    pub corners: Vec<LevelCorners<R>>,
    pub z0: Vec<R>,
    pub h1: Vec<R>,
    pub d1: Vec<R>,
    pub x1: Vec<R>,
    pub h2: Vec<R>,
    pub d2: Vec<R>,
    pub sigma_raw: R,
    pub xc: Vec<R>,
    pub c1: Vec<R>,
    pub dc1: Vec<R>,
    pub c2: Vec<R>,
    pub dc2: Vec<R>,
    pub color: [R; 3],
    pub clamped: bool,
}

#[derive(Clone, Debug)]
pub struct SkyTape<R> {
    pub enc: Vec<R>,
    pub h: [Vec<R>; 3],
    pub d: [Vec<R>; 3],
    pub color: [R; 3],
}

/// Reusable gradient buffers for the backward passes.
#[derive(Clone, Debug)]
pub struct BackwardScratch<R> {
    g_c2: Vec<R>,
    g_c1: Vec<R>,
    g_xc: Vec<R>,
    g_h2: Vec<R>,
    g_x1: Vec<R>,
    g_z0: Vec<R>,
    g_s: [Vec<R>; 3],
}

fn check_direction<R: Real>(d: &Vec3<R>) -> Result<()> {
    if !d.is_finite() {
        return Err(Error::NonFinite("view direction"));
    }
    if !d.is_unit(UNIT_TOLERANCE) {
        return Err(Error::NonUnitDirection);
    }
    Ok(())
}

/// Evaluates the radiance field at one point.
pub fn eval_field<R: Real>(
    x: &Vec3<R>,
    d: &Vec3<R>,
    sample_variance: R,
    params: &FieldParams<R>,
    model: &FieldModel,
) -> Result<FieldSample<R>> {
    check_direction(d)?;
    let mut enc = vec![R::zero(); model.direction_dim()];
    direction_encode_into(d, model.config.direction_levels, &mut enc);
    let mut tape = model.new_sample_tape();
    model.forward_sample(params, x, &enc, sample_variance, &mut tape)
}

/// Sky color for a view direction; independent of position.
pub fn eval_sky<R: Real>(d: &Vec3<R>, params: &FieldParams<R>, model: &FieldModel) -> Result<[R; 3]> {
    check_direction(d)?;
    let mut tape = model.new_sky_tape();
    Ok(model.forward_sky(params, d, &mut tape))
}

pub fn decode_appearance<R: Real>(latent: &[R], params: &FieldParams<R>, model: &FieldModel) -> Result<AffineColorMap<R>> {
    if latent.len() != model.config.latent_dim {
        return Err(Error::LengthMismatch { expected: model.config.latent_dim, found: latent.len() });
    }
    Ok(model.decode_appearance(params, latent))
}
