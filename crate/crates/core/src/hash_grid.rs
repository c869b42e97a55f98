//! Multiresolution hash-grid encoding.
//!
//! Each level is a virtual grid of `N_l` cells per axis over the unit cube.
//! Grid vertices are mapped into a table of `T` entries by XOR-folding the
//! integer coordinates multiplied by fixed primes; a query point is the
//! trilinear blend of its 8 cell corners.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::Vec3;
use crate::{Error, Real, Result};

/// Per-axis multipliers of the spatial hash.
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Clone, Debug, PartialEq)]
pub struct HashGridConfig {
    pub levels: usize,
    /// Entries per level; must be a power of two.
    pub table_size: usize,
    pub features_per_level: usize,
    pub resolution_min: usize,
    pub resolution_max: usize,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        HashGridConfig {
            levels: 8,
            table_size: 1 << 16,
            features_per_level: 2,
            resolution_min: 16,
            resolution_max: 512,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidConfig("hash grid needs at least one level"));
        }
        if !self.table_size.is_power_of_two() || self.table_size > (1 << 30) {
            return Err(Error::InvalidConfig("hash table size must be a power of two"));
        }
        if self.features_per_level == 0 {
            return Err(Error::InvalidConfig("features per level must be positive"));
        }
        if self.resolution_min == 0 || self.resolution_min > self.resolution_max {
            return Err(Error::InvalidConfig("need 0 < resolution_min <= resolution_max"));
        }
        let res = self.resolutions();
        if res.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("per-level resolution must strictly increase"));
        }
        Ok(())
    }

    /// Geometric growth factor between consecutive levels.
    pub fn growth_factor(&self) -> f64 {
        if self.levels <= 1 {
            return 1.0;
        }
        let (lo, hi) = (self.resolution_min as f64, self.resolution_max as f64);
        libm::exp((libm::log(hi) - libm::log(lo)) / (self.levels - 1) as f64)
    }

    pub fn resolutions(&self) -> Vec<usize> {
        let b = self.growth_factor();
        (0..self.levels)
            .map(|l| {
                if l + 1 == self.levels && self.levels > 1 {
                    self.resolution_max
                } else {
                    libm::floor(self.resolution_min as f64 * libm::pow(b, l as f64) + 1e-9) as usize
                }
            })
            .collect()
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn param_count(&self) -> usize {
        self.levels * self.table_size * self.features_per_level
    }
}

/// Spatial hash of an integer grid vertex, reduced modulo `table_size`.
#[inline]
pub fn hash_vertex(v: [u32; 3], table_size: usize) -> usize {
    let h = v[0].wrapping_mul(HASH_PRIMES[0])
        ^ v[1].wrapping_mul(HASH_PRIMES[1])
        ^ v[2].wrapping_mul(HASH_PRIMES[2]);
    (h as usize) & (table_size - 1)
}

/// The 8 table rows and trilinear weights touched at one level.
#[derive(Clone, Copy, Debug, Default)]
pub struct LevelCorners<R> {
    pub rows: [u32; 8],
    pub weights: [R; 8],
}

/// Precomputed level resolutions for fast repeated encoding.
#[derive(Clone, Debug)]
pub struct HashGrid {
    pub config: HashGridConfig,
    resolutions: Vec<usize>,
}

impl HashGrid {
    pub fn new(config: HashGridConfig) -> Result<Self> {
        config.validate()?;
        let resolutions = config.resolutions();
        Ok(HashGrid { config, resolutions })
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    /// Encodes a point in the unit cube. Points outside are clamped onto
    /// the cube and the returned flag is set.
    pub fn encode_into<R: Real>(
        &self,
        x: &Vec3<R>,
        table: &[R],
        out: &mut [R],
        corners: &mut [LevelCorners<R>],
    ) -> Result<bool> {
        if !x.is_finite() {
            return Err(Error::NonFinite("hash query point"));
        }
        let f = self.config.features_per_level;
        let t = self.config.table_size;
        let mut clamped = false;
        let mut u = *x;
        for a in 0..3 {
            if u[a] < R::zero() || u[a] > R::one() {
                clamped = true;
                u[a] = u[a].max(R::zero()).min(R::one());
            }
        }
        for (l, &res) in self.resolutions.iter().enumerate() {
            let scale = R::of(res as f64);
            let mut base = [0u32; 3];
            let mut frac = [R::zero(); 3];
            for a in 0..3 {
                let p = u[a] * scale;
                let fl = p.floor();
                base[a] = fl.to_u32().unwrap_or(0);
                frac[a] = p - fl;
            }
            let lc = &mut corners[l];
            let level_off = l * t;
            let dst = &mut out[l * f..(l + 1) * f];
            dst.iter_mut().for_each(|v| *v = R::zero());
            for c in 0..8 {
                let mut w = R::one();
                let mut v = base;
                for a in 0..3 {
                    if (c >> a) & 1 == 1 {
                        v[a] += 1;
                        w *= frac[a];
                    } else {
                        w *= R::one() - frac[a];
                    }
                }
                let row = hash_vertex(v, t);
                lc.rows[c] = row as u32;
                lc.weights[c] = w;
                let src = &table[(level_off + row) * f..(level_off + row + 1) * f];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * *s;
                }
            }
        }
        Ok(clamped)
    }

    /// Accumulates `d loss / d table` given `d loss / d features`.
    pub fn backward<R: Real>(&self, corners: &[LevelCorners<R>], grad_out: &[R], grad_table: &mut [R]) {
        let f = self.config.features_per_level;
        let t = self.config.table_size;
        for (l, lc) in corners.iter().enumerate().take(self.resolutions.len()) {
            let g = &grad_out[l * f..(l + 1) * f];
            if g.iter().all(|v| *v == R::zero()) {
                continue;
            }
            for c in 0..8 {
                let w = lc.weights[c];
                let row = (l * t + lc.rows[c] as usize) * f;
                for (j, gv) in g.iter().enumerate() {
                    grad_table[row + j] += w * *gv;
                }
            }
        }
    }
}

/// Convenience wrapper returning the feature vector and the clamp flag.
pub fn hash_encode<R: Real>(x: &Vec3<R>, cfg: &HashGridConfig, table: &[R]) -> Result<(Vec<R>, bool)> {
    let grid = HashGrid::new(cfg.clone())?;
    if table.len() != cfg.param_count() {
        return Err(Error::LengthMismatch { expected: cfg.param_count(), found: table.len() });
    }
    let mut out = vec![R::zero(); cfg.output_dim()];
    let mut corners = vec![LevelCorners::default(); cfg.levels];
    let clamped = grid.encode_into(x, table, &mut out, &mut corners)?;
    Ok((out, clamped))
}
