//! Tile extraction with discard rules, dataset splitting, per-band z-score
//! normalization, and the tile-set file format.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::raster::{is_nodata, RasterGrid};
use crate::error::{Error, Result};
use crate::labels::{validate_labels, BACKGROUND};
use crate::metrics::BoundingBox;

pub const DEFAULT_TILE_SIZE: usize = 224;
/// Minimum share of valid (non-nodata) image pixels for a tile to be kept.
pub const MIN_VALID_FRACTION: f64 = 0.05;
/// Minimum share of disturbance-class label pixels for a tile to be kept.
pub const MIN_DISTURBANCE_FRACTION: f64 = 0.01;

const TILESET_MAGIC: &[u8; 4] = b"LDT1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (train|val|test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    /// `[bands, T, T]`, band-major.
    pub image: Vec<f32>,
    /// `[T, T]` class indices.
    pub label: Vec<u8>,
    /// World coordinate of the tile's top-left corner.
    pub origin_x: f64,
    pub origin_y: f64,
    /// Pixel offset of the window in its source raster.
    pub row: usize,
    pub col: usize,
    pub scene: u32,
    pub split: Split,
}

/// Per-band z-score parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Normalizes band-major pixels in place; nodata pixels become 0.
    pub fn apply(&self, data: &mut [f32], pixels: usize, nodata: Option<f64>) {
        let valid = valid_pixels(data, self.mean.len(), pixels, nodata);
        for (b, plane) in data.chunks_mut(pixels).enumerate() {
            let (m, s) = (self.mean[b], self.std[b]);
            for (v, ok) in plane.iter_mut().zip(&valid) {
                *v = if *ok { ((*v as f64 - m) / s) as f32 } else { 0.0 };
            }
        }
    }

    /// `x = mean + std * z`.
    pub fn invert(&self, data: &mut [f32], pixels: usize) {
        for (b, plane) in data.chunks_mut(pixels).enumerate() {
            let (m, s) = (self.mean[b], self.std[b]);
            for v in plane {
                *v = (m + s * *v as f64) as f32;
            }
        }
    }
}

fn valid_pixels(data: &[f32], bands: usize, pixels: usize, nodata: Option<f64>) -> Vec<bool> {
    let mut valid = vec![true; pixels];
    if let Some(nd) = nodata {
        for b in 0..bands {
            for (ok, v) in valid.iter_mut().zip(&data[b * pixels..(b + 1) * pixels]) {
                if is_nodata(*v as f64, nd) {
                    *ok = false;
                }
            }
        }
    }
    valid
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileSet {
    pub tile_size: usize,
    pub bands: usize,
    pub band_names: Vec<String>,
    pub pixel_size_m: f64,
    /// Sentinel of the raw imagery; cleared by normalization.
    pub nodata: Option<f64>,
    /// Present once the tiles have been z-scored.
    pub stats: Option<NormStats>,
    /// World extent covered by the source rasters.
    pub bounds: BoundingBox,
    pub tiles: Vec<Tile>,
}

/// Discard rule for one window: keep iff valid pixels >= 5% and disturbance
/// pixels >= 1% of the window.
pub fn keep_window(valid: usize, disturbance: usize, total: usize) -> bool {
    valid as f64 >= MIN_VALID_FRACTION * total as f64 && disturbance as f64 >= MIN_DISTURBANCE_FRACTION * total as f64
}

/// Cuts non-overlapping `t x t` windows from the top-left of co-registered
/// image and label rasters, dropping partial edge windows and windows that
/// fail [`keep_window`]. Kept tiles are returned in row-major window order,
/// all assigned to the training split.
pub fn tile(image: &RasterGrid<f32>, labels: &RasterGrid<u8>, t: usize, scene: u32) -> Result<Vec<Tile>> {
    if t == 0 {
        return Err(Error::invalid("tile size must be positive"));
    }
    image.validate()?;
    labels.validate()?;
    if !image.same_geometry(labels) {
        return Err(Error::invalid("image and label rasters have different grid geometry"));
    }
    if labels.bands != 1 {
        return Err(Error::invalid("label raster must have exactly one band"));
    }
    validate_labels(&labels.data)?;
    let valid = image.valid_mask();
    let (rows, cols) = (image.height / t, image.width / t);
    let w = image.width;
    let ps = image.pixel_size_m;
    let tiles = (0..rows * cols)
        .into_par_iter()
        .filter_map(|k| {
            let (r0, c0) = ((k / cols) * t, (k % cols) * t);
            let mut n_valid = 0;
            let mut n_dist = 0;
            for i in r0..r0 + t {
                for j in c0..c0 + t {
                    n_valid += valid[i * w + j] as usize;
                    n_dist += (labels.data[i * w + j] != BACKGROUND) as usize;
                }
            }
            if !keep_window(n_valid, n_dist, t * t) {
                return None;
            }
            let mut img = Vec::with_capacity(image.bands * t * t);
            for b in 0..image.bands {
                let plane = image.band(b);
                for i in r0..r0 + t {
                    img.extend_from_slice(&plane[i * w + c0..i * w + c0 + t]);
                }
            }
            let mut lab = Vec::with_capacity(t * t);
            for i in r0..r0 + t {
                lab.extend_from_slice(&labels.data[i * w + c0..i * w + c0 + t]);
            }
            Some(Tile {
                image: img,
                label: lab,
                origin_x: image.origin_x + c0 as f64 * ps,
                origin_y: image.origin_y - r0 as f64 * ps,
                row: r0,
                col: c0,
                scene,
                split: Split::Train,
            })
        })
        .collect();
    Ok(tiles)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.20,
            test: 0.10,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must lie in [0, 1] and sum to 1"));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes: validation and test get `floor(n * f)`,
    /// the remainder goes to training.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((n as f64 * f) + 1e-9).floor() as usize;
        let val = floor(self.val);
        let test = floor(self.test);
        (n - val - test, val, test)
    }
}

/// Split label for each of `n` items after a seeded shuffle.
pub fn assign_splits(n: usize, fractions: &SplitFractions, seed: u64) -> Result<Vec<Split>> {
    fractions.validate()?;
    let (train, val, _) = fractions.counts(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

impl TileSet {
    pub fn new(
        tile_size: usize,
        band_names: Vec<String>,
        pixel_size_m: f64,
        nodata: Option<f64>,
        bounds: BoundingBox,
        tiles: Vec<Tile>,
    ) -> Result<Self> {
        let set = TileSet {
            tile_size,
            bands: band_names.len(),
            band_names,
            pixel_size_m,
            nodata,
            stats: None,
            bounds,
            tiles,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let px = self.tile_size * self.tile_size;
        if self.tile_size == 0 || self.bands == 0 {
            return Err(Error::invalid("tile size and band count must be positive"));
        }
        for (i, t) in self.tiles.iter().enumerate() {
            if t.image.len() != self.bands * px || t.label.len() != px {
                return Err(Error::shape(format!("tile {i} has the wrong number of values")));
            }
        }
        Ok(())
    }

    pub fn pixels_per_tile(&self) -> usize {
        self.tile_size * self.tile_size
    }

    pub fn split(&mut self, fractions: &SplitFractions, seed: u64) -> Result<()> {
        let assignment = assign_splits(self.tiles.len(), fractions, seed)?;
        for (t, s) in self.tiles.iter_mut().zip(assignment) {
            t.split = s;
        }
        Ok(())
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.tiles.len()).filter(|&i| self.tiles[i].split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.tiles.iter().filter(|t| t.split == split).count()
    }

    /// Per-band mean and population standard deviation over every valid
    /// pixel of every tile (two passes, f64 accumulation).
    pub fn compute_stats(&self) -> Result<NormStats> {
        let px = self.pixels_per_tile();
        let masks: Vec<Vec<bool>> = self
            .tiles
            .iter()
            .map(|t| valid_pixels(&t.image, self.bands, px, self.nodata))
            .collect();
        let mut mean = vec![0.0; self.bands];
        let mut std = vec![0.0; self.bands];
        for b in 0..self.bands {
            let mut n = 0usize;
            let mut sum = 0.0;
            for (t, m) in self.tiles.iter().zip(&masks) {
                for (v, ok) in t.image[b * px..(b + 1) * px].iter().zip(m) {
                    if *ok {
                        sum += *v as f64;
                        n += 1;
                    }
                }
            }
            if n == 0 {
                return Err(Error::invalid(format!("band {} has no valid pixels", self.band_names[b])));
            }
            let mu = sum / n as f64;
            let mut ss = 0.0;
            for (t, m) in self.tiles.iter().zip(&masks) {
                for (v, ok) in t.image[b * px..(b + 1) * px].iter().zip(m) {
                    if *ok {
                        ss += (*v as f64 - mu).powi(2);
                    }
                }
            }
            let sigma = (ss / n as f64).sqrt();
            if !(sigma > 0.0) {
                return Err(Error::invalid(format!(
                    "band {} is constant; z-score is undefined",
                    self.band_names[b]
                )));
            }
            mean[b] = mu;
            std[b] = sigma;
        }
        Ok(NormStats { mean, std })
    }

    /// Z-scores every band with statistics over the whole tile set.
    pub fn zscore(&mut self) -> Result<NormStats> {
        if self.stats.is_some() {
            return Err(Error::invalid("tile set is already normalized"));
        }
        let stats = self.compute_stats()?;
        let px = self.pixels_per_tile();
        let nodata = self.nodata;
        self.tiles
            .par_iter_mut()
            .for_each(|t| stats.apply(&mut t.image, px, nodata));
        self.stats = Some(stats.clone());
        self.nodata = None;
        Ok(stats)
    }

    /// SHA-256 over the serialized tile set.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.encode());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn header(&self) -> TileSetHeader {
        TileSetHeader {
            tile_size: self.tile_size,
            band_names: self.band_names.clone(),
            pixel_size_m: self.pixel_size_m,
            nodata: self.nodata,
            stats: self.stats.clone(),
            bounds: self.bounds,
            tiles: self
                .tiles
                .iter()
                .map(|t| TileMeta {
                    origin_x: t.origin_x,
                    origin_y: t.origin_y,
                    row: t.row,
                    col: t.col,
                    scene: t.scene,
                    split: t.split,
                })
                .collect(),
        }
    }

    /// `LDT1`, u32 header length, JSON header, then per tile its f32 image
    /// values and u8 labels (little-endian).
    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let px = self.pixels_per_tile();
        let mut out = Vec::with_capacity(8 + header.len() + self.tiles.len() * px * (4 * self.bands + 1));
        out.extend_from_slice(TILESET_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tiles {
            for v in &t.image {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&t.label);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != TILESET_MAGIC {
            return Err(Error::invalid("not a tile set (bad magic bytes)"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + hlen)
            .ok_or_else(|| Error::Truncated("tile set header".into()))?;
        let header: TileSetHeader = serde_json::from_slice(body)?;
        let bands = header.band_names.len();
        let px = header.tile_size * header.tile_size;
        let per_tile = px * (4 * bands + 1);
        let mut payload = &bytes[8 + hlen..];
        if payload.len() != per_tile * header.tiles.len() {
            return Err(Error::Truncated(format!(
                "tile payload has {} bytes, expected {}",
                payload.len(),
                per_tile * header.tiles.len()
            )));
        }
        let mut tiles = Vec::with_capacity(header.tiles.len());
        for m in &header.tiles {
            let (img, rest) = payload.split_at(4 * bands * px);
            let (lab, rest) = rest.split_at(px);
            payload = rest;
            validate_labels(lab)?;
            tiles.push(Tile {
                image: img
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                label: lab.to_vec(),
                origin_x: m.origin_x,
                origin_y: m.origin_y,
                row: m.row,
                col: m.col,
                scene: m.scene,
                split: m.split,
            });
        }
        let mut set = TileSet::new(
            header.tile_size,
            header.band_names,
            header.pixel_size_m,
            header.nodata,
            header.bounds,
            tiles,
        )?;
        set.stats = header.stats;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        TileSet::decode(&bytes).map_err(|e| match e {
            Error::Io(e) => Error::Io(e),
            other => Error::malformed(path, other.to_string()),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TileMeta {
    origin_x: f64,
    origin_y: f64,
    row: usize,
    col: usize,
    scene: u32,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct TileSetHeader {
    tile_size: usize,
    band_names: Vec<String>,
    pixel_size_m: f64,
    nodata: Option<f64>,
    stats: Option<NormStats>,
    bounds: BoundingBox,
    tiles: Vec<TileMeta>,
}
