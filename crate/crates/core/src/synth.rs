//! Procedural 4-band scenes with exact vector ground truth.
//!
//! Background is multi-octave value noise; roads are wide, bright, gently
//! curving corridors; pipelines are moderate-contrast corridors, some running
//! beside a road and some buried (present in the vectors, invisible in the
//! imagery); cutlines are faint, straight, 1-2 px lines, some laid out as
//! parallel grids. Features are added until the touch-any rasterized class
//! fractions reach the requested mix.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::geom::{point_segment_distance, Point};
use crate::geodata::raster::{GridGeometry, RasterGrid, DEFAULT_PIXEL_SIZE_M};
use crate::geodata::rasterize::{feature_pixels, paint_priority, rasterize, RasterizeMode};
use crate::geodata::tiles::{tile, SplitFractions, TileSet};
use crate::geodata::vector::{Feature, VectorLayer};
use crate::labels::{overlap_priority, BACKGROUND, CUTLINE, NUM_CLASSES, PIPELINE, ROAD};
use crate::metrics::BoundingBox;
use crate::seed::{derive_seed, rng_for};

pub const BAND_NAMES: [&str; 4] = ["red", "green", "blue", "nir"];
/// Forest-canopy digital numbers per band.
const BASE_DN: [f64; 4] = [420.0, 640.0, 380.0, 2700.0];
/// Background texture amplitude per band; contrasts and noise are in these units.
const BAND_SCALE: [f64; 4] = [110.0, 140.0, 95.0, 420.0];
/// Spectral direction of each disturbance class (cleared ground is brighter
/// in the visible bands and darker in the near infrared).
const SIGNATURE: [[f64; 4]; NUM_CLASSES] = [
    [0.0; 4],
    [1.0, 0.9, 0.8, -0.7],
    [1.0, 1.0, 1.0, -0.6],
    [0.8, 1.0, 0.6, -0.9],
];
/// Most greedy placement attempts per class before giving up on its target.
const MAX_ATTEMPTS: usize = 200;

/// Share of disturbance pixels per class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub road: f64,
    pub pipeline: f64,
    pub cutline: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        ClassMix {
            road: 0.25,
            pipeline: 0.17,
            cutline: 0.58,
        }
    }
}

impl ClassMix {
    pub fn share(&self, class: u8) -> f64 {
        match class {
            ROAD => self.road,
            PIPELINE => self.pipeline,
            CUTLINE => self.cutline,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub size: usize,
    pub pixel_size_m: f64,
    /// Fraction of pixels labeled as any disturbance class.
    pub disturbance_density: f64,
    pub class_mix: ClassMix,
    /// Corridor widths in pixels, `[min, max]`.
    pub road_width_px: [f64; 2],
    pub pipeline_width_px: [f64; 2],
    pub cutline_width_px: [f64; 2],
    /// Feature contrast against the background, in texture-amplitude units.
    pub road_contrast: f64,
    pub pipeline_contrast: f64,
    pub cutline_contrast: f64,
    /// Fraction of pipelines left out of the imagery.
    pub buried_fraction: f64,
    /// Fraction of pipelines laid beside a road.
    pub parallel_fraction: f64,
    /// Fraction of cutline placements that produce a parallel grid.
    pub grid_fraction: f64,
    pub noise_octaves: u32,
    /// Largest background texture wavelength in pixels.
    pub noise_period_px: f64,
    /// Per-pixel sensor noise standard deviation, in texture-amplitude units.
    pub sensor_noise: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            size: 512,
            pixel_size_m: DEFAULT_PIXEL_SIZE_M,
            disturbance_density: 0.10,
            class_mix: ClassMix::default(),
            road_width_px: [2.0, 5.0],
            pipeline_width_px: [1.0, 3.0],
            cutline_width_px: [1.0, 2.0],
            road_contrast: 3.0,
            pipeline_contrast: 1.5,
            cutline_contrast: 1.0,
            buried_fraction: 0.3,
            parallel_fraction: 0.4,
            grid_fraction: 0.3,
            noise_octaves: 4,
            noise_period_px: 128.0,
            sensor_noise: 0.15,
            origin_x: 0.0,
            origin_y: 512.0 * DEFAULT_PIXEL_SIZE_M,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 8 {
            return Err(Error::invalid("scene size must be at least 8 pixels"));
        }
        if !(self.pixel_size_m > 0.0) {
            return Err(Error::invalid("pixel size must be positive"));
        }
        if !(0.0..=0.5).contains(&self.disturbance_density) {
            return Err(Error::invalid(format!(
                "disturbance density {} is infeasible (must lie in [0, 0.5])",
                self.disturbance_density
            )));
        }
        let m = &self.class_mix;
        let parts = [m.road, m.pipeline, m.cutline];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("disturbance class mix must lie in [0, 1] and sum to 1"));
        }
        for (name, w) in [
            ("road", self.road_width_px),
            ("pipeline", self.pipeline_width_px),
            ("cutline", self.cutline_width_px),
        ] {
            if !(w[0] > 0.0 && w[1] >= w[0] && w[1].is_finite()) {
                return Err(Error::invalid(format!("{name} width range must be positive and ordered")));
            }
        }
        for f in [self.buried_fraction, self.parallel_fraction, self.grid_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid("probabilities must lie in [0, 1]"));
            }
        }
        if !(self.noise_period_px >= 2.0) || self.noise_octaves == 0 {
            return Err(Error::invalid("background noise needs at least one octave with period >= 2"));
        }
        if self.road_contrast < 0.0 || self.pipeline_contrast < 0.0 || self.cutline_contrast < 0.0 || self.sensor_noise < 0.0
        {
            return Err(Error::invalid("contrasts and noise must be non-negative"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.size, self.size, self.origin_x, self.origin_y, self.pixel_size_m)
    }

    fn width_range(&self, class: u8) -> [f64; 2] {
        match class {
            ROAD => self.road_width_px,
            PIPELINE => self.pipeline_width_px,
            _ => self.cutline_width_px,
        }
    }

    pub fn contrast(&self, class: u8) -> f64 {
        match class {
            ROAD => self.road_contrast,
            PIPELINE => self.pipeline_contrast,
            CUTLINE => self.cutline_contrast,
            _ => 0.0,
        }
    }

    /// Per-band brightness offset of a class at full coverage, before the
    /// per-feature jitter (which only strengthens it).
    pub fn class_delta(&self, class: u8) -> [f64; 4] {
        let c = self.contrast(class);
        std::array::from_fn(|b| c * SIGNATURE[class as usize][b] * BAND_SCALE[b])
    }
}

/// Generated imagery plus its vector truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: RasterGrid<f32>,
    /// Noise-free background the features were drawn onto.
    pub background: RasterGrid<f32>,
    pub vectors: VectorLayer,
    /// Per feature: drawn into the imagery or not.
    pub buried: Vec<bool>,
}

/// Polyline in pixel space `(col, row)` with a class and a width in pixels.
#[derive(Clone, Debug)]
struct Stroke {
    class: u8,
    points: Vec<Point>,
    width_px: f64,
    /// Brightness multiplier, >= 1.
    gain: f64,
    buried: bool,
}

impl Stroke {
    fn to_feature(&self, g: &GridGeometry) -> Feature {
        let ps = g.pixel_size_m;
        let pts = self
            .points
            .iter()
            .map(|p| [g.origin_x + p[0] * ps, g.origin_y - p[1] * ps])
            .collect();
        Feature::line(self.class, pts, self.width_px * ps)
    }

    /// Prefix covering `frac` of the arc length.
    fn truncated(&self, frac: f64) -> Stroke {
        let seg: Vec<f64> = self
            .points
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .collect();
        let mut remaining = seg.iter().sum::<f64>() * frac;
        let mut pts = vec![self.points[0]];
        for (w, len) in self.points.windows(2).zip(&seg) {
            if remaining >= *len {
                pts.push(w[1]);
                remaining -= len;
            } else {
                let t = if *len > 0.0 { remaining / len } else { 0.0 };
                pts.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
                break;
            }
        }
        Stroke {
            points: pts,
            ..self.clone()
        }
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Sum of value-noise octaves in roughly `[-1, 1]`.
fn fbm(n: usize, period: f64, octaves: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let mut amp = 1.0;
    let mut norm = 0.0;
    let mut p = period;
    for _ in 0..octaves {
        let cells = (n as f64 / p).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..cells * cells).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in 0..n {
            let y = i as f64 / p;
            let (y0, fy) = (y.floor() as usize, smooth(y.fract()));
            for j in 0..n {
                let x = j as f64 / p;
                let (x0, fx) = (x.floor() as usize, smooth(x.fract()));
                let v = |a: usize, b: usize| lattice[a * cells + b];
                let top = v(y0, x0) * (1.0 - fx) + v(y0, x0 + 1) * fx;
                let bot = v(y0 + 1, x0) * (1.0 - fx) + v(y0 + 1, x0 + 1) * fx;
                out[i * n + j] += amp * (top * (1.0 - fy) + bot * fy);
            }
        }
        norm += amp;
        amp *= 0.5;
        p = (p * 0.5).max(1.0);
    }
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

fn background(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = spec.size;
    let cover = fbm(n, spec.noise_period_px, spec.noise_octaves, rng);
    let mut data = vec![0.0; 4 * n * n];
    for b in 0..4 {
        let own = fbm(n, spec.noise_period_px * 0.5, spec.noise_octaves, rng);
        for k in 0..n * n {
            data[b * n * n + k] = BASE_DN[b] + BAND_SCALE[b] * (0.8 * cover[k] + 0.6 * own[k]);
        }
    }
    data
}

/// Point on the scene border and an inward heading.
fn border_start(n: f64, rng: &mut ChaCha8Rng) -> (Point, f64) {
    use std::f64::consts::PI;
    let s = rng.random_range(0.0..n);
    let jitter = rng.random_range(-0.6..0.6);
    match rng.random_range(0..4) {
        0 => ([s, 0.0], PI / 2.0 + jitter),
        1 => ([s, n], -PI / 2.0 + jitter),
        2 => ([0.0, s], jitter),
        _ => ([n, s], PI + jitter),
    }
}

/// Random-walk polyline from the border until it leaves the scene.
fn wandering_line(n: f64, step: f64, turn_sd: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let (mut p, mut heading) = border_start(n, rng);
    let turn = Normal::new(0.0, turn_sd).expect("valid sd");
    let mut pts = vec![p];
    let margin = 4.0;
    for _ in 0..(4.0 * n / step) as usize {
        heading += turn.sample(rng);
        p = [p[0] + step * heading.cos(), p[1] + step * heading.sin()];
        pts.push(p);
        if p[0] < -margin || p[1] < -margin || p[0] > n + margin || p[1] > n + margin {
            break;
        }
    }
    pts
}

/// Straight line through a random interior point, clipped generously to the
/// scene.
fn straight_line(n: f64, through: Point, heading: f64) -> Vec<Point> {
    let reach = n * 1.5;
    let (dx, dy) = (heading.cos(), heading.sin());
    // short segments keep per-segment bounding boxes small
    let steps = (2.0 * reach / 8.0).ceil() as usize;
    (0..=steps)
        .map(|k| {
            let t = -reach + 2.0 * reach * k as f64 / steps as f64;
            [through[0] + t * dx, through[1] + t * dy]
        })
        .collect()
}

/// `line` displaced sideways by `offset` pixels.
fn offset_line(line: &[Point], offset: f64) -> Vec<Point> {
    let n = line.len();
    (0..n)
        .map(|i| {
            let a = line[i.saturating_sub(1)];
            let b = line[(i + 1).min(n - 1)];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy).max(1e-12);
            [line[i][0] - dy / len * offset, line[i][1] + dx / len * offset]
        })
        .collect()
}

struct Placer {
    geometry: GridGeometry,
    labels: Vec<u8>,
    counts: [usize; NUM_CLASSES],
    strokes: Vec<Stroke>,
}

impl Placer {
    /// Pixels `stroke` would newly give to its class.
    fn gain(&self, stroke: &Stroke) -> (Vec<usize>, usize) {
        let px = feature_pixels(&stroke.to_feature(&self.geometry), &self.geometry, RasterizeMode::TouchAny);
        let rank = overlap_priority(stroke.class);
        let gained = px
            .iter()
            .filter(|&&i| self.labels[i] != stroke.class && overlap_priority(self.labels[i]) < rank)
            .count();
        (px, gained)
    }

    /// Adds candidates (shortened when they overshoot) until the class hits
    /// its pixel target.
    fn fill(&mut self, class: u8, target: usize, rng: &mut ChaCha8Rng, mut propose: impl FnMut(&Self, &mut ChaCha8Rng) -> Vec<Stroke>) {
        let c = class as usize;
        let mut attempts = 0;
        // a shortfall under 2% of the target is close enough
        let done = |count: usize| (target - count.min(target)) * 50 <= target;
        while !done(self.counts[c]) && attempts < MAX_ATTEMPTS {
            attempts += 1;
            for mut stroke in propose(self, rng) {
                if done(self.counts[c]) {
                    break;
                }
                let need = target - self.counts[c];
                let (mut px, mut gained) = self.gain(&stroke);
                let mut shrinks = 0;
                while gained > need + need / 4 && shrinks < 4 {
                    shrinks += 1;
                    stroke = stroke.truncated((need as f64 / gained as f64).clamp(0.05, 0.9));
                    (px, gained) = self.gain(&stroke);
                }
                if gained == 0 || gained.abs_diff(need) >= need {
                    continue;
                }
                paint_priority(&mut self.labels, &px, class);
                self.recount();
                self.strokes.push(stroke);
            }
        }
    }

    fn recount(&mut self) {
        self.counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            self.counts[l as usize] += 1;
        }
    }
}

/// Generates one scene; a pure function of `spec` (including its seed).
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let n = spec.size;
    let nf = n as f64;
    let g = spec.geometry();
    let mut rng = rng_for(spec.seed, &[0]);
    let bg = background(spec, &mut rng);

    let total = n * n;
    let target = |class: u8| (spec.disturbance_density * spec.class_mix.share(class) * total as f64).round() as usize;
    let mut placer = Placer {
        geometry: g,
        labels: vec![BACKGROUND; total],
        counts: [total, 0, 0, 0],
        strokes: Vec::new(),
    };
    let width = |class: u8, rng: &mut ChaCha8Rng| {
        let [lo, hi] = spec.width_range(class);
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let gain = |rng: &mut ChaCha8Rng| rng.random_range(1.0..1.3);

    let mut road_rng = rng_for(spec.seed, &[1]);
    placer.fill(ROAD, target(ROAD), &mut road_rng, |_, rng| {
        vec![Stroke {
            class: ROAD,
            points: wandering_line(nf, 6.0, 0.06, rng),
            width_px: width(ROAD, rng),
            gain: gain(rng),
            buried: false,
        }]
    });

    let mut pipe_rng = rng_for(spec.seed, &[2]);
    placer.fill(PIPELINE, target(PIPELINE), &mut pipe_rng, |pl, rng| {
        let w = width(PIPELINE, rng);
        let roads: Vec<&Stroke> = pl.strokes.iter().filter(|s| s.class == ROAD).collect();
        let points = if !roads.is_empty() && rng.random_bool(spec.parallel_fraction) {
            let road = roads[rng.random_range(0..roads.len())];
            let gap = rng.random_range(1.0..=3.0);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let k = road.points.len();
            let start = rng.random_range(0..k / 3 + 1);
            let end = (start + rng.random_range(k / 2..=k).max(2)).min(k);
            offset_line(&road.points[start..end], side * (road.width_px * 0.5 + gap + w * 0.5))
        } else {
            wandering_line(nf, 8.0, 0.02, rng)
        };
        vec![Stroke {
            class: PIPELINE,
            points,
            width_px: w,
            gain: gain(rng),
            buried: rng.random_bool(spec.buried_fraction),
        }]
    });

    let mut cut_rng = rng_for(spec.seed, &[3]);
    placer.fill(CUTLINE, target(CUTLINE), &mut cut_rng, |_, rng| {
        let heading = rng.random_range(0.0..std::f64::consts::PI);
        let through = [rng.random_range(0.0..nf), rng.random_range(0.0..nf)];
        let lines = if rng.random_bool(spec.grid_fraction) {
            let spacing = rng.random_range(16.0..40.0);
            let count = rng.random_range(2..=4);
            let (nx, ny) = (-heading.sin(), heading.cos());
            (0..count)
                .map(|k| {
                    let o = k as f64 * spacing;
                    straight_line(nf, [through[0] + nx * o, through[1] + ny * o], heading)
                })
                .collect()
        } else {
            vec![straight_line(nf, through, heading)]
        };
        lines
            .into_iter()
            .map(|points| Stroke {
                class: CUTLINE,
                points,
                width_px: width(CUTLINE, rng),
                gain: gain(rng),
                buried: false,
            })
            .collect()
    });

    // coverage of each class, strongest feature wins within a class
    let mut alpha = vec![[0.0f64; NUM_CLASSES]; total];
    for s in placer.strokes.iter().filter(|s| !s.buried) {
        let r = s.width_px * 0.5;
        let reach = r + 1.0;
        for w in s.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let c0 = (a[0].min(b[0]) - reach).floor().max(0.0) as usize;
            let c1 = ((a[0].max(b[0]) + reach).ceil().max(0.0) as usize).min(n);
            let r0 = (a[1].min(b[1]) - reach).floor().max(0.0) as usize;
            let r1 = ((a[1].max(b[1]) + reach).ceil().max(0.0) as usize).min(n);
            for i in r0..r1 {
                for j in c0..c1 {
                    let d = point_segment_distance([j as f64 + 0.5, i as f64 + 0.5], a, b);
                    let cov = if d <= r { 1.0 } else { (1.0 - (d - r)).max(0.0) };
                    let v = cov * s.gain;
                    let slot = &mut alpha[i * n + j][s.class as usize];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
    }

    let deltas: [[f64; 4]; NUM_CLASSES] = std::array::from_fn(|c| spec.class_delta(c as u8));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise_rng = rng_for(spec.seed, &[4]);
    let mut image = vec![0.0f32; 4 * total];
    for k in 0..total {
        let a = &alpha[k];
        // higher-priority corridors are painted over lower ones
        let opaque = |v: f64| v.min(1.0);
        for b in 0..4 {
            let cut = a[CUTLINE as usize] * deltas[CUTLINE as usize][b];
            let pipe = a[PIPELINE as usize] * deltas[PIPELINE as usize][b];
            let road = a[ROAD as usize] * deltas[ROAD as usize][b];
            let below_road = pipe + (1.0 - opaque(a[PIPELINE as usize])) * cut;
            let delta = road + (1.0 - opaque(a[ROAD as usize])) * below_road;
            let v = bg[b * total + k] + delta + spec.sensor_noise * BAND_SCALE[b] * noise.sample(&mut noise_rng);
            image[b * total + k] = v as f32;
        }
    }

    let band_names: Vec<String> = BAND_NAMES.iter().map(|s| s.to_string()).collect();
    let features = placer.strokes.iter().map(|s| s.to_feature(&g)).collect();
    Ok(Scene {
        image: RasterGrid::new(g, band_names.clone(), None, image)?,
        background: RasterGrid::new(g, band_names, None, bg.iter().map(|&v| v as f32).collect())?,
        vectors: VectorLayer::new(features)?,
        buried: placer.strokes.iter().map(|s| s.buried).collect(),
    })
}

/// Spec for scene `k` of a dataset: its own seed and a position on a square
/// layout so tiles from different scenes have distinct world coordinates.
pub fn scene_spec_for(base: &SceneSpec, n_scenes: usize, k: usize, seed: u64) -> SceneSpec {
    let cols = (n_scenes as f64).sqrt().ceil().max(1.0) as usize;
    let side = base.size as f64 * base.pixel_size_m;
    SceneSpec {
        seed: derive_seed(seed, &[k as u64]),
        origin_x: base.origin_x + (k % cols) as f64 * side,
        origin_y: base.origin_y - (k / cols) as f64 * side,
        ..base.clone()
    }
}

/// Scenes -> touch-any labels -> `tile_size` tiles -> 70/20/10 split ->
/// z-score over the whole set.
pub fn generate_dataset(n_scenes: usize, spec: &SceneSpec, tile_size: usize, seed: u64) -> Result<TileSet> {
    let set = generate_tiles(n_scenes, spec, tile_size, seed)?;
    finish_dataset(set, seed)
}

/// Un-split, un-normalized tiles of `n_scenes` generated scenes.
pub fn generate_tiles(n_scenes: usize, spec: &SceneSpec, tile_size: usize, seed: u64) -> Result<TileSet> {
    if n_scenes == 0 {
        return Err(Error::invalid("at least one scene is required"));
    }
    spec.validate()?;
    let per_scene: Vec<Result<Vec<_>>> = (0..n_scenes)
        .into_par_iter()
        .map(|k| {
            let s = scene_spec_for(spec, n_scenes, k, seed);
            let scene = generate_scene(&s)?;
            let labels = rasterize(&scene.vectors, &s.geometry(), RasterizeMode::TouchAny)?;
            tile(&scene.image, &labels, tile_size, k as u32)
        })
        .collect();
    let mut tiles = Vec::new();
    for r in per_scene {
        tiles.extend(r?);
    }
    let mut bounds = BoundingBox {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x: f64::NEG_INFINITY,
        max_y: f64::NEG_INFINITY,
    };
    for k in 0..n_scenes {
        let (x0, y0, x1, y1) = scene_spec_for(spec, n_scenes, k, seed).geometry().extent();
        bounds.min_x = bounds.min_x.min(x0);
        bounds.min_y = bounds.min_y.min(y0);
        bounds.max_x = bounds.max_x.max(x1);
        bounds.max_y = bounds.max_y.max(y1);
    }
    let names = BAND_NAMES.iter().map(|s| s.to_string()).collect();
    TileSet::new(tile_size, names, spec.pixel_size_m, None, bounds, tiles)
}

fn finish_dataset(mut set: TileSet, seed: u64) -> Result<TileSet> {
    set.split(&SplitFractions::default(), derive_seed(seed, &[u64::MAX]))?;
    set.zscore()?;
    Ok(set)
}
