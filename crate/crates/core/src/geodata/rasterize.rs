//! Vector-to-label rasterization under the two pixel-membership rules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geom::{point_in_rings, point_segment_distance, segment_intersects_rect, segment_rect_distance, Rect};
use super::raster::{GridGeometry, RasterGrid};
use super::vector::{Feature, Geometry, VectorLayer};
use crate::error::Result;
use crate::labels::{overlap_priority, BACKGROUND, NUM_CLASSES};

/// Boundary contact within this distance (metres) counts as touching.
pub const TOUCH_TOLERANCE_M: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RasterizeMode {
    /// A pixel belongs to a feature if the feature touches any part of it.
    #[default]
    TouchAny,
    /// A pixel belongs to a feature if its centre lies inside the feature.
    Center,
}

impl std::str::FromStr for RasterizeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "touch-any" => Ok(RasterizeMode::TouchAny),
            "center" => Ok(RasterizeMode::Center),
            other => Err(format!("unknown rasterize mode {other:?} (touch-any|center)")),
        }
    }
}

/// Inclusive pixel window `(row0, row1, col0, col1)` overlapped by a world
/// rectangle, or `None` when it misses the grid.
fn pixel_window(g: &GridGeometry, r: &Rect) -> Option<(usize, usize, usize, usize)> {
    let ps = g.pixel_size_m;
    let c0 = ((r.x0 - g.origin_x) / ps).floor();
    let c1 = ((r.x1 - g.origin_x) / ps).floor();
    let r0 = ((g.origin_y - r.y1) / ps).floor();
    let r1 = ((g.origin_y - r.y0) / ps).floor();
    if c1 < 0.0 || r1 < 0.0 || c0 >= g.width as f64 || r0 >= g.height as f64 {
        return None;
    }
    // a rectangle ending exactly on a pixel edge also touches the previous pixel
    let lo = |v: f64| if v > 0.0 { v as usize - 1 } else { 0 };
    let hi = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
    Some((lo(r0), hi(r1, g.height), lo(c0), hi(c1, g.width)))
}

fn rect_of(g: &GridGeometry, row: usize, col: usize) -> Rect {
    let (x0, y0, x1, y1) = g.pixel_rect(row, col);
    Rect::new(x0, y0, x1, y1)
}

/// Sorted grid indices (`row * width + col`) of the pixels a feature claims.
pub fn feature_pixels(feature: &Feature, g: &GridGeometry, mode: RasterizeMode) -> Vec<usize> {
    let Some((r0, r1, c0, c1)) = pixel_window(g, &feature.bounds().expand(TOUCH_TOLERANCE_M)) else {
        return Vec::new();
    };
    let ww = c1 - c0 + 1;
    let mut mark = vec![false; (r1 - r0 + 1) * ww];
    let local = |row: usize, col: usize| (row - r0) * ww + (col - c0);
    match (&feature.geometry, mode) {
        (Geometry::Polygons(polys), RasterizeMode::TouchAny) => {
            for rings in polys {
                for ring in rings {
                    for w in ring.windows(2) {
                        let eb = Rect::new(
                            w[0][0].min(w[1][0]),
                            w[0][1].min(w[1][1]),
                            w[0][0].max(w[1][0]),
                            w[0][1].max(w[1][1]),
                        )
                        .expand(TOUCH_TOLERANCE_M);
                        let Some((er0, er1, ec0, ec1)) = pixel_window(g, &eb) else {
                            continue;
                        };
                        for row in er0.max(r0)..=er1.min(r1) {
                            for col in ec0.max(c0)..=ec1.min(c1) {
                                let m = &mut mark[local(row, col)];
                                if !*m {
                                    let rect = rect_of(g, row, col).expand(TOUCH_TOLERANCE_M);
                                    *m = segment_intersects_rect(w[0], w[1], &rect);
                                }
                            }
                        }
                    }
                }
            }
            // no boundary in the pixel: it is entirely inside or outside
            for row in r0..=r1 {
                for col in c0..=c1 {
                    let i = local(row, col);
                    if !mark[i] {
                        let (cx, cy) = g.pixel_center(row, col);
                        mark[i] = polys.iter().any(|rings| point_in_rings([cx, cy], rings));
                    }
                }
            }
        }
        (Geometry::Polygons(polys), RasterizeMode::Center) => {
            for row in r0..=r1 {
                for col in c0..=c1 {
                    let (cx, cy) = g.pixel_center(row, col);
                    mark[local(row, col)] = polys.iter().any(|rings| point_in_rings([cx, cy], rings));
                }
            }
        }
        (Geometry::Lines { lines, width_m }, mode) => {
            let radius = width_m * 0.5;
            for line in lines {
                for w in line.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let sb = Rect::new(a[0].min(b[0]), a[1].min(b[1]), a[0].max(b[0]), a[1].max(b[1]))
                        .expand(radius + TOUCH_TOLERANCE_M);
                    let Some((sr0, sr1, sc0, sc1)) = pixel_window(g, &sb) else {
                        continue;
                    };
                    for row in sr0.max(r0)..=sr1.min(r1) {
                        for col in sc0.max(c0)..=sc1.min(c1) {
                            let m = &mut mark[local(row, col)];
                            if *m {
                                continue;
                            }
                            *m = match mode {
                                RasterizeMode::TouchAny => {
                                    segment_rect_distance(a, b, &rect_of(g, row, col)) <= radius + TOUCH_TOLERANCE_M
                                }
                                RasterizeMode::Center => {
                                    let (cx, cy) = g.pixel_center(row, col);
                                    point_segment_distance([cx, cy], a, b) <= radius
                                }
                            };
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for row in r0..=r1 {
        for col in c0..=c1 {
            if mark[local(row, col)] {
                out.push(row * g.width + col);
            }
        }
    }
    out
}

/// Writes `class` into `labels` wherever it outranks the current value.
pub fn paint_priority(labels: &mut [u8], pixels: &[usize], class: u8) {
    let rank = overlap_priority(class);
    for &i in pixels {
        if overlap_priority(labels[i]) < rank {
            labels[i] = class;
        }
    }
}

/// Per-class membership masks before overlap resolution (index 0 unused).
pub fn class_masks(layer: &VectorLayer, g: &GridGeometry, mode: RasterizeMode) -> [Vec<bool>; NUM_CLASSES] {
    let per_feature: Vec<Vec<usize>> = layer
        .features
        .par_iter()
        .map(|f| feature_pixels(f, g, mode))
        .collect();
    let mut masks: [Vec<bool>; NUM_CLASSES] = std::array::from_fn(|_| vec![false; g.width * g.height]);
    for (f, px) in layer.features.iter().zip(&per_feature) {
        for &i in px {
            masks[f.class as usize][i] = true;
        }
    }
    masks
}

/// Single-band class raster on the template grid; overlaps go to the
/// highest-priority class (road > pipeline > cutline).
pub fn rasterize(layer: &VectorLayer, template: &GridGeometry, mode: RasterizeMode) -> Result<RasterGrid<u8>> {
    layer.validate()?;
    let per_feature: Vec<Vec<usize>> = layer
        .features
        .par_iter()
        .map(|f| feature_pixels(f, template, mode))
        .collect();
    let mut labels = vec![BACKGROUND; template.width * template.height];
    for (f, px) in layer.features.iter().zip(&per_feature) {
        paint_priority(&mut labels, px, f.class);
    }
    RasterGrid::new(*template, vec!["class".into()], None, labels)
}

pub fn rasterize_touch_any(layer: &VectorLayer, template: &GridGeometry) -> Result<RasterGrid<u8>> {
    rasterize(layer, template, RasterizeMode::TouchAny)
}

pub fn rasterize_center(layer: &VectorLayer, template: &GridGeometry) -> Result<RasterGrid<u8>> {
    rasterize(layer, template, RasterizeMode::Center)
}
