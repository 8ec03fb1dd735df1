//! Brute-force rasterization references written without the library's
//! geometry predicates.

use ldseg::geodata::geom::Point;
use ldseg::geodata::rasterize::class_masks;
use ldseg::geodata::{Feature, Geometry, GridGeometry, RasterizeMode, VectorLayer};
use ldseg::NUM_CLASSES;
use rand::Rng;

pub const SUPERSAMPLE: usize = 16;
pub const COVERAGE_BAND: f64 = 1e-3;

/// Even-odd crossing count over every ring.
fn inside_rings(p: Point, rings: &[Vec<Point>]) -> bool {
    let mut inside = false;
    for ring in rings {
        for e in ring.windows(2) {
            let (a, b) = (e[0], e[1]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn point_seg(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_box(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segs_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_box(a, b, c))
        || (o2 == 0.0 && on_box(a, b, d))
        || (o3 == 0.0 && on_box(c, d, a))
        || (o4 == 0.0 && on_box(c, d, b))
}

/// Axis-aligned pixel square `[x0,x1] × [y0,y1]`.
#[derive(Clone, Copy)]
pub struct Square {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Square {
    fn corners(&self) -> [Point; 4] {
        [[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]]
    }

    fn holds(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    fn point_dist(&self, p: Point) -> f64 {
        let dx = (self.x0 - p[0]).max(0.0).max(p[0] - self.x1);
        let dy = (self.y0 - p[1]).max(0.0).max(p[1] - self.y1);
        (dx * dx + dy * dy).sqrt()
    }

    /// Exact distance from the closed square to a segment.
    fn seg_dist(&self, a: Point, b: Point) -> f64 {
        if self.holds(a) || self.holds(b) {
            return 0.0;
        }
        let c = self.corners();
        if (0..4).any(|k| segs_cross(a, b, c[k], c[(k + 1) % 4])) {
            return 0.0;
        }
        let mut d = self.point_dist(a).min(self.point_dist(b));
        for k in c {
            d = d.min(point_seg(k, a, b));
        }
        d
    }
}

fn member(f: &Feature, p: Point) -> bool {
    match &f.geometry {
        Geometry::Polygons(polys) => polys.iter().any(|rings| inside_rings(p, rings)),
        Geometry::Lines { lines, width_m } => lines
            .iter()
            .any(|l| l.windows(2).any(|s| point_seg(p, s[0], s[1]) <= width_m * 0.5)),
    }
}

/// Distance from the square to the feature's area (0 when they meet).
fn distance(f: &Feature, sq: &Square) -> f64 {
    match &f.geometry {
        Geometry::Polygons(polys) => {
            let mut d = f64::INFINITY;
            for rings in polys {
                if sq.corners().iter().any(|&c| inside_rings(c, rings)) {
                    return 0.0;
                }
                for ring in rings {
                    for s in ring.windows(2) {
                        d = d.min(sq.seg_dist(s[0], s[1]));
                    }
                }
            }
            d
        }
        Geometry::Lines { lines, width_m } => {
            let mut d = f64::INFINITY;
            for l in lines {
                for s in l.windows(2) {
                    d = d.min(sq.seg_dist(s[0], s[1]));
                }
            }
            (d - width_m * 0.5).max(0.0)
        }
    }
}

fn square(g: &GridGeometry, i: usize, j: usize) -> Square {
    let ps = g.pixel_size_m;
    Square {
        x0: g.origin_x + j as f64 * ps,
        x1: g.origin_x + (j + 1) as f64 * ps,
        y0: g.origin_y - (i + 1) as f64 * ps,
        y1: g.origin_y - i as f64 * ps,
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleTally {
    /// Pixel-class pairs with coverage at or above the band and no label.
    pub missed: usize,
    /// Pairs whose coverage lies inside the band (judged by exact distance).
    pub band: usize,
    pub band_mismatch: usize,
    pub center_mismatch: usize,
    /// Pixels labelled by center but not by touch-any.
    pub superset_violations: usize,
    pub labelled: usize,
}

impl OracleTally {
    pub fn clean(&self) -> bool {
        self.missed == 0
            && self.band_mismatch == 0
            && self.center_mismatch == 0
            && self.superset_violations == 0
    }
}

/// Compares the library's per-class masks for one layer against the
/// supersampled coverage oracle (touch-any) and the centre oracle.
pub fn check_layer(layer: &VectorLayer, g: &GridGeometry) -> OracleTally {
    let touch = class_masks(layer, g, RasterizeMode::TouchAny);
    let center = class_masks(layer, g, RasterizeMode::Center);
    let ps = g.pixel_size_m;
    let n = SUPERSAMPLE;
    let mut t = OracleTally::default();
    for i in 0..g.height {
        for j in 0..g.width {
            let sq = square(g, i, j);
            let idx = i * g.width + j;
            let centre = [sq.x0 + 0.5 * ps, sq.y0 + 0.5 * ps];
            for c in 1..NUM_CLASSES {
                let feats: Vec<&Feature> = layer.features.iter().filter(|f| f.class as usize == c).collect();
                let mut hits = 0usize;
                for si in 0..n {
                    for sj in 0..n {
                        let p = [sq.x0 + (sj as f64 + 0.5) * ps / n as f64, sq.y0 + (si as f64 + 0.5) * ps / n as f64];
                        if feats.iter().any(|f| member(f, p)) {
                            hits += 1;
                        }
                    }
                }
                let coverage = hits as f64 / (n * n) as f64;
                let reach = feats.iter().map(|f| distance(f, &sq)).fold(f64::INFINITY, f64::min);
                let labelled = touch[c][idx];
                t.labelled += labelled as usize;
                if coverage >= COVERAGE_BAND {
                    t.missed += !labelled as usize;
                } else {
                    t.band += 1;
                    // inside the band only exact contact decides
                    let touches = reach <= 1e-9;
                    // labels within 1e-6 m of contact are accepted as round-off
                    if labelled != touches && !(labelled && reach <= 1e-6) {
                        t.band_mismatch += 1;
                    }
                }
                let expect_center = feats.iter().any(|f| member(f, centre));
                t.center_mismatch += (expect_center != center[c][idx]) as usize;
                t.superset_violations += (center[c][idx] && !labelled) as usize;
            }
        }
    }
    t
}

fn star(rng: &mut impl Rng, cx: f64, cy: f64, r: f64, lo: f64, hi: f64) -> Vec<Point> {
    let k = rng.random_range(3..10);
    // jittered even spacing keeps every angular gap below pi, so the ring is simple
    let step = std::f64::consts::TAU / k as f64;
    let angles: Vec<f64> = (0..k).map(|i| (i as f64 + rng.random_range(0.0..0.4)) * step).collect();
    let mut ring: Vec<Point> = angles
        .iter()
        .map(|a| {
            let rr = r * rng.random_range(lo..hi);
            [cx + rr * a.cos(), cy + rr * a.sin()]
        })
        .collect();
    ring.push(ring[0]);
    ring
}

/// Random layer of star polygons (some with a hole) and buffered polylines
/// over `g`; with `snap` some vertices land exactly on pixel corners.
pub fn random_layer(rng: &mut impl Rng, g: &GridGeometry) -> VectorLayer {
    let ps = g.pixel_size_m;
    let (w, h) = (g.width as f64 * ps, g.height as f64 * ps);
    let snap = rng.random_bool(0.25);
    let pt = |rng: &mut dyn rand::RngCore| -> Point {
        let (mut x, mut y) = (rng.random_range(-0.1 * w..1.1 * w), rng.random_range(-0.1 * h..1.1 * h));
        if snap {
            x = (x / ps).round() * ps;
            y = (y / ps).round() * ps;
        }
        [g.origin_x + x, g.origin_y - y]
    };
    let count = rng.random_range(1..9);
    let mut features = Vec::with_capacity(count);
    for _ in 0..count {
        let class = rng.random_range(1..4u8);
        if rng.random_bool(0.5) {
            let k = rng.random_range(2..6);
            let pts: Vec<Point> = (0..k).map(|_| pt(rng)).collect();
            let width = if rng.random_bool(0.3) { rng.random_range(0.5..5.0) } else { rng.random_range(5.0..40.0) };
            features.push(Feature::line(class, pts, width));
        } else {
            let c = pt(rng);
            let r = rng.random_range(3.0..0.3 * w);
            let mut rings = vec![star(rng, c[0], c[1], r, 0.5, 1.0)];
            if rng.random_bool(0.3) {
                let mut hole = star(rng, c[0], c[1], r, 0.1, 0.3);
                hole.reverse();
                rings.push(hole);
            }
            features.push(Feature::polygon(class, rings));
        }
    }
    VectorLayer::new(features).expect("generated layer is valid")
}
