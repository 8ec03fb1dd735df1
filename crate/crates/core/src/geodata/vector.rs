//! Disturbance vector layers and their GeoJSON representation.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::geom::{point_in_rings, ring_self_intersects, Point, Rect};
use crate::error::{Error, Result};
use crate::labels::{class_from_name, class_name, BACKGROUND, NUM_CLASSES};

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// One or more polygons, each an exterior ring followed by holes. Rings
    /// are closed (first point repeated last).
    Polygons(Vec<Vec<Vec<Point>>>),
    /// Polylines buffered to a corridor of total width `width_m`.
    Lines { lines: Vec<Vec<Point>>, width_m: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub class: u8,
    pub geometry: Geometry,
}

impl Feature {
    pub fn polygon(class: u8, rings: Vec<Vec<Point>>) -> Self {
        Feature {
            class,
            geometry: Geometry::Polygons(vec![rings]),
        }
    }

    pub fn line(class: u8, points: Vec<Point>, width_m: f64) -> Self {
        Feature {
            class,
            geometry: Geometry::Lines {
                lines: vec![points],
                width_m,
            },
        }
    }

    /// World-space bounding box including the corridor buffer.
    pub fn bounds(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut grow = |p: &Point| {
            r.x0 = r.x0.min(p[0]);
            r.y0 = r.y0.min(p[1]);
            r.x1 = r.x1.max(p[0]);
            r.y1 = r.y1.max(p[1]);
        };
        match &self.geometry {
            Geometry::Polygons(polys) => polys.iter().flatten().flatten().for_each(&mut grow),
            Geometry::Lines { lines, width_m } => {
                lines.iter().flatten().for_each(&mut grow);
                r = r.expand(width_m * 0.5);
            }
        }
        r
    }

    /// Point membership in the feature's area (corridor for lines).
    pub fn contains(&self, p: Point) -> bool {
        match &self.geometry {
            Geometry::Polygons(polys) => polys.iter().any(|rings| point_in_rings(p, rings)),
            Geometry::Lines { lines, width_m } => lines.iter().any(|l| {
                l.windows(2)
                    .any(|w| super::geom::point_segment_distance(p, w[0], w[1]) <= width_m * 0.5)
            }),
        }
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidGeometry { index, reason };
        if self.class == BACKGROUND || self.class as usize >= NUM_CLASSES {
            return Err(bad(format!("class {} is not a disturbance class", self.class)));
        }
        match &self.geometry {
            Geometry::Polygons(polys) => {
                if polys.is_empty() {
                    return Err(bad("no polygons".into()));
                }
                for rings in polys {
                    if rings.is_empty() {
                        return Err(bad("polygon without rings".into()));
                    }
                    for ring in rings {
                        if ring.iter().flatten().any(|v| !v.is_finite()) {
                            return Err(bad("non-finite coordinate".into()));
                        }
                        if ring.len() < 4 {
                            return Err(bad("ring needs at least 3 distinct vertices".into()));
                        }
                        if ring.first() != ring.last() {
                            return Err(bad("ring is not closed".into()));
                        }
                        if ring_self_intersects(ring) {
                            return Err(bad("ring intersects itself".into()));
                        }
                    }
                }
            }
            Geometry::Lines { lines, width_m } => {
                if !(width_m.is_finite() && *width_m > 0.0) {
                    return Err(bad(format!("width_m must be positive, got {width_m}")));
                }
                if lines.is_empty() {
                    return Err(bad("no lines".into()));
                }
                for l in lines {
                    if l.len() < 2 {
                        return Err(bad("polyline needs at least 2 points".into()));
                    }
                    if l.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(bad("non-finite coordinate".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Same feature moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Feature {
        let mv = |p: &Point| [p[0] + dx, p[1] + dy];
        let geometry = match &self.geometry {
            Geometry::Polygons(polys) => Geometry::Polygons(
                polys
                    .iter()
                    .map(|rings| rings.iter().map(|r| r.iter().map(mv).collect()).collect())
                    .collect(),
            ),
            Geometry::Lines { lines, width_m } => Geometry::Lines {
                lines: lines.iter().map(|l| l.iter().map(mv).collect()).collect(),
                width_m: *width_m,
            },
        };
        Feature {
            class: self.class,
            geometry,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorLayer {
    pub features: Vec<Feature>,
}

impl VectorLayer {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let layer = VectorLayer { features };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.features.iter().enumerate() {
            f.validate(i)?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> VectorLayer {
        VectorLayer {
            features: self.features.iter().map(|f| f.translated(dx, dy)).collect(),
        }
    }

    pub fn from_geojson(value: &Value) -> Result<Self> {
        let features = value
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::invalid("GeoJSON FeatureCollection without a features array"))?;
        let mut out = Vec::with_capacity(features.len());
        for (index, f) in features.iter().enumerate() {
            out.push(parse_feature(index, f)?);
        }
        VectorLayer::new(out)
    }

    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self.features.iter().map(feature_to_geojson).collect();
        json!({ "type": "FeatureCollection", "features": features })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))?;
        VectorLayer::from_geojson(&value).map_err(|e| match e {
            Error::InvalidArgument(reason) => Error::malformed(path, reason),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_geojson())?)?;
        Ok(())
    }
}

fn parse_feature(index: usize, f: &Value) -> Result<Feature> {
    let bad = |reason: &str| Error::InvalidGeometry {
        index,
        reason: reason.to_string(),
    };
    let props = f.get("properties").and_then(Value::as_object);
    let class_str = props
        .and_then(|p| p.get("class"))
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string property \"class\""))?;
    let class = class_from_name(class_str)
        .filter(|&c| c != BACKGROUND)
        .ok_or_else(|| bad("class must be road, pipeline or cutline"))?;
    let geometry = f.get("geometry").ok_or_else(|| bad("missing geometry"))?;
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geometry.get("coordinates").ok_or_else(|| bad("missing coordinates"))?;
    let geometry = match kind {
        "Polygon" => Geometry::Polygons(vec![parse_rings(coords).ok_or_else(|| bad("bad polygon coordinates"))?]),
        "MultiPolygon" => Geometry::Polygons(
            coords
                .as_array()
                .and_then(|polys| polys.iter().map(parse_rings).collect::<Option<Vec<_>>>())
                .ok_or_else(|| bad("bad multipolygon coordinates"))?,
        ),
        "LineString" | "MultiLineString" => {
            let width_m = props
                .and_then(|p| p.get("width_m"))
                .and_then(Value::as_f64)
                .ok_or_else(|| bad("line features need a numeric \"width_m\""))?;
            let lines = if kind == "LineString" {
                vec![parse_points(coords).ok_or_else(|| bad("bad line coordinates"))?]
            } else {
                parse_rings(coords).ok_or_else(|| bad("bad multiline coordinates"))?
            };
            Geometry::Lines { lines, width_m }
        }
        other => return Err(bad(&format!("unsupported geometry type {other:?}"))),
    };
    Ok(Feature { class, geometry })
}

fn parse_points(v: &Value) -> Option<Vec<Point>> {
    v.as_array()?
        .iter()
        .map(|p| {
            let a = p.as_array()?;
            Some([a.first()?.as_f64()?, a.get(1)?.as_f64()?])
        })
        .collect()
}

fn parse_rings(v: &Value) -> Option<Vec<Vec<Point>>> {
    v.as_array()?.iter().map(parse_points).collect()
}

fn feature_to_geojson(f: &Feature) -> Value {
    let mut props = Map::new();
    props.insert("class".into(), json!(class_name(f.class)));
    let geometry = match &f.geometry {
        Geometry::Polygons(polys) if polys.len() == 1 => json!({ "type": "Polygon", "coordinates": polys[0] }),
        Geometry::Polygons(polys) => json!({ "type": "MultiPolygon", "coordinates": polys }),
        Geometry::Lines { lines, width_m } => {
            props.insert("width_m".into(), json!(width_m));
            if lines.len() == 1 {
                json!({ "type": "LineString", "coordinates": lines[0] })
            } else {
                json!({ "type": "MultiLineString", "coordinates": lines })
            }
        }
    };
    json!({ "type": "Feature", "properties": props, "geometry": geometry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{CUTLINE, ROAD};

    #[test]
    fn geojson_round_trip() {
        let layer = VectorLayer::new(vec![
            Feature::polygon(ROAD, vec![vec![[0.0, 0.0], [10.0, 0.0], [10.0, 5.0], [0.0, 0.0]]]),
            Feature::line(CUTLINE, vec![[0.0, 0.0], [20.0, 20.0], [40.0, 0.0]], 3.0),
        ])
        .unwrap();
        let back = VectorLayer::from_geojson(&layer.to_geojson()).unwrap();
        assert_eq!(back, layer);
    }

    #[test]
    fn validation_names_the_feature() {
        let value = json!({ "type": "FeatureCollection", "features": [
            { "type": "Feature", "properties": { "class": "road", "width_m": 5.0 },
              "geometry": { "type": "LineString", "coordinates": [[0, 0], [1, 1]] } },
            { "type": "Feature", "properties": { "class": "cutline" },
              "geometry": { "type": "LineString", "coordinates": [[0, 0], [1, 1]] } }
        ]});
        assert!(matches!(
            VectorLayer::from_geojson(&value),
            Err(Error::InvalidGeometry { index: 1, .. })
        ));
        let open = Feature::polygon(ROAD, vec![vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]]);
        let bowtie = Feature::polygon(ROAD, vec![vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]]);
        let zero_width = Feature::line(ROAD, vec![[0.0, 0.0], [1.0, 0.0]], 0.0);
        for (i, f) in [open, bowtie, zero_width].into_iter().enumerate() {
            let mut features = vec![Feature::line(ROAD, vec![[0.0, 0.0], [1.0, 0.0]], 1.0); 2];
            features.push(f);
            let err = VectorLayer::new(features).unwrap_err();
            assert!(matches!(err, Error::InvalidGeometry { index: 2, .. }), "case {i}: {err}");
        }
        let bad_class = json!({ "features": [
            { "properties": { "class": "river" },
              "geometry": { "type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 0]]] } }
        ]});
        assert!(VectorLayer::from_geojson(&bad_class).is_err());
    }
}
