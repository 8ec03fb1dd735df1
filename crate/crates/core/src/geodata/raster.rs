//! Georeferenced pixel grids and the LDR1 on-disk container.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground sampling distance of the 10 m Sentinel-2 bands.
pub const DEFAULT_PIXEL_SIZE_M: f64 = 10.0;

pub const LDR1_FORMAT: &str = "LDR1";

/// Element types a raster can be stored as.
pub trait Sample: Copy + Default + PartialEq + Send + Sync + 'static {
    const DTYPE: &'static str;
    const SIZE: usize;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Sample for u8 {
    const DTYPE: &'static str = "uint8";
    const SIZE: usize = 1;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as u8
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

impl Sample for f32 {
    const DTYPE: &'static str = "float32";
    const SIZE: usize = 4;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Sample for f64 {
    const DTYPE: &'static str = "float64";
    const SIZE: usize = 8;
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Pixel grid georeferenced by its top-left corner.
///
/// Pixel `(i, j)` (row, column) covers
/// `[origin_x + j*ps, origin_x + (j+1)*ps] x [origin_y - (i+1)*ps, origin_y - i*ps]`.
/// Data is band-major: band `b` occupies `data[b*h*w..(b+1)*h*w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid<T> {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub band_names: Vec<String>,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_m: f64,
    pub nodata: Option<f64>,
    pub data: Vec<T>,
}

/// Grid geometry shared by co-registered rasters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_m: f64,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, origin_x: f64, origin_y: f64, pixel_size_m: f64) -> Self {
        GridGeometry {
            width,
            height,
            origin_x,
            origin_y,
            pixel_size_m,
        }
    }

    /// World rectangle `(x0, y0, x1, y1)` of pixel `(row, col)`.
    pub fn pixel_rect(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let ps = self.pixel_size_m;
        (
            self.origin_x + col as f64 * ps,
            self.origin_y - (row + 1) as f64 * ps,
            self.origin_x + (col + 1) as f64 * ps,
            self.origin_y - row as f64 * ps,
        )
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let ps = self.pixel_size_m;
        (
            self.origin_x + (col as f64 + 0.5) * ps,
            self.origin_y - (row as f64 + 0.5) * ps,
        )
    }

    /// Fractional `(row, col)` of a world point.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (self.origin_y - y) / self.pixel_size_m,
            (x - self.origin_x) / self.pixel_size_m,
        )
    }

    /// `(min_x, min_y, max_x, max_y)` of the whole grid.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let ps = self.pixel_size_m;
        (
            self.origin_x,
            self.origin_y - self.height as f64 * ps,
            self.origin_x + self.width as f64 * ps,
            self.origin_y,
        )
    }

    fn same_as(&self, other: &GridGeometry) -> bool {
        let tol = 1e-9 * self.pixel_size_m.max(1.0);
        self.width == other.width
            && self.height == other.height
            && (self.origin_x - other.origin_x).abs() <= tol
            && (self.origin_y - other.origin_y).abs() <= tol
            && (self.pixel_size_m - other.pixel_size_m).abs() <= tol
    }
}

impl<T: Sample> RasterGrid<T> {
    pub fn new(geometry: GridGeometry, band_names: Vec<String>, nodata: Option<f64>, data: Vec<T>) -> Result<Self> {
        let grid = RasterGrid {
            width: geometry.width,
            height: geometry.height,
            bands: band_names.len(),
            band_names,
            origin_x: geometry.origin_x,
            origin_y: geometry.origin_y,
            pixel_size_m: geometry.pixel_size_m,
            nodata,
            data,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn filled(geometry: GridGeometry, band_names: Vec<String>, value: T) -> Self {
        let n = geometry.width * geometry.height * band_names.len();
        RasterGrid {
            width: geometry.width,
            height: geometry.height,
            bands: band_names.len(),
            band_names,
            origin_x: geometry.origin_x,
            origin_y: geometry.origin_y,
            pixel_size_m: geometry.pixel_size_m,
            nodata: None,
            data: vec![value; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::shape("raster dimensions must be positive"));
        }
        if self.band_names.len() != self.bands {
            return Err(Error::shape("one name per band is required"));
        }
        if !(self.pixel_size_m > 0.0) || !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::invalid("raster georeferencing must be finite with positive pixel size"));
        }
        if self.data.len() != self.width * self.height * self.bands {
            return Err(Error::shape(format!(
                "raster {}x{}x{} needs {} values, got {}",
                self.bands,
                self.height,
                self.width,
                self.width * self.height * self.bands,
                self.data.len()
            )));
        }
        Ok(())
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.width, self.height, self.origin_x, self.origin_y, self.pixel_size_m)
    }

    pub fn same_geometry<U>(&self, other: &RasterGrid<U>) -> bool {
        let o = GridGeometry::new(other.width, other.height, other.origin_x, other.origin_y, other.pixel_size_m);
        self.geometry().same_as(&o)
    }

    pub fn band(&self, b: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.width * self.height;
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> T {
        self.data[(band * self.height + row) * self.width + col]
    }

    /// A pixel is valid when no band holds the nodata value.
    pub fn valid_mask(&self) -> Vec<bool> {
        let n = self.width * self.height;
        match self.nodata {
            None => vec![true; n],
            Some(nd) => {
                let mut mask = vec![true; n];
                for b in 0..self.bands {
                    for (m, v) in mask.iter_mut().zip(self.band(b)) {
                        if is_nodata(v.to_f64(), nd) {
                            *m = false;
                        }
                    }
                }
                mask
            }
        }
    }
}

pub(crate) fn is_nodata(v: f64, nodata: f64) -> bool {
    v == nodata || (v.is_nan() && nodata.is_nan())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub format: String,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub band_names: Vec<String>,
    pub dtype: String,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_m: f64,
    pub nodata: Option<f64>,
    #[serde(default)]
    pub crs_note: String,
}

/// Binary sibling of an LDR1 header: same stem, `.bin` extension.
pub fn data_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

/// Writes the JSON header to `path` and planar little-endian values beside it.
pub fn write_raster<T: Sample>(path: &Path, grid: &RasterGrid<T>, crs_note: &str) -> Result<()> {
    grid.validate()?;
    let header = RasterHeader {
        format: LDR1_FORMAT.into(),
        width: grid.width,
        height: grid.height,
        bands: grid.bands,
        band_names: grid.band_names.clone(),
        dtype: T::DTYPE.into(),
        origin_x: grid.origin_x,
        origin_y: grid.origin_y,
        pixel_size_m: grid.pixel_size_m,
        nodata: grid.nodata,
        crs_note: crs_note.into(),
    };
    let mut bytes = Vec::with_capacity(grid.data.len() * T::SIZE);
    for &v in &grid.data {
        v.write_le(&mut bytes);
    }
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    fs::write(data_path(path), bytes)?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<RasterHeader> {
    let text = fs::read_to_string(path)?;
    let header: RasterHeader =
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, format!("raster header: {e}")))?;
    if header.format != LDR1_FORMAT {
        return Err(Error::malformed(path, format!("format is {:?}, expected LDR1", header.format)));
    }
    Ok(header)
}

/// Reads an LDR1 raster whose stored dtype must equal `T`.
pub fn read_raster<T: Sample>(path: &Path) -> Result<RasterGrid<T>> {
    let header = read_header(path)?;
    if header.dtype != T::DTYPE {
        return Err(Error::malformed(
            path,
            format!("dtype {} where {} was expected", header.dtype, T::DTYPE),
        ));
    }
    decode_payload(path, header, T::read_le)
}

/// Reads any stored dtype and converts to `f32`.
pub fn read_raster_f32(path: &Path) -> Result<RasterGrid<f32>> {
    let header = read_header(path)?;
    match header.dtype.as_str() {
        "uint8" => decode_payload(path, header, |b| u8::read_le(b) as f32),
        "float32" => decode_payload(path, header, f32::read_le),
        "float64" => decode_payload(path, header, |b| f64::read_le(b) as f32),
        other => Err(Error::malformed(path, format!("unknown dtype {other}"))),
    }
}

fn decode_payload<T: Sample>(path: &Path, header: RasterHeader, read: impl Fn(&[u8]) -> T) -> Result<RasterGrid<T>> {
    let size = match header.dtype.as_str() {
        "uint8" => 1,
        "float32" => 4,
        "float64" => 8,
        other => return Err(Error::malformed(path, format!("unknown dtype {other}"))),
    };
    let bin = data_path(path);
    let bytes = fs::read(&bin)?;
    let count = header.width * header.height * header.bands;
    if bytes.len() != count * size {
        return Err(Error::malformed(
            &bin,
            format!("expected {} bytes, found {}", count * size, bytes.len()),
        ));
    }
    if header.band_names.len() != header.bands {
        return Err(Error::malformed(path, "band_names length differs from bands"));
    }
    let data = bytes.chunks_exact(size).map(read).collect();
    let geometry = GridGeometry::new(
        header.width,
        header.height,
        header.origin_x,
        header.origin_y,
        header.pixel_size_m,
    );
    RasterGrid::new(geometry, header.band_names, header.nodata, data)
        .map_err(|e| Error::malformed(path, e.to_string()))
}
