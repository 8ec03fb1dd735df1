//! Raster/vector inputs, label rasterization, tiling, splitting,
//! normalization and augmentation.

pub mod augment;
pub mod geom;
pub mod png;
pub mod raster;
pub mod rasterize;
pub mod tiles;
pub mod vector;

pub use augment::Augmentation;
pub use raster::{read_raster, read_raster_f32, write_raster, GridGeometry, RasterGrid, DEFAULT_PIXEL_SIZE_M};
pub use rasterize::{rasterize, rasterize_center, rasterize_touch_any, RasterizeMode};
pub use tiles::{assign_splits, keep_window, tile, NormStats, Split, SplitFractions, Tile, TileSet};
pub use vector::{Feature, Geometry, VectorLayer};
