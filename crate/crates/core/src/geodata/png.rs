//! Colour-coded label map export.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::{validate_labels, NUM_CLASSES};

/// RGB per class: background black, pipeline yellow, road blue, cutline red.
pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [[0, 0, 0], [255, 255, 0], [0, 0, 255], [255, 0, 0]];

pub fn colorize(labels: &[u8]) -> Result<Vec<u8>> {
    validate_labels(labels)?;
    Ok(labels.iter().flat_map(|&c| PALETTE[c as usize]).collect())
}

/// Writes a `height x width` label map as an 8-bit RGB PNG.
pub fn write_label_png(path: &Path, labels: &[u8], width: usize, height: usize) -> Result<()> {
    if labels.len() != width * height {
        return Err(Error::shape("label map size does not match width x height"));
    }
    let rgb = colorize(labels)?;
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    w.write_image_data(&rgb).map_err(|e| Error::Png(e.to_string()))?;
    w.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}
