//! Class alphabet and per-pixel label maps.

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 4;
pub const BACKGROUND: u8 = 0;
pub const PIPELINE: u8 = 1;
pub const ROAD: u8 = 2;
pub const CUTLINE: u8 = 3;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["background", "pipeline", "road", "cutline"];

pub fn class_name(class: u8) -> &'static str {
    CLASS_NAMES.get(class as usize).copied().unwrap_or("invalid")
}

pub fn class_from_name(name: &str) -> Option<u8> {
    CLASS_NAMES
        .iter()
        .position(|n| n.eq_ignore_ascii_case(name))
        .map(|i| i as u8)
}

/// Rank used when several disturbance classes claim one pixel; higher wins.
/// Road outranks pipeline, which outranks cutline.
pub fn overlap_priority(class: u8) -> u8 {
    match class {
        ROAD => 3,
        PIPELINE => 2,
        CUTLINE => 1,
        _ => 0,
    }
}

/// `[batch, height, width]` grid of class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(batch: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != batch * height * width {
            return Err(Error::shape(format!(
                "label map {batch}x{height}x{width} needs {} values, got {}",
                batch * height * width,
                data.len()
            )));
        }
        Ok(LabelMap {
            batch,
            height,
            width,
            data,
        })
    }

    pub fn filled(batch: usize, height: usize, width: usize, class: u8) -> Self {
        LabelMap {
            batch,
            height,
            width,
            data: vec![class; batch * height * width],
        }
    }

    pub fn item(&self, b: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.data[b * n..(b + 1) * n]
    }

    /// Fails on the first value outside the class alphabet.
    pub fn validate(&self) -> Result<()> {
        validate_labels(&self.data)
    }
}

pub fn validate_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().position(|&v| v as usize >= NUM_CLASSES) {
        Some(index) => Err(Error::LabelOutOfRange {
            value: labels[index],
            index,
        }),
        None => Ok(()),
    }
}
