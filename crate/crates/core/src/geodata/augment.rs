//! Geometric augmentation of image/label tile pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Smallest zoom-crop scale (fraction of the tile side kept).
pub const MIN_ZOOM_SCALE: f64 = 0.7;

/// One sampled transform. Applied as crop-and-resize, then rotation, then
/// flips.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    /// Counter-clockwise quarter turns, 0..=3.
    pub quarter_turns: u8,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Crop side as a fraction of the tile side, in `[0.7, 1]`.
    pub scale: f64,
    /// Crop offset as a fraction of the free margin `(1 - scale) * T`.
    pub offset_row: f64,
    pub offset_col: f64,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        quarter_turns: 0,
        flip_horizontal: false,
        flip_vertical: false,
        scale: 1.0,
        offset_row: 0.0,
        offset_col: 0.0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Augmentation {
            quarter_turns: rng.random_range(0..4),
            flip_horizontal: rng.random_bool(0.5),
            flip_vertical: rng.random_bool(0.5),
            scale: rng.random_range(MIN_ZOOM_SCALE..=1.0),
            offset_row: rng.random(),
            offset_col: rng.random(),
        }
    }

    /// Source position `(row, col)` in the original tile for output pixel
    /// `(i, j)`, before crop resampling is applied.
    fn orient(&self, i: usize, j: usize, t: usize) -> (usize, usize) {
        let (mut i, mut j) = (i, j);
        if self.flip_vertical {
            i = t - 1 - i;
        }
        if self.flip_horizontal {
            j = t - 1 - j;
        }
        // inverse of `quarter_turns` counter-clockwise rotations
        for _ in 0..self.quarter_turns % 4 {
            (i, j) = (j, t - 1 - i);
        }
        (i, j)
    }

    fn crop_coord(&self, k: usize, offset: f64, t: usize) -> f64 {
        let margin = (1.0 - self.scale) * t as f64;
        offset * margin + (k as f64 + 0.5) * self.scale - 0.5
    }

    /// Transforms a band-major `[bands, t, t]` image and its `[t, t]` labels.
    /// The image is resampled bilinearly and the labels by nearest neighbour,
    /// so label values never leave the input's value set.
    pub fn apply(&self, image: &[f32], label: &[u8], t: usize) -> (Vec<f32>, Vec<u8>) {
        let px = t * t;
        let bands = image.len() / px;
        let identity_crop = self.scale == 1.0;
        let cropped_img: Vec<f32>;
        let cropped_lab: Vec<u8>;
        let (img_src, lab_src) = if identity_crop {
            (image, label)
        } else {
            let mut ci = vec![0.0f32; image.len()];
            let mut cl = vec![0u8; px];
            let clamp = |v: f64| v.clamp(0.0, (t - 1) as f64);
            for i in 0..t {
                let y = clamp(self.crop_coord(i, self.offset_row, t));
                let y0 = y.floor() as usize;
                let y1 = (y0 + 1).min(t - 1);
                let fy = (y - y0 as f64) as f32;
                for j in 0..t {
                    let x = clamp(self.crop_coord(j, self.offset_col, t));
                    let x0 = x.floor() as usize;
                    let x1 = (x0 + 1).min(t - 1);
                    let fx = (x - x0 as f64) as f32;
                    for b in 0..bands {
                        let p = &image[b * px..(b + 1) * px];
                        let top = p[y0 * t + x0] * (1.0 - fx) + p[y0 * t + x1] * fx;
                        let bot = p[y1 * t + x0] * (1.0 - fx) + p[y1 * t + x1] * fx;
                        ci[b * px + i * t + j] = top * (1.0 - fy) + bot * fy;
                    }
                    let ny = (y.round() as usize).min(t - 1);
                    let nx = (x.round() as usize).min(t - 1);
                    cl[i * t + j] = label[ny * t + nx];
                }
            }
            cropped_img = ci;
            cropped_lab = cl;
            (&cropped_img[..], &cropped_lab[..])
        };
        let mut out_img = vec![0.0f32; image.len()];
        let mut out_lab = vec![0u8; px];
        for i in 0..t {
            for j in 0..t {
                let (si, sj) = self.orient(i, j, t);
                for b in 0..bands {
                    out_img[b * px + i * t + j] = img_src[b * px + si * t + sj];
                }
                out_lab[i * t + j] = lab_src[si * t + sj];
            }
        }
        (out_img, out_lab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(t: usize, bands: usize) -> Vec<f32> {
        (0..bands * t * t).map(|i| i as f32).collect()
    }

    #[test]
    fn identity_is_exact() {
        let img = ramp(5, 2);
        let lab: Vec<u8> = (0..25).map(|i| (i % 4) as u8).collect();
        let (a, b) = Augmentation::IDENTITY.apply(&img, &lab, 5);
        assert_eq!((a, b), (img, lab));
    }

    #[test]
    fn half_turn_twice_is_identity() {
        let img = ramp(4, 1);
        let lab: Vec<u8> = (0..16).map(|i| (i % 3) as u8).collect();
        let half = Augmentation {
            quarter_turns: 2,
            ..Augmentation::IDENTITY
        };
        let (a, b) = half.apply(&img, &lab, 4);
        assert_eq!(a[0], 15.0);
        let (a2, b2) = half.apply(&a, &b, 4);
        assert_eq!((a2, b2), (img, lab));
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        // [[0,1],[2,3]] rotated 90 degrees counter-clockwise is [[1,3],[0,2]]
        let q = Augmentation {
            quarter_turns: 1,
            ..Augmentation::IDENTITY
        };
        let (a, _) = q.apply(&[0.0, 1.0, 2.0, 3.0], &[0; 4], 2);
        assert_eq!(a, vec![1.0, 3.0, 0.0, 2.0]);
        let flip = Augmentation {
            flip_horizontal: true,
            ..Augmentation::IDENTITY
        };
        let (a, _) = flip.apply(&[0.0, 1.0, 2.0, 3.0], &[0; 4], 2);
        assert_eq!(a, vec![1.0, 0.0, 3.0, 2.0]);
    }

    #[test]
    fn labels_keep_their_value_set_and_track_the_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 16;
        // image band equals the label, so nearest and bilinear agree away
        // from class boundaries
        let lab: Vec<u8> = (0..t * t).map(|i| ((i / t / 4 + i % t / 5) % 4) as u8).collect();
        let img: Vec<f32> = lab.iter().map(|&l| l as f32).collect();
        for _ in 0..50 {
            let aug = Augmentation::sample(&mut rng);
            let (ai, al) = aug.apply(&img, &lab, t);
            assert!(al.iter().all(|&v| v < 4));
            let uniform = ai.iter().zip(&al).filter(|(v, l)| **v == **l as f32).count();
            assert!(uniform > t * t / 3, "{aug:?}");
        }
    }
}
