//! Fixed stand-in codec: 8×8 area average down, bilinear up.
//!
//! Latent values are in image units scaled to `[0, 1]`.

use image::{GrayImage, Rgb, RgbImage};
use ndarray::{Array3, Array4};

use super::GenerateError;
use crate::imaging::to_u8;

pub const FACTOR: u32 = 8;

/// `(T, C, H/8, W/8)` latent grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClip {
    pub grid: Array4<f64>,
}

impl LatentClip {
    pub fn frames(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.grid.shape()[1]
    }

    pub fn is_finite(&self) -> bool {
        self.grid.iter().all(|v| v.is_finite())
    }
}

fn check_dims(w: u32, h: u32) -> Result<(usize, usize), GenerateError> {
    if w == 0 || h == 0 || w % FACTOR != 0 || h % FACTOR != 0 {
        return Err(GenerateError::Latent(format!("{w}x{h} is not divisible by {FACTOR}")));
    }
    Ok(((h / FACTOR) as usize, (w / FACTOR) as usize))
}

/// Area-average encoding of a single frame to `(3, h/8, w/8)`.
pub fn encode_frame(img: &RgbImage) -> Result<Array3<f64>, GenerateError> {
    let (lh, lw) = check_dims(img.width(), img.height())?;
    let mut out = Array3::<f64>::zeros((3, lh, lw));
    let norm = 1.0 / (255.0 * (FACTOR * FACTOR) as f64);
    for (x, y, p) in img.enumerate_pixels() {
        let (i, j) = ((y / FACTOR) as usize, (x / FACTOR) as usize);
        for c in 0..3 {
            out[[c, i, j]] += p.0[c] as f64;
        }
    }
    out.mapv_inplace(|v| v * norm);
    Ok(out)
}

pub fn encode(frames: &[RgbImage]) -> Result<LatentClip, GenerateError> {
    let first = frames.first().ok_or_else(|| GenerateError::Latent("empty clip".into()))?;
    let (lh, lw) = check_dims(first.width(), first.height())?;
    let mut grid = Array4::<f64>::zeros((frames.len(), 3, lh, lw));
    for (t, f) in frames.iter().enumerate() {
        if f.dimensions() != first.dimensions() {
            return Err(GenerateError::Latent("frames differ in size".into()));
        }
        grid.index_axis_mut(ndarray::Axis(0), t).assign(&encode_frame(f)?);
    }
    Ok(LatentClip { grid })
}

/// Bilinear upsampling of one `(3, h, w)` latent frame to `8h × 8w` pixels.
pub fn decode_frame(latent: &Array3<f64>) -> RgbImage {
    let (c, lh, lw) = latent.dim();
    assert!(c >= 3, "decode needs three channels");
    let f = FACTOR as f64;
    RgbImage::from_fn(lw as u32 * FACTOR, lh as u32 * FACTOR, |x, y| {
        let sx = ((x as f64 + 0.5) / f - 0.5).clamp(0.0, (lw - 1) as f64);
        let sy = ((y as f64 + 0.5) / f - 0.5).clamp(0.0, (lh - 1) as f64);
        let (j0, i0) = (sx.floor() as usize, sy.floor() as usize);
        let (j1, i1) = ((j0 + 1).min(lw - 1), (i0 + 1).min(lh - 1));
        let (fx, fy) = (sx - j0 as f64, sy - i0 as f64);
        let v = [0, 1, 2].map(|ch| {
            let top = latent[[ch, i0, j0]] * (1.0 - fx) + latent[[ch, i0, j1]] * fx;
            let bottom = latent[[ch, i1, j0]] * (1.0 - fx) + latent[[ch, i1, j1]] * fx;
            to_u8(255.0 * (top * (1.0 - fy) + bottom * fy))
        });
        Rgb(v)
    })
}

pub fn decode(latent: &LatentClip) -> Vec<RgbImage> {
    latent
        .grid
        .outer_iter()
        .map(|frame| decode_frame(&frame.to_owned()))
        .collect()
}

/// Nearest-neighbour mask latent: the pixel just right/below each block
/// centre. Stays binary.
pub fn encode_mask_frame(mask: &GrayImage) -> Result<Array3<f64>, GenerateError> {
    let (lh, lw) = check_dims(mask.width(), mask.height())?;
    Ok(Array3::from_shape_fn((1, lh, lw), |(_, i, j)| {
        let p = mask.get_pixel(j as u32 * FACTOR + FACTOR / 2, i as u32 * FACTOR + FACTOR / 2);
        (p.0[0] != 0) as u8 as f64
    }))
}
