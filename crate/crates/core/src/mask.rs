//! Inpainting masks at canvas resolution and square-element dilation.

use image::{GrayImage, ImageBuffer, Luma, Pixel};
use serde::{Deserialize, Serialize};

use crate::canvas::{CanvasClip, CanvasLayout};
use crate::crop::{expand_rect, FrameCrop};

pub const DEFAULT_MASK_FACTOR: f64 = 1.2;

/// Binary volume: 1 = editable, 0 = preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    pub frames: Vec<GrayImage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub mask_factor: f64,
    pub dilate_radius: u32,
    pub dilate_iterations: u32,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            mask_factor: DEFAULT_MASK_FACTOR,
            dilate_radius: 0,
            dilate_iterations: 0,
        }
    }
}

impl MaskVolume {
    pub fn zeros(frame_count: usize, width: u32, height: u32) -> Self {
        MaskVolume {
            frames: (0..frame_count).map(|_| GrayImage::new(width, height)).collect(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn dimensions(&self) -> Option<(u32, u32)> {
        self.frames.first().map(|f| f.dimensions())
    }

    pub fn is_set(&self, frame: usize, x: u32, y: u32) -> bool {
        self.frames[frame].get_pixel(x, y).0[0] != 0
    }

    pub fn is_binary(&self) -> bool {
        self.frames.iter().all(|f| f.as_raw().iter().all(|&v| v <= 1))
    }

    pub fn count(&self) -> usize {
        self.frames
            .iter()
            .map(|f| f.as_raw().iter().filter(|&&v| v != 0).count())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Number of set pixels of `frame` inside `slot`.
    pub fn slot_count(&self, layout: &CanvasLayout, slot: usize, frame: usize) -> usize {
        let (x0, y0) = layout.slot_origin(slot);
        let f = &self.frames[frame];
        let mut n = 0;
        for y in y0..y0 + layout.tile.height {
            for x in x0..x0 + layout.tile.width {
                n += (f.get_pixel(x, y).0[0] != 0) as usize;
            }
        }
        n
    }

    /// Copy scaled to {0, 255} for viewing.
    pub fn to_visible(&self) -> Vec<GrayImage> {
        self.frames
            .iter()
            .map(|f| GrayImage::from_fn(f.width(), f.height(), |x, y| Luma([f.get_pixel(x, y).0[0].saturating_mul(255)])))
            .collect()
    }

    /// Inverse of [`MaskVolume::to_visible`]: any non-zero pixel becomes 1.
    pub fn from_visible(frames: Vec<GrayImage>) -> Self {
        MaskVolume {
            frames: frames
                .into_iter()
                .map(|mut f| {
                    f.pixels_mut().for_each(|p| p.0[0] = (p.0[0] != 0) as u8);
                    f
                })
                .collect(),
        }
    }
}

/// Fills the tile-space image of the crop's box, expanded by `mask_factor`,
/// into a tile-sized mask. Pad pixels are never set.
pub fn tile_mask(crop: &FrameCrop, mask_factor: f64) -> GrayImage {
    let t = &crop.transform;
    let mut out = GrayImage::new(t.tile.width, t.tile.height);
    let Some(rect) = crop.bbox.rect else { return out };
    let Ok(expanded) = expand_rect(&rect, mask_factor) else {
        return out;
    };
    let m = t.apply_rect(&expanded);
    let (cx0, cy0, cx1, cy1) = t.content_pixels();
    for i in cy0..=cy1 {
        let yc = i as f64 + 0.5;
        if yc < m.y_min || yc >= m.y_max {
            continue;
        }
        for j in cx0..=cx1 {
            let xc = j as f64 + 0.5;
            if xc >= m.x_min && xc < m.x_max {
                out.put_pixel(j, i, Luma([1]));
            }
        }
    }
    out
}

/// Mask volume for every slot and frame that has a crop record.
pub fn build_mask(canvas: &CanvasClip, mask_factor: f64) -> MaskVolume {
    let layout = &canvas.layout;
    let mut vol = MaskVolume::zeros(canvas.frame_count(), layout.width(), layout.height());
    for (slot, crops) in canvas.crops.iter().enumerate() {
        let (ox, oy) = layout.slot_origin(slot);
        for (f, crop) in crops.iter().enumerate() {
            if let Some(crop) = crop {
                let tile = tile_mask(crop, mask_factor);
                image::imageops::replace(&mut vol.frames[f], &tile, ox as i64, oy as i64);
            }
        }
    }
    vol
}

/// Channel-wise max filter with a `(2r+1)²` square, applied `iterations`
/// times.
pub fn dilate<P>(img: &ImageBuffer<P, Vec<P::Subpixel>>, radius: u32, iterations: u32) -> ImageBuffer<P, Vec<P::Subpixel>>
where
    P: Pixel,
    P::Subpixel: Ord,
{
    let mut out = img.clone();
    if radius == 0 {
        return out;
    }
    for _ in 0..iterations {
        out = max_filter_1d(&out, radius, true);
        out = max_filter_1d(&out, radius, false);
    }
    out
}

fn max_filter_1d<P>(img: &ImageBuffer<P, Vec<P::Subpixel>>, radius: u32, horizontal: bool) -> ImageBuffer<P, Vec<P::Subpixel>>
where
    P: Pixel,
    P::Subpixel: Ord,
{
    let (w, h) = img.dimensions();
    let r = radius as i64;
    ImageBuffer::from_fn(w, h, |x, y| {
        let mut acc = *img.get_pixel(x, y);
        for d in -r..=r {
            let (sx, sy) = if horizontal { (x as i64 + d, y as i64) } else { (x as i64, y as i64 + d) };
            if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                continue;
            }
            let other = img.get_pixel(sx as u32, sy as u32);
            acc.apply2(other, |a, b| a.max(b));
        }
        acc
    })
}

/// Dilates every frame of a mask volume.
pub fn dilate_volume(mask: &MaskVolume, radius: u32, iterations: u32) -> MaskVolume {
    MaskVolume {
        frames: mask.frames.iter().map(|f| dilate(f, radius, iterations)).collect(),
    }
}
