//! Pasting generated tiles back into the source views with a linear seam.

use image::{GrayImage, Luma, RgbImage};
use rayon::prelude::*;
use thiserror::Error;

use crate::canvas::CanvasClip;
use crate::crop::{CropTransform, PixelRect};
use crate::imaging::sample_bilinear_in;
use crate::mask::MaskVolume;
use crate::scene::FrameStore;

pub const DEFAULT_BLEND_BAND: u32 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ReintegrateError {
    #[error("generated clip has {generated} frames, scene has {scene}")]
    FrameCount { generated: usize, scene: usize },
    #[error("mask volume does not match the generated canvas")]
    MaskShape,
    #[error("slot {slot} frame {frame}: {message}")]
    Transform { slot: usize, frame: usize, message: String },
}

/// Source-space mask of one tile: 1 where the tile pixel under a source
/// pixel's centre is masked. Covers `t.source_rect`; returned with that rect.
pub fn source_mask(t: &CropTransform, tile_mask: impl Fn(u32, u32) -> bool) -> (PixelRect, GrayImage) {
    let r = t.source_rect;
    let (w, h) = (r.width().max(0) as u32, r.height().max(0) as u32);
    let img = GrayImage::from_fn(w, h, |dx, dy| {
        let (tx, ty) = t.apply(r.x0 as f64 + dx as f64 + 0.5, r.y0 as f64 + dy as f64 + 0.5);
        let j = (tx.floor().max(0.0) as u32).min(t.tile.width - 1);
        let i = (ty.floor().max(0.0) as u32).min(t.tile.height - 1);
        Luma([tile_mask(j, i) as u8])
    });
    (r, img)
}

/// Chessboard distance from each set pixel to the nearest unset pixel,
/// computed with a two-pass sweep. Unset pixels get 0. Distances are capped
/// at `cap`.
pub fn chessboard_distance(mask: &GrayImage, cap: u32) -> Vec<u32> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let big = cap;
    let mut d: Vec<u32> = mask.as_raw().iter().map(|&v| if v != 0 { big } else { 0 }).collect();
    let at = |x: usize, y: usize| y * w + x;
    for y in 0..h {
        for x in 0..w {
            if d[at(x, y)] == 0 {
                continue;
            }
            let mut best = d[at(x, y)];
            if x > 0 {
                best = best.min(d[at(x - 1, y)] + 1);
            }
            if y > 0 {
                best = best.min(d[at(x, y - 1)] + 1);
                if x > 0 {
                    best = best.min(d[at(x - 1, y - 1)] + 1);
                }
                if x + 1 < w {
                    best = best.min(d[at(x + 1, y - 1)] + 1);
                }
            }
            d[at(x, y)] = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            if d[at(x, y)] == 0 {
                continue;
            }
            let mut best = d[at(x, y)];
            if x + 1 < w {
                best = best.min(d[at(x + 1, y)] + 1);
            }
            if y + 1 < h {
                best = best.min(d[at(x, y + 1)] + 1);
                if x + 1 < w {
                    best = best.min(d[at(x + 1, y + 1)] + 1);
                }
                if x > 0 {
                    best = best.min(d[at(x - 1, y + 1)] + 1);
                }
            }
            d[at(x, y)] = best;
        }
    }
    d
}

/// Blend weights over a window: `min(1, d / band)` for set pixels, where `d`
/// is the chessboard distance to the nearest unset pixel; `band = 0` gives
/// a hard 0/1 paste.
pub fn alpha_field(mask: &GrayImage, band: u32) -> Vec<f64> {
    if band == 0 {
        return mask.as_raw().iter().map(|&v| (v != 0) as u8 as f64).collect();
    }
    chessboard_distance(mask, band)
        .into_iter()
        .map(|d| (d as f64 / band as f64).min(1.0))
        .collect()
}

/// Pastes one tile frame into `frame`.
fn paste_tile(
    frame: &mut RgbImage,
    canvas: &RgbImage,
    canvas_mask: &GrayImage,
    origin: (u32, u32),
    t: &CropTransform,
    band: u32,
) {
    let (ox, oy) = origin;
    let (_, src_mask) = source_mask(t, |j, i| canvas_mask.get_pixel(ox + j, oy + i).0[0] != 0);
    let r = t.source_rect;
    // widen by the band so the distance sees unmasked pixels beyond the rect
    let (fw, fh) = frame.dimensions();
    let wx0 = (r.x0 - band as i64).max(0);
    let wy0 = (r.y0 - band as i64).max(0);
    let wx1 = (r.x1 + band as i64).min(fw as i64);
    let wy1 = (r.y1 + band as i64).min(fh as i64);
    let (ww, wh) = ((wx1 - wx0) as u32, (wy1 - wy0) as u32);
    let window = GrayImage::from_fn(ww, wh, |x, y| {
        let (sx, sy) = (wx0 + x as i64 - r.x0, wy0 + y as i64 - r.y0);
        if sx < 0 || sy < 0 || sx >= r.width() || sy >= r.height() {
            Luma([0])
        } else {
            *src_mask.get_pixel(sx as u32, sy as u32)
        }
    });
    let alpha = alpha_field(&window, band);
    let (cx0, cy0, cx1, cy1) = t.content_pixels();
    let bounds = (ox + cx0, oy + cy0, ox + cx1, oy + cy1);
    for y in 0..wh {
        for x in 0..ww {
            let a = alpha[(y * ww + x) as usize];
            if a <= 0.0 {
                continue;
            }
            let (fx, fy) = ((wx0 + x as i64) as u32, (wy0 + y as i64) as u32);
            let (tx, ty) = t.apply(fx as f64 + 0.5, fy as f64 + 0.5);
            let g = sample_bilinear_in(canvas, ox as f64 + tx - 0.5, oy as f64 + ty - 0.5, bounds);
            let p = frame.get_pixel_mut(fx, fy);
            for c in 0..3 {
                let v = a * g[c] + (1.0 - a) * p.0[c] as f64;
                p.0[c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
}

/// Composites `generated` back over `original` wherever `mask` is set and
/// returns a new frame store. Pixels outside every mapped mask are copied
/// unchanged.
pub fn reintegrate(
    original: &FrameStore,
    generated: &CanvasClip,
    mask: &MaskVolume,
    blend_band: u32,
) -> Result<FrameStore, ReintegrateError> {
    let layout = &generated.layout;
    let frame_count = generated.frame_count();
    for v in &layout.view_order {
        if original.view(*v).len() != frame_count {
            return Err(ReintegrateError::FrameCount {
                generated: frame_count,
                scene: original.view(*v).len(),
            });
        }
    }
    if mask.frames.len() != frame_count
        || mask.frames.iter().any(|m| m.dimensions() != (layout.width(), layout.height()))
        || generated.crops.len() != layout.slots()
    {
        return Err(ReintegrateError::MaskShape);
    }
    for (slot, crops) in generated.crops.iter().enumerate() {
        let view = layout.view_order[slot];
        for (frame, crop) in crops.iter().enumerate() {
            let Some(c) = crop else { continue };
            let t = &c.transform;
            let (fw, fh) = original.frame(view, frame).dimensions();
            let r = t.source_rect;
            let err = |message: String| ReintegrateError::Transform { slot, frame, message };
            if t.view != view {
                return Err(err(format!("transform is for {} but slot shows {view}", t.view)));
            }
            if t.tile != layout.tile {
                return Err(err("transform tile size differs from layout".into()));
            }
            if r.x0 < 0 || r.y0 < 0 || r.x1 > fw as i64 || r.y1 > fh as i64 || r.width() <= 0 || r.height() <= 0 {
                return Err(err(format!("source rect {r:?} outside {fw}x{fh} frame")));
            }
        }
    }

    let mut views: Vec<Vec<RgbImage>> = Vec::with_capacity(6);
    for id in crate::scene::ViewId::ALL {
        let frames = original.view(id);
        let slot = layout.slot_of(id).filter(|&s| !layout.placeholders[s]);
        let edited: Vec<RgbImage> = frames
            .par_iter()
            .enumerate()
            .map(|(f, src)| {
                let mut out = src.clone();
                if let Some(slot) = slot {
                    if let Some(Some(c)) = generated.crops[slot].get(f) {
                        paste_tile(
                            &mut out,
                            &generated.frames[f],
                            &mask.frames[f],
                            layout.slot_origin(slot),
                            &c.transform,
                            blend_band,
                        );
                    }
                }
                out
            })
            .collect();
        views.push(edited);
    }
    Ok(FrameStore::new(views))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_of_filled_square() {
        let mut m = GrayImage::new(7, 7);
        for y in 1..6 {
            for x in 1..6 {
                m.put_pixel(x, y, Luma([1]));
            }
        }
        let d = chessboard_distance(&m, 100);
        assert_eq!(d[3 * 7 + 3], 3);
        assert_eq!(d[7 + 1], 1);
        assert_eq!(d[0], 0);
        assert_eq!(d[2 * 7 + 3], 2);
    }

    #[test]
    fn alpha_is_lipschitz() {
        let m = GrayImage::from_fn(40, 30, |x, y| Luma([((x as i32 - 20).pow(2) + (y as i32 - 15).pow(2) < 150) as u8]));
        let band = 8;
        let a = alpha_field(&m, band);
        for y in 0..30 {
            for x in 0..39 {
                assert!((a[y * 40 + x] - a[y * 40 + x + 1]).abs() <= 1.0 / band as f64 + 1e-12);
            }
        }
        for y in 0..29 {
            for x in 0..40 {
                assert!((a[y * 40 + x] - a[(y + 1) * 40 + x]).abs() <= 1.0 / band as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn zero_band_is_binary() {
        let m = GrayImage::from_fn(3, 1, |x, _| Luma([(x == 1) as u8]));
        assert_eq!(alpha_field(&m, 0), vec![0.0, 1.0, 0.0]);
    }
}
