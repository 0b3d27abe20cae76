//! Deterministic procedural backend: fills the masked region with background
//! estimated from unmasked pixels, then draws a flat-shaded pedestrian over
//! the conditioning skeleton.

use image::{GrayImage, RgbImage};
use rayon::prelude::*;

use super::{preserve_background, ConditioningBundle, GenerateError, Generator};
use crate::attributes::Palette;
use crate::canvas::{compose_frames, decompose_frames, CanvasClip};
use crate::crop::FrameCrop;
use crate::sprite::{render_sprite, SpriteColors, SKIN_TONE};

#[derive(Debug, Clone)]
pub struct SpriteGenerator {
    pub palette: Palette,
    pub skin: [u8; 3],
}

impl Default for SpriteGenerator {
    fn default() -> Self {
        SpriteGenerator {
            palette: Palette::default(),
            skin: SKIN_TONE,
        }
    }
}

fn median(values: &mut [u8]) -> u8 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        ((values[n / 2 - 1] as u16 + values[n / 2] as u16 + 1) / 2) as u8
    }
}

fn lerp_rgb(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    [0, 1, 2].map(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * t).round() as u8)
}

/// Nearest unmasked index on each side of every position of a 1D line.
fn nearest_unmasked(line_masked: &[bool]) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let n = line_masked.len();
    let mut left = vec![None; n];
    let mut right = vec![None; n];
    let mut last = None;
    for i in 0..n {
        left[i] = last;
        if !line_masked[i] {
            last = Some(i);
        }
    }
    last = None;
    for i in (0..n).rev() {
        right[i] = last;
        if !line_masked[i] {
            last = Some(i);
        }
    }
    (left, right)
}

/// Fills the pixels of `mask` coded 1 inside the inclusive content box from
/// pixels coded 0: along the row, else along the column, else the mean of
/// all known content. Pixels coded 2 are unknown but left alone.
fn interpolate_fill(src: &RgbImage, mask: &GrayImage, content: (u32, u32, u32, u32), out: &mut RgbImage) {
    let (x0, y0, x1, y1) = content;
    let masked = |x: u32, y: u32| mask.get_pixel(x, y).0[0] != 0;
    let wanted = |x: u32, y: u32| mask.get_pixel(x, y).0[0] == 1;
    let mut pending = Vec::new();
    for y in y0..=y1 {
        let line: Vec<bool> = (x0..=x1).map(|x| masked(x, y)).collect();
        if !line.iter().any(|&m| m) {
            continue;
        }
        let (left, right) = nearest_unmasked(&line);
        for i in 0..line.len() {
            let x = x0 + i as u32;
            if !wanted(x, y) {
                continue;
            }
            let value = match (left[i], right[i]) {
                (Some(l), Some(r)) => {
                    let a = src.get_pixel(x0 + l as u32, y).0;
                    let b = src.get_pixel(x0 + r as u32, y).0;
                    Some(lerp_rgb(a, b, (i - l) as f64 / (r - l) as f64))
                }
                (Some(l), None) => Some(src.get_pixel(x0 + l as u32, y).0),
                (None, Some(r)) => Some(src.get_pixel(x0 + r as u32, y).0),
                (None, None) => None,
            };
            match value {
                Some(v) => out.put_pixel(x, y, image::Rgb(v)),
                None => pending.push((x, y)),
            }
        }
    }
    if pending.is_empty() {
        return;
    }
    let mut unresolved = Vec::new();
    for &(x, y) in &pending {
        let column: Vec<bool> = (y0..=y1).map(|yy| masked(x, yy)).collect();
        let (up, down) = nearest_unmasked(&column);
        let i = (y - y0) as usize;
        let value = match (up[i], down[i]) {
            (Some(u), Some(d)) => {
                let a = src.get_pixel(x, y0 + u as u32).0;
                let b = src.get_pixel(x, y0 + d as u32).0;
                Some(lerp_rgb(a, b, (i - u) as f64 / (d - u) as f64))
            }
            (Some(u), None) => Some(src.get_pixel(x, y0 + u as u32).0),
            (None, Some(d)) => Some(src.get_pixel(x, y0 + d as u32).0),
            (None, None) => None,
        };
        match value {
            Some(v) => out.put_pixel(x, y, image::Rgb(v)),
            None => unresolved.push((x, y)),
        }
    }
    if unresolved.is_empty() {
        return;
    }
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !masked(x, y) {
                let p = src.get_pixel(x, y).0;
                for c in 0..3 {
                    sum[c] += p[c] as u64;
                }
                n += 1;
            }
        }
    }
    let mean = if n == 0 {
        [0, 0, 0]
    } else {
        sum.map(|s| ((s + n / 2) / n) as u8)
    };
    for (x, y) in unresolved {
        out.put_pixel(x, y, image::Rgb(mean));
    }
}

/// Background estimate for the masked pixels of every frame of one tile.
///
/// Where other frames share this frame's crop (a static window over a static
/// camera) the per-pixel median of their unmasked values is used; otherwise
/// the masked hole is interpolated from its surroundings.
pub fn fill_tile_background(frames: &[RgbImage], masks: &[GrayImage], crops: &[Option<FrameCrop>]) -> Vec<RgbImage> {
    frames
        .par_iter()
        .enumerate()
        .map(|(f, src)| {
            let mask = &masks[f];
            let mut out = src.clone();
            if mask.as_raw().iter().all(|&v| v == 0) {
                return out;
            }
            let (w, h) = src.dimensions();
            let content = crops
                .get(f)
                .copied()
                .flatten()
                .map(|c| c.transform.content_pixels())
                .unwrap_or((0, 0, w - 1, h - 1));
            let peers: Vec<usize> = match crops.get(f).copied().flatten() {
                Some(c) => (0..frames.len())
                    .filter(|&g| g != f && crops[g].is_some_and(|o| o.transform == c.transform))
                    .collect(),
                None => Vec::new(),
            };
            let mut hole = GrayImage::new(w, h);
            for (x, y, m) in mask.enumerate_pixels() {
                if m.0[0] == 0 {
                    continue;
                }
                let mut chans: [Vec<u8>; 3] = Default::default();
                for &g in &peers {
                    if masks[g].get_pixel(x, y).0[0] == 0 {
                        let p = frames[g].get_pixel(x, y).0;
                        for c in 0..3 {
                            chans[c].push(p[c]);
                        }
                    }
                }
                if chans[0].is_empty() {
                    hole.put_pixel(x, y, image::Luma([1]));
                } else {
                    let v = [0, 1, 2].map(|c| median(&mut chans[c]));
                    out.put_pixel(x, y, image::Rgb(v));
                }
            }
            interpolate_fill(src, &hole_or_mask(&hole, mask), content, &mut out);
            out
        })
        .collect()
}

/// 1 = still to fill, 2 = masked but already filled, 0 = known.
fn hole_or_mask(hole: &GrayImage, mask: &GrayImage) -> GrayImage {
    GrayImage::from_fn(hole.width(), hole.height(), |x, y| {
        image::Luma([match (hole.get_pixel(x, y).0[0], mask.get_pixel(x, y).0[0]) {
            (1, _) => 1,
            (_, m) if m != 0 => 2,
            _ => 0,
        }])
    })
}

impl SpriteGenerator {
    fn colors(&self, bundle: &ConditioningBundle) -> Result<SpriteColors, GenerateError> {
        let (top, pants) = bundle.attributes.rgb(&self.palette)?;
        Ok(SpriteColors {
            top,
            pants,
            skin: self.skin,
        })
    }
}

/// True when the pose raster carries no signal inside the tile's mask.
fn pose_silent(pose: &RgbImage, mask: &GrayImage) -> bool {
    pose.pixels()
        .zip(mask.pixels())
        .all(|(p, m)| m.0[0] == 0 || p.0 == [0, 0, 0])
}

impl Generator for SpriteGenerator {
    fn name(&self) -> &str {
        "sprite"
    }

    fn generate(&self, bundle: &ConditioningBundle) -> Result<CanvasClip, GenerateError> {
        bundle.validate()?;
        let colors = self.colors(bundle)?;
        let layout = &bundle.masked_canvas.layout;
        let shape_err = |e: crate::canvas::CanvasError| GenerateError::Shape(e.to_string());
        let canvas_tiles = decompose_frames(&bundle.masked_canvas.frames, layout).map_err(shape_err)?;
        let mask_tiles = decompose_frames(&bundle.mask.frames, layout).map_err(shape_err)?;
        let pose_tiles = decompose_frames(&bundle.pose.frames, layout).map_err(shape_err)?;

        let tiles: Vec<Vec<RgbImage>> = (0..layout.slots())
            .map(|slot| {
                let masks = &mask_tiles[slot].frames;
                let mut frames = fill_tile_background(&canvas_tiles[slot].frames, masks, &bundle.masked_canvas.crops[slot]);
                for (f, frame) in frames.iter_mut().enumerate() {
                    let mask = &masks[f];
                    if pose_silent(&pose_tiles[slot].frames[f], mask) {
                        continue;
                    }
                    if let Some(joints) = bundle.keypoints_at(slot, f) {
                        render_sprite(frame, joints, &colors, Some(mask));
                    }
                }
                frames
            })
            .collect();
        let refs: Vec<Option<&[RgbImage]>> = tiles.iter().map(|t| Some(t.as_slice())).collect();
        let mut frames = compose_frames(&refs, layout, bundle.frame_count()).map_err(shape_err)?;
        preserve_background(&mut frames, bundle);
        Ok(CanvasClip {
            frames,
            layout: layout.clone(),
            crops: bundle.masked_canvas.crops.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Luma, Rgb};

    #[test]
    fn median_of_even_count_rounds() {
        assert_eq!(median(&mut [1, 4]), 3);
        assert_eq!(median(&mut [9, 1, 5]), 5);
    }

    #[test]
    fn row_interpolation_recovers_linear_ramp() {
        let src_full = RgbImage::from_fn(20, 6, |x, _| Rgb([(10 * x) as u8, 50, 0]));
        let mut mask = GrayImage::new(20, 6);
        for y in 1..5 {
            for x in 5..15 {
                mask.put_pixel(x, y, Luma([1]));
            }
        }
        let masked = super::super::apply_mask(&[src_full.clone()], &crate::mask::MaskVolume { frames: vec![mask.clone()] });
        let out = fill_tile_background(&masked, &[mask], &[None]);
        for (a, b) in out[0].pixels().zip(src_full.pixels()) {
            for c in 0..3 {
                assert!((a.0[c] as i32 - b.0[c] as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn fully_masked_row_uses_column() {
        let src = RgbImage::from_fn(4, 5, |_, y| Rgb([0, (40 * y) as u8, 0]));
        let mut mask = GrayImage::new(4, 5);
        for x in 0..4 {
            mask.put_pixel(x, 2, Luma([1]));
        }
        let out = fill_tile_background(&[src.clone()], &[mask], &[None]);
        assert_eq!(out[0].get_pixel(1, 2).0, [0, 80, 0]);
    }
}
