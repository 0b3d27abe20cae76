//! Skeleton rasters used as the motion control signal.

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canvas::{compose_frames, CanvasClip, CanvasError};
use crate::crop::{CropTransform, TileSize};
use crate::geometry::{project_skeleton, Keypoint};
use crate::mask::{dilate, MaskVolume};
use crate::scene::{CameraView, PedestrianTrack};
use crate::skeleton::{joint_color, limb_color, LIMBS};
use crate::sprite::{pixel_span, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseStyle {
    pub line_width: f64,
    pub joint_radius: f64,
    pub dilate_radius: u32,
    pub dilate_iterations: u32,
}

impl Default for PoseStyle {
    fn default() -> Self {
        PoseStyle {
            line_width: 4.0,
            joint_radius: 4.0,
            dilate_radius: 1,
            dilate_iterations: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRasterClip {
    pub frames: Vec<RgbImage>,
}

impl PoseRasterClip {
    pub fn zeros(frame_count: usize, width: u32, height: u32) -> Self {
        PoseRasterClip {
            frames: (0..frame_count).map(|_| RgbImage::new(width, height)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.frames.iter().all(|f| f.as_raw().iter().all(|&v| v == 0))
    }
}

fn fill(img: &mut RgbImage, shape: &Shape, color: [u8; 3]) {
    let (w, h) = img.dimensions();
    let Some((x0, y0, x1, y1)) = pixel_span(&shape.bounds(), w, h) else {
        return;
    };
    for y in y0..=y1 {
        for x in x0..=x1 {
            if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

/// Draws one skeleton: joint discs first, limbs over them. Invalid joints
/// and every limb touching one are skipped.
pub fn draw_pose(img: &mut RgbImage, joints: &[Keypoint], style: &PoseStyle) {
    for (j, k) in joints.iter().enumerate() {
        if k.valid {
            let disc = Shape::Disc {
                center: (k.u, k.v),
                radius: style.joint_radius,
            };
            fill(img, &disc, joint_color(j));
        }
    }
    for (l, &(a, b)) in LIMBS.iter().enumerate() {
        let (ka, kb) = (joints.get(a), joints.get(b));
        if let (Some(ka), Some(kb)) = (ka, kb) {
            if ka.valid && kb.valid {
                let seg = Shape::Capsule {
                    a: (ka.u, ka.v),
                    b: (kb.u, kb.v),
                    radius: style.line_width / 2.0,
                };
                fill(img, &seg, limb_color(l));
            }
        }
    }
}

/// Undilated tile raster: one frame per entry, `None` draws nothing.
pub fn rasterize_pose(keypoints: &[Option<Vec<Keypoint>>], tile: TileSize, style: &PoseStyle) -> Vec<RgbImage> {
    keypoints
        .par_iter()
        .map(|k| {
            let mut img = RgbImage::new(tile.width, tile.height);
            if let Some(joints) = k {
                draw_pose(&mut img, joints, style);
            }
            img
        })
        .collect()
}

/// Skeleton projected into `view` and mapped into tile coordinates.
pub fn tile_keypoints(view: &CameraView, skeleton: &[[f64; 3]], t: &CropTransform) -> Vec<Keypoint> {
    project_skeleton(view, skeleton)
        .joints
        .into_iter()
        .map(|k| {
            if !k.valid {
                return k;
            }
            let (u, v) = t.apply(k.u, k.v);
            Keypoint { u, v, valid: true }
        })
        .collect()
}

/// Per slot and frame tile keypoints of `track`, for every slot and frame
/// of `canvas` that carries a crop.
pub fn track_tile_keypoints(views: &[CameraView], track: &PedestrianTrack, canvas: &CanvasClip) -> Vec<Vec<Option<Vec<Keypoint>>>> {
    canvas
        .crops
        .iter()
        .enumerate()
        .map(|(slot, crops)| {
            let id = canvas.layout.view_order[slot];
            let Some(view) = views.iter().find(|v| v.id == id) else {
                return vec![None; crops.len()];
            };
            crops
                .iter()
                .enumerate()
                .map(|(f, crop)| {
                    let crop = crop.as_ref()?;
                    let skeleton = track.at(f)?.skeleton.as_ref()?;
                    Some(tile_keypoints(view, skeleton, &crop.transform))
                })
                .collect()
        })
        .collect()
}

/// Rasterizes and dilates every slot, then stitches the canvas-sized clip.
pub fn build_pose_raster(
    canvas: &CanvasClip,
    keypoints: &[Vec<Option<Vec<Keypoint>>>],
    style: &PoseStyle,
) -> Result<PoseRasterClip, CanvasError> {
    let layout = &canvas.layout;
    let frame_count = canvas.frame_count();
    if keypoints.len() != layout.slots() || keypoints.iter().any(|k| k.len() != frame_count) {
        return Err(CanvasError::DimensionMismatch("keypoint table does not match canvas".into()));
    }
    let tiles: Vec<Vec<RgbImage>> = keypoints
        .iter()
        .map(|slot| {
            rasterize_pose(slot, layout.tile, style)
                .into_par_iter()
                .map(|f| dilate(&f, style.dilate_radius, style.dilate_iterations))
                .collect()
        })
        .collect();
    let refs: Vec<Option<&[RgbImage]>> = tiles.iter().map(|t| Some(t.as_slice())).collect();
    Ok(PoseRasterClip {
        frames: compose_frames(&refs, layout, frame_count)?,
    })
}

/// Clears the raster wherever `mask` is set, so a removal edit regenerates
/// background with no pedestrian signal.
pub fn zero_pose_for_removal(raster: &PoseRasterClip, mask: &MaskVolume) -> PoseRasterClip {
    PoseRasterClip {
        frames: raster
            .frames
            .iter()
            .zip(&mask.frames)
            .map(|(r, m)| {
                let mut out = r.clone();
                for (p, mv) in out.pixels_mut().zip(m.pixels()) {
                    if mv.0[0] != 0 {
                        *p = Rgb([0, 0, 0]);
                    }
                }
                out
            })
            .collect(),
    }
}
