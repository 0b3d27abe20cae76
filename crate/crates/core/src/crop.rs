//! Dynamic pedestrian crops.
//!
//! Each frame's projected box is expanded by a fixed factor, grown to the
//! tile aspect ratio, snapped to integer pixels and moved inside the frame.
//! When the window is larger than the frame in some dimension the overflow is
//! kept as zero padding, so the window never distorts. The resulting
//! [`CropTransform`] maps continuous source coordinates to tile coordinates
//! and back.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_box3d, Rect, ViewBox2D};
use crate::imaging::{rgb_from_f64, sample_bilinear};
use crate::scene::{CameraView, PedestrianTrack, Scene, ViewId};

pub const DEFAULT_EXPAND_FACTOR: f64 = 1.6;
pub const DEFAULT_SMOOTHING_ALPHA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum CropError {
    #[error("degenerate rectangle ({0:?})")]
    DegenerateRect(Rect),
    #[error("expansion factor {0} must be finite and >= 1")]
    BadFactor(f64),
    #[error("track {track} is never visible in {view}")]
    NeverVisible { track: u32, view: ViewId },
}

/// Tile dimensions in pixels; height first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileSize {
    pub height: u32,
    pub width: u32,
}

impl Default for TileSize {
    fn default() -> Self {
        TileSize {
            height: 480,
            width: 240,
        }
    }
}

impl TileSize {
    pub fn new(height: u32, width: u32) -> Self {
        TileSize { height, width }
    }

    /// Height over width.
    pub fn aspect(&self) -> f64 {
        self.height as f64 / self.width as f64
    }
}

/// Integer pixel rectangle, half-open: `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl PixelRect {
    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn to_rect(&self) -> Rect {
        Rect::new(self.x0 as f64, self.y0 as f64, self.x1 as f64, self.y1 as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Padding {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl Padding {
    pub fn is_zero(&self) -> bool {
        *self == Padding::default()
    }
}

/// An in-frame source rectangle plus the zero padding that completes it to
/// the requested aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub source_rect: PixelRect,
    pub pad: Padding,
}

impl CropWindow {
    pub fn padded_width(&self) -> i64 {
        self.source_rect.width() + self.pad.left as i64 + self.pad.right as i64
    }

    pub fn padded_height(&self) -> i64 {
        self.source_rect.height() + self.pad.top as i64 + self.pad.bottom as i64
    }
}

/// Affine map between a source frame and its tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub view: ViewId,
    pub source_rect: PixelRect,
    pub pad: Padding,
    pub tile: TileSize,
    /// `(s_y, s_x)`: tile pixels per source pixel.
    pub scale: (f64, f64),
}

impl CropTransform {
    pub fn new(view: ViewId, window: CropWindow, tile: TileSize) -> Self {
        let scale = (
            tile.height as f64 / window.padded_height() as f64,
            tile.width as f64 / window.padded_width() as f64,
        );
        CropTransform {
            view,
            source_rect: window.source_rect,
            pad: window.pad,
            tile,
            scale,
        }
    }

    pub fn window(&self) -> CropWindow {
        CropWindow {
            source_rect: self.source_rect,
            pad: self.pad,
        }
    }

    /// Source-space position of the padded window's top-left corner.
    fn origin(&self) -> (f64, f64) {
        (
            (self.source_rect.x0 - self.pad.left as i64) as f64,
            (self.source_rect.y0 - self.pad.top as i64) as f64,
        )
    }

    /// Continuous source coordinates to continuous tile coordinates.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (ox, oy) = self.origin();
        ((x - ox) * self.scale.1, (y - oy) * self.scale.0)
    }

    /// Continuous tile coordinates to continuous source coordinates.
    pub fn invert(&self, tx: f64, ty: f64) -> (f64, f64) {
        let (ox, oy) = self.origin();
        (tx / self.scale.1 + ox, ty / self.scale.0 + oy)
    }

    pub fn apply_rect(&self, r: &Rect) -> Rect {
        let (x0, y0) = self.apply(r.x_min, r.y_min);
        let (x1, y1) = self.apply(r.x_max, r.y_max);
        Rect::new(x0, y0, x1, y1)
    }

    pub fn invert_rect(&self, r: &Rect) -> Rect {
        let (x0, y0) = self.invert(r.x_min, r.y_min);
        let (x1, y1) = self.invert(r.x_max, r.y_max);
        Rect::new(x0, y0, x1, y1)
    }

    /// The non-pad part of the tile, in continuous tile coordinates.
    pub fn content_rect(&self) -> Rect {
        self.apply_rect(&self.source_rect.to_rect())
    }

    /// Inclusive pixel-index box `(x0, y0, x1, y1)` of tile pixels whose
    /// centres fall inside the content rect.
    pub fn content_pixels(&self) -> (u32, u32, u32, u32) {
        let r = self.content_rect();
        let lo = |v: f64| (v - 0.5).ceil().max(0.0) as u32;
        let hi = |v: f64, n: u32| ((v - 0.5).ceil() as i64 - 1).clamp(0, n as i64 - 1) as u32;
        (
            lo(r.x_min).min(self.tile.width - 1),
            lo(r.y_min).min(self.tile.height - 1),
            hi(r.x_max, self.tile.width),
            hi(r.y_max, self.tile.height),
        )
    }
}

/// Scales `rect` by `factor` in width and height about its centre.
pub fn expand_rect(rect: &Rect, factor: f64) -> Result<Rect, CropError> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(CropError::BadFactor(factor));
    }
    if !(rect.width() > 0.0 && rect.height() > 0.0) {
        return Err(CropError::DegenerateRect(*rect));
    }
    let (cx, cy) = rect.center();
    Ok(Rect::from_center(cx, cy, rect.width() * factor, rect.height() * factor))
}

/// Grows `rect` about its centre to height/width ratio `aspect`, snaps it to
/// integer pixels and moves it inside a `frame_width × frame_height` frame.
/// Dimensions larger than the frame are clamped and the overflow becomes pad.
pub fn fit_aspect(rect: &Rect, aspect: f64, frame_width: u32, frame_height: u32) -> CropWindow {
    assert!(aspect > 0.0, "aspect must be positive");
    let (cx, cy) = rect.center();
    let (w, h) = (rect.width().max(1.0), rect.height().max(1.0));
    // the height follows from the (possibly grown) width
    let w = if h < aspect * w { w } else { h / aspect };
    let width = (w.round() as i64).max(1);
    let height = ((width as f64 * aspect).round() as i64).max(1);
    let (x0, x1, pad_l, pad_r) = place(cx, width, frame_width as i64);
    let (y0, y1, pad_t, pad_b) = place(cy, height, frame_height as i64);
    CropWindow {
        source_rect: PixelRect { x0, y0, x1, y1 },
        pad: Padding {
            left: pad_l,
            top: pad_t,
            right: pad_r,
            bottom: pad_b,
        },
    }
}

/// One-dimensional placement: returns the in-frame span and the padding on
/// each side.
fn place(center: f64, len: i64, frame: i64) -> (i64, i64, u32, u32) {
    let start = (center - len as f64 / 2.0).round() as i64;
    if len <= frame {
        let s = start.clamp(0, frame - len);
        (s, s + len, 0, 0)
    } else {
        let s = start.clamp(frame - len, 0);
        (0, frame, (-s) as u32, (s + len - frame) as u32)
    }
}

/// Resamples the window described by `t` from `frame` into a tile. Pad
/// pixels are zero.
pub fn crop_frame(frame: &RgbImage, t: &CropTransform) -> RgbImage {
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    RgbImage::from_fn(t.tile.width, t.tile.height, |j, i| {
        let (x, y) = t.invert(j as f64 + 0.5, i as f64 + 0.5);
        if x < 0.0 || y < 0.0 || x >= fw || y >= fh {
            return image::Rgb([0, 0, 0]);
        }
        rgb_from_f64(sample_bilinear(frame, x - 0.5, y - 0.5))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropConfig {
    pub tile: TileSize,
    pub expand_factor: f64,
    /// Exponential smoothing weight of the newest frame's rect, if enabled.
    pub smoothing: Option<f64>,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig {
            tile: TileSize::default(),
            expand_factor: DEFAULT_EXPAND_FACTOR,
            smoothing: None,
        }
    }
}

/// A frame's projected box and the crop derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameCrop {
    pub bbox: ViewBox2D,
    pub transform: CropTransform,
}

/// Per-frame crops of `track` in `view` over a clip of `frame_count` frames.
/// Frames where the track is absent, hidden or out of view are `None`.
pub fn plan_view_crops(
    view: &CameraView,
    track: &PedestrianTrack,
    frame_count: usize,
    cfg: &CropConfig,
) -> Result<Vec<Option<FrameCrop>>, CropError> {
    let mut boxes: Vec<Option<(ViewBox2D, Rect)>> = Vec::with_capacity(frame_count);
    for f in 0..frame_count {
        let entry = match track.at(f) {
            Some(tf) if !track.is_hidden_in(view.id) => {
                let vb = project_box3d(view, &tf.box3d);
                match vb.rect {
                    Some(r) if r.width() > 0.0 && r.height() > 0.0 => {
                        Some((vb, expand_rect(&r, cfg.expand_factor)?))
                    }
                    _ => None,
                }
            }
            _ => None,
        };
        boxes.push(entry);
    }

    if let Some(alpha) = cfg.smoothing {
        let mut prev: Option<Rect> = None;
        for entry in boxes.iter_mut() {
            match entry {
                Some((_, r)) => {
                    if let Some(p) = prev {
                        let (cx, cy) = r.center();
                        let (px, py) = p.center();
                        let mix = |a: f64, b: f64| alpha * a + (1.0 - alpha) * b;
                        *r = Rect::from_center(
                            mix(cx, px),
                            mix(cy, py),
                            mix(r.width(), p.width()),
                            mix(r.height(), p.height()),
                        );
                    }
                    prev = Some(*r);
                }
                None => prev = None,
            }
        }
    }

    Ok(boxes
        .into_iter()
        .map(|entry| {
            entry.map(|(bbox, expanded)| {
                let window = fit_aspect(&expanded, cfg.tile.aspect(), view.width, view.height);
                FrameCrop {
                    bbox,
                    transform: CropTransform::new(view.id, window, cfg.tile),
                }
            })
        })
        .collect())
}

/// A tile video cut from one view, with the crop record of every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TileVideo {
    pub view: ViewId,
    pub frames: Vec<RgbImage>,
    pub crops: Vec<Option<FrameCrop>>,
}

/// Crops `track` out of every frame of `view`. Frames without a crop give
/// zero tiles.
pub fn crop_track(
    scene: &Scene,
    track: &PedestrianTrack,
    view: ViewId,
    cfg: &CropConfig,
) -> Result<TileVideo, CropError> {
    let camera = scene.view(view);
    let crops = plan_view_crops(camera, track, scene.frame_count, cfg)?;
    if crops.iter().all(Option::is_none) {
        return Err(CropError::NeverVisible {
            track: track.track_id,
            view,
        });
    }
    let source = scene.frames.view(view);
    let frames = crops
        .par_iter()
        .enumerate()
        .map(|(f, crop)| match crop {
            Some(c) => crop_frame(&source[f], &c.transform),
            None => RgbImage::new(cfg.tile.width, cfg.tile.height),
        })
        .collect();
    Ok(TileVideo { view, frames, crops })
}
