//! Stitching per-view tiles into the 2×3 composite and cutting them back out.

use image::{imageops, ImageBuffer, Pixel, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crop::{FrameCrop, TileSize, TileVideo};
use crate::scene::ViewId;

#[derive(Debug, Error, PartialEq)]
pub enum CanvasError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid layout: {0}")]
    Layout(String),
}

/// Row-major arrangement of view tiles on the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasLayout {
    pub rows: usize,
    pub cols: usize,
    pub tile: TileSize,
    pub view_order: Vec<ViewId>,
    pub placeholders: Vec<bool>,
}

impl Default for CanvasLayout {
    fn default() -> Self {
        CanvasLayout::new(TileSize::default())
    }
}

impl CanvasLayout {
    /// 2×3 layout in canonical view order.
    pub fn new(tile: TileSize) -> Self {
        CanvasLayout {
            rows: 2,
            cols: 3,
            tile,
            view_order: ViewId::ALL.to_vec(),
            placeholders: vec![false; 6],
        }
    }

    pub fn with_order(tile: TileSize, view_order: Vec<ViewId>) -> Result<Self, CanvasError> {
        let layout = CanvasLayout {
            view_order,
            ..CanvasLayout::new(tile)
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<(), CanvasError> {
        let slots = self.rows * self.cols;
        if self.view_order.len() != slots || self.placeholders.len() != slots {
            return Err(CanvasError::Layout(format!(
                "{} views / {} flags for {slots} slots",
                self.view_order.len(),
                self.placeholders.len()
            )));
        }
        let mut seen = [false; 6];
        for v in &self.view_order {
            if std::mem::replace(&mut seen[v.index()], true) {
                return Err(CanvasError::Layout(format!("view {v} appears twice")));
            }
        }
        if self.tile.width == 0 || self.tile.height == 0 {
            return Err(CanvasError::Layout("empty tile".into()));
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.rows * self.cols
    }

    pub fn width(&self) -> u32 {
        self.cols as u32 * self.tile.width
    }

    pub fn height(&self) -> u32 {
        self.rows as u32 * self.tile.height
    }

    pub fn slot_origin(&self, slot: usize) -> (u32, u32) {
        (
            (slot % self.cols) as u32 * self.tile.width,
            (slot / self.cols) as u32 * self.tile.height,
        )
    }

    pub fn slot_of(&self, view: ViewId) -> Option<usize> {
        self.view_order.iter().position(|&v| v == view)
    }

    pub fn slot_at(&self, x: u32, y: u32) -> usize {
        (y / self.tile.height) as usize * self.cols + (x / self.tile.width) as usize
    }
}

type Frames<P> = Vec<ImageBuffer<P, Vec<<P as Pixel>::Subpixel>>>;

/// One slot of a decomposed canvas.
#[derive(Clone)]
pub struct Tile<P: Pixel> {
    pub frames: Frames<P>,
    pub placeholder: bool,
}

/// Places `tiles` (slot order, `None` = placeholder) onto zeroed canvases.
pub fn compose_frames<P: Pixel + 'static>(
    tiles: &[Option<&[ImageBuffer<P, Vec<P::Subpixel>>]>],
    layout: &CanvasLayout,
    frame_count: usize,
) -> Result<Frames<P>, CanvasError> {
    if tiles.len() != layout.slots() {
        return Err(CanvasError::DimensionMismatch(format!(
            "{} tiles for {} slots",
            tiles.len(),
            layout.slots()
        )));
    }
    for (slot, tile) in tiles.iter().enumerate() {
        let Some(frames) = tile else { continue };
        if frames.len() != frame_count {
            return Err(CanvasError::DimensionMismatch(format!(
                "slot {slot} has {} frames, expected {frame_count}",
                frames.len()
            )));
        }
        if let Some(f) = frames.iter().find(|f| f.dimensions() != (layout.tile.width, layout.tile.height)) {
            return Err(CanvasError::DimensionMismatch(format!(
                "slot {slot} tile is {}x{}, layout expects {}x{}",
                f.width(),
                f.height(),
                layout.tile.width,
                layout.tile.height
            )));
        }
    }
    Ok((0..frame_count)
        .map(|f| {
            let mut canvas = ImageBuffer::new(layout.width(), layout.height());
            for (slot, tile) in tiles.iter().enumerate() {
                if let Some(frames) = tile {
                    let (x, y) = layout.slot_origin(slot);
                    imageops::replace(&mut canvas, &frames[f], x as i64, y as i64);
                }
            }
            canvas
        })
        .collect())
}

/// Cuts every slot out of `frames`. Placeholder slots come back flagged.
pub fn decompose_frames<P: Pixel + 'static>(
    frames: &[ImageBuffer<P, Vec<P::Subpixel>>],
    layout: &CanvasLayout,
) -> Result<Vec<Tile<P>>, CanvasError> {
    if let Some(f) = frames.iter().find(|f| f.dimensions() != (layout.width(), layout.height())) {
        return Err(CanvasError::DimensionMismatch(format!(
            "canvas is {}x{}, layout expects {}x{}",
            f.width(),
            f.height(),
            layout.width(),
            layout.height()
        )));
    }
    Ok((0..layout.slots())
        .map(|slot| {
            let (x, y) = layout.slot_origin(slot);
            Tile {
                frames: frames
                    .iter()
                    .map(|f| imageops::crop_imm(f, x, y, layout.tile.width, layout.tile.height).to_image())
                    .collect(),
                placeholder: layout.placeholders[slot],
            }
        })
        .collect())
}

/// The stitched RGB clip together with the crop record of every slot and
/// frame (`None` for placeholders and frames without a crop).
#[derive(Debug, Clone, PartialEq)]
pub struct CanvasClip {
    pub frames: Vec<RgbImage>,
    pub layout: CanvasLayout,
    pub crops: Vec<Vec<Option<FrameCrop>>>,
}

impl CanvasClip {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn crop(&self, slot: usize, frame: usize) -> Option<&FrameCrop> {
        self.crops[slot][frame].as_ref()
    }
}

/// Composes per-view tile videos. `tiles` is indexed by slot of `layout`;
/// `None` marks a placeholder. The placeholder flags of the returned layout
/// are set from `tiles`.
pub fn compose_canvas(
    tiles: &[Option<TileVideo>],
    layout: &CanvasLayout,
    frame_count: usize,
) -> Result<CanvasClip, CanvasError> {
    layout.validate()?;
    for (slot, tile) in tiles.iter().enumerate() {
        if let Some(t) = tile {
            if layout.view_order.get(slot) != Some(&t.view) {
                return Err(CanvasError::DimensionMismatch(format!(
                    "slot {slot} holds {} but layout expects {:?}",
                    t.view,
                    layout.view_order.get(slot)
                )));
            }
        }
    }
    let refs: Vec<Option<&[RgbImage]>> = tiles.iter().map(|t| t.as_ref().map(|t| t.frames.as_slice())).collect();
    let frames = compose_frames(&refs, layout, frame_count)?;
    let mut layout = layout.clone();
    layout.placeholders = tiles.iter().map(Option::is_none).collect();
    let crops = tiles
        .iter()
        .map(|t| match t {
            Some(t) => t.crops.clone(),
            None => vec![None; frame_count],
        })
        .collect();
    Ok(CanvasClip {
        frames,
        layout,
        crops,
    })
}

/// Inverse of [`compose_canvas`]: placeholders come back as `None`.
pub fn decompose_canvas(clip: &CanvasClip) -> Result<Vec<Option<TileVideo>>, CanvasError> {
    let tiles = decompose_frames(&clip.frames, &clip.layout)?;
    Ok(tiles
        .into_iter()
        .enumerate()
        .map(|(slot, tile)| {
            (!tile.placeholder).then(|| TileVideo {
                view: clip.layout.view_order[slot],
                frames: tile.frames,
                crops: clip.crops[slot].clone(),
            })
        })
        .collect())
}
