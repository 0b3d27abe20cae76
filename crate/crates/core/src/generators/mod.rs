//! Generation backends behind one contract: fill the masked part of a
//! conditioned canvas clip and leave every other pixel exactly as given.

pub mod checkpoint;
pub mod ddpm;
pub mod denoiser;
pub mod latent;
pub mod schedule;
pub mod sprite_gen;
pub mod train;

use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::attributes::{AttributeError, AttributeToken};
use crate::canvas::CanvasClip;
use crate::geometry::Keypoint;
use crate::mask::MaskVolume;
use crate::pose::PoseRasterClip;

pub use ddpm::DdpmGenerator;
pub use sprite_gen::SpriteGenerator;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("bundle shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error("latent codec: {0}")]
    Latent(String),
    #[error("training diverged at step {step}: loss {loss}")]
    NonFinite { step: usize, loss: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Per slot, per frame tile-space skeleton.
pub type TileKeypoints = Vec<Vec<Option<Vec<Keypoint>>>>;

/// Everything a generator sees.
#[derive(Debug, Clone)]
pub struct ConditioningBundle {
    /// Canvas with every masked pixel zeroed.
    pub masked_canvas: CanvasClip,
    pub mask: MaskVolume,
    pub pose: PoseRasterClip,
    pub attributes: AttributeToken,
    pub seed: u64,
    /// Tile-space keypoints the pose raster was drawn from. Only the sprite
    /// backend reads them; may be empty.
    pub keypoints: TileKeypoints,
}

/// Copy of `frames` with masked pixels set to zero.
pub fn apply_mask(frames: &[RgbImage], mask: &MaskVolume) -> Vec<RgbImage> {
    frames
        .iter()
        .zip(&mask.frames)
        .map(|(f, m)| {
            let mut out = f.clone();
            for (p, mv) in out.pixels_mut().zip(m.pixels()) {
                if mv.0[0] != 0 {
                    *p = Rgb([0, 0, 0]);
                }
            }
            out
        })
        .collect()
}

impl ConditioningBundle {
    /// Masks `canvas` and checks the result.
    pub fn new(
        canvas: &CanvasClip,
        mask: MaskVolume,
        pose: PoseRasterClip,
        attributes: AttributeToken,
        seed: u64,
        keypoints: TileKeypoints,
    ) -> Result<Self, GenerateError> {
        if canvas.frames.len() != mask.frames.len() {
            return Err(GenerateError::Shape(format!(
                "canvas has {} frames, mask {}",
                canvas.frames.len(),
                mask.frames.len()
            )));
        }
        let masked_canvas = CanvasClip {
            frames: apply_mask(&canvas.frames, &mask),
            layout: canvas.layout.clone(),
            crops: canvas.crops.clone(),
        };
        let bundle = ConditioningBundle {
            masked_canvas,
            mask,
            pose,
            attributes,
            seed,
            keypoints,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn frame_count(&self) -> usize {
        self.masked_canvas.frames.len()
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let t = self.frame_count();
        if self.mask.frames.len() != t || self.pose.frames.len() != t {
            return Err(GenerateError::Shape(format!(
                "frame counts: canvas {t}, mask {}, pose {}",
                self.mask.frames.len(),
                self.pose.frames.len()
            )));
        }
        let dims = (self.masked_canvas.layout.width(), self.masked_canvas.layout.height());
        for f in 0..t {
            let c = self.masked_canvas.frames[f].dimensions();
            let m = self.mask.frames[f].dimensions();
            let p = self.pose.frames[f].dimensions();
            if c != dims || m != dims || p != dims {
                return Err(GenerateError::Shape(format!(
                    "frame {f}: canvas {c:?}, mask {m:?}, pose {p:?}, layout {dims:?}"
                )));
            }
        }
        if !self.mask.is_binary() {
            return Err(GenerateError::Invalid("mask is not binary".into()));
        }
        for (f, (c, m)) in self.masked_canvas.frames.iter().zip(&self.mask.frames).enumerate() {
            if c.pixels().zip(m.pixels()).any(|(p, mv)| mv.0[0] != 0 && p.0 != [0, 0, 0]) {
                return Err(GenerateError::Invalid(format!("frame {f}: masked pixel is not zero")));
            }
        }
        if !self.keypoints.is_empty()
            && (self.keypoints.len() != self.masked_canvas.layout.slots() || self.keypoints.iter().any(|k| k.len() != t))
        {
            return Err(GenerateError::Shape("keypoint table does not match canvas".into()));
        }
        Ok(())
    }

    pub fn keypoints_at(&self, slot: usize, frame: usize) -> Option<&[Keypoint]> {
        self.keypoints.get(slot)?.get(frame)?.as_deref()
    }
}

pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, bundle: &ConditioningBundle) -> Result<CanvasClip, GenerateError>;
}

/// Overwrites every unmasked pixel of `frames` with the masked canvas.
pub fn preserve_background(frames: &mut [RgbImage], bundle: &ConditioningBundle) {
    for ((out, src), m) in frames.iter_mut().zip(&bundle.masked_canvas.frames).zip(&bundle.mask.frames) {
        for ((o, s), mv) in out.pixels_mut().zip(src.pixels()).zip(m.pixels()) {
            if mv.0[0] == 0 {
                *o = *s;
            }
        }
    }
}

/// Returns the masked canvas unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityGenerator;

impl Generator for IdentityGenerator {
    fn name(&self) -> &str {
        "identity"
    }

    fn generate(&self, bundle: &ConditioningBundle) -> Result<CanvasClip, GenerateError> {
        bundle.validate()?;
        Ok(bundle.masked_canvas.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Identity,
    Sprite,
    Ddpm,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Identity => "identity",
            Backend::Sprite => "sprite",
            Backend::Ddpm => "ddpm",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Backend::Identity),
            "sprite" => Ok(Backend::Sprite),
            "ddpm" => Ok(Backend::Ddpm),
            other => Err(format!("unknown backend `{other}` (identity, sprite, ddpm)")),
        }
    }
}
