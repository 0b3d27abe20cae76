//! Multi-view pedestrian video editing engine.
//!
//! The crate takes a calibrated six-camera clip with 3D pedestrian tracks and
//! runs the editing flow end to end:
//!
//! 1. [`geometry`] projects 3D boxes and skeletons into every view.
//! 2. [`crop`] cuts a dynamic, aspect-fitted window around the pedestrian and
//!    resamples it to a fixed tile; [`canvas`] stitches the six tiles into a
//!    2×3 composite.
//! 3. [`mask`] and [`pose`] build the editable-region volume and the skeleton
//!    raster that condition generation; [`attributes`] holds the clothing
//!    colour token.
//! 4. [`generators`] fills the masked region (identity, procedural sprite, or
//!    a small conditioned DDPM).
//! 5. [`reintegrate`] pastes the result back into the source frames with a
//!    linear seam ramp.
//!
//! [`eval`] scores BEV detections with centre-distance gates, [`fixture`]
//! renders synthetic scenes with exact ground truth, and [`pipeline`] wires
//! everything into reproducible runs with a checksum manifest.

pub mod attributes;
pub mod canvas;
pub mod crop;
pub mod edit;
pub mod eval;
pub mod fixture;
pub mod generators;
pub mod geometry;
pub mod imaging;
pub mod mask;
pub mod pipeline;
pub mod pose;
pub mod reintegrate;
pub mod scene;
pub mod skeleton;
pub mod sprite;

pub use attributes::{AttributeToken, Palette};
pub use canvas::{CanvasClip, CanvasLayout};
pub use crop::{CropConfig, CropTransform, TileSize};
pub use edit::{EditRequest, Motion};
pub use eval::{ApResult, DetectionSet};
pub use geometry::{Rect, ViewBox2D, Visibility};
pub use mask::MaskVolume;
pub use pose::PoseRasterClip;
pub use scene::{Box3d, CameraView, PedestrianTrack, Scene, ViewId};
