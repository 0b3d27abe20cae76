//! Edit requests and the single-edit flow: crop the target, build the
//! conditioning canvas, generate, and paste back.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeToken, Palette};
use crate::canvas::{compose_canvas, CanvasClip, CanvasLayout};
use crate::crop::{crop_track, CropConfig, CropError, TileVideo};
use crate::generators::{ConditioningBundle, Generator};
use crate::geometry::{box_corners, dominant_view};
use crate::mask::{build_mask, dilate_volume, MaskConfig, MaskVolume};
use crate::pose::{build_pose_raster, track_tile_keypoints, zero_pose_for_removal, PoseRasterClip, PoseStyle};
use crate::reintegrate::{reintegrate, DEFAULT_BLEND_BAND};
use crate::scene::{PedestrianTrack, Scene, TrackFrame, ViewId};
use crate::skeleton::skeleton_box;

/// Inflation of an inserted pedestrian's box over its joint extent.
pub const INSERT_BOX_INFLATE: f64 = 0.15;
/// Body thickness around the joint centre lines, metres per side.
pub const BODY_MARGIN: f64 = 0.15;

/// Box of an inserted pedestrian: joint extent grown by [`BODY_MARGIN`] on
/// every side, then inflated by [`INSERT_BOX_INFLATE`].
pub fn insert_box(joints: &[[f64; 3]]) -> crate::scene::Box3d {
    let mut b = skeleton_box(joints, 0.0);
    for s in &mut b.size {
        *s = (*s + 2.0 * BODY_MARGIN) * (1.0 + INSERT_BOX_INFLATE);
    }
    b
}

/// Per-frame world-space skeletons, one entry per clip frame from frame 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl Motion {
    pub fn from_track(track: &PedestrianTrack) -> Option<Motion> {
        let frames = track.frames.iter().map(|f| f.skeleton.clone()).collect::<Option<Vec<_>>>()?;
        Some(Motion { frames })
    }

    pub fn validate(&self, joint_count: usize) -> Result<(), EditError> {
        for (f, s) in self.frames.iter().enumerate() {
            if s.len() != joint_count {
                return Err(EditError::Motion(format!("frame {f} has {} joints, expected {joint_count}", s.len())));
            }
            if s.iter().flatten().any(|v| !v.is_finite()) {
                return Err(EditError::Motion(format!("frame {f} has a non-finite joint")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Motion, EditError> {
        let text = std::fs::read_to_string(path).map_err(|e| EditError::Motion(format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| EditError::Motion(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), EditError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| EditError::Motion(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| EditError::Motion(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum EditRequest {
    /// Re-render an existing pedestrian, optionally with new motion and
    /// clothing. Missing attributes keep the track's own.
    Replace {
        track_id: u32,
        #[serde(default)]
        motion: Option<Motion>,
        #[serde(default)]
        attributes: Option<AttributeToken>,
    },
    Insert {
        motion: Motion,
        attributes: AttributeToken,
    },
    Remove {
        track_id: u32,
    },
}

impl EditRequest {
    pub fn op(&self) -> &'static str {
        match self {
            EditRequest::Replace { .. } => "replace",
            EditRequest::Insert { .. } => "insert",
            EditRequest::Remove { .. } => "remove",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EditError {
    #[error("unknown track {0}")]
    UnknownTrack(u32),
    #[error("motion has {frames} frames but {needed} are required")]
    MotionTooShort { frames: usize, needed: usize },
    #[error("motion: {0}")]
    Motion(String),
    #[error("attributes: {0}")]
    Attribute(String),
    #[error("scene: {0}")]
    Scene(String),
    #[error("track {0} has frames without a skeleton")]
    MissingSkeleton(u32),
    #[error("{stage} stage: {message}")]
    Stage { stage: &'static str, message: String },
}

impl EditError {
    /// Bad input rather than a failing stage.
    pub fn is_validation(&self) -> bool {
        !matches!(self, EditError::Stage { .. })
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> EditError {
    move |e| EditError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditConfig {
    pub crop: CropConfig,
    pub mask: MaskConfig,
    pub pose: PoseStyle,
    pub blend_band: u32,
    pub seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            crop: CropConfig::default(),
            mask: MaskConfig::default(),
            pose: PoseStyle::default(),
            blend_band: DEFAULT_BLEND_BAND,
            seed: 0,
        }
    }
}

/// Every intermediate of one edit.
#[derive(Debug, Clone)]
pub struct EditArtifacts {
    /// Track whose boxes drive the crops (for a replace with new motion, the
    /// per-frame union of old and new boxes).
    pub crop_track: PedestrianTrack,
    /// Track whose skeleton drives the pose raster; `None` for removals.
    pub pose_track: Option<PedestrianTrack>,
    pub tiles: Vec<Option<TileVideo>>,
    pub canvas: CanvasClip,
    pub mask: MaskVolume,
    pub pose: PoseRasterClip,
    pub generated: CanvasClip,
    pub edited: Scene,
}

/// Frames `start..start+len` of `motion` as a track with [`insert_box`] boxes.
pub fn motion_track(motion: &Motion, track_id: u32, start: usize, len: usize, attributes: AttributeToken) -> PedestrianTrack {
    PedestrianTrack {
        track_id,
        start_frame: start,
        frames: motion.frames[start..start + len]
            .iter()
            .map(|s| TrackFrame {
                box3d: insert_box(s),
                skeleton: Some(s.clone()),
            })
            .collect(),
        dominant_view: ViewId::Front,
        attributes,
        hidden_views: Vec::new(),
    }
}

fn union_track(a: &PedestrianTrack, b: &PedestrianTrack) -> PedestrianTrack {
    let mut out = a.clone();
    for (fa, fb) in out.frames.iter_mut().zip(&b.frames) {
        let corners: Vec<[f64; 3]> = box_corners(&fa.box3d).into_iter().chain(box_corners(&fb.box3d)).collect();
        fa.box3d = skeleton_box(&corners, 0.0);
    }
    out
}

fn checked_motion(motion: &Motion, joint_count: usize, needed: usize) -> Result<(), EditError> {
    motion.validate(joint_count)?;
    if motion.frames.len() < needed {
        return Err(EditError::MotionTooShort {
            frames: motion.frames.len(),
            needed,
        });
    }
    Ok(())
}

struct Plan {
    crop_track: PedestrianTrack,
    pose_track: Option<PedestrianTrack>,
    attributes: AttributeToken,
    tracks_after: Vec<PedestrianTrack>,
}

fn plan(scene: &Scene, request: &EditRequest, palette: &Palette) -> Result<Plan, EditError> {
    let find = |id: u32| scene.track(id).ok_or(EditError::UnknownTrack(id));
    let validate_attrs = |a: &AttributeToken| a.validate(palette).map_err(|e| EditError::Attribute(e.to_string()));
    match request {
        EditRequest::Remove { track_id } => {
            let track = find(*track_id)?;
            Ok(Plan {
                crop_track: track.clone(),
                pose_track: None,
                attributes: track.attributes.clone(),
                tracks_after: scene.tracks.iter().filter(|t| t.track_id != *track_id).cloned().collect(),
            })
        }
        EditRequest::Replace {
            track_id,
            motion,
            attributes,
        } => {
            let track = find(*track_id)?;
            let attributes = attributes.clone().unwrap_or_else(|| track.attributes.clone());
            validate_attrs(&attributes)?;
            let mut new = match motion {
                Some(m) => {
                    checked_motion(m, scene.joint_count, scene.frame_count)?;
                    motion_track(m, track.track_id, track.start_frame, track.frames.len(), attributes.clone())
                }
                None => {
                    if track.frames.iter().any(|f| f.skeleton.is_none()) {
                        return Err(EditError::MissingSkeleton(track.track_id));
                    }
                    track.clone()
                }
            };
            new.attributes = attributes.clone();
            new.hidden_views = track.hidden_views.clone();
            let crop_track = if motion.is_some() { union_track(track, &new) } else { track.clone() };
            new.dominant_view = dominant_view(&scene.views, &new).unwrap_or(track.dominant_view);
            let tracks_after = scene
                .tracks
                .iter()
                .map(|t| if t.track_id == *track_id { new.clone() } else { t.clone() })
                .collect();
            Ok(Plan {
                crop_track,
                pose_track: Some(new),
                attributes,
                tracks_after,
            })
        }
        EditRequest::Insert { motion, attributes } => {
            validate_attrs(attributes)?;
            checked_motion(motion, scene.joint_count, scene.frame_count)?;
            let id = scene.tracks.iter().map(|t| t.track_id).max().map_or(1, |m| m + 1);
            let mut track = motion_track(motion, id, 0, scene.frame_count, attributes.clone());
            track.dominant_view = dominant_view(&scene.views, &track).unwrap_or(ViewId::Front);
            let mut tracks_after = scene.tracks.clone();
            tracks_after.push(track.clone());
            Ok(Plan {
                crop_track: track.clone(),
                pose_track: Some(track),
                attributes: attributes.clone(),
                tracks_after,
            })
        }
    }
}

/// Runs one edit end to end and returns the edited scene with all
/// intermediates. The input scene is not modified.
pub fn edit_scene(
    scene: &Scene,
    request: &EditRequest,
    generator: &dyn Generator,
    cfg: &EditConfig,
    palette: &Palette,
) -> Result<EditArtifacts, EditError> {
    scene.validate().map_err(|e| EditError::Scene(e.to_string()))?;
    let plan = plan(scene, request, palette)?;
    let frame_count = scene.frame_count;
    let layout = CanvasLayout::new(cfg.crop.tile);

    let tiles: Vec<Option<TileVideo>> = layout
        .view_order
        .iter()
        .map(|&view| match crop_track(scene, &plan.crop_track, view, &cfg.crop) {
            Ok(t) => Ok(Some(t)),
            Err(CropError::NeverVisible { .. }) => Ok(None),
            Err(e) => Err(stage("crop")(e)),
        })
        .collect::<Result<_, _>>()?;
    if tiles.iter().all(Option::is_none) {
        return Err(EditError::Stage {
            stage: "crop",
            message: format!("track {} is not visible in any view", plan.crop_track.track_id),
        });
    }
    let canvas = compose_canvas(&tiles, &layout, frame_count).map_err(stage("compose"))?;

    let mut mask = build_mask(&canvas, cfg.mask.mask_factor);
    if cfg.mask.dilate_radius > 0 && cfg.mask.dilate_iterations > 0 {
        mask = dilate_volume(&mask, cfg.mask.dilate_radius, cfg.mask.dilate_iterations);
    }

    let keypoints = match &plan.pose_track {
        Some(t) => track_tile_keypoints(&scene.views, t, &canvas),
        None => vec![vec![None; frame_count]; layout.slots()],
    };
    let mut pose = build_pose_raster(&canvas, &keypoints, &cfg.pose).map_err(stage("pose"))?;
    if plan.pose_track.is_none() {
        pose = zero_pose_for_removal(&pose, &mask);
    }

    let bundle = ConditioningBundle::new(&canvas, mask.clone(), pose.clone(), plan.attributes.clone(), cfg.seed, keypoints)
        .map_err(stage("condition"))?;
    let generated = generator.generate(&bundle).map_err(stage("generate"))?;
    let frames = reintegrate(&scene.frames, &generated, &mask, cfg.blend_band).map_err(stage("reintegrate"))?;

    let edited = Scene {
        views: scene.views.clone(),
        tracks: plan.tracks_after,
        frame_count,
        joint_count: scene.joint_count,
        frames,
    };
    Ok(EditArtifacts {
        crop_track: plan.crop_track,
        pose_track: plan.pose_track,
        tiles,
        canvas,
        mask,
        pose,
        generated,
        edited,
    })
}
