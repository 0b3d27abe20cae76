//! Scene data model: the six-camera rig, pedestrian tracks and the frame store,
//! plus the on-disk descriptor format.
//!
//! A scene directory looks like
//!
//! ```text
//! scene.json
//! frames/FRONT_LEFT/0000.png
//! frames/FRONT_LEFT/0001.png
//! ...
//! ```
//!
//! `scene.json` carries the calibration, the tracks and the relative path of
//! every frame. Frames are lossless PNG so a save/load cycle is bit-exact.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::AttributeToken;

pub const DESCRIPTOR_FILE: &str = "scene.json";
pub const DESCRIPTOR_VERSION: u32 = 1;
pub const DEFAULT_JOINT_COUNT: usize = 17;
pub const DEFAULT_FRAME_COUNT: usize = 85;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl SceneError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        SceneError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Camera position on the six-camera rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViewId {
    FrontLeft,
    Front,
    FrontRight,
    BackLeft,
    Back,
    BackRight,
}

impl ViewId {
    pub const ALL: [ViewId; 6] = [
        ViewId::FrontLeft,
        ViewId::Front,
        ViewId::FrontRight,
        ViewId::BackLeft,
        ViewId::Back,
        ViewId::BackRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ViewId::FrontLeft => "FRONT_LEFT",
            ViewId::Front => "FRONT",
            ViewId::FrontRight => "FRONT_RIGHT",
            ViewId::BackLeft => "BACK_LEFT",
            ViewId::Back => "BACK",
            ViewId::BackRight => "BACK_RIGHT",
        }
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViewId::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown view id `{s}`"))
    }
}

/// A calibrated pinhole camera. Extrinsics map world points into the camera
/// frame (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub id: ViewId,
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: u32,
    pub height: u32,
}

impl CameraView {
    pub fn new(
        id: ViewId,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, SceneError> {
        let view = CameraView {
            id,
            intrinsics,
            rotation,
            translation,
            width,
            height,
        };
        view.validate()?;
        Ok(view)
    }

    /// Level camera at `position` looking along world heading `yaw` (radians,
    /// counter-clockwise from +x, z up).
    pub fn looking_along(
        id: ViewId,
        position: [f64; 3],
        yaw: f64,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Self {
        let (s, c) = yaw.sin_cos();
        let forward = Vector3::new(c, s, 0.0);
        let right = Vector3::new(s, -c, 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let center = Vector3::from(position);
        let translation = -(rotation * center);
        let intrinsics = Matrix3::new(
            focal,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        CameraView {
            id,
            intrinsics,
            rotation,
            translation,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let field = |name: &str| format!("views[{}].{name}", self.id);
        let k = &self.intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(SceneError::invalid(field("intrinsics"), "K must be upper-triangular"));
        }
        if k[(2, 2)] != 1.0 {
            return Err(SceneError::invalid(field("intrinsics"), "K[2][2] must equal 1"));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(SceneError::invalid(field("intrinsics"), "focal lengths must be positive"));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::invalid(field("intrinsics"), "non-finite entry"));
        }
        let r = &self.rotation;
        let gram = r.transpose() * r;
        let err = (gram - Matrix3::identity()).abs().max();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(SceneError::invalid(
                field("rotation"),
                format!("not orthonormal (max |RᵀR − I| = {err:e})"),
            ));
        }
        let det = r.determinant();
        if det <= 0.0 {
            return Err(SceneError::invalid(
                field("rotation"),
                format!("determinant {det:.6} is not +1 (reflection)"),
            ));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::invalid(field("translation"), "non-finite entry"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::invalid(field("width"), "image dimensions must be positive"));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    pub fn camera_to_world(&self, c: &Vector3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (c - self.translation))
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        self.camera_to_world(&Vector3::zeros())
    }
}

/// Oriented 3D box: geometric centre, size `(w, l, h)` in metres and yaw about
/// the world up axis. `l` runs along the heading, `w` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3d {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub box3d: Box3d,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Vec<[f64; 3]>>,
}

/// A pedestrian present over a contiguous run of clip frames starting at
/// `start_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianTrack {
    pub track_id: u32,
    pub start_frame: usize,
    pub frames: Vec<TrackFrame>,
    pub dominant_view: ViewId,
    pub attributes: AttributeToken,
    /// Views forced onto the placeholder path (manual occlusion override).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hidden_views: Vec<ViewId>,
}

impl PedestrianTrack {
    pub fn end_frame(&self) -> usize {
        self.start_frame + self.frames.len()
    }

    /// Record for clip frame `frame`, if the track exists there.
    pub fn at(&self, frame: usize) -> Option<&TrackFrame> {
        frame
            .checked_sub(self.start_frame)
            .and_then(|i| self.frames.get(i))
    }

    pub fn is_hidden_in(&self, view: ViewId) -> bool {
        self.hidden_views.contains(&view)
    }
}

/// Per-view, per-frame RGB images, indexed by [`ViewId::index`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameStore {
    views: Vec<Vec<RgbImage>>,
}

impl FrameStore {
    pub fn new(views: Vec<Vec<RgbImage>>) -> Self {
        FrameStore { views }
    }

    pub fn view(&self, id: ViewId) -> &[RgbImage] {
        &self.views[id.index()]
    }

    pub fn view_mut(&mut self, id: ViewId) -> &mut Vec<RgbImage> {
        &mut self.views[id.index()]
    }

    pub fn frame(&self, id: ViewId, frame: usize) -> &RgbImage {
        &self.views[id.index()][frame]
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn frame_total(&self) -> usize {
        self.views.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Cameras in canonical [`ViewId::ALL`] order.
    pub views: Vec<CameraView>,
    pub tracks: Vec<PedestrianTrack>,
    pub frame_count: usize,
    pub joint_count: usize,
    pub frames: FrameStore,
}

impl Scene {
    pub fn view(&self, id: ViewId) -> &CameraView {
        &self.views[id.index()]
    }

    pub fn track(&self, track_id: u32) -> Option<&PedestrianTrack> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    /// Checks every type invariant. Errors name the offending field.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.views.len() != ViewId::ALL.len() {
            return Err(SceneError::invalid(
                "views",
                format!("expected 6 views, found {}", self.views.len()),
            ));
        }
        for (i, (view, expected)) in self.views.iter().zip(ViewId::ALL).enumerate() {
            if view.id != expected {
                return Err(SceneError::invalid(
                    format!("views[{i}].id"),
                    format!("expected {expected} in canonical slot {i}, found {}", view.id),
                ));
            }
            view.validate()?;
        }
        if self.frame_count == 0 {
            return Err(SceneError::invalid("frame_count", "must be at least 1"));
        }
        if self.joint_count == 0 {
            return Err(SceneError::invalid("joint_count", "must be at least 1"));
        }
        if self.frames.view_count() != 6 {
            return Err(SceneError::invalid("frames", "frame store must hold 6 views"));
        }
        for view in &self.views {
            let frames = self.frames.view(view.id);
            if frames.len() != self.frame_count {
                return Err(SceneError::invalid(
                    format!("frames.{}", view.id),
                    format!("expected {} frames, found {}", self.frame_count, frames.len()),
                ));
            }
            for (f, img) in frames.iter().enumerate() {
                if img.dimensions() != (view.width, view.height) {
                    return Err(SceneError::invalid(
                        format!("frames.{}[{f}]", view.id),
                        format!(
                            "image is {}x{}, view expects {}x{}",
                            img.width(),
                            img.height(),
                            view.width,
                            view.height
                        ),
                    ));
                }
            }
        }
        let mut ids = HashSet::new();
        for (i, track) in self.tracks.iter().enumerate() {
            let field = |name: &str| format!("tracks[{i}].{name}");
            if !ids.insert(track.track_id) {
                return Err(SceneError::invalid(
                    field("track_id"),
                    format!("duplicate id {}", track.track_id),
                ));
            }
            if track.frames.is_empty() {
                return Err(SceneError::invalid(field("frames"), "track has no frames"));
            }
            if track.end_frame() > self.frame_count {
                return Err(SceneError::invalid(
                    field("frames"),
                    format!(
                        "frames {}..{} exceed clip length {}",
                        track.start_frame,
                        track.end_frame(),
                        self.frame_count
                    ),
                ));
            }
            for (f, tf) in track.frames.iter().enumerate() {
                let b = &tf.box3d;
                if !b.size.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    return Err(SceneError::invalid(
                        format!("tracks[{i}].frames[{f}].box3d.size"),
                        "box sizes must be strictly positive",
                    ));
                }
                if !b.center.iter().chain([&b.yaw]).all(|v| v.is_finite()) {
                    return Err(SceneError::invalid(
                        format!("tracks[{i}].frames[{f}].box3d"),
                        "non-finite centre or yaw",
                    ));
                }
                if let Some(sk) = &tf.skeleton {
                    if sk.len() != self.joint_count {
                        return Err(SceneError::invalid(
                            format!("tracks[{i}].frames[{f}].skeleton"),
                            format!("expected {} joints, found {}", self.joint_count, sk.len()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewDescriptor {
    id: ViewId,
    width: u32,
    height: u32,
    intrinsics: [[f64; 3]; 3],
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDescriptor {
    version: u32,
    frame_count: usize,
    #[serde(default = "default_joint_count")]
    joint_count: usize,
    views: Vec<ViewDescriptor>,
    frames: BTreeMap<ViewId, Vec<String>>,
    #[serde(default)]
    tracks: Vec<PedestrianTrack>,
}

fn default_joint_count() -> usize {
    DEFAULT_JOINT_COUNT
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn from_rows(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
    )
}

/// Relative path of a frame inside a scene directory.
pub fn frame_relative_path(view: ViewId, frame: usize) -> String {
    format!("frames/{}/{frame:04}.png", view.as_str())
}

fn descriptor_path(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(DESCRIPTOR_FILE), path.to_path_buf())
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (path.to_path_buf(), root)
    }
}

/// Loads and validates a scene from a directory (or its `scene.json`).
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let (file, root) = descriptor_path(path.as_ref());
    let text = fs::read_to_string(&file).map_err(|e| SceneError::io(&file, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let desc: SceneDescriptor =
        serde_path_to_error::deserialize(de).map_err(|e| SceneError::Schema {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    if desc.version != DESCRIPTOR_VERSION {
        return Err(SceneError::invalid(
            "version",
            format!("unsupported descriptor version {}", desc.version),
        ));
    }

    let mut by_id: BTreeMap<ViewId, CameraView> = BTreeMap::new();
    for (i, vd) in desc.views.iter().enumerate() {
        let view = CameraView {
            id: vd.id,
            intrinsics: from_rows(&vd.intrinsics),
            rotation: from_rows(&vd.rotation),
            translation: Vector3::from(vd.translation),
            width: vd.width,
            height: vd.height,
        };
        view.validate()?;
        if by_id.insert(vd.id, view).is_some() {
            return Err(SceneError::invalid(
                format!("views[{i}].id"),
                format!("duplicate view {}", vd.id),
            ));
        }
    }
    if by_id.len() != 6 {
        return Err(SceneError::invalid(
            "views",
            format!("expected the 6 canonical views, found {}", by_id.len()),
        ));
    }
    let views: Vec<CameraView> = by_id.into_values().collect();

    let mut store = Vec::with_capacity(6);
    for view in &views {
        let paths = desc.frames.get(&view.id).ok_or_else(|| {
            SceneError::invalid(format!("frames.{}", view.id), "missing frame list")
        })?;
        if paths.len() != desc.frame_count {
            return Err(SceneError::invalid(
                format!("frames.{}", view.id),
                format!("expected {} frames, found {}", desc.frame_count, paths.len()),
            ));
        }
        let mut frames = Vec::with_capacity(paths.len());
        for rel in paths {
            let p = root.join(rel);
            if !p.is_file() {
                return Err(SceneError::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "frame file missing"),
                ));
            }
            let img = image::open(&p).map_err(|e| SceneError::Image {
                path: p.clone(),
                message: e.to_string(),
            })?;
            frames.push(img.into_rgb8());
        }
        store.push(frames);
    }

    let scene = Scene {
        views,
        tracks: desc.tracks,
        frame_count: desc.frame_count,
        joint_count: desc.joint_count,
        frames: FrameStore::new(store),
    };
    scene.validate()?;
    Ok(scene)
}

/// Writes `scene` as a directory that [`load_scene`] reads back exactly.
pub fn save_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<(), SceneError> {
    let dir = dir.as_ref();
    scene.validate()?;
    fs::create_dir_all(dir).map_err(|e| SceneError::io(dir, e))?;
    let mut frames = BTreeMap::new();
    for view in &scene.views {
        let view_dir = dir.join("frames").join(view.id.as_str());
        fs::create_dir_all(&view_dir).map_err(|e| SceneError::io(&view_dir, e))?;
        let mut rels = Vec::with_capacity(scene.frame_count);
        for (f, img) in scene.frames.view(view.id).iter().enumerate() {
            let rel = frame_relative_path(view.id, f);
            let p = dir.join(&rel);
            img.save(&p).map_err(|e| match e {
                image::ImageError::IoError(io) => SceneError::io(&p, io),
                other => SceneError::Image {
                    path: p.clone(),
                    message: other.to_string(),
                },
            })?;
            rels.push(rel);
        }
        frames.insert(view.id, rels);
    }
    let desc = SceneDescriptor {
        version: DESCRIPTOR_VERSION,
        frame_count: scene.frame_count,
        joint_count: scene.joint_count,
        views: scene
            .views
            .iter()
            .map(|v| ViewDescriptor {
                id: v.id,
                width: v.width,
                height: v.height,
                intrinsics: to_rows(&v.intrinsics),
                rotation: to_rows(&v.rotation),
                translation: [v.translation.x, v.translation.y, v.translation.z],
            })
            .collect(),
        frames,
        tracks: scene.tracks.clone(),
    };
    let text = serde_json::to_string_pretty(&desc).expect("descriptor serializes");
    let file = dir.join(DESCRIPTOR_FILE);
    fs::write(&file, text).map_err(|e| SceneError::io(&file, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_rig(frames: usize) -> Scene {
        let views: Vec<CameraView> = ViewId::ALL
            .iter()
            .map(|&id| {
                CameraView::new(
                    id,
                    Matrix3::new(100.0, 0.0, 32.0, 0.0, 100.0, 24.0, 0.0, 0.0, 1.0),
                    Matrix3::identity(),
                    Vector3::zeros(),
                    64,
                    48,
                )
                .unwrap()
            })
            .collect();
        let store = (0..6)
            .map(|_| (0..frames).map(|_| RgbImage::new(64, 48)).collect())
            .collect();
        Scene {
            views,
            tracks: vec![],
            frame_count: frames,
            joint_count: 17,
            frames: FrameStore::new(store),
        }
    }

    #[test]
    fn minimal_scene_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let scene = identity_rig(1);
        save_scene(&scene, dir.path()).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(back.frame_count, 1);
        assert!(back.tracks.is_empty());
        assert_eq!(back, scene);
    }

    #[test]
    fn reflection_is_rejected_with_view_name() {
        let mut scene = identity_rig(1);
        scene.views[2].rotation = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let err = scene.validate().unwrap_err().to_string();
        assert!(err.contains("FRONT_RIGHT"), "{err}");
        assert!(err.contains("rotation"), "{err}");
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let mut scene = identity_rig(1);
        scene.views[0].rotation[(0, 0)] = 1.0 + 1e-6;
        assert!(matches!(scene.validate(), Err(SceneError::Invalid { .. })));
    }

    #[test]
    fn schema_errors_report_the_field_path() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&identity_rig(1), dir.path()).unwrap();
        let file = dir.path().join(DESCRIPTOR_FILE);
        let text = fs::read_to_string(&file).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["views"][3]["width"] = serde_json::json!("wide");
        fs::write(&file, value.to_string()).unwrap();
        match load_scene(dir.path()) {
            Err(SceneError::Schema { field, .. }) => assert_eq!(field, "views[3].width"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn frame_dimension_mismatch_is_reported() {
        let mut scene = identity_rig(2);
        scene.frames.view_mut(ViewId::Back)[1] = RgbImage::new(10, 10);
        let err = scene.validate().unwrap_err().to_string();
        assert!(err.contains("frames.BACK[1]"), "{err}");
    }

    #[test]
    fn missing_descriptor_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_scene(dir.path().join("nope")), Err(SceneError::Io { .. })));
    }

    #[test]
    fn wrong_skeleton_length_is_rejected() {
        let mut scene = identity_rig(1);
        scene.tracks.push(PedestrianTrack {
            track_id: 7,
            start_frame: 0,
            frames: vec![TrackFrame {
                box3d: Box3d {
                    center: [0.0, 0.0, 5.0],
                    size: [0.5, 0.5, 1.8],
                    yaw: 0.0,
                },
                skeleton: Some(vec![[0.0; 3]; 5]),
            }],
            dominant_view: ViewId::Front,
            attributes: AttributeToken::new("white", "black"),
            hidden_views: vec![],
        });
        let err = scene.validate().unwrap_err().to_string();
        assert!(err.contains("tracks[0].frames[0].skeleton"), "{err}");
    }

    #[test]
    fn view_ids_parse_case_insensitively() {
        assert_eq!("front_left".parse::<ViewId>().unwrap(), ViewId::FrontLeft);
        assert!("SIDE".parse::<ViewId>().is_err());
    }
}
