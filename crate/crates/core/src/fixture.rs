//! Procedural six-camera scenes with exact 3D ground truth.
//!
//! Cameras sit on a ring around the origin at a shared height, each looking
//! outward along its yaw. The backdrop is a sky/ground gradient that varies
//! only with image row, tinted per view. Pedestrians are articulated sprites
//! walking straight lines at constant speed. Every scene comes with an
//! empty-scene twin: the same rig rendered without pedestrians.

use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeError, AttributeToken, Palette};
use crate::geometry::{dominant_view, project_skeleton};
use crate::scene::{CameraView, FrameStore, PedestrianTrack, Scene, TrackFrame, ViewId};
use crate::skeleton::{walker_box, walking_pose, Gait, JOINT_COUNT};
use crate::sprite::{render_sprite, SpriteColors, SKIN_TONE};

const SKY_TOP: [f64; 3] = [120.0, 160.0, 215.0];
const HORIZON: [f64; 3] = [200.0, 205.0, 200.0];
const GROUND_BOTTOM: [f64; 3] = [95.0, 100.0, 85.0];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
}

/// A pedestrian walking a straight line at constant velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerSpec {
    /// Ground position at the walker's first frame, metres.
    pub start: [f64; 2],
    /// Metres per frame.
    pub velocity: [f64; 2],
    #[serde(default)]
    pub start_frame: usize,
    /// Frames on screen; defaults to the rest of the clip.
    #[serde(default)]
    pub frames: Option<usize>,
    /// Heading used when the walker stands still.
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub phase: f64,
    pub attributes: AttributeToken,
}

impl WalkerSpec {
    pub fn heading(&self) -> f64 {
        let [vx, vy] = self.velocity;
        if vx == 0.0 && vy == 0.0 {
            self.heading
        } else {
            vy.atan2(vx)
        }
    }

    /// Root position, heading and gait phase `k` frames after the start.
    pub fn state(&self, k: usize, gait: &Gait) -> ([f64; 2], f64, f64) {
        let t = k as f64;
        let root = [self.start[0] + self.velocity[0] * t, self.start[1] + self.velocity[1] * t];
        let dist = self.velocity[0].hypot(self.velocity[1]) * t;
        (root, self.heading(), self.phase + 2.0 * PI * gait.cadence * dist)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub ring_radius: f64,
    pub camera_height: f64,
    /// Drives the per-view backdrop tint.
    pub seed: u64,
    pub pedestrians: Vec<WalkerSpec>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            frames: 16,
            width: 640,
            height: 360,
            focal: 320.0,
            ring_radius: 0.5,
            camera_height: 1.5,
            seed: 0,
            pedestrians: vec![WalkerSpec {
                start: [5.0, 1.2],
                velocity: [0.0, -0.15],
                start_frame: 0,
                frames: None,
                heading: 0.0,
                phase: 0.0,
                attributes: AttributeToken::new("red", "blue"),
            }],
        }
    }
}

/// Yaw of each camera in radians, counter-clockwise from world +x.
pub fn rig_yaw(id: ViewId) -> f64 {
    let deg: f64 = match id {
        ViewId::FrontLeft => 60.0,
        ViewId::Front => 0.0,
        ViewId::FrontRight => -60.0,
        ViewId::BackLeft => 120.0,
        ViewId::Back => 180.0,
        ViewId::BackRight => -120.0,
    };
    deg.to_radians()
}

impl FixtureSpec {
    /// An empty rig.
    pub fn empty() -> Self {
        FixtureSpec {
            pedestrians: Vec::new(),
            ..FixtureSpec::default()
        }
    }

    /// `count` walkers on random straight paths across random views.
    pub fn random(seed: u64, count: usize, palette: &Palette) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = palette.names().map(str::to_string).collect();
        let mut spec = FixtureSpec {
            seed,
            pedestrians: Vec::new(),
            ..FixtureSpec::default()
        };
        for _ in 0..count {
            let yaw = rig_yaw(ViewId::ALL[rng.random_range(0..6)]);
            let (s, c) = yaw.sin_cos();
            let depth = rng.random_range(4.0..7.0);
            let lateral = rng.random_range(-1.5..1.5);
            let speed = rng.random_range(0.05..0.12) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let base = [spec.ring_radius * c, spec.ring_radius * s];
            spec.pedestrians.push(WalkerSpec {
                start: [base[0] + depth * c - lateral * s, base[1] + depth * s + lateral * c],
                velocity: [-speed * s, speed * c],
                start_frame: 0,
                frames: None,
                heading: 0.0,
                phase: rng.random_range(0.0..2.0 * PI),
                attributes: AttributeToken::new(
                    names[rng.random_range(0..names.len())].clone(),
                    names[rng.random_range(0..names.len())].clone(),
                ),
            });
        }
        spec
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        let bad = |m: String| Err(FixtureError::Spec(m));
        if self.frames == 0 {
            return bad("frames must be positive".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive".into());
        }
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return bad(format!("focal {} must be positive", self.focal));
        }
        if !self.ring_radius.is_finite() || !self.camera_height.is_finite() {
            return bad("rig geometry must be finite".into());
        }
        for (i, p) in self.pedestrians.iter().enumerate() {
            if p.start_frame >= self.frames {
                return bad(format!("pedestrians[{i}] starts after the clip"));
            }
            if p.frames == Some(0) {
                return bad(format!("pedestrians[{i}] has no frames"));
            }
            if !(p.start.iter().chain(&p.velocity).all(|v| v.is_finite())) {
                return bad(format!("pedestrians[{i}] path is not finite"));
            }
        }
        Ok(())
    }

    pub fn cameras(&self) -> Vec<CameraView> {
        ViewId::ALL
            .iter()
            .map(|&id| {
                let yaw = rig_yaw(id);
                let pos = [self.ring_radius * yaw.cos(), self.ring_radius * yaw.sin(), self.camera_height];
                CameraView::looking_along(id, pos, yaw, self.focal, self.width, self.height)
            })
            .collect()
    }

    fn tint(&self, view: ViewId) -> [f64; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5EED_0000 ^ view.index() as u64);
        [0; 3].map(|_| rng.random_range(-12.0..12.0))
    }

    /// Backdrop of `view`: a function of image row only.
    pub fn backdrop(&self, view: ViewId) -> RgbImage {
        let tint = self.tint(view);
        let horizon = self.height as f64 / 2.0;
        let rows: Vec<Rgb<u8>> = (0..self.height)
            .map(|y| {
                let y = y as f64 + 0.5;
                let (a, b, t) = if y < horizon {
                    (SKY_TOP, HORIZON, y / horizon)
                } else {
                    (HORIZON, GROUND_BOTTOM, (y - horizon) / (self.height as f64 - horizon))
                };
                Rgb([0, 1, 2].map(|c| (a[c] + (b[c] - a[c]) * t + tint[c]).round().clamp(0.0, 255.0) as u8))
            })
            .collect();
        RgbImage::from_fn(self.width, self.height, |_, y| rows[y as usize])
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub scene: Scene,
    /// The same rig and backdrop with no pedestrians.
    pub empty: FrameStore,
    /// Non-fatal problems, such as a walker never in view.
    pub warnings: Vec<String>,
}

/// Builds the track of walker `index` (track id `index + 1`).
pub fn walker_track(spec: &FixtureSpec, index: usize, views: &[CameraView]) -> PedestrianTrack {
    let p = &spec.pedestrians[index];
    let gait = Gait::default();
    let len = p.frames.unwrap_or(spec.frames - p.start_frame).min(spec.frames - p.start_frame);
    let frames = (0..len)
        .map(|k| {
            let (root, heading, phase) = p.state(k, &gait);
            TrackFrame {
                box3d: walker_box(root, heading),
                skeleton: Some(walking_pose(root, heading, phase, &gait)),
            }
        })
        .collect();
    let mut track = PedestrianTrack {
        track_id: index as u32 + 1,
        start_frame: p.start_frame,
        frames,
        dominant_view: ViewId::Front,
        attributes: p.attributes.clone(),
        hidden_views: Vec::new(),
    };
    if let Some(v) = dominant_view(views, &track) {
        track.dominant_view = v;
    }
    track
}

/// Draws every track present at `frame` onto `img`, far to near. Skeletons
/// with any joint behind the camera are skipped.
pub fn draw_tracks(img: &mut RgbImage, view: &CameraView, tracks: &[PedestrianTrack], frame: usize, palette: &Palette) -> Result<(), AttributeError> {
    let mut visible = Vec::new();
    for t in tracks {
        let Some(tf) = t.at(frame) else { continue };
        let Some(skel) = &tf.skeleton else { continue };
        let kp = project_skeleton(view, skel);
        if kp.joints.iter().any(|k| !k.valid) {
            continue;
        }
        let c = tf.box3d.center;
        let depth = view.world_to_camera(&nalgebra::Point3::new(c[0], c[1], c[2])).z;
        let (top, pants) = t.attributes.rgb(palette)?;
        visible.push((depth, kp.joints, SpriteColors { top, pants, skin: SKIN_TONE }));
    }
    visible.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, joints, colors) in &visible {
        render_sprite(img, joints, colors, None);
    }
    Ok(())
}

pub fn make_fixture(spec: &FixtureSpec, palette: &Palette) -> Result<Fixture, FixtureError> {
    spec.validate()?;
    for p in &spec.pedestrians {
        p.attributes.validate(palette)?;
    }
    let views = spec.cameras();
    let tracks: Vec<PedestrianTrack> = (0..spec.pedestrians.len()).map(|i| walker_track(spec, i, &views)).collect();
    let mut warnings = Vec::new();
    for t in &tracks {
        if dominant_view(&views, t).is_none() {
            warnings.push(format!("pedestrian {} is outside every frustum for the whole clip", t.track_id));
        }
    }

    let backdrops: Vec<RgbImage> = ViewId::ALL.iter().map(|&v| spec.backdrop(v)).collect();
    let empty = FrameStore::new(backdrops.iter().map(|b| vec![b.clone(); spec.frames]).collect());
    let rendered: Vec<Vec<RgbImage>> = views
        .iter()
        .map(|view| {
            (0..spec.frames)
                .into_par_iter()
                .map(|f| {
                    let mut img = backdrops[view.id.index()].clone();
                    draw_tracks(&mut img, view, &tracks, f, palette)?;
                    Ok(img)
                })
                .collect::<Result<Vec<_>, AttributeError>>()
        })
        .collect::<Result<_, _>>()?;

    Ok(Fixture {
        scene: Scene {
            views,
            tracks,
            frame_count: spec.frames,
            joint_count: JOINT_COUNT,
            frames: FrameStore::new(rendered),
        },
        empty,
        warnings,
    })
}
