//! Measurements of finished edits against fixture ground truth.

use std::collections::BTreeSet;

use image::GrayImage;
use mvped_core::attributes::{AttributeToken, Palette};
use mvped_core::edit::{EditArtifacts, Motion};
use mvped_core::fixture::{draw_tracks, Fixture, WalkerSpec};
use mvped_core::geometry::{project_box3d, project_skeleton};
use mvped_core::scene::{PedestrianTrack, Scene, ViewId};
use mvped_core::skeleton::{walking_pose, Gait};
use mvped_core::sprite::torso_core;

use super::{center, change_box, frame_mask, max_channel_diff};

/// A walker crossing the FRONT view from its centre towards the left.
pub fn crossing_motion(frames: usize) -> (Motion, AttributeToken) {
    let walker = WalkerSpec {
        start: [5.0, 0.0],
        velocity: [0.0, 0.25],
        start_frame: 0,
        frames: None,
        heading: 0.0,
        phase: 0.0,
        attributes: AttributeToken::new("red", "black"),
    };
    let gait = Gait::default();
    let motion = Motion {
        frames: (0..frames)
            .map(|k| {
                let (root, heading, phase) = walker.state(k, &gait);
                walking_pose(root, heading, phase, &gait)
            })
            .collect(),
    };
    (motion, walker.attributes)
}

fn inverted(m: &GrayImage) -> GrayImage {
    GrayImage::from_fn(m.width(), m.height(), |x, y| image::Luma([(m.get_pixel(x, y).0[0] == 0) as u8]))
}

/// Largest per-channel change outside the source masks, over every view
/// and frame.
pub fn outside_mask_change(before: &Scene, out: &EditArtifacts) -> u8 {
    let mut worst = 0;
    for v in ViewId::ALL {
        for f in 0..before.frame_count {
            let outside = inverted(&frame_mask(out, v, f));
            worst = worst.max(max_channel_diff(before.frames.frame(v, f), out.edited.frames.frame(v, f), Some(&outside)));
        }
    }
    worst
}

/// `(largest masked difference to the empty twin, masked pixel count)`.
pub fn removal_error(fx: &Fixture, out: &EditArtifacts) -> (u8, usize) {
    let mut worst = 0;
    let mut pixels = 0;
    for v in ViewId::ALL {
        for f in 0..fx.scene.frame_count {
            let m = frame_mask(out, v, f);
            pixels += m.pixels().filter(|p| p.0[0] != 0).count();
            worst = worst.max(max_channel_diff(out.edited.frames.frame(v, f), fx.empty.frame(v, f), Some(&m)));
        }
    }
    (worst, pixels)
}

pub struct InsertReport {
    /// (view, frame) pairs where the 3D box projects into the image.
    pub predicted: BTreeSet<(ViewId, usize)>,
    /// Pairs where rendering the skeleton directly changes the empty frame.
    pub rendered: BTreeSet<(ViewId, usize)>,
    /// Pairs where the edited frame differs from the empty frame.
    pub edited: BTreeSet<(ViewId, usize)>,
    /// Largest centre offset between the edited and directly rendered sprite.
    pub worst_centre: f64,
}

pub fn insert_report(fx: &Fixture, track: &PedestrianTrack, out: &EditArtifacts, palette: &Palette) -> InsertReport {
    let mut r = InsertReport {
        predicted: BTreeSet::new(),
        rendered: BTreeSet::new(),
        edited: BTreeSet::new(),
        worst_centre: 0.0,
    };
    for v in ViewId::ALL {
        let cam = &fx.scene.views[v.index()];
        for f in 0..fx.scene.frame_count {
            let Some(tf) = track.at(f) else { continue };
            if project_box3d(cam, &tf.box3d).is_visible() {
                r.predicted.insert((v, f));
            }
            let empty = fx.empty.frame(v, f);
            let mut truth = empty.clone();
            draw_tracks(&mut truth, cam, std::slice::from_ref(track), f, palette).unwrap();
            let gt = change_box(&truth, empty, 8);
            let got = change_box(out.edited.frames.frame(v, f), empty, 8);
            if gt.is_some() {
                r.rendered.insert((v, f));
            }
            if got.is_some() {
                r.edited.insert((v, f));
            }
            if let (Some((a, _)), Some((b, _))) = (gt, got) {
                let (ca, cb) = (center(a), center(b));
                r.worst_centre = r.worst_centre.max((ca.0 - cb.0).abs()).max((ca.1 - cb.1).abs());
            }
        }
    }
    r
}

/// `(frames measured, largest channel error)` of the mean colour over the
/// core of the torso, against `want`.
pub fn torso_colour_error(scene: &Scene, track: &PedestrianTrack, edited: &Scene, want: [u8; 3]) -> (usize, f64) {
    let mut measured = 0;
    let mut worst: f64 = 0.0;
    for v in ViewId::ALL {
        let cam = &scene.views[v.index()];
        for f in 0..scene.frame_count {
            let Some(tf) = track.at(f) else { continue };
            let kp = project_skeleton(cam, tf.skeleton.as_ref().unwrap());
            let Some(core) = torso_core(&kp.joints, 0.5) else { continue };
            let img = edited.frames.frame(v, f);
            let mut sum = [0.0; 3];
            let mut n = 0.0;
            for (x, y, p) in img.enumerate_pixels() {
                if core.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    for c in 0..3 {
                        sum[c] += p.0[c] as f64;
                    }
                    n += 1.0;
                }
            }
            // too few pixels to call it a torso
            if n < 20.0 {
                continue;
            }
            measured += 1;
            for c in 0..3 {
                worst = worst.max((sum[c] / n - want[c] as f64).abs());
            }
        }
    }
    (measured, worst)
}
