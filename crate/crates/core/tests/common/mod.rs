#![allow(dead_code)]

pub mod crop_checks;
pub mod edit_checks;

use image::{GrayImage, Luma, RgbImage};
use rand::Rng;
use mvped_core::edit::EditArtifacts;
use mvped_core::reintegrate::source_mask;
use mvped_core::scene::ViewId;

/// Full-frame source-space mask of one slot and frame.
pub fn frame_mask(a: &EditArtifacts, view: ViewId, frame: usize) -> GrayImage {
    let cam = &a.edited.views[view.index()];
    let mut out = GrayImage::new(cam.width, cam.height);
    let layout = &a.canvas.layout;
    let Some(slot) = layout.slot_of(view) else { return out };
    let Some(c) = a.canvas.crop(slot, frame) else { return out };
    let (ox, oy) = layout.slot_origin(slot);
    let m = &a.mask.frames[frame];
    let (r, img) = source_mask(&c.transform, |j, i| m.get_pixel(ox + j, oy + i).0[0] != 0);
    for (x, y, p) in img.enumerate_pixels() {
        if p.0[0] != 0 {
            out.put_pixel(r.x0 as u32 + x, r.y0 as u32 + y, Luma([1]));
        }
    }
    out
}

pub fn max_channel_diff(a: &RgbImage, b: &RgbImage, region: Option<&GrayImage>) -> u8 {
    a.enumerate_pixels()
        .filter(|&(x, y, _)| region.is_none_or(|m| m.get_pixel(x, y).0[0] != 0))
        .map(|(x, y, p)| {
            let q = b.get_pixel(x, y);
            (0..3).map(|c| p.0[c].abs_diff(q.0[c])).max().unwrap()
        })
        .max()
        .unwrap_or(0)
}

/// Bounding box `(x0, y0, x1, y1)` of pixels where any channel differs by
/// more than `tol`, with the pixel count.
pub fn change_box(a: &RgbImage, b: &RgbImage, tol: u8) -> Option<((f64, f64, f64, f64), usize)> {
    let mut bb: Option<(u32, u32, u32, u32)> = None;
    let mut n = 0;
    for (x, y, p) in a.enumerate_pixels() {
        let q = b.get_pixel(x, y);
        if (0..3).any(|c| p.0[c].abs_diff(q.0[c]) > tol) {
            n += 1;
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    bb.map(|(x0, y0, x1, y1)| ((x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0), n))
}

pub fn center(b: (f64, f64, f64, f64)) -> (f64, f64) {
    ((b.0 + b.2) / 2.0, (b.1 + b.3) / 2.0)
}

/// Greedy matching written out step by step: repeatedly take the highest
/// scoring unprocessed detection and scan every ground truth of its sample
/// for the closest unclaimed one. Scores must be distinct. Returns TP flags
/// in input order.
pub fn greedy_oracle(dets: &[(usize, f64, f64, f64)], gts: &[(usize, f64, f64)], thr: f64) -> Vec<bool> {
    let mut done = vec![false; dets.len()];
    let mut claimed = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for _ in 0..dets.len() {
        let mut pick = None;
        for (i, d) in dets.iter().enumerate() {
            if !done[i] && pick.is_none_or(|p: usize| d.3 > dets[p].3) {
                pick = Some(i);
            }
        }
        let i = pick.unwrap();
        done[i] = true;
        let (s, x, y, _) = dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if g.0 != s || claimed[j] {
                continue;
            }
            let d = ((x - g.1).powi(2) + (y - g.2).powi(2)).sqrt();
            if best.is_none_or(|b| d < b.1) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            if d <= thr {
                claimed[j] = true;
                tp[i] = true;
            }
        }
    }
    tp
}

/// AP from ranked TP flags by walking recall levels m/n_gt: on each level
/// interval the interpolated precision is the best precision among ranks
/// whose recall reaches the level's upper end.
pub fn ap_oracle(tp_ranked: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || tp_ranked.is_empty() {
        return 0.0;
    }
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    let mut hits = 0;
    for (k, &t) in tp_ranked.iter().enumerate() {
        hits += t as usize;
        recall.push(hits);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    let mut area = 0.0;
    for m in 1..=n_gt {
        let p = recall
            .iter()
            .zip(&precision)
            .filter(|(r, _)| **r >= m)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        let lo = ((m - 1) as f64 / n_gt as f64).max(0.1);
        let hi = m as f64 / n_gt as f64;
        if hi > lo {
            area += (hi - lo) * p;
        }
    }
    area / 0.9
}

/// Sub-pixel vertical extent of a sprite composited over `bg`. Per pixel the
/// coverage of a known colour is recovered by projecting `img - bg` onto
/// `colour - bg`; the top edge uses `top_colour`, the bottom `bottom_colour`.
/// Edges are the first and last half-coverage crossings over all columns,
/// interpolated linearly between pixel centres.
pub fn coverage_extent(img: &RgbImage, bg: &RgbImage, top_colour: [u8; 3], bottom_colour: [u8; 3]) -> Option<(f64, f64)> {
    let (w, h) = img.dimensions();
    let coverage = |x: u32, y: u32, colour: [u8; 3]| {
        let (p, q) = (img.get_pixel(x, y), bg.get_pixel(x, y));
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..3 {
            let d = colour[c] as f64 - q.0[c] as f64;
            num += (p.0[c] as f64 - q.0[c] as f64) * d;
            den += d * d;
        }
        if den < 1.0 { 0.0 } else { num / den }
    };
    let mut top: Option<f64> = None;
    let mut bottom: Option<f64> = None;
    for x in 0..w {
        let col: Vec<f64> = (0..h).map(|y| coverage(x, y, top_colour)).collect();
        if let Some(i) = col.iter().position(|&a| a >= 0.5) {
            let t = if i == 0 { 0.0 } else { i as f64 - 0.5 + (0.5 - col[i - 1]) / (col[i] - col[i - 1]) };
            top = Some(top.map_or(t, |v: f64| v.min(t)));
        }
        let col: Vec<f64> = (0..h).map(|y| coverage(x, y, bottom_colour)).collect();
        if let Some(i) = col.iter().rposition(|&a| a >= 0.5) {
            let b = if i + 1 == h as usize { h as f64 } else { i as f64 + 0.5 + (col[i] - 0.5) / (col[i] - col[i + 1]) };
            bottom = Some(bottom.map_or(b, |v: f64| v.max(b)));
        }
    }
    top.zip(bottom)
}

/// Random bundle for contract tests: random canvas, rectangles of mask in
/// random slots and frames, skeletons in some slots with the matching pose
/// raster. `empty_mask` clears the mask entirely.
pub fn random_bundle(seed: u64, empty_mask: bool) -> mvped_core::generators::ConditioningBundle {
    use mvped_core::attributes::{AttributeToken, Palette};
    use mvped_core::canvas::{CanvasClip, CanvasLayout};
    use mvped_core::crop::TileSize;
    use mvped_core::geometry::Keypoint;
    use mvped_core::mask::MaskVolume;
    use mvped_core::pose::{draw_pose, PoseRasterClip, PoseStyle};
    use mvped_core::skeleton::JOINT_COUNT;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (th, tw) = [(16, 8), (16, 16), (24, 16), (32, 16)][rng.random_range(0..4)];
    let layout = CanvasLayout::new(TileSize::new(th, tw));
    let (w, h) = (layout.width(), layout.height());
    let frames = rng.random_range(1..4usize);
    let canvas = CanvasClip {
        frames: (0..frames).map(|_| RgbImage::from_fn(w, h, |_, _| image::Rgb(rng.random()))).collect(),
        layout: layout.clone(),
        crops: vec![vec![None; frames]; layout.slots()],
    };
    let mut mask = MaskVolume::zeros(frames, w, h);
    let mut pose = PoseRasterClip::zeros(frames, w, h);
    let mut keypoints = vec![vec![None; frames]; layout.slots()];
    let style = PoseStyle { line_width: 2.0, joint_radius: 1.5, dilate_radius: 0, dilate_iterations: 0 };
    for f in 0..frames {
        for slot in 0..layout.slots() {
            let (ox, oy) = layout.slot_origin(slot);
            if !empty_mask && rng.random_bool(0.6) {
                let (x0, y0) = (rng.random_range(0..tw), rng.random_range(0..th));
                let (x1, y1) = (rng.random_range(x0 + 1..=tw), rng.random_range(y0 + 1..=th));
                for y in y0..y1 {
                    for x in x0..x1 {
                        mask.frames[f].put_pixel(ox + x, oy + y, Luma([1]));
                    }
                }
            }
            if rng.random_bool(0.5) {
                let joints: Vec<Keypoint> = (0..JOINT_COUNT)
                    .map(|_| Keypoint {
                        u: rng.random_range(0.0..tw as f64),
                        v: rng.random_range(0.0..th as f64),
                        valid: rng.random_bool(0.9),
                    })
                    .collect();
                let mut tile = RgbImage::new(tw, th);
                draw_pose(&mut tile, &joints, &style);
                image::imageops::replace(&mut pose.frames[f], &tile, ox as i64, oy as i64);
                keypoints[slot][f] = Some(joints);
            }
        }
    }
    let names: Vec<String> = Palette::default().names().map(str::to_string).collect();
    let attrs = AttributeToken::new(
        names[rng.random_range(0..names.len())].clone(),
        names[rng.random_range(0..names.len())].clone(),
    );
    mvped_core::generators::ConditioningBundle::new(&canvas, mask, pose, attrs, rng.random(), keypoints).unwrap()
}

/// Small randomly initialised denoiser with a short schedule, cheap enough
/// to sample many bundles.
pub fn small_ddpm(seed: u64) -> mvped_core::generators::DdpmGenerator {
    use mvped_core::generators::denoiser::{DenoiserConfig, DenoiserModel, Init};
    use mvped_core::generators::schedule::{NoiseSchedule, ScheduleConfig};
    use mvped_core::generators::train::input_channels;
    let cfg = DenoiserConfig { in_channels: input_channels(true), hidden: 8, blocks: 1, out_channels: 3, embed_dim: 8 };
    let model = DenoiserModel::new(cfg, Init::Random { seed, zero_output: false });
    let schedule = NoiseSchedule::from_config(&ScheduleConfig { steps: 20, ..ScheduleConfig::default() }).unwrap();
    mvped_core::generators::DdpmGenerator::new(model, schedule, true).unwrap()
}

/// Detections `(sample, x, y, score)` and ground truth `(sample, x, y)`.
pub type RawSet = (Vec<(usize, f64, f64, f64)>, Vec<(usize, f64, f64)>);

/// Random small set; detections cluster around ground truth 60% of the time.
pub fn random_set(rng: &mut rand_chacha::ChaCha8Rng, max_dets: usize) -> RawSet {
    let samples = rng.random_range(1..4);
    let n_gt = rng.random_range(0..12);
    let gts: Vec<(usize, f64, f64)> = (0..n_gt)
        .map(|_| (rng.random_range(0..samples), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)))
        .collect();
    let n_det = rng.random_range(0..=max_dets);
    let dets = (0..n_det)
        .map(|_| {
            let s = rng.random_range(0..samples);
            let (x, y) = match gts.iter().filter(|g| g.0 == s).nth(0).filter(|_| rng.random_bool(0.6)) {
                Some(g) => (g.1 + rng.random_range(-3.0..3.0), g.2 + rng.random_range(-3.0..3.0)),
                None => (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)),
            };
            (s, x, y, rng.random::<f64>())
        })
        .collect();
    (dets, gts)
}

pub fn to_set((dets, gts): &RawSet) -> mvped_core::eval::DetectionSet {
    mvped_core::eval::DetectionSet {
        detections: dets
            .iter()
            .map(|&(s, x, y, score)| mvped_core::eval::Detection {
                sample_id: format!("s{s}"),
                center: [x, y],
                score,
            })
            .collect(),
        ground_truth: gts
            .iter()
            .map(|&(s, x, y)| mvped_core::eval::GroundTruth {
                sample_id: format!("s{s}"),
                center: [x, y],
            })
            .collect(),
    }
}

/// Oracle TP flags in descending score order.
pub fn ranked_oracle_flags(raw: &RawSet, thr: f64) -> Vec<bool> {
    let tp = greedy_oracle(&raw.0, &raw.1, thr);
    let mut idx: Vec<usize> = (0..raw.0.len()).collect();
    idx.sort_by(|&a, &b| raw.0[b].3.total_cmp(&raw.0[a].3));
    idx.into_iter().map(|i| tp[i]).collect()
}

/// Pinhole camera with a skewed, non-square intrinsic matrix.
pub fn camera(axis: [f64; 3], t: [f64; 3], f: f64, skew: f64) -> mvped_core::scene::CameraView {
    use nalgebra::{Matrix3, Rotation3, Vector3};
    let rot = Rotation3::from_scaled_axis(Vector3::from(axis));
    let k = Matrix3::new(f, skew, 320.0, 0.0, f * 1.1, 240.0, 0.0, 0.0, 1.0);
    mvped_core::scene::CameraView::new(ViewId::Front, k, *rot.matrix(), Vector3::from(t), 640, 480).unwrap()
}
