//! Flat-shaded pedestrian sprite drawn from 2D keypoints, and the small set of
//! shapes it (and the pose raster) is built from.
//!
//! The sprite is sized from the torso length so it renders identically at
//! any scale: the fixture renderer draws it in source frames, the sprite
//! generator draws it in tiles.

use image::{GrayImage, RgbImage};

use crate::geometry::{Keypoint, Rect};
use crate::skeleton::*;

pub const SKIN_TONE: [u8; 3] = [224, 172, 138];

/// Supersampling grid per pixel axis.
const SUBSAMPLES: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disc { center: (f64, f64), radius: f64 },
    /// Segment swept by a disc of `radius`.
    Capsule { a: (f64, f64), b: (f64, f64), radius: f64 },
    /// Convex polygon.
    Polygon(Vec<(f64, f64)>),
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Disc { center, radius } => {
                let (dx, dy) = (x - center.0, y - center.1);
                dx * dx + dy * dy <= radius * radius
            }
            Shape::Capsule { a, b, radius } => segment_distance_sq((x, y), *a, *b) <= radius * radius,
            Shape::Polygon(pts) => {
                let n = pts.len();
                if n < 3 {
                    return false;
                }
                let mut sign = 0.0f64;
                for i in 0..n {
                    let (p, q) = (pts[i], pts[(i + 1) % n]);
                    let cross = (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
                    if cross != 0.0 {
                        if sign != 0.0 && cross.signum() != sign {
                            return false;
                        }
                        sign = cross.signum();
                    }
                }
                true
            }
        }
    }

    pub fn bounds(&self) -> Rect {
        match self {
            Shape::Disc { center, radius } => Rect::from_center(center.0, center.1, 2.0 * radius, 2.0 * radius),
            Shape::Capsule { a, b, radius } => Rect::new(
                a.0.min(b.0) - radius,
                a.1.min(b.1) - radius,
                a.0.max(b.0) + radius,
                a.1.max(b.1) + radius,
            ),
            Shape::Polygon(pts) => Rect::hull(pts.iter().copied()).unwrap_or_default(),
        }
    }
}

pub fn segment_distance_sq(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = vx * vx + vy * vy;
    let t = if len_sq > 0.0 {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (p.0 - (a.0 + t * vx), p.1 - (a.1 + t * vy));
    dx * dx + dy * dy
}

/// Pixel-index range covered by `r`, clipped to a `w × h` image.
pub fn pixel_span(r: &Rect, w: u32, h: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = r.x_min.floor().max(0.0);
    let y0 = r.y_min.floor().max(0.0);
    let x1 = r.x_max.ceil().min(w as f64 - 1.0);
    let y1 = r.y_max.ceil().min(h as f64 - 1.0);
    (x0 <= x1 && y0 <= y1).then(|| (x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpriteColors {
    pub top: [u8; 3],
    pub pants: [u8; 3],
    pub skin: [u8; 3],
}

/// Proportions relative to the shoulder-to-hip length.
const LEG_WIDTH: f64 = 0.32;
const ARM_WIDTH: f64 = 0.22;
const TORSO_WIDTH: f64 = 0.55;
const HEAD_RADIUS: f64 = 0.30;

fn pt(k: &Keypoint) -> (f64, f64) {
    (k.u, k.v)
}

fn mid(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
}

/// Torso axis (shoulder midpoint, hip midpoint), if the four torso joints are
/// valid.
pub fn torso_axis(joints: &[Keypoint]) -> Option<((f64, f64), (f64, f64))> {
    let need = [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP];
    if joints.len() < JOINT_COUNT || need.iter().any(|&i| !joints[i].valid) {
        return None;
    }
    Some((
        mid(pt(&joints[LEFT_SHOULDER]), pt(&joints[RIGHT_SHOULDER])),
        mid(pt(&joints[LEFT_HIP]), pt(&joints[RIGHT_HIP])),
    ))
}

/// Painter-ordered coloured shapes of the sprite. Empty when the torso is
/// not fully visible.
pub fn sprite_shapes(joints: &[Keypoint], colors: &SpriteColors) -> Vec<(Shape, [u8; 3])> {
    let Some((shoulders, hips)) = torso_axis(joints) else {
        return Vec::new();
    };
    let unit = ((shoulders.0 - hips.0).powi(2) + (shoulders.1 - hips.1).powi(2)).sqrt();
    if unit < 1e-3 {
        return Vec::new();
    }
    let mut shapes = Vec::new();
    let limb = |a: usize, b: usize, width: f64, color: [u8; 3], out: &mut Vec<(Shape, [u8; 3])>| {
        if joints[a].valid && joints[b].valid {
            out.push((
                Shape::Capsule {
                    a: pt(&joints[a]),
                    b: pt(&joints[b]),
                    radius: width * unit / 2.0,
                },
                color,
            ));
        }
    };
    for (a, b) in [
        (LEFT_HIP, LEFT_KNEE),
        (LEFT_KNEE, LEFT_ANKLE),
        (RIGHT_HIP, RIGHT_KNEE),
        (RIGHT_KNEE, RIGHT_ANKLE),
        (LEFT_HIP, RIGHT_HIP),
    ] {
        limb(a, b, LEG_WIDTH, colors.pants, &mut shapes);
    }
    shapes.push((
        Shape::Polygon(vec![
            pt(&joints[LEFT_SHOULDER]),
            pt(&joints[RIGHT_SHOULDER]),
            pt(&joints[RIGHT_HIP]),
            pt(&joints[LEFT_HIP]),
        ]),
        colors.top,
    ));
    shapes.push((
        Shape::Capsule {
            a: shoulders,
            b: hips,
            radius: TORSO_WIDTH * unit / 2.0,
        },
        colors.top,
    ));
    for (a, b) in [
        (LEFT_SHOULDER, LEFT_ELBOW),
        (LEFT_ELBOW, LEFT_WRIST),
        (RIGHT_SHOULDER, RIGHT_ELBOW),
        (RIGHT_ELBOW, RIGHT_WRIST),
    ] {
        limb(a, b, ARM_WIDTH, colors.top, &mut shapes);
    }
    let face: Vec<(f64, f64)> = [NOSE, LEFT_EYE, RIGHT_EYE, LEFT_EAR, RIGHT_EAR]
        .iter()
        .filter(|&&i| joints[i].valid)
        .map(|&i| pt(&joints[i]))
        .collect();
    if !face.is_empty() {
        let n = face.len() as f64;
        let center = (face.iter().map(|p| p.0).sum::<f64>() / n, face.iter().map(|p| p.1).sum::<f64>() / n);
        shapes.push((
            Shape::Disc {
                center,
                radius: HEAD_RADIUS * unit,
            },
            colors.skin,
        ));
    }
    shapes
}

/// Alpha-composites the sprite onto `img` with 4×4 supersampled coverage.
/// When `clip` is given only pixels where it is non-zero are touched.
/// Returns the number of pixels written.
pub fn render_sprite(img: &mut RgbImage, joints: &[Keypoint], colors: &SpriteColors, clip: Option<&GrayImage>) -> usize {
    let shapes = sprite_shapes(joints, colors);
    let Some(bounds) = Rect::hull(shapes.iter().flat_map(|(s, _)| {
        let b = s.bounds();
        [(b.x_min, b.y_min), (b.x_max, b.y_max)]
    })) else {
        return 0;
    };
    let (w, h) = img.dimensions();
    let Some((x0, y0, x1, y1)) = pixel_span(&bounds, w, h) else {
        return 0;
    };
    let step = 1.0 / SUBSAMPLES as f64;
    let total = (SUBSAMPLES * SUBSAMPLES) as f64;
    let mut written = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if clip.is_some_and(|c| c.get_pixel(x, y).0[0] == 0) {
                continue;
            }
            let mut sum = [0.0f64; 3];
            let mut hits = 0.0;
            for sy in 0..SUBSAMPLES {
                for sx in 0..SUBSAMPLES {
                    let px = x as f64 + (sx as f64 + 0.5) * step;
                    let py = y as f64 + (sy as f64 + 0.5) * step;
                    if let Some((_, color)) = shapes.iter().rev().find(|(s, _)| s.contains(px, py)) {
                        for c in 0..3 {
                            sum[c] += color[c] as f64;
                        }
                        hits += 1.0;
                    }
                }
            }
            if hits == 0.0 {
                continue;
            }
            let alpha = hits / total;
            let dst = img.get_pixel_mut(x, y);
            for c in 0..3 {
                let v = sum[c] / total + (1.0 - alpha) * dst.0[c] as f64;
                dst.0[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            written += 1;
        }
    }
    written
}

/// Binary footprint of the sprite's torso core: the middle half of the torso
/// axis, `width_frac` of the torso width wide. Used to measure top colour.
pub fn torso_core(joints: &[Keypoint], width_frac: f64) -> Option<Shape> {
    let (s, hp) = torso_axis(joints)?;
    let unit = ((s.0 - hp.0).powi(2) + (s.1 - hp.1).powi(2)).sqrt();
    let lerp = |t: f64| (s.0 + (hp.0 - s.0) * t, s.1 + (hp.1 - s.1) * t);
    Some(Shape::Capsule {
        a: lerp(0.3),
        b: lerp(0.7),
        radius: width_frac * TORSO_WIDTH * unit / 2.0,
    })
}
