//! Pinhole projection of 3D boxes and skeletons into the rig views.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::scene::{Box3d, CameraView, PedestrianTrack, ViewId};

/// Points at or behind this camera-frame depth (metres) are not projected.
pub const DEPTH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    InFront { u: f64, v: f64, depth: f64 },
    Behind { depth: f64 },
}

impl Projection {
    pub fn pixel(&self) -> Option<(f64, f64)> {
        match *self {
            Projection::InFront { u, v, .. } => Some((u, v)),
            Projection::Behind { .. } => None,
        }
    }

    pub fn depth(&self) -> f64 {
        match *self {
            Projection::InFront { depth, .. } | Projection::Behind { depth } => depth,
        }
    }
}

/// Projects a camera-frame point through the intrinsics.
pub fn project_camera_point(view: &CameraView, pc: &Vector3<f64>) -> Projection {
    let depth = pc.z;
    if depth <= DEPTH_EPS {
        return Projection::Behind { depth };
    }
    let h = view.intrinsics * pc;
    Projection::InFront {
        u: h.x / h.z,
        v: h.y / h.z,
        depth,
    }
}

pub fn project_point(view: &CameraView, p: [f64; 3]) -> Projection {
    project_camera_point(view, &view.world_to_camera(&Point3::from(p)))
}

/// Inverse of [`project_point`] given the camera-frame depth.
pub fn unproject(view: &CameraView, u: f64, v: f64, depth: f64) -> [f64; 3] {
    let k_inv = view
        .intrinsics
        .try_inverse()
        .expect("validated intrinsics are invertible");
    let ray = k_inv * Vector3::new(u, v, 1.0);
    let pc = ray * (depth / ray.z);
    let pw = view.camera_to_world(&pc);
    [pw.x, pw.y, pw.z]
}

/// Axis-aligned pixel rectangle with float coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Rect::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Open-interval overlap test.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.x_min < other.x_max
            && other.x_min < self.x_max
            && self.y_min < other.y_max
            && other.y_min < self.y_max
    }

    pub fn clip(&self, bounds: &Rect) -> Rect {
        Rect::new(
            self.x_min.clamp(bounds.x_min, bounds.x_max),
            self.y_min.clamp(bounds.y_min, bounds.y_max),
            self.x_max.clamp(bounds.x_min, bounds.x_max),
            self.y_max.clamp(bounds.y_min, bounds.y_max),
        )
    }

    pub fn hull<I: IntoIterator<Item = (f64, f64)>>(points: I) -> Option<Rect> {
        let mut it = points.into_iter();
        let (x, y) = it.next()?;
        let mut r = Rect::new(x, y, x, y);
        for (x, y) in it {
            r.x_min = r.x_min.min(x);
            r.y_min = r.y_min.min(y);
            r.x_max = r.x_max.max(x);
            r.y_max = r.y_max.max(y);
        }
        Some(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Visibility {
    Visible,
    Truncated,
    OutOfView,
}

/// Per-view 2D box. `rect` is clipped to the image and absent when the box is
/// out of view; `unclipped` is the raw hull of the in-front corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewBox2D {
    pub view: ViewId,
    pub rect: Option<Rect>,
    pub unclipped: Option<Rect>,
    pub visibility: Visibility,
}

impl ViewBox2D {
    pub fn is_visible(&self) -> bool {
        self.visibility != Visibility::OutOfView
    }
}

/// The eight world-space corners of `b`. Order: bottom face then top face,
/// each going (+l,+w), (+l,−w), (−l,−w), (−l,+w) in the box frame.
pub fn box_corners(b: &Box3d) -> [[f64; 3]; 8] {
    let [w, l, h] = b.size;
    let (s, c) = b.yaw.sin_cos();
    let mut out = [[0.0; 3]; 8];
    let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)];
    for (level, dz) in [-h / 2.0, h / 2.0].into_iter().enumerate() {
        for (i, (sl, sw)) in signs.iter().enumerate() {
            let dx = sl * l / 2.0;
            let dy = sw * w / 2.0;
            out[level * 4 + i] = [
                b.center[0] + c * dx - s * dy,
                b.center[1] + s * dx + c * dy,
                b.center[2] + dz,
            ];
        }
    }
    out
}

pub fn image_rect(view: &CameraView) -> Rect {
    Rect::new(0.0, 0.0, view.width as f64, view.height as f64)
}

pub fn project_box3d(view: &CameraView, b: &Box3d) -> ViewBox2D {
    let pixels = box_corners(b)
        .into_iter()
        .filter_map(|p| project_point(view, p).pixel());
    let bounds = image_rect(view);
    let out_of_view = ViewBox2D {
        view: view.id,
        rect: None,
        unclipped: None,
        visibility: Visibility::OutOfView,
    };
    let Some(hull) = Rect::hull(pixels) else {
        return out_of_view;
    };
    if !hull.intersects(&bounds) {
        return ViewBox2D {
            unclipped: Some(hull),
            ..out_of_view
        };
    }
    let truncated = hull.x_min < bounds.x_min
        || hull.y_min < bounds.y_min
        || hull.x_max > bounds.x_max
        || hull.y_max > bounds.y_max;
    ViewBox2D {
        view: view.id,
        rect: Some(hull.clip(&bounds)),
        unclipped: Some(hull),
        visibility: if truncated {
            Visibility::Truncated
        } else {
            Visibility::Visible
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

impl Keypoint {
    pub const INVALID: Keypoint = Keypoint {
        u: 0.0,
        v: 0.0,
        valid: false,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoints2D {
    pub view: ViewId,
    pub joints: Vec<Keypoint>,
}

pub fn project_skeleton(view: &CameraView, skeleton: &[[f64; 3]]) -> Keypoints2D {
    let joints = skeleton
        .iter()
        .map(|&p| match project_point(view, p) {
            Projection::InFront { u, v, .. } => Keypoint { u, v, valid: true },
            Projection::Behind { .. } => Keypoint::INVALID,
        })
        .collect();
    Keypoints2D {
        view: view.id,
        joints,
    }
}

/// Ground-plane position of a box centre.
pub fn bev_center(b: &Box3d) -> [f64; 2] {
    [b.center[0], b.center[1]]
}

pub fn bev_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The view in which the track is visible in the most frames (ties go to the
/// earlier canonical view).
pub fn dominant_view(views: &[CameraView], track: &PedestrianTrack) -> Option<ViewId> {
    let mut counts = [0usize; 6];
    for tf in &track.frames {
        for view in views {
            if project_box3d(view, &tf.box3d).is_visible() {
                counts[view.id.index()] += 1;
            }
        }
    }
    let best = (0..6).max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))?;
    (counts[best] > 0).then_some(ViewId::ALL[best])
}
