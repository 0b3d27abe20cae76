//! 17-joint body convention (COCO keypoint order), its limb table, the
//! OpenPose-style drawing colours, and a parametric walking pose used by the
//! fixtures and the insert edit.

use crate::scene::Box3d;

pub const JOINT_COUNT: usize = 17;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub const NOSE: usize = 0;
pub const LEFT_EYE: usize = 1;
pub const RIGHT_EYE: usize = 2;
pub const LEFT_EAR: usize = 3;
pub const RIGHT_EAR: usize = 4;
pub const LEFT_SHOULDER: usize = 5;
pub const RIGHT_SHOULDER: usize = 6;
pub const LEFT_ELBOW: usize = 7;
pub const RIGHT_ELBOW: usize = 8;
pub const LEFT_WRIST: usize = 9;
pub const RIGHT_WRIST: usize = 10;
pub const LEFT_HIP: usize = 11;
pub const RIGHT_HIP: usize = 12;
pub const LEFT_KNEE: usize = 13;
pub const RIGHT_KNEE: usize = 14;
pub const LEFT_ANKLE: usize = 15;
pub const RIGHT_ANKLE: usize = 16;

/// Limb segments as joint-index pairs.
pub const LIMBS: [(usize, usize); 19] = [
    (LEFT_ANKLE, LEFT_KNEE),
    (LEFT_KNEE, LEFT_HIP),
    (RIGHT_ANKLE, RIGHT_KNEE),
    (RIGHT_KNEE, RIGHT_HIP),
    (LEFT_HIP, RIGHT_HIP),
    (LEFT_SHOULDER, LEFT_HIP),
    (RIGHT_SHOULDER, RIGHT_HIP),
    (LEFT_SHOULDER, RIGHT_SHOULDER),
    (LEFT_SHOULDER, LEFT_ELBOW),
    (RIGHT_SHOULDER, RIGHT_ELBOW),
    (LEFT_ELBOW, LEFT_WRIST),
    (RIGHT_ELBOW, RIGHT_WRIST),
    (LEFT_EYE, RIGHT_EYE),
    (NOSE, LEFT_EYE),
    (NOSE, RIGHT_EYE),
    (LEFT_EYE, LEFT_EAR),
    (RIGHT_EYE, RIGHT_EAR),
    (LEFT_EAR, LEFT_SHOULDER),
    (RIGHT_EAR, RIGHT_SHOULDER),
];

/// The 18-entry OpenPose colour wheel.
pub const COLOR_WHEEL: [[u8; 3]; 18] = [
    [255, 0, 0],
    [255, 85, 0],
    [255, 170, 0],
    [255, 255, 0],
    [170, 255, 0],
    [85, 255, 0],
    [0, 255, 0],
    [0, 255, 85],
    [0, 255, 170],
    [0, 255, 255],
    [0, 170, 255],
    [0, 85, 255],
    [0, 0, 255],
    [85, 0, 255],
    [170, 0, 255],
    [255, 0, 255],
    [255, 0, 170],
    [255, 0, 85],
];

pub fn limb_color(limb: usize) -> [u8; 3] {
    COLOR_WHEEL[limb % COLOR_WHEEL.len()]
}

pub fn joint_color(joint: usize) -> [u8; 3] {
    COLOR_WHEEL[joint % COLOR_WHEEL.len()]
}

/// Gait parameters of the procedural walker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gait {
    pub leg_swing: f64,
    pub arm_swing: f64,
    /// Stride cycles per metre travelled.
    pub cadence: f64,
}

impl Default for Gait {
    fn default() -> Self {
        Gait {
            leg_swing: 0.35,
            arm_swing: 0.3,
            cadence: 0.8,
        }
    }
}

/// Joint positions of a walking adult (about 1.7 m tall, feet on z = 0) at
/// ground position `root`, facing world heading `heading`, at gait `phase`.
pub fn walking_pose(root: [f64; 2], heading: f64, phase: f64, gait: &Gait) -> Vec<[f64; 3]> {
    let (sh, ch) = heading.sin_cos();
    // body frame: forward, left, up
    let to_world = |f: f64, s: f64, z: f64| -> [f64; 3] {
        [root[0] + f * ch - s * sh, root[1] + f * sh + s * ch, z]
    };
    let leg = gait.leg_swing * phase.sin();
    let arm = gait.arm_swing * phase.sin();

    let mut j = vec![[0.0; 3]; JOINT_COUNT];
    j[NOSE] = to_world(0.10, 0.0, 1.62);
    j[LEFT_EYE] = to_world(0.08, 0.03, 1.66);
    j[RIGHT_EYE] = to_world(0.08, -0.03, 1.66);
    j[LEFT_EAR] = to_world(0.0, 0.075, 1.64);
    j[RIGHT_EAR] = to_world(0.0, -0.075, 1.64);

    for (side, swing, sh_i, el_i, wr_i) in [
        (1.0, -arm, LEFT_SHOULDER, LEFT_ELBOW, LEFT_WRIST),
        (-1.0, arm, RIGHT_SHOULDER, RIGHT_ELBOW, RIGHT_WRIST),
    ] {
        let (sf, ss, sz) = (0.0, 0.19 * side, 1.45);
        let (ef, ez) = (sf + 0.30 * swing.sin(), sz - 0.30 * swing.cos());
        let fore = swing + 0.25;
        let (wf, wz) = (ef + 0.27 * fore.sin(), ez - 0.27 * fore.cos());
        j[sh_i] = to_world(sf, ss, sz);
        j[el_i] = to_world(ef, 0.21 * side, ez);
        j[wr_i] = to_world(wf, 0.21 * side, wz);
    }
    for (side, swing, hip_i, knee_i, ankle_i) in [
        (1.0, leg, LEFT_HIP, LEFT_KNEE, LEFT_ANKLE),
        (-1.0, -leg, RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE),
    ] {
        let (hf, hs, hz) = (0.0, 0.10 * side, 0.95);
        let (kf, kz) = (hf + 0.45 * swing.sin(), hz - 0.45 * swing.cos());
        let shin = swing - 0.15 * swing.abs();
        let (af, az) = (kf + 0.42 * shin.sin(), kz - 0.42 * shin.cos());
        j[hip_i] = to_world(hf, hs, hz);
        j[knee_i] = to_world(kf, hs, kz);
        j[ankle_i] = to_world(af, hs, az);
    }
    j
}

/// Box that encloses a [`walking_pose`] body with room for limb thickness.
pub fn walker_box(root: [f64; 2], heading: f64) -> Box3d {
    Box3d {
        center: [root[0], root[1], 0.95],
        size: [0.8, 0.8, 1.9],
        yaw: heading,
    }
}

/// Axis-aligned extent of the joints, inflated about its centre by
/// `1 + inflate` in every dimension.
pub fn skeleton_box(joints: &[[f64; 3]], inflate: f64) -> Box3d {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in joints {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let center = [0, 1, 2].map(|k| (lo[k] + hi[k]) / 2.0);
    // x extent maps onto l (yaw 0), y onto w
    let ext = [0, 1, 2].map(|k| ((hi[k] - lo[k]) * (1.0 + inflate)).max(1e-3));
    Box3d {
        center,
        size: [ext[1], ext[0], ext[2]],
        yaw: 0.0,
    }
}
