mod common;

use common::camera;
use mvped_core::fixture::{make_fixture, FixtureSpec};
use mvped_core::geometry::{box_corners, project_box3d, project_point, project_skeleton, unproject, Projection, Rect, Visibility};
use mvped_core::scene::{Box3d, CameraView};
use mvped_core::Palette;
use proptest::prelude::*;

fn axis() -> impl Strategy<Value = [f64; 3]> {
    proptest::array::uniform3(-3.0f64..3.0)
}

fn coords(lo: f64, hi: f64) -> impl Strategy<Value = [f64; 3]> {
    proptest::array::uniform3(lo..hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn unproject_inverts_project(a in axis(), t in coords(-5.0, 5.0), p in coords(-20.0, 20.0), f in 50.0f64..2000.0, skew in -2.0f64..2.0) {
        let cam = camera(a, t, f, skew);
        if let Projection::InFront { u, v, depth } = project_point(&cam, p) {
            prop_assume!(depth > 0.05);
            let q = unproject(&cam, u, v, depth);
            for k in 0..3 {
                prop_assert!((q[k] - p[k]).abs() < 1e-9, "{q:?} vs {p:?}");
            }
        }
    }

    #[test]
    fn box_hull_is_the_corner_hull(a in axis(), t in coords(-2.0, 2.0), c in coords(-10.0, 10.0), size in coords(0.1, 3.0), yaw in -4.0f64..4.0) {
        let cam = camera(a, t, 400.0, 0.0);
        let b = Box3d { center: c, size, yaw };
        let corners = box_corners(&b);

        // corners from an independent parameterisation
        let (s, co) = yaw.sin_cos();
        let fwd = [co, s];
        let left = [-s, co];
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let q = [
                        c[0] + sx * size[1] / 2.0 * fwd[0] + sy * size[0] / 2.0 * left[0],
                        c[1] + sx * size[1] / 2.0 * fwd[1] + sy * size[0] / 2.0 * left[1],
                        c[2] + sz * size[2] / 2.0,
                    ];
                    prop_assert!(corners.iter().any(|k| (0..3).all(|i| (k[i] - q[i]).abs() < 1e-12)));
                }
            }
        }

        let pts: Vec<(f64, f64)> = corners.iter().filter_map(|&p| project_point(&cam, p).pixel()).collect();
        let vb = project_box3d(&cam, &b);
        let bounds = Rect::new(0.0, 0.0, 640.0, 480.0);
        if pts.is_empty() {
            prop_assert_eq!(vb.visibility, Visibility::OutOfView);
            prop_assert!(vb.unclipped.is_none());
        } else {
            let fold = |sel: fn(&(f64, f64)) -> f64, max: bool| {
                pts.iter().map(sel).fold(if max { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| if max { a.max(b) } else { a.min(b) })
            };
            let hull = Rect::new(fold(|p| p.0, false), fold(|p| p.1, false), fold(|p| p.0, true), fold(|p| p.1, true));
            prop_assert_eq!(vb.unclipped, Some(hull));
            let overlaps = hull.x_min < 640.0 && hull.x_max > 0.0 && hull.y_min < 480.0 && hull.y_max > 0.0;
            if overlaps {
                let inside = hull.x_min >= 0.0 && hull.y_min >= 0.0 && hull.x_max <= 640.0 && hull.y_max <= 480.0;
                prop_assert_eq!(vb.visibility, if inside { Visibility::Visible } else { Visibility::Truncated });
                prop_assert_eq!(vb.rect, Some(hull.clip(&bounds)));
            } else {
                prop_assert_eq!(vb.visibility, Visibility::OutOfView);
            }
        }
    }
}

#[test]
fn fixture_joints_sit_in_their_boxes() {
    let spec = FixtureSpec::random(4, 3, &Palette::default());
    let fx = make_fixture(&spec, &Palette::default()).unwrap();
    let mut checked = 0;
    for track in &fx.scene.tracks {
        for (k, tf) in track.frames.iter().enumerate() {
            let skel = tf.skeleton.as_ref().unwrap();
            for view in &fx.scene.views {
                let vb = project_box3d(view, &tf.box3d);
                let Some(hull) = vb.unclipped else { continue };
                if corners_behind(view, &tf.box3d) {
                    continue;
                }
                let grown = Rect::from_center(hull.center().0, hull.center().1, hull.width() * 1.1, hull.height() * 1.1);
                for j in project_skeleton(view, skel).joints {
                    assert!(j.valid && grown.contains(j.u, j.v), "track {} frame {k} {}", track.track_id, view.id);
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

fn corners_behind(view: &CameraView, b: &Box3d) -> bool {
    box_corners(b).iter().any(|&p| project_point(view, p).pixel().is_none())
}
