//! Crop and scale helpers shared by the crop and acceptance targets.

use image::RgbImage;
use mvped_core::attributes::{AttributeToken, Palette};
use mvped_core::crop::{crop_track, CropConfig, TileSize};
use mvped_core::fixture::{make_fixture, FixtureSpec, WalkerSpec};
use mvped_core::geometry::project_box3d;
use mvped_core::scene::ViewId;
use mvped_core::sprite::SKIN_TONE;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::coverage_extent;

pub fn random_tiles(rng: &mut ChaCha8Rng, tile: TileSize, frames: usize) -> Vec<Option<Vec<RgbImage>>> {
    (0..6)
        .map(|_| {
            rng.random_bool(0.7).then(|| {
                (0..frames)
                    .map(|_| RgbImage::from_fn(tile.width, tile.height, |_, _| image::Rgb(rng.random())))
                    .collect()
            })
        })
        .collect()
}

/// Sprite height inside the FRONT tile when the same pedestrian is zoomed to
/// a projected box height of `target` pixels.
/// The pose must keep the expanded box taller than the tile aspect, so the
/// window height is exactly 1.6 times the box height.
pub fn tile_sprite_height(target: f64, heading: f64) -> (f64, f64) {
    let walker = WalkerSpec {
        start: [6.0, 0.2],
        velocity: [0.0, 0.0],
        start_frame: 0,
        frames: None,
        heading,
        phase: 0.7,
        attributes: AttributeToken::new("red", "blue"),
    };
    let mut spec = FixtureSpec {
        frames: 1,
        width: 1280,
        height: 960,
        focal: 400.0,
        camera_height: 0.95,
        pedestrians: vec![walker],
        ..FixtureSpec::default()
    };
    let probe = make_fixture(&spec, &Palette::default()).unwrap();
    let h400 = project_box3d(probe.scene.view(ViewId::Front), &probe.scene.tracks[0].frames[0].box3d).rect.unwrap().height();
    spec.focal = 400.0 * target / h400;
    let fx = make_fixture(&spec, &Palette::default()).unwrap();
    let cfg = CropConfig::default();
    let track = &fx.scene.tracks[0];
    let source_h = project_box3d(fx.scene.view(ViewId::Front), &track.frames[0].box3d).rect.unwrap().height();
    let tile = crop_track(&fx.scene, track, ViewId::Front, &cfg).unwrap();
    let mut empty = fx.scene.clone();
    empty.frames = fx.empty.clone();
    let bg = crop_track(&empty, track, ViewId::Front, &cfg).unwrap();
    let (_, pants) = track.attributes.rgb(&Palette::default()).unwrap();
    let (top, bottom) = coverage_extent(&tile.frames[0], &bg.frames[0], SKIN_TONE, pants).unwrap();
    let window = tile.crops[0].unwrap().transform.source_rect;
    assert_eq!(window.height() as f64, cfg.expand_factor * target, "window not height-governed");
    (source_h, bottom - top)
}

