mod common;

use common::crop_checks::{random_tiles, tile_sprite_height};
use image::RgbImage;
use mvped_core::canvas::{compose_frames, decompose_frames, CanvasLayout};
use mvped_core::crop::{expand_rect, fit_aspect, CropTransform, TileSize};
use mvped_core::geometry::Rect;
use mvped_core::scene::ViewId;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn compose_decompose_is_bit_exact_on_random_canvases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let tile = TileSize::new(rng.random_range(1..24), rng.random_range(1..24));
        let frames = rng.random_range(1..4);
        let mut order = ViewId::ALL.to_vec();
        order.rotate_left(rng.random_range(0..6));
        let mut layout = CanvasLayout::with_order(tile, order).unwrap();
        let tiles = random_tiles(&mut rng, tile, frames);
        layout.placeholders = tiles.iter().map(Option::is_none).collect();
        let refs: Vec<Option<&[RgbImage]>> = tiles.iter().map(|t| t.as_deref()).collect();
        let canvas = compose_frames(&refs, &layout, frames).unwrap();
        let back = decompose_frames(&canvas, &layout).unwrap();
        for (t, b) in tiles.iter().zip(&back) {
            match t {
                Some(frames) => assert_eq!(&b.frames, frames),
                None => assert!(b.placeholder && b.frames.iter().all(|f| f.pixels().all(|p| p.0 == [0, 0, 0]))),
            }
        }
        let again: Vec<Option<&[RgbImage]>> = back.iter().map(|b| (!b.placeholder).then_some(b.frames.as_slice())).collect();
        assert_eq!(compose_frames(&again, &layout, frames).unwrap(), canvas);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transform_round_trips_corners(x in -200.0f64..1800.0, y in -200.0f64..1000.0, w in 2.0f64..900.0, h in 2.0f64..900.0, factor in 1.0f64..2.0) {
        let (fw, fh) = (1600u32, 900u32);
        let r = expand_rect(&Rect::new(x, y, x + w, y + h), factor).unwrap();
        let tile = TileSize::default();
        let window = fit_aspect(&r, tile.aspect(), fw, fh);
        prop_assert!(window.source_rect.x0 >= 0 && window.source_rect.x1 <= fw as i64);
        prop_assert!(window.source_rect.y0 >= 0 && window.source_rect.y1 <= fh as i64);
        prop_assert!(window.source_rect.width() > 0 && window.source_rect.height() > 0);
        let aspect = window.padded_height() as f64 / window.padded_width() as f64;
        prop_assert!((aspect - 2.0).abs() <= 1.0 / window.padded_width() as f64 + 1e-12);
        let t = CropTransform::new(ViewId::Front, window, tile);
        let sr = window.source_rect;
        for (cx, cy) in [(sr.x0, sr.y0), (sr.x1, sr.y0), (sr.x0, sr.y1), (sr.x1, sr.y1)] {
            let (tx, ty) = t.apply(cx as f64, cy as f64);
            prop_assert!((-1e-9..=tile.width as f64 + 1e-9).contains(&tx));
            prop_assert!((-1e-9..=tile.height as f64 + 1e-9).contains(&ty));
            let (bx, by) = t.invert(tx, ty);
            prop_assert!((bx - cx as f64).abs() <= 0.5 && (by - cy as f64).abs() <= 0.5);
        }
        let (ox, oy) = t.invert(0.0, 0.0);
        prop_assert!((ox - (sr.x0 - window.pad.left as i64) as f64).abs() < 1e-9);
        prop_assert!((oy - (sr.y0 - window.pad.top as i64) as f64).abs() < 1e-9);
    }
}

#[test]
fn tiles_normalise_source_scale() {
    for heading in [0.3, 1.57] {
        let heights: Vec<(f64, f64)> = [80.0, 160.0, 320.0].into_iter().map(|t| tile_sprite_height(t, heading)).collect();
        for (target, (src, _)) in [80.0, 160.0, 320.0].iter().zip(&heights) {
            assert!((src - target).abs() < 1e-6);
        }
        let tile_h: Vec<f64> = heights.iter().map(|h| h.1).collect();
        let spread = tile_h.iter().cloned().fold(f64::MIN, f64::max) - tile_h.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 2.0, "heading {heading}: {tile_h:?}");
    }
}
