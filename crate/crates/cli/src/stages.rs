//! Per-stage commands: each rebuilds its inputs from the scene and writes
//! one stage's output.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer, PixelWithColorType, RgbImage};
use mvped_core::canvas::{compose_canvas, decompose_canvas, CanvasClip, CanvasLayout};
use mvped_core::crop::{crop_track, CropError, FrameCrop, TileVideo};
use mvped_core::mask::{build_mask, dilate_volume};
use mvped_core::pipeline::PipelineConfig;
use mvped_core::pose::{build_pose_raster, track_tile_keypoints};
use mvped_core::scene::{load_scene, PedestrianTrack, Scene};
use mvped_core::MaskVolume;
use serde_json::json;

use crate::{CliError, CliResult, StageArgs};

pub const CANVAS_META: &str = "canvas.json";

pub fn save_frames<P>(dir: &Path, frames: &[ImageBuffer<P, Vec<u8>>]) -> CliResult
where
    P: PixelWithColorType<Subpixel = u8>,
{
    fs::create_dir_all(dir).map_err(|e| CliError::stage(format!("{}: {e}", dir.display())))?;
    for (i, f) in frames.iter().enumerate() {
        let p = dir.join(format!("{i:04}.png"));
        f.save(&p).map_err(|e| CliError::stage(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    fs::write(path, text).map_err(|e| CliError::stage(format!("{}: {e}", path.display())))
}

/// Loaded inputs of a stage command.
pub struct StageInput {
    pub scene: Scene,
    pub track: PedestrianTrack,
    pub config: PipelineConfig,
}

pub fn load_input(a: &StageArgs) -> CliResult<StageInput> {
    let scene = load_scene(&a.scene).map_err(CliError::invalid)?;
    let track = scene
        .track(a.track)
        .cloned()
        .ok_or_else(|| CliError::invalid(format!("scene has no track {}", a.track)))?;
    let (mut config, _) = PipelineConfig::load(a.config.as_deref()).map_err(CliError::invalid)?;
    if let Some(t) = a.tile_size {
        config.edit.crop.tile = t;
    }
    if let Some(f) = a.expand_factor {
        config.edit.crop.expand_factor = f;
    }
    if let Some(f) = a.mask_factor {
        config.edit.mask.mask_factor = f;
    }
    if let Some(r) = a.dilate_radius {
        config.edit.mask.dilate_radius = r;
        config.edit.mask.dilate_iterations = config.edit.mask.dilate_iterations.max(1);
    }
    Ok(StageInput { scene, track, config })
}

fn layout(a: &StageArgs, input: &StageInput) -> CliResult<CanvasLayout> {
    let tile = input.config.edit.crop.tile;
    match &a.layout {
        Some(order) => CanvasLayout::with_order(tile, order.clone()).map_err(CliError::invalid),
        None => Ok(CanvasLayout::new(tile)),
    }
}

fn tiles(input: &StageInput, layout: &CanvasLayout) -> CliResult<Vec<Option<TileVideo>>> {
    let tiles: Vec<Option<TileVideo>> = layout
        .view_order
        .iter()
        .map(|&view| match crop_track(&input.scene, &input.track, view, &input.config.edit.crop) {
            Ok(t) => Ok(Some(t)),
            Err(CropError::NeverVisible { .. }) => Ok(None),
            Err(e) => Err(CliError::stage(format!("crop stage: {e}"))),
        })
        .collect::<CliResult<_>>()?;
    if tiles.iter().all(Option::is_none) {
        return Err(CliError::stage(format!("crop stage: track {} is not visible in any view", input.track.track_id)));
    }
    Ok(tiles)
}

pub fn canvas(a: &StageArgs, input: &StageInput) -> CliResult<CanvasClip> {
    let layout = layout(a, input)?;
    let tiles = tiles(input, &layout)?;
    compose_canvas(&tiles, &layout, input.scene.frame_count).map_err(|e| CliError::stage(format!("compose stage: {e}")))
}

pub fn mask_of(input: &StageInput, canvas: &CanvasClip) -> MaskVolume {
    let m = input.config.edit.mask;
    let mask = build_mask(canvas, m.mask_factor);
    if m.dilate_radius > 0 && m.dilate_iterations > 0 {
        dilate_volume(&mask, m.dilate_radius, m.dilate_iterations)
    } else {
        mask
    }
}

fn save_tiles(out: &Path, tiles: &[Option<TileVideo>]) -> CliResult {
    for t in tiles.iter().flatten() {
        save_frames(&out.join(t.view.as_str()), &t.frames)?;
    }
    let crops: serde_json::Map<String, serde_json::Value> = tiles
        .iter()
        .flatten()
        .map(|t| (t.view.as_str().to_string(), json!(t.crops)))
        .collect();
    write_json(&out.join("crops.json"), &serde_json::Value::Object(crops))
}

pub fn crop(a: &StageArgs) -> CliResult {
    let input = load_input(a)?;
    let layout = layout(a, &input)?;
    let tiles = tiles(&input, &layout)?;
    save_tiles(&a.out, &tiles)?;
    println!("{} of 6 views cropped into {}", tiles.iter().flatten().count(), a.out.display());
    Ok(())
}

pub fn compose(a: &StageArgs) -> CliResult {
    let input = load_input(a)?;
    let c = canvas(a, &input)?;
    save_frames(&a.out, &c.frames)?;
    write_json(&a.out.join(CANVAS_META), &json!({ "layout": c.layout, "crops": c.crops }))?;
    println!("{} canvas frames of {}x{} in {}", c.frames.len(), c.layout.width(), c.layout.height(), a.out.display());
    Ok(())
}

fn load_png_sequence(dir: &Path) -> CliResult<Vec<RgbImage>> {
    let mut frames = Vec::new();
    loop {
        let p = dir.join(format!("{:04}.png", frames.len()));
        if !p.is_file() {
            break;
        }
        frames.push(image::open(&p).map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?.to_rgb8());
    }
    Ok(frames)
}

pub fn decompose(canvas_dir: &Path, out: &Path) -> CliResult {
    let meta_path = canvas_dir.join(CANVAS_META);
    let text = fs::read_to_string(&meta_path).map_err(|e| CliError::invalid(format!("{}: {e}", meta_path.display())))?;
    let meta: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", meta_path.display())))?;
    let layout: CanvasLayout = serde_json::from_value(meta["layout"].clone()).map_err(CliError::invalid)?;
    let crops: Vec<Vec<Option<FrameCrop>>> = serde_json::from_value(meta["crops"].clone()).map_err(CliError::invalid)?;
    let frames = load_png_sequence(canvas_dir)?;
    if frames.is_empty() {
        return Err(CliError::invalid(format!("no canvas frames in {}", canvas_dir.display())));
    }
    let clip = CanvasClip { frames, layout, crops };
    let tiles = decompose_canvas(&clip).map_err(CliError::invalid)?;
    save_tiles(out, &tiles)?;
    println!("{} tile videos written to {}", tiles.iter().flatten().count(), out.display());
    Ok(())
}

pub fn mask(a: &StageArgs) -> CliResult {
    let input = load_input(a)?;
    let c = canvas(a, &input)?;
    let m = mask_of(&input, &c);
    let visible: Vec<GrayImage> = m.to_visible();
    save_frames(&a.out, &visible)?;
    println!("{} masked pixels over {} frames", m.count(), m.frame_count());
    Ok(())
}

pub fn pose_raster(a: &StageArgs) -> CliResult {
    let input = load_input(a)?;
    let c = canvas(a, &input)?;
    let kp = track_tile_keypoints(&input.scene.views, &input.track, &c);
    let pose = build_pose_raster(&c, &kp, &input.config.edit.pose).map_err(|e| CliError::stage(format!("pose stage: {e}")))?;
    save_frames(&a.out, &pose.frames)?;
    println!("{} pose frames in {}", pose.frames.len(), a.out.display());
    Ok(())
}
