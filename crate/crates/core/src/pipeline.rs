//! Reproducible edit runs: configuration, artifact directory, manifest with
//! per-stage checksums, replay and live invariant checks.
//!
//! Run directory layout:
//!
//! ```text
//! manifest.json
//! tiles/<VIEW>/0000.png ...   per-view crops (placeholders omitted)
//! canvas/0000.png ...         composed canvas
//! mask/0000.png ...           mask, 0 / 255
//! pose/0000.png ...           pose raster
//! generated/0000.png ...      generator output
//! edited/                     edited scene (descriptor + frames)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attributes::Palette;
use crate::canvas::{compose_frames, decompose_frames};
use crate::edit::{edit_scene, EditArtifacts, EditConfig, EditError, EditRequest};
use crate::generators::checkpoint::load_checkpoint;
use crate::generators::schedule::NoiseSchedule;
use crate::generators::{Backend, DdpmGenerator, Generator, IdentityGenerator, SpriteGenerator};
use crate::imaging::{frames_digest, is_all_zero};
use crate::scene::{load_scene, save_scene, Scene, ViewId};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "MVPED_CONFIG";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Stage names in execution order.
pub const STAGES: [&str; 6] = ["tiles", "canvas", "mask", "pose", "generated", "edited"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("{stage} stage: {message}")]
    Stage { stage: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    /// Process exit code: 2 for bad input, 3 for a failing stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Edit(e) if e.is_validation() => 2,
            _ => 3,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: Backend,
    /// Denoiser checkpoint for the ddpm backend.
    pub checkpoint: Option<PathBuf>,
    /// Sample the whole canvas instead of only masked regions (ddpm).
    pub full_canvas: bool,
    pub edit: EditConfig,
    /// Colour names the edit request may use.
    pub palette: Palette,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backend: Backend::Sprite,
            checkpoint: None,
            full_canvas: false,
            edit: EditConfig::default(),
            palette: Palette::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path`, or the file named by [`CONFIG_ENV`], or falls back to
    /// defaults. Returns the config and the exact text it was parsed from.
    pub fn load(path: Option<&Path>) -> Result<(Self, String), PipelineError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => {
                let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
                Ok((Self::from_toml(&text)?, text))
            }
            None => {
                let cfg = Self::default();
                let text = cfg.to_toml();
                Ok((cfg, text))
            }
        }
    }

    pub fn generator(&self, palette: &Palette) -> Result<Box<dyn Generator>, PipelineError> {
        Ok(match self.backend {
            Backend::Identity => Box::new(IdentityGenerator),
            Backend::Sprite => Box::new(SpriteGenerator {
                palette: palette.clone(),
                ..SpriteGenerator::default()
            }),
            Backend::Ddpm => {
                let path = self
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| PipelineError::Config("the ddpm backend needs `checkpoint`".into()))?;
                let ck = load_checkpoint(path).map_err(|e| PipelineError::io(path, e))?;
                let schedule = NoiseSchedule::from_config(&ck.schedule).map_err(|e| PipelineError::Config(e.to_string()))?;
                let mut g = DdpmGenerator::new(ck.model, schedule, ck.mask_channel).map_err(|e| PipelineError::Config(e.to_string()))?;
                g.palette = palette.clone();
                g.full_canvas = self.full_canvas;
                Box::new(g)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Config text exactly as supplied.
    pub config: String,
    pub request: EditRequest,
    /// Scene directory the run read, when it came from disk.
    pub scene: Option<PathBuf>,
    pub scene_digest: String,
    pub backend: Backend,
    pub seed: u64,
    /// Stage name to hex SHA-256 of its output.
    pub stages: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| PipelineError::io(path, e))
    }
}

/// One live invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where to write artifacts; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Write per-stage images, not just the edited scene and manifest.
    pub intermediates: bool,
    /// Run [`verify_artifacts`] and record the results in the manifest.
    pub verify: bool,
    pub scene_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub artifacts: EditArtifacts,
    pub manifest: Manifest,
}

fn combine(digests: impl IntoIterator<Item = String>) -> String {
    let mut h = Sha256::new();
    for d in digests {
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn scene_digest(scene: &Scene) -> String {
    combine(ViewId::ALL.iter().map(|&v| frames_digest(scene.frames.view(v))))
}

/// Checksum of every stage output.
pub fn stage_digests(a: &EditArtifacts) -> BTreeMap<String, String> {
    let tiles = combine(a.tiles.iter().map(|t| match t {
        Some(t) => frames_digest(&t.frames),
        None => "placeholder".to_string(),
    }));
    let values = [
        tiles,
        frames_digest(&a.canvas.frames),
        frames_digest(&a.mask.frames),
        frames_digest(&a.pose.frames),
        frames_digest(&a.generated.frames),
        scene_digest(&a.edited),
    ];
    STAGES.iter().map(|s| s.to_string()).zip(values).collect()
}

fn save_png_sequence<P>(dir: &Path, frames: &[image::ImageBuffer<P, Vec<u8>>]) -> Result<(), PipelineError>
where
    P: image::PixelWithColorType<Subpixel = u8>,
{
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        let p = dir.join(format!("{i:04}.png"));
        f.save(&p).map_err(|e| PipelineError::io(&p, e))?;
    }
    Ok(())
}

fn write_intermediates(dir: &Path, a: &EditArtifacts) -> Result<(), PipelineError> {
    for t in a.tiles.iter().flatten() {
        save_png_sequence::<image::Rgb<u8>>(&dir.join("tiles").join(t.view.as_str()), &t.frames)?;
    }
    save_png_sequence::<image::Rgb<u8>>(&dir.join("canvas"), &a.canvas.frames)?;
    save_png_sequence::<image::Luma<u8>>(&dir.join("mask"), &a.mask.to_visible())?;
    save_png_sequence::<image::Rgb<u8>>(&dir.join("pose"), &a.pose.frames)?;
    save_png_sequence::<image::Rgb<u8>>(&dir.join("generated"), &a.generated.frames)
}

/// Runs one edit with `config` and, if asked, writes the run directory.
pub fn run_pipeline(
    scene: &Scene,
    request: &EditRequest,
    config: &PipelineConfig,
    config_text: &str,
    opts: &RunOptions,
) -> Result<PipelineRun, PipelineError> {
    let generator = config.generator(&config.palette)?;
    let artifacts = edit_scene(scene, request, generator.as_ref(), &config.edit, &config.palette)?;
    let checks = if opts.verify {
        verify_artifacts(scene, request, &artifacts)
    } else {
        Vec::new()
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        config: config_text.to_string(),
        request: request.clone(),
        scene: opts.scene_path.clone(),
        scene_digest: scene_digest(scene),
        backend: config.backend,
        seed: config.edit.seed,
        stages: stage_digests(&artifacts),
        checks,
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        if opts.intermediates {
            write_intermediates(dir, &artifacts)?;
        }
        save_scene(&artifacts.edited, dir.join("edited")).map_err(|e| PipelineError::Stage {
            stage: "write".into(),
            message: e.to_string(),
        })?;
        manifest.save(&dir.join(MANIFEST_FILE))?;
    }
    Ok(PipelineRun { artifacts, manifest })
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub scene_matches: bool,
    /// Stages whose checksum differs: `(stage, recorded, replayed)`.
    pub mismatches: Vec<(String, String, String)>,
    pub checks: Vec<Check>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.scene_matches && self.mismatches.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

/// Re-runs `manifest` on `scene` and compares every stage checksum.
pub fn replay_with(manifest: &Manifest, scene: &Scene) -> Result<ReplayReport, PipelineError> {
    let config = PipelineConfig::from_toml(&manifest.config)?;
    let opts = RunOptions {
        verify: true,
        ..RunOptions::default()
    };
    let run = run_pipeline(scene, &manifest.request, &config, &manifest.config, &opts)?;
    let mut mismatches = Vec::new();
    for (stage, recorded) in &manifest.stages {
        let got = run.manifest.stages.get(stage).cloned().unwrap_or_default();
        if &got != recorded {
            mismatches.push((stage.clone(), recorded.clone(), got));
        }
    }
    Ok(ReplayReport {
        scene_matches: run.manifest.scene_digest == manifest.scene_digest,
        mismatches,
        checks: run.manifest.checks,
    })
}

/// Loads the manifest at `path` and the scene it names (relative paths
/// resolve against the manifest's directory), then replays.
pub fn replay(path: &Path) -> Result<ReplayReport, PipelineError> {
    let manifest = Manifest::load(path)?;
    let scene_path = manifest
        .scene
        .clone()
        .ok_or_else(|| PipelineError::Config("manifest does not name a scene directory".into()))?;
    let scene_path = if scene_path.is_relative() {
        path.parent().unwrap_or(Path::new(".")).join(scene_path)
    } else {
        scene_path
    };
    let scene = load_scene(&scene_path).map_err(|e| PipelineError::io(&scene_path, e))?;
    replay_with(&manifest, &scene)
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

fn differing(a: &RgbImage, b: &RgbImage, skip: impl Fn(u32, u32) -> bool) -> usize {
    a.enumerate_pixels()
        .filter(|&(x, y, p)| !skip(x, y) && b.get_pixel(x, y) != p)
        .count()
}

/// Checks the per-stage contracts on the data of a finished edit.
pub fn verify_artifacts(scene: &Scene, request: &EditRequest, a: &EditArtifacts) -> Vec<Check> {
    let layout = &a.canvas.layout;
    let mut out = Vec::new();

    out.push(check("mask_binary", a.mask.is_binary(), format!("{} set pixels", a.mask.count())));

    let tiles = decompose_frames(&a.canvas.frames, layout);
    let round_trip = tiles
        .ok()
        .and_then(|t| {
            let refs: Vec<Option<&[RgbImage]>> = t.iter().map(|t| (!t.placeholder).then_some(t.frames.as_slice())).collect();
            compose_frames(&refs, layout, a.canvas.frame_count()).ok()
        })
        .is_some_and(|f| f == a.canvas.frames);
    out.push(check("canvas_round_trip", round_trip, "compose(decompose(canvas)) == canvas"));

    let mut outside = 0usize;
    let mut placeholder_set = 0usize;
    let mask_tiles: Vec<Vec<GrayImage>> = decompose_frames(&a.mask.frames, layout)
        .map(|t| t.into_iter().map(|t| t.frames).collect())
        .unwrap_or_default();
    for (slot, frames) in mask_tiles.iter().enumerate() {
        for (f, m) in frames.iter().enumerate() {
            let set = m.pixels().filter(|p| p.0[0] != 0);
            match a.canvas.crop(slot, f) {
                None => placeholder_set += set.count(),
                Some(c) => {
                    let (x0, y0, x1, y1) = c.transform.content_pixels();
                    outside += m
                        .enumerate_pixels()
                        .filter(|&(x, y, p)| p.0[0] != 0 && (x < x0 || x > x1 || y < y0 || y > y1))
                        .count();
                }
            }
        }
    }
    out.push(check(
        "mask_in_tiles",
        outside == 0 && placeholder_set == 0,
        format!("{outside} pixels in padding, {placeholder_set} in empty slots"),
    ));

    let changed: usize = a
        .generated
        .frames
        .iter()
        .zip(&a.canvas.frames)
        .zip(&a.mask.frames)
        .map(|((g, c), m)| differing(g, c, |x, y| m.get_pixel(x, y).0[0] != 0))
        .sum();
    out.push(check("background_preserved", changed == 0, format!("{changed} unmasked canvas pixels changed")));

    let mut escaped = 0usize;
    for (slot, &view) in layout.view_order.iter().enumerate() {
        for f in 0..scene.frame_count {
            let (orig, edited) = (scene.frames.frame(view, f), a.edited.frames.frame(view, f));
            let rect = a.canvas.crop(slot, f).map(|c| c.transform.source_rect);
            escaped += differing(orig, edited, |x, y| {
                rect.is_some_and(|r| r.x0 <= x as i64 && (x as i64) < r.x1 && r.y0 <= y as i64 && (y as i64) < r.y1)
            });
        }
    }
    out.push(check("edit_confined", escaped == 0, format!("{escaped} pixels changed outside crop windows")));

    if matches!(request, EditRequest::Remove { .. }) {
        let live = a
            .pose
            .frames
            .iter()
            .zip(&a.mask.frames)
            .map(|(p, m)| p.enumerate_pixels().filter(|&(x, y, v)| m.get_pixel(x, y).0[0] != 0 && v.0 != [0, 0, 0]).count())
            .sum::<usize>();
        out.push(check("removal_pose_silent", live == 0, format!("{live} pose pixels under the mask")));
    }

    let empty_slots_blank = layout
        .placeholders
        .iter()
        .enumerate()
        .filter(|(_, &p)| p)
        .all(|(slot, _)| {
            let (ox, oy) = layout.slot_origin(slot);
            a.canvas.frames.iter().all(|f| {
                is_all_zero(&image::imageops::crop_imm(f, ox, oy, layout.tile.width, layout.tile.height).to_image())
            })
        });
    out.push(check("placeholders_blank", empty_slots_blank, "placeholder tiles are all zero"));

    let mut worst: f64 = 0.0;
    for crops in &a.canvas.crops {
        for c in crops.iter().flatten() {
            let t = &c.transform;
            let r = t.source_rect;
            for (x, y) in [(r.x0, r.y0), (r.x1, r.y0), (r.x0, r.y1), (r.x1, r.y1)] {
                let (tx, ty) = t.apply(x as f64, y as f64);
                let (bx, by) = t.invert(tx, ty);
                worst = worst.max((bx - x as f64).abs()).max((by - y as f64).abs());
            }
        }
    }
    out.push(check("crop_invertible", worst <= 0.5, format!("worst corner error {worst:.2e} px")));
    out
}
