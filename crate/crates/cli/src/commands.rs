use std::fs;
use std::path::Path;

use mvped_core::attributes::{AttributeToken, Palette};
use mvped_core::edit::{EditRequest, Motion};
use mvped_core::eval::{evaluate, parse_detections, parse_ground_truth, DetectionSet};
use mvped_core::fixture::{make_fixture, FixtureSpec};
use mvped_core::generators::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use mvped_core::generators::schedule::NoiseSchedule;
use mvped_core::generators::train::{sprite_training_set, train_denoiser, TrainConfig};
use mvped_core::generators::{ConditioningBundle, DdpmGenerator, Generator};
use mvped_core::geometry::project_box3d;
use mvped_core::pipeline::{replay, run_pipeline, RunOptions};
use mvped_core::pose::{build_pose_raster, track_tile_keypoints};
use mvped_core::scene::{load_scene, save_scene, Scene};
use serde_json::json;

use crate::stages::{canvas, load_input, mask_of, save_frames};
use crate::{CliError, CliResult, EditArgs, EvalArgs, FixtureArgs, GenerateArgs, Op, ProjectArgs, SampleArgs, TrainArgs, VerifyArgs};

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Parses JSON or TOML by extension, reporting the failing field path.
fn parse_structured<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read(path)?;
    let at = |e: &dyn std::fmt::Display| CliError::invalid(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|x| x == "toml") {
        serde_path_to_error::deserialize(toml::Deserializer::new(&text)).map_err(|e| at(&e))
    } else {
        serde_path_to_error::deserialize(&mut serde_json::Deserializer::from_str(&text)).map_err(|e| at(&e))
    }
}

pub fn fixture(a: FixtureArgs) -> CliResult {
    let palette = Palette::default();
    let mut spec: FixtureSpec = match &a.spec {
        Some(p) => parse_structured(p)?,
        None => FixtureSpec::default(),
    };
    if let Some(n) = a.pedestrians {
        let random = FixtureSpec::random(a.seed.unwrap_or(spec.seed), n, &palette);
        spec.pedestrians = random.pedestrians;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(f) = a.frames {
        spec.frames = f;
    }
    let fx = make_fixture(&spec, &palette).map_err(CliError::invalid)?;
    for w in &fx.warnings {
        eprintln!("warning: {w}");
    }
    save_scene(&fx.scene, &a.out).map_err(CliError::stage)?;
    if let Some(dir) = &a.empty_out {
        let empty = Scene {
            tracks: Vec::new(),
            frames: fx.empty.clone(),
            ..fx.scene.clone()
        };
        save_scene(&empty, dir).map_err(CliError::stage)?;
    }
    println!("{} frames, {} tracks written to {}", fx.scene.frame_count, fx.scene.tracks.len(), a.out.display());
    Ok(())
}

pub fn project(a: ProjectArgs) -> CliResult {
    let scene = load_scene(&a.scene).map_err(CliError::invalid)?;
    if let Some(id) = a.track {
        if scene.track(id).is_none() {
            return Err(CliError::invalid(format!("scene has no track {id}")));
        }
    }
    for track in scene.tracks.iter().filter(|t| a.track.is_none_or(|id| id == t.track_id)) {
        for (k, tf) in track.frames.iter().enumerate() {
            for view in &scene.views {
                let vb = project_box3d(view, &tf.box3d);
                let line = json!({
                    "track": track.track_id,
                    "frame": track.start_frame + k,
                    "view": view.id,
                    "visibility": vb.visibility,
                    "rect": vb.rect,
                });
                println!("{line}");
            }
        }
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> CliResult {
    let palette = Palette::default();
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => parse_structured(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.tile_size.height % 8 != 0 || a.tile_size.width % 8 != 0 {
        return Err(CliError::invalid("tile sides must be multiples of 8"));
    }
    let samples = sprite_training_set(a.samples, a.tile_size, cfg.seed, &palette);
    let out = train_denoiser(&samples, &cfg, &palette).map_err(CliError::stage)?;
    let ck = Checkpoint {
        model: out.model,
        mask_channel: cfg.mask_channel,
        schedule: cfg.schedule,
    };
    save_checkpoint(&a.out, &ck).map_err(CliError::stage)?;
    if let Some(p) = &a.loss_out {
        let text: String = out.loss_trace.iter().map(|l| format!("{l}\n")).collect();
        fs::write(p, text).map_err(|e| CliError::stage(format!("{}: {e}", p.display())))?;
    }
    let trace = &out.loss_trace;
    let window = (trace.len() / 2).clamp(1, 100);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    println!(
        "{} steps, mean loss first {window}: {:.4}, last {window}: {:.4}",
        trace.len(),
        mean(&trace[..window.min(trace.len())]),
        mean(&trace[trace.len().saturating_sub(window)..])
    );
    Ok(())
}

fn ddpm_from(path: &Path, palette: &Palette) -> CliResult<DdpmGenerator> {
    let ck = load_checkpoint(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let schedule = NoiseSchedule::from_config(&ck.schedule).map_err(CliError::invalid)?;
    let mut g = DdpmGenerator::new(ck.model, schedule, ck.mask_channel).map_err(CliError::invalid)?;
    g.palette = palette.clone();
    Ok(g)
}

pub fn sample(a: SampleArgs) -> CliResult {
    let palette = Palette::default();
    let g = ddpm_from(&a.checkpoint, &palette)?;
    let s = sprite_training_set(1, a.tile_size, a.seed, &palette).remove(0);
    let out = g.generate(&s.bundle).map_err(CliError::stage)?;
    save_frames(&a.out.join("input"), &s.bundle.masked_canvas.frames)?;
    save_frames(&a.out.join("target"), &s.target.frames)?;
    save_frames(&a.out.join("generated"), &out.frames)?;
    println!("sample written to {}", a.out.display());
    Ok(())
}

pub fn generate(a: GenerateArgs) -> CliResult {
    let mut input = load_input(&a.stage)?;
    if let Some(b) = a.backend {
        input.config.backend = b;
    }
    if let Some(c) = a.checkpoint {
        input.config.checkpoint = Some(c);
    }
    let palette = input.config.palette.clone();
    let attributes = AttributeToken::new(
        a.top.unwrap_or_else(|| input.track.attributes.top.clone()),
        a.pants.unwrap_or_else(|| input.track.attributes.pants.clone()),
    );
    attributes.validate(&palette).map_err(CliError::invalid)?;
    let generator = input.config.generator(&palette).map_err(|e| CliError { code: e.exit_code() as u8, message: e.to_string() })?;
    let c = canvas(&a.stage, &input)?;
    let mask = mask_of(&input, &c);
    let kp = track_tile_keypoints(&input.scene.views, &input.track, &c);
    let pose = build_pose_raster(&c, &kp, &input.config.edit.pose).map_err(|e| CliError::stage(format!("pose stage: {e}")))?;
    let seed = a.seed.unwrap_or(input.config.edit.seed);
    let bundle = ConditioningBundle::new(&c, mask, pose, attributes, seed, kp).map_err(CliError::stage)?;
    let out = generator.generate(&bundle).map_err(|e| CliError::stage(format!("generate stage: {e}")))?;
    save_frames(&a.stage.out, &out.frames)?;
    println!("{} backend: {} frames in {}", generator.name(), out.frames.len(), a.stage.out.display());
    Ok(())
}

fn request(a: &EditArgs, scene: &Scene) -> CliResult<EditRequest> {
    let attrs = |fallback: Option<&AttributeToken>| -> CliResult<Option<AttributeToken>> {
        match (&a.top, &a.pants, fallback) {
            (None, None, _) => Ok(None),
            (top, pants, Some(f)) => Ok(Some(AttributeToken::new(
                top.clone().unwrap_or_else(|| f.top.clone()),
                pants.clone().unwrap_or_else(|| f.pants.clone()),
            ))),
            (Some(top), Some(pants), None) => Ok(Some(AttributeToken::new(top.clone(), pants.clone()))),
            _ => Err(CliError::invalid("insert needs both --top and --pants")),
        }
    };
    let motion = match &a.motion {
        Some(p) => Some(Motion::load(p).map_err(CliError::invalid)?),
        None => None,
    };
    let track_id = || a.track.ok_or_else(|| CliError::invalid("--track is required for this op"));
    Ok(match a.op {
        Op::Remove => EditRequest::Remove { track_id: track_id()? },
        Op::Replace => {
            let id = track_id()?;
            let current = scene.track(id).map(|t| &t.attributes);
            EditRequest::Replace {
                track_id: id,
                motion,
                attributes: attrs(current)?,
            }
        }
        Op::Insert => EditRequest::Insert {
            motion: motion.ok_or_else(|| CliError::invalid("insert needs --motion"))?,
            attributes: attrs(None)?.ok_or_else(|| CliError::invalid("insert needs --top and --pants"))?,
        },
    })
}

pub fn edit(a: EditArgs) -> CliResult {
    let scene = load_scene(&a.scene).map_err(CliError::invalid)?;
    let (mut config, mut text) = mvped_core::pipeline::PipelineConfig::load(a.config.as_deref()).map_err(CliError::invalid)?;
    let overridden = a.backend.is_some() || a.checkpoint.is_some() || a.seed.is_some();
    if let Some(b) = a.backend {
        config.backend = b;
    }
    if let Some(c) = &a.checkpoint {
        config.checkpoint = Some(std::path::absolute(c).unwrap_or_else(|_| c.clone()));
    }
    if let Some(s) = a.seed {
        config.edit.seed = s;
    }
    // the manifest must replay the flags too
    if overridden {
        text = config.to_toml();
    }
    let req = request(&a, &scene)?;
    let scene_path = std::path::absolute(&a.scene).unwrap_or_else(|_| a.scene.clone());
    let opts = RunOptions {
        out_dir: Some(a.out.clone()),
        intermediates: !a.no_intermediates,
        verify: a.verify,
        scene_path: Some(scene_path),
    };
    let run = run_pipeline(&scene, &req, &config, &text, &opts).map_err(|e| CliError { code: e.exit_code() as u8, message: e.to_string() })?;
    for (stage, digest) in &run.manifest.stages {
        println!("{stage:<10} {digest}");
    }
    let failed: Vec<&str> = run.manifest.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::stage(format!("invariant checks failed: {}", failed.join(", "))));
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult {
    let detections = parse_detections(&read(&a.dets)?).map_err(|e| CliError::invalid(format!("{}: {e}", a.dets.display())))?;
    let ground_truth = parse_ground_truth(&read(&a.gt)?).map_err(|e| CliError::invalid(format!("{}: {e}", a.gt.display())))?;
    let r = evaluate(&DetectionSet { detections, ground_truth }, a.convention).map_err(CliError::invalid)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r).expect("result serializes"));
    } else {
        print!("{r}");
    }
    Ok(())
}

pub fn verify(a: VerifyArgs) -> CliResult {
    let report = replay(&a.manifest).map_err(|e| CliError { code: e.exit_code() as u8, message: e.to_string() })?;
    for (stage, recorded, got) in &report.mismatches {
        println!("MISMATCH {stage}: recorded {recorded}, replayed {got}");
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        println!("CHECK FAILED {}: {}", c.name, c.detail);
    }
    if !report.scene_matches {
        println!("MISMATCH scene: input scene differs from the recorded one");
    }
    if report.ok() {
        println!("ok: all stage checksums match");
        Ok(())
    } else {
        Err(CliError::stage("replay differs from the manifest"))
    }
}
