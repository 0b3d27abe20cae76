mod common;

use std::path::Path;

use common::{frame_mask, max_channel_diff};
use mvped_core::attributes::{AttributeToken, Palette};
use mvped_core::edit::{EditRequest, Motion};
use mvped_core::eval::{evaluate, scene_ground_truth, Convention, Detection, DetectionSet};
use mvped_core::fixture::{make_fixture, FixtureSpec};
use mvped_core::generators::Backend;
use mvped_core::pipeline::{replay, run_pipeline, Manifest, PipelineConfig, RunOptions, CONFIG_ENV, MANIFEST_FILE, STAGES};
use mvped_core::scene::{load_scene, save_scene, Scene, ViewId};

fn short_fixture(frames: usize) -> Scene {
    make_fixture(&FixtureSpec { frames, ..FixtureSpec::default() }, &Palette::default()).unwrap().scene
}

fn count_pngs(dir: &Path) -> usize {
    std::fs::read_dir(dir).map(|d| d.filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count()).unwrap_or(0)
}

#[test]
fn run_directory_holds_every_stage_and_replays_bit_exact() {
    let root = tempfile::tempdir().unwrap();
    let scene = short_fixture(6);
    save_scene(&scene, root.path().join("scene")).unwrap();
    let text = "backend = \"sprite\"\n\n[edit]\nseed = 11\n";
    let cfg = PipelineConfig::from_toml(text).unwrap();
    let opts = RunOptions {
        out_dir: Some(root.path().join("run")),
        intermediates: true,
        verify: true,
        scene_path: Some("../scene".into()),
    };
    let req = EditRequest::Replace { track_id: 1, motion: None, attributes: Some(AttributeToken::new("green", "white")) };
    let run = run_pipeline(&scene, &req, &cfg, text, &opts).unwrap();
    let dir = root.path().join("run");

    let manifest = Manifest::load(&dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest, run.manifest);
    assert_eq!(manifest.config, text);
    assert_eq!(manifest.seed, 11);
    assert_eq!(manifest.backend, Backend::Sprite);
    assert_eq!(manifest.stages.keys().map(String::as_str).collect::<Vec<_>>(), {
        let mut s = STAGES.to_vec();
        s.sort();
        s
    });
    assert!(!manifest.checks.is_empty());
    for c in &manifest.checks {
        assert!(c.passed, "{c:?}");
    }

    for stage in ["canvas", "mask", "pose", "generated"] {
        assert_eq!(count_pngs(&dir.join(stage)), 6, "{stage}");
    }
    for (slot, &view) in run.artifacts.canvas.layout.view_order.iter().enumerate() {
        let expected = if run.artifacts.canvas.layout.placeholders[slot] { 0 } else { 6 };
        assert_eq!(count_pngs(&dir.join("tiles").join(view.as_str())), expected, "{view}");
    }
    assert_eq!(load_scene(dir.join("edited")).unwrap(), run.artifacts.edited);

    let report = replay(&dir.join(MANIFEST_FILE)).unwrap();
    assert!(report.ok(), "{report:?}");

    let mut tampered = manifest.clone();
    tampered.stages.insert("mask".into(), "0".repeat(64));
    tampered.save(&dir.join(MANIFEST_FILE)).unwrap();
    let report = replay(&dir.join(MANIFEST_FILE)).unwrap();
    assert!(!report.ok());
    assert_eq!(report.mismatches.len(), 1);
    assert_eq!(report.mismatches[0].0, "mask");
}

#[test]
fn without_intermediates_only_the_result_is_written() {
    let root = tempfile::tempdir().unwrap();
    let scene = short_fixture(3);
    let cfg = PipelineConfig::default();
    let opts = RunOptions { out_dir: Some(root.path().to_path_buf()), ..RunOptions::default() };
    run_pipeline(&scene, &EditRequest::Remove { track_id: 1 }, &cfg, &cfg.to_toml(), &opts).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(root.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["edited", "manifest.json"]);
}

#[test]
fn identity_backend_replace_changes_only_masked_pixels() {
    let scene = short_fixture(4);
    let cfg = PipelineConfig { backend: Backend::Identity, ..PipelineConfig::default() };
    let req = EditRequest::Replace { track_id: 1, motion: None, attributes: None };
    let run = run_pipeline(&scene, &req, &cfg, &cfg.to_toml(), &RunOptions::default()).unwrap();
    let a = &run.artifacts;
    for view in ViewId::ALL {
        for f in 0..scene.frame_count {
            let m = frame_mask(a, view, f);
            let outside = image::GrayImage::from_fn(m.width(), m.height(), |x, y| image::Luma([(m.get_pixel(x, y).0[0] == 0) as u8]));
            assert_eq!(max_channel_diff(scene.frames.frame(view, f), a.edited.frames.frame(view, f), Some(&outside)), 0);
        }
    }
}

#[test]
fn inserted_ground_truth_matches_itself_perfectly() {
    let palette = Palette::default();
    let scene = make_fixture(&FixtureSpec { frames: 6, ..FixtureSpec::empty() }, &palette).unwrap().scene;
    let donor = make_fixture(&FixtureSpec { frames: 6, ..FixtureSpec::default() }, &palette).unwrap().scene;
    let motion = Motion::from_track(&donor.tracks[0]).unwrap();
    let req = EditRequest::Insert { motion, attributes: AttributeToken::new("yellow", "black") };
    let cfg = PipelineConfig::default();
    let run = run_pipeline(&scene, &req, &cfg, &cfg.to_toml(), &RunOptions::default()).unwrap();
    let gt = scene_ground_truth(&run.artifacts.edited);
    assert_eq!(gt.len(), 6);
    let detections = gt
        .iter()
        .enumerate()
        .map(|(i, g)| Detection { sample_id: g.sample_id.clone(), center: g.center, score: 1.0 - i as f64 * 0.01 })
        .collect();
    let r = evaluate(&DetectionSet { detections, ground_truth: gt }, Convention::NuScenes).unwrap();
    assert_eq!(r.map_score, 1.0);
}

#[test]
fn bad_requests_and_configs_exit_with_code_two() {
    let scene = short_fixture(2);
    let cfg = PipelineConfig::default();
    let err = run_pipeline(&scene, &EditRequest::Remove { track_id: 9 }, &cfg, "", &RunOptions::default()).err().unwrap();
    assert_eq!(err.exit_code(), 2);

    let short = Motion { frames: vec![] };
    let err = run_pipeline(&scene, &EditRequest::Insert { motion: short, attributes: AttributeToken::new("red", "red") }, &cfg, "", &RunOptions::default())
        .err()
        .unwrap();
    assert_eq!(err.exit_code(), 2);

    let err = run_pipeline(
        &scene,
        &EditRequest::Replace { track_id: 1, motion: None, attributes: Some(AttributeToken::new("chartreuse", "red")) },
        &cfg,
        "",
        &RunOptions::default(),
    )
    .err()
    .unwrap();
    assert_eq!(err.exit_code(), 2);

    let err = PipelineConfig::from_toml("[edit.mask]\nmask_factr = 1.3\n").err().unwrap();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("edit.mask"), "{err}");
}

#[test]
fn config_path_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let text = "backend = \"identity\"\n[edit]\nblend_band = 3\n";
    std::fs::write(&path, text).unwrap();
    std::env::set_var(CONFIG_ENV, &path);
    let loaded = PipelineConfig::load(None);
    std::env::remove_var(CONFIG_ENV);
    let (cfg, raw) = loaded.unwrap();
    assert_eq!(raw, text);
    assert_eq!(cfg.backend, Backend::Identity);
    assert_eq!(cfg.edit.blend_band, 3);
    let (default, _) = PipelineConfig::load(None).unwrap();
    assert_eq!(default, PipelineConfig::default());
}
