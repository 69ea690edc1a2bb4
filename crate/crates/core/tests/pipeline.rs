mod common;

use common::*;
use matforge_core::mesh_io::{load_texture, Role};
use matforge_core::partition::{read_partition, write_partition, UNASSIGNED};
use matforge_core::pipeline::{run_pipeline, Pipeline, PipelineError, Stage};

#[test]
fn staged_execution_equals_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut full = demo_config(tmp.path(), "cube");
    full.output = tmp.path().join("full");
    let manifest = run_pipeline(full.clone());
    assert_eq!(manifest.exit_code, 0, "{:?}", manifest.error);

    let mut staged = full.clone();
    staged.output = tmp.path().join("staged");
    let p = Pipeline::new(staged.clone()).unwrap();
    for stage in Stage::ALL {
        p.run_stage(stage).unwrap();
    }
    let (a, b) = (tree_bytes(&full.output.join("export")), tree_bytes(&staged.output.join("export")));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    for dir in ["partition", "estimate", "match"] {
        let (a, b) = (tree_bytes(&full.output.join(dir)), tree_bytes(&staged.output.join(dir)));
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>(), "{dir}");
        for (k, v) in a {
            if k.extension().is_some_and(|e| e == "jsonl") {
                continue;
            }
            assert_eq!(&v, &b[&k], "{dir}/{}", k.display());
        }
    }
}

#[test]
fn hand_edited_partition_drives_estimation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo_config(tmp.path(), "sphere");
    assert_eq!(run_pipeline(cfg.clone()).exit_code, 0);
    let dir = cfg.output.join("partition");
    let mut part = read_partition(&dir, "partition").unwrap();
    let lib = matforge_core::library::load_library(&tmp.path().join("library")).unwrap();
    let target = lib.records().map(|r| r.id.clone()).find(|id| !part.materials.contains(id)).unwrap();
    part.materials = vec![target.clone()];
    for c in part.cells.iter_mut().filter(|c| **c <= UNASSIGNED) {
        *c = 0;
    }
    write_partition(&part, &dir, "partition").unwrap();

    let p = Pipeline::new(cfg.clone()).unwrap();
    p.run_stage(Stage::Estimate).unwrap();
    let rough = load_texture(&p.layout().estimate_map(Role::Roughness), Role::Roughness).unwrap();
    let src = lib.get(&target).unwrap().maps[&Role::Roughness].clone();
    let (w, h) = rough.dims();
    let src = src.resize_bilinear_wrap(w, h);
    let pool: Vec<f32> = src.data().to_vec();
    for t in part.texels_of(&target) {
        let v = rough.pixel(t)[0];
        assert!(pool.iter().any(|&s| (s - v).abs() < 1e-6), "texel {t}: {v} not from {target}");
    }
}

#[test]
fn rerunning_match_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo_config(tmp.path(), "cube");
    let p = Pipeline::new(cfg.clone()).unwrap();
    for stage in [Stage::Render, Stage::Segment, Stage::Annotate, Stage::Match] {
        p.run_stage(stage).unwrap();
    }
    let first = std::fs::read(p.layout().matches()).unwrap();
    p.run_stage(Stage::Match).unwrap();
    assert_eq!(first, std::fs::read(p.layout().matches()).unwrap());
}

#[test]
fn stage_without_prior_artifacts_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo_config(tmp.path(), "cube");
    let err = Pipeline::new(cfg).unwrap().run_stage(Stage::Merge).unwrap_err();
    assert!(matches!(err, PipelineError::MissingPriorArtifact { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn dump_flags_write_debug_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = demo_config(tmp.path(), "cube");
    cfg.dump_gbuffer = true;
    cfg.dump_partition = true;
    cfg.deep = true;
    cfg.views = 1;
    let manifest = run_pipeline(cfg.clone());
    assert_eq!(manifest.exit_code, 0, "{:?}", manifest.error);
    let render = tree_bytes(&cfg.output.join("render"));
    assert!(render.keys().any(|k| k.to_string_lossy().contains("depth")), "{:?}", render.keys().collect::<Vec<_>>());
    let export = tree_bytes(&cfg.output.join("export"));
    assert!(export.keys().any(|k| k.to_string_lossy().contains("provenance")));
    let rough = export.keys().find(|k| k.to_string_lossy().ends_with("_roughness.png")).unwrap();
    let bytes = &export[rough];
    // PNG IHDR bit depth byte.
    assert_eq!(bytes[24], 16);
    assert!(cfg.output.join("run.json").exists());
}
