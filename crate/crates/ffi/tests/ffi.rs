use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::ptr;

use projqa::features::{BASELINE_DIM, BASELINE_ID};
use projqa::model_io::{write_ply_binary, Model};
use projqa::pipeline::{score_model, PipelineConfig, Preset};
use projqa::projection::RenderConfig;
use projqa::scoring::{save_weights, HeadWeights};
use projqa::synth;
use projqa_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = projqa_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn header_is_generated() {
    let header = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/projqa.h")).unwrap();
    for name in ["projqa_model_load", "projqa_score", "projqa_last_error", "PROJQA_STATUS_BUFFER_TOO_SMALL", "typedef struct ProjqaModel ProjqaModel"] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(projqa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn score_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = synth::reference_shape(2, 3_000, 5);
    let model_path = dir.path().join("m.ply");
    write_ply_binary(&cloud, &mut fs::File::create(&model_path).unwrap()).unwrap();
    let weights = HeadWeights::random(BASELINE_ID, BASELINE_DIM, 16, 3);
    let head_path = dir.path().join("head.json");
    save_weights(&weights, &head_path).unwrap();

    let mut config = projqa_config_preset(ProjqaPreset::Tiny);
    assert_eq!(config.n_projections, 2);
    config.viewport = 128;
    config.seed = 11;

    let mut model = ptr::null_mut();
    let mut head = ptr::null_mut();
    unsafe {
        assert_eq!(projqa_model_load(cpath(&model_path).as_ptr(), &mut model), ProjqaStatus::Ok);
        assert_eq!(projqa_model_size(model), 3_000);
        assert_eq!(projqa_head_load(cpath(&head_path).as_ptr(), &mut head), ProjqaStatus::Ok);

        let (mut written, mut agg) = (0usize, 0.0f64);
        let status = projqa_score(model, head, &config, ptr::null_mut(), 0, &mut written, &mut agg);
        assert_eq!(status, ProjqaStatus::BufferTooSmall);
        assert_eq!(written, 2);
        assert!(last_error().contains("need room"));

        let mut scores = [0.0f64; 4];
        let status = projqa_score(model, head, &config, scores.as_mut_ptr(), scores.len(), &mut written, &mut agg);
        assert_eq!(status, ProjqaStatus::Ok);
        assert!(projqa_last_error().is_null());

        let mut cfg = PipelineConfig::preset(Preset::Tiny, 11);
        cfg.render = RenderConfig {
            viewport: 128,
            ..RenderConfig::default()
        };
        let reloaded = Model::load(&model_path).unwrap();
        let expected = score_model(&reloaded, &cfg, Some(&weights), None).unwrap();
        assert_eq!(&scores[..written], expected.per_projection.as_slice());
        assert_eq!(agg, expected.aggregate);

        projqa_model_free(model);
        projqa_head_free(head);
    }
}

#[test]
fn model_from_points() {
    let xyz = [0.0f32, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let rgb = [0.5f32; 12];
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(projqa_model_from_points(xyz.as_ptr(), rgb.as_ptr(), 4, &mut model), ProjqaStatus::Ok);
        assert_eq!(projqa_model_size(model), 4);
        projqa_model_free(model);
        assert_eq!(projqa_model_size(ptr::null()), 0);
        projqa_model_free(ptr::null_mut());
    }
}

#[test]
fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();
    let mut head = ptr::null_mut();
    unsafe {
        let missing = cpath(&dir.path().join("absent.ply"));
        assert_eq!(projqa_model_load(missing.as_ptr(), &mut model), ProjqaStatus::Io);
        assert!(model.is_null());
        assert!(!last_error().is_empty());

        let xyz = cpath(&dir.path().join("m.xyz"));
        fs::write(dir.path().join("m.xyz"), "x").unwrap();
        assert_eq!(projqa_model_load(xyz.as_ptr(), &mut model), ProjqaStatus::Unsupported);

        assert_eq!(projqa_model_load(ptr::null(), &mut model), ProjqaStatus::InvalidArgument);
        assert!(last_error().contains("path"));

        let absent_head = cpath(&dir.path().join("head.json"));
        assert_eq!(projqa_head_load(absent_head.as_ptr(), &mut head), ProjqaStatus::WeightsNotFound);

        let mut config = projqa_config_preset(ProjqaPreset::Base);
        config.grid_patch = 0;
        let (mut written, mut agg) = (0usize, 0.0);
        let xyz = [0.0f32, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rgb = [0.1f32; 6];
        assert_eq!(projqa_model_from_points(xyz.as_ptr(), rgb.as_ptr(), 2, &mut model), ProjqaStatus::Ok);
        let w = HeadWeights::random(BASELINE_ID, BASELINE_DIM, 8, 1);
        let head_path = dir.path().join("w.json");
        save_weights(&w, &head_path).unwrap();
        assert_eq!(projqa_head_load(cpath(&head_path).as_ptr(), &mut head), ProjqaStatus::Ok);
        let status = projqa_score(model, head, &config, ptr::null_mut(), 0, &mut written, &mut agg);
        assert_eq!(status, ProjqaStatus::InvalidArgument);
        projqa_model_free(model);
        projqa_head_free(head);
    }
}

#[test]
fn metrics() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 4.0, 5.0, 4.5, 10.0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(projqa_srcc(a.as_ptr(), b.as_ptr(), 5, &mut out), ProjqaStatus::Ok);
        assert!((out - 0.9).abs() < 1e-12);
        assert_eq!(projqa_krcc(a.as_ptr(), b.as_ptr(), 5, &mut out), ProjqaStatus::Ok);
        assert!((out - 0.8).abs() < 1e-12);
        assert_eq!(projqa_rmse(a.as_ptr(), a.as_ptr(), 5, &mut out), ProjqaStatus::Ok);
        assert_eq!(out, 0.0);
        assert_eq!(projqa_plcc(a.as_ptr(), a.as_ptr(), 5, &mut out), ProjqaStatus::Ok);
        assert!((out - 1.0).abs() < 1e-12);

        let flat = [1.0; 5];
        assert_eq!(projqa_plcc(a.as_ptr(), flat.as_ptr(), 5, &mut out), ProjqaStatus::ConstantInput);
        let nan = [1.0, f64::NAN, 3.0, 4.0, 5.0];
        assert_eq!(projqa_srcc(a.as_ptr(), nan.as_ptr(), 5, &mut out), ProjqaStatus::NonFinite);
        assert_eq!(projqa_srcc(ptr::null(), a.as_ptr(), 5, &mut out), ProjqaStatus::InvalidArgument);
    }
}
