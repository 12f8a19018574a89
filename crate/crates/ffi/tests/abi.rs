use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use pulse_affect::dataset::save_dataset;
use pulse_affect::eval::{synth_dataset, SynthSpec};
use pulse_affect::hrv::compute_features;
use pulse_affect::model::{build_model, save_checkpoint, ModelConfig, TrainingMeta};
use pulse_affect::selective;
use pulse_affect_ffi::*;

fn last_error() -> String {
    let p = pa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(pa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn decide_and_chance() {
    let mut o = PaOutcome::Abstain;
    unsafe {
        assert_eq!(pa_decide(0.96, 0.95, &mut o), PaStatus::Ok);
        assert_eq!(o, PaOutcome::High);
        assert_eq!(pa_decide(0.02, 0.95, &mut o), PaStatus::Ok);
        assert_eq!(o, PaOutcome::Low);
        assert_eq!(pa_decide(0.6, 0.95, &mut o), PaStatus::Ok);
        assert_eq!(o, PaOutcome::Abstain);
        assert_eq!(pa_decide(0.6, 0.3, &mut o), PaStatus::InvalidArgument);
        assert!(last_error().contains("alpha"));
        assert_eq!(pa_decide(1.5, 0.5, &mut o), PaStatus::InvalidArgument);

        let mut f1 = 0.0;
        assert_eq!(pa_chance_f1(2, 1, &mut f1), PaStatus::Ok);
        assert!((f1 - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(pa_chance_f1(0, 0, &mut f1), PaStatus::InvalidArgument);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(pa_chance_f1(1, 1, ptr::null_mut()), PaStatus::NullPointer);
        assert!(last_error().contains("out_f1"));
        let mut d = ptr::null_mut();
        assert_eq!(pa_dataset_load(ptr::null(), &mut d), PaStatus::NullPointer);
        let mut n = 0;
        assert_eq!(pa_dataset_len(ptr::null(), &mut n), PaStatus::NullPointer);
        assert_eq!(pa_features(ptr::null(), 3, [0.0; 11].as_mut_ptr()), PaStatus::NullPointer);
        pa_dataset_free(ptr::null_mut());
        pa_model_free(ptr::null_mut());
    }
}

#[test]
fn dataset_access_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let spec = SynthSpec {
        ppg: pulse_affect::eval::SourceDynamics { n_subjects: 2, samples_per_subject: 3, ..SynthSpec::default().ppg },
        ..SynthSpec::default()
    };
    let data = synth_dataset(&spec).unwrap();
    save_dataset(&data, &path).unwrap();

    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(pa_dataset_load(cpath(&path).as_ptr(), &mut d), PaStatus::Ok);
        let mut n = 0;
        assert_eq!(pa_dataset_len(d, &mut n), PaStatus::Ok);
        assert_eq!(n, 6);

        let mut len = 0;
        assert_eq!(pa_dataset_sample_ibis(d, 4, ptr::null_mut(), 0, &mut len), PaStatus::Ok);
        let mut buf = vec![0.0; len];
        assert_eq!(pa_dataset_sample_ibis(d, 4, buf.as_mut_ptr(), len, &mut len), PaStatus::Ok);
        assert_eq!(buf, data.samples[4].series.intervals);
        assert_eq!(pa_dataset_sample_ibis(d, 6, ptr::null_mut(), 0, &mut len), PaStatus::InvalidArgument);

        let mut v = PaValence::Neutral;
        assert_eq!(pa_dataset_sample_valence(d, 4, &mut v), PaStatus::Ok);
        let expected = match data.samples[4].label.binary() {
            pulse_affect::dataset::BinaryValence::Low => PaValence::Low,
            pulse_affect::dataset::BinaryValence::Neutral => PaValence::Neutral,
            pulse_affect::dataset::BinaryValence::High => PaValence::High,
        };
        assert_eq!(v, expected);

        let mut feats = [0.0; PA_FEATURE_COUNT];
        assert_eq!(pa_features(buf.as_ptr(), buf.len(), feats.as_mut_ptr()), PaStatus::Ok);
        assert_eq!(feats, compute_features(&data.samples[4].series).unwrap().to_array());
        assert_eq!(pa_features([0.8, 5.0].as_ptr(), 2, feats.as_mut_ptr()), PaStatus::Data);
        pa_dataset_free(d);

        let missing = cpath(&dir.path().join("missing.jsonl"));
        assert_eq!(pa_dataset_load(missing.as_ptr(), &mut d), PaStatus::Data);
        assert!(d.is_null());
    }
}

#[test]
fn model_prediction_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.paff");
    let cfg =
        ModelConfig { conv_filters: 2, conv_windows: vec![3, 2], lstm_hidden: 2, seed: 4, ..ModelConfig::default() };
    let model = build_model(&cfg, 12).unwrap();
    save_checkpoint(&model, &TrainingMeta { seed: 4, epochs_completed: 0, final_loss: 0.0 }, &path).unwrap();
    let ibis: Vec<f64> = (0..15).map(|i| 0.8 + 0.05 * (i as f64).sin()).collect();

    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(pa_model_load(cpath(&path).as_ptr(), &mut m), PaStatus::Ok);
        let mut len = 0;
        assert_eq!(pa_model_input_len(m, &mut len), PaStatus::Ok);
        assert_eq!(len, 12);
        let mut mass = -1.0;
        assert_eq!(pa_model_mc_predict(m, ibis.as_ptr(), ibis.len(), 21, 9, &mut mass), PaStatus::Ok);
        let series = pulse_affect::dataset::IbiSeries {
            subject_id: String::new(),
            stimulus_id: String::new(),
            source: pulse_affect::dataset::Source::Ppg,
            intervals: ibis.clone(),
        };
        let input = pulse_affect::dataset::model_input(&series, 12);
        let expected = selective::mc_predict(&model, &input, 21, 9).unwrap().mass_above(selective::MIDPOINT);
        assert_eq!(mass, expected);
        assert_eq!(pa_model_mc_predict(m, ibis.as_ptr(), ibis.len(), 0, 9, &mut mass), PaStatus::InvalidArgument);
        pa_model_free(m);

        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert_eq!(pa_model_load(cpath(&path).as_ptr(), &mut m), PaStatus::Data);
        assert!(m.is_null());
    }
}

#[test]
fn header_declares_every_export() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/pulse_affect.h")).unwrap();
    let source = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 13);
    for name in exports {
        assert!(
            header.contains(&format!(" {name}(")) || header.contains(&format!("*{name}(")),
            "{name} missing from header"
        );
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pulse_affect.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        match Command::new(compiler).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(&header).status() {
            Ok(status) => assert!(status.success(), "{compiler} rejected the header"),
            Err(_) => eprintln!("{compiler} not available, skipping"),
        }
    }
}

#[test]
fn c_program_links_against_static_library() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libpulse_affect_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let compiled = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status();
    match compiled {
        Ok(status) => assert!(status.success(), "C smoke program failed to build"),
        Err(_) => {
            eprintln!("cc not available, skipping");
            return;
        }
    }
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
