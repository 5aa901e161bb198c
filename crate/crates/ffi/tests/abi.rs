use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ctts::baselines::{arima_fit_or_last, arima_predict, ema_fit, ema_predict, ArimaOrder};
use ctts::data::{generate_synthetic, make_windows, SyntheticConfig};
use ctts::model::{forward, init_params, Checkpoint, CttsConfig};
use ctts_ffi::*;

fn last_error() -> Option<String> {
    let p = ctts_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn prices(seed: u64) -> Vec<f64> {
    let s = generate_synthetic(&SyntheticConfig::default(), seed).unwrap();
    s.prices()[..80].to_vec()
}

fn saved_model(dir: &Path) -> (PathBuf, Checkpoint) {
    let config = CttsConfig {
        d_model: 4,
        k_max: 3,
        scales: vec![1, 2],
        num_segments: 2,
        ..CttsConfig::default()
    };
    let mut params = init_params(&config, 7).unwrap();
    params.freeze_sigma_max(0.003).unwrap();
    let ck = Checkpoint {
        config,
        params,
        train_seed: 7,
    };
    let path = dir.join("m.ckpt");
    ck.save(&path).unwrap();
    (path, ck)
}

fn load(path: &Path) -> *mut CttsModel {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ctts_model_load(c.as_ptr(), &mut model) }, CttsStatus::Ok);
    assert!(!model.is_null());
    model
}

fn empty() -> CttsPrediction {
    CttsPrediction {
        probs: [0.0; 3],
        predicted_sign: 9,
        confidence: 0.0,
    }
}

#[test]
fn model_prediction_matches_core_forward() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ck) = saved_model(dir.path());
    let model = load(&path);
    assert_eq!(unsafe { ctts_model_window_len(model) }, 80);

    let series = generate_synthetic(&SyntheticConfig::default(), 3).unwrap();
    let windows = make_windows(&series, 37, 1e-4).unwrap().windows;
    for w in windows.iter().take(10) {
        let mut out = empty();
        let status = unsafe { ctts_model_predict(model, w.raw.as_ptr(), w.raw.len(), &mut out) };
        assert_eq!(status, CttsStatus::Ok);
        assert_eq!(last_error(), None);
        let expected = forward(w, &ck.params, &ck.config).unwrap().probs;
        assert_eq!(out.probs.to_vec(), expected);
        let best = (0..3).fold(0, |b, j| if out.probs[j] > out.probs[b] { j } else { b });
        assert_eq!(out.predicted_sign, best as i8 - 1);
        assert_eq!(out.confidence, out.probs[best]);
    }
    unsafe { ctts_model_free(model) };
}

#[test]
fn model_errors_carry_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = saved_model(dir.path());
    let model = load(&path);
    let p = prices(1);
    let mut out = empty();

    assert_eq!(
        unsafe { ctts_model_predict(model, p.as_ptr(), 79, &mut out) },
        CttsStatus::InvalidArgument
    );
    assert!(last_error().is_some());
    assert_eq!(
        unsafe { ctts_model_predict(model, ptr::null(), 80, &mut out) },
        CttsStatus::NullPointer
    );
    assert!(last_error().unwrap().contains("prices"));
    assert_eq!(
        unsafe { ctts_model_predict(ptr::null(), p.as_ptr(), 80, &mut out) },
        CttsStatus::NullPointer
    );
    assert_eq!(
        unsafe { ctts_model_predict(model, p.as_ptr(), 80, ptr::null_mut()) },
        CttsStatus::NullPointer
    );
    let flat = vec![50.0; 80];
    assert_eq!(
        unsafe { ctts_model_predict(model, flat.as_ptr(), 80, &mut out) },
        CttsStatus::DegenerateWindow
    );
    assert_eq!(out.predicted_sign, 9, "output untouched on failure");

    assert_eq!(
        unsafe { ctts_model_predict(model, p.as_ptr(), 80, &mut out) },
        CttsStatus::Ok
    );
    assert_eq!(last_error(), None);
    unsafe {
        ctts_model_free(model);
        ctts_model_free(ptr::null_mut());
    }
    assert_eq!(unsafe { ctts_model_window_len(ptr::null()) }, 0);
}

#[test]
fn load_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();
    let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ctts_model_load(missing.as_ptr(), &mut model) }, CttsStatus::Io);
    assert!(model.is_null());

    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, "not a checkpoint\n").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { ctts_model_load(bad.as_ptr(), &mut model) },
        CttsStatus::Checkpoint
    );
    assert!(!last_error().unwrap().is_empty());

    assert_eq!(
        unsafe { ctts_model_load(ptr::null(), &mut model) },
        CttsStatus::NullPointer
    );
    assert_eq!(
        unsafe { ctts_model_load(bad.as_ptr(), ptr::null_mut()) },
        CttsStatus::NullPointer
    );
}

#[test]
fn baselines_match_core() {
    for seed in 0..5 {
        let p = prices(seed);
        let mut out = empty();
        let s = unsafe { ctts_baseline_predict(CttsBaseline::Arima, p.as_ptr(), 80, 2, 1, 1, 1e-4, &mut out) };
        assert_eq!(s, CttsStatus::Ok);
        let m = arima_fit_or_last(&p, ArimaOrder::default()).unwrap();
        let expected = arima_predict(&m, &p, 1e-4).unwrap();
        assert_eq!(out.probs, expected.probs);
        assert_eq!(out.predicted_sign, expected.predicted_class.sign());

        let s = unsafe { ctts_baseline_predict(CttsBaseline::Ema, p.as_ptr(), 80, 0, 0, 0, 1e-4, &mut out) };
        assert_eq!(s, CttsStatus::Ok);
        let expected = ema_predict(&ema_fit(&p).unwrap(), &p, 1e-4).unwrap();
        assert_eq!(out.probs, expected.probs);
        assert_eq!(out.confidence, expected.confidence);
    }
    let p = prices(0);
    let mut out = empty();
    let s = unsafe { ctts_baseline_predict(CttsBaseline::Arima, p.as_ptr(), 8, 2, 1, 1, 1e-4, &mut out) };
    assert_eq!(s, CttsStatus::InvalidArgument);
    let flat = vec![3.0; 80];
    let s = unsafe { ctts_baseline_predict(CttsBaseline::Arima, flat.as_ptr(), 80, 0, 1, 0, 1e-4, &mut out) };
    assert_eq!(s, CttsStatus::DegenerateWindow);
}

#[test]
fn label_and_kernel() {
    let mut sign = 5i8;
    assert_eq!(
        unsafe { ctts_label_sign(101.0, 100.0, 1e-4, &mut sign) },
        CttsStatus::Ok
    );
    assert_eq!(sign, 1);
    assert_eq!(
        unsafe { ctts_label_sign(100.005, 100.0, 1e-4, &mut sign) },
        CttsStatus::Ok
    );
    assert_eq!(sign, 0);
    assert_eq!(unsafe { ctts_label_sign(99.0, 100.0, 1e-4, &mut sign) }, CttsStatus::Ok);
    assert_eq!(sign, -1);
    assert_eq!(
        unsafe { ctts_label_sign(99.0, 0.0, 1e-4, &mut sign) },
        CttsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { ctts_label_sign(99.0, 100.0, 1e-4, ptr::null_mut()) },
        CttsStatus::NullPointer
    );

    let mut k = 0usize;
    assert_eq!(unsafe { ctts_select_kernel(0.5, 1.0, 2, 7, &mut k) }, CttsStatus::Ok);
    assert_eq!(k, 3);
    assert_eq!(unsafe { ctts_select_kernel(3.0, 1.0, 2, 7, &mut k) }, CttsStatus::Ok);
    assert_eq!(k, 7);
    assert_eq!(
        unsafe { ctts_select_kernel(0.5, 0.0, 2, 7, &mut k) },
        CttsStatus::InvalidArgument
    );
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("ctts.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "ctts_last_error",
        "ctts_model_load",
        "ctts_model_free",
        "ctts_model_window_len",
        "ctts_model_predict",
        "ctts_baseline_predict",
        "ctts_label_sign",
        "ctts_select_kernel",
        "typedef struct CttsModel CttsModel",
        "CTTS_STATUS_OK = 0",
        "CTTS_STATUS_PANIC = 7",
    ] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler on PATH, skipping");
        return;
    };
    assert!(probe.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ctts.h\"\n\
         int main(void) {\n\
           CttsModel *m = NULL;\n\
           CttsPrediction out;\n\
           double prices[80] = {0};\n\
           if (ctts_model_load(\"x\", &m) != CTTS_STATUS_OK) return 1;\n\
           (void)ctts_model_predict(m, prices, ctts_model_window_len(m), &out);\n\
           ctts_model_free(m);\n\
           return out.predicted_sign;\n\
         }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
