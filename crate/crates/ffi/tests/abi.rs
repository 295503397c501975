use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use volsr_ffi::*;

fn last_error() -> String {
    let p = volsr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_is_static_and_names_checkpoint_format() {
    let v = unsafe { CStr::from_ptr(volsr_version()) }.to_str().unwrap();
    assert!(v.contains("checkpoint format"));
    assert_eq!(volsr_version(), volsr_version());
}

#[test]
fn volume_round_trip_through_handles() {
    let dims = [3usize, 2, 2];
    let spacing = [1.0, 1.5, 2.0];
    let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
    let mut vol = ptr::null_mut();
    unsafe {
        assert_eq!(
            volsr_volume_new(
                dims.as_ptr(),
                spacing.as_ptr(),
                data.as_ptr(),
                data.len(),
                &mut vol
            ),
            VolsrStatus::Ok
        );
        assert_eq!(volsr_volume_len(vol), 12);
        let mut d = [0usize; 3];
        let mut s = [0f64; 3];
        assert_eq!(volsr_volume_dims(vol, d.as_mut_ptr()), VolsrStatus::Ok);
        assert_eq!(volsr_volume_spacing(vol, s.as_mut_ptr()), VolsrStatus::Ok);
        assert_eq!(d, dims);
        assert_eq!(s, spacing);
        assert_eq!(
            std::slice::from_raw_parts(volsr_volume_data(vol), 12),
            &data[..]
        );

        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().join("v.vvol").to_str().unwrap());
        assert_eq!(volsr_volume_write(vol, path.as_ptr()), VolsrStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(volsr_volume_read(path.as_ptr(), &mut back), VolsrStatus::Ok);
        assert_eq!(
            std::slice::from_raw_parts(volsr_volume_data(back), 12),
            &data[..]
        );
        volsr_volume_free(back);
        volsr_volume_free(vol);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut vol = ptr::null_mut();
    let dims = [4usize, 4, 4];
    let spacing = [1.0; 3];
    let data = [0f32; 8];
    unsafe {
        assert_eq!(
            volsr_volume_new(
                dims.as_ptr(),
                spacing.as_ptr(),
                data.as_ptr(),
                data.len(),
                &mut vol
            ),
            VolsrStatus::Shape
        );
        assert!(vol.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(
            volsr_volume_new(ptr::null(), spacing.as_ptr(), data.as_ptr(), 8, &mut vol),
            VolsrStatus::NullPointer
        );
        assert!(last_error().contains("dims"));

        let missing = c("/nonexistent/dir/v.vvol");
        assert_eq!(
            volsr_volume_read(missing.as_ptr(), &mut vol),
            VolsrStatus::NotFound
        );

        let kind = c("spirals");
        assert_eq!(
            volsr_phantom(kind.as_ptr(), dims.as_ptr(), 0, &mut vol),
            VolsrStatus::InvalidArgument
        );
        assert!(last_error().contains("spirals"));
    }
    volsr_clear_error();
    assert!(volsr_last_error().is_null());
    unsafe {
        assert_eq!(volsr_volume_len(ptr::null()), 0);
        assert!(volsr_volume_data(ptr::null()).is_null());
        volsr_volume_free(ptr::null_mut());
        volsr_model_free(ptr::null_mut());
    }
}

#[test]
fn degrade_upsample_and_score() {
    let dims = [32usize, 32, 16];
    let kind = c("mixed");
    unsafe {
        let mut hr = ptr::null_mut();
        assert_eq!(
            volsr_phantom(kind.as_ptr(), dims.as_ptr(), 3, &mut hr),
            VolsrStatus::Ok
        );
        let mut lr = ptr::null_mut();
        assert_eq!(volsr_degrade(hr, 2, 0.0, 1, &mut lr), VolsrStatus::Ok);
        let mut d = [0usize; 3];
        volsr_volume_dims(lr, d.as_mut_ptr());
        assert_eq!(d, [16, 16, 16]);

        let mut scores = Vec::new();
        for m in ["none", "linear", "bspline"] {
            let method = c(m);
            let mut up = ptr::null_mut();
            assert_eq!(
                volsr_upsample(lr, method.as_ptr(), 2, ptr::null(), &mut up),
                VolsrStatus::Ok
            );
            let mut r = VolsrMetrics::default();
            assert_eq!(volsr_metrics(up, hr, &mut r), VolsrStatus::Ok);
            assert!(r.psnr_db.is_finite() && r.ssim > 0.0 && r.ncc > 0.0);
            scores.push(r.psnr_db);
            volsr_volume_free(up);
        }
        assert!(scores[1] > scores[0], "{scores:?}");

        let mut same = VolsrMetrics::default();
        assert_eq!(volsr_metrics(hr, hr, &mut same), VolsrStatus::Ok);
        assert_eq!(same.psnr_db, f64::INFINITY);
        assert_eq!(same.ssim, 1.0);

        let cnn = c("cnn");
        let mut up = ptr::null_mut();
        assert_eq!(
            volsr_upsample(lr, cnn.as_ptr(), 2, ptr::null(), &mut up),
            VolsrStatus::NullPointer
        );
        assert!(last_error().contains("model"));

        let mut bad = VolsrMetrics::default();
        assert_eq!(volsr_metrics(lr, hr, &mut bad), VolsrStatus::Shape);

        volsr_volume_free(lr);
        volsr_volume_free(hr);
    }
}

#[test]
fn model_load_and_cnn_upsample() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.vnet");
    let params = volsr::srnet::NetworkParams::<f32>::init_for_training(2, 4, 1).unwrap();
    volsr::srnet::save_checkpoint(&params, None, &path).unwrap();
    let cpath = c(path.to_str().unwrap());
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            volsr_model_load(cpath.as_ptr(), &mut model),
            VolsrStatus::Ok
        );
        assert_eq!(volsr_model_factor(model), 2);

        let dims = [16usize, 16, 16];
        let kind = c("nested-ellipsoids");
        let mut lr = ptr::null_mut();
        assert_eq!(
            volsr_phantom(kind.as_ptr(), dims.as_ptr(), 0, &mut lr),
            VolsrStatus::Ok
        );
        let cnn = c("cnn");
        let mut up = ptr::null_mut();
        assert_eq!(
            volsr_upsample(lr, cnn.as_ptr(), 2, model, &mut up),
            VolsrStatus::Ok
        );
        assert_eq!(volsr_volume_len(up), 32 * 32 * 16);
        let mut wrong = ptr::null_mut();
        assert_eq!(
            volsr_upsample(lr, cnn.as_ptr(), 4, model, &mut wrong),
            VolsrStatus::ConfigMismatch
        );
        volsr_volume_free(up);
        volsr_volume_free(lr);
        volsr_model_free(model);

        let garbage = dir.path().join("bad.vnet");
        std::fs::write(&garbage, b"not a checkpoint").unwrap();
        let cg = c(garbage.to_str().unwrap());
        let mut m2 = ptr::null_mut();
        assert_eq!(
            volsr_model_load(cg.as_ptr(), &mut m2),
            VolsrStatus::Checkpoint
        );
    }
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include "volsr.h"

int main(void) {
    size_t dims[3] = {16, 16, 16};
    VolsrVolume *hr = NULL, *lr = NULL, *up = NULL;
    VolsrMetrics m;
    if (volsr_phantom("mixed", dims, 1, &hr) != VOLSR_STATUS_OK) return 1;
    if (volsr_degrade(hr, 2, 0.0, 0, &lr) != VOLSR_STATUS_OK) return 2;
    if (volsr_upsample(lr, "linear", 2, NULL, &up) != VOLSR_STATUS_OK) return 3;
    if (volsr_metrics(up, hr, &m) != VOLSR_STATUS_OK) return 4;
    if (volsr_upsample(lr, "cubic", 2, NULL, &up) != VOLSR_STATUS_INVALID_ARGUMENT) return 5;
    if (volsr_last_error() == NULL) return 6;
    printf("%s %.3f\n", volsr_version(), m.psnr_db);
    volsr_volume_free(up);
    volsr_volume_free(lr);
    volsr_volume_free(hr);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include").join("volsr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "volsr_last_error",
        "volsr_volume_new",
        "volsr_upsample",
        "volsr_model_load",
        "VOLSR_STATUS_PANIC",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping link check");
        return;
    }
    // The test binary sits in target/<profile>/deps; the static library one level up.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = lib_dir.join("libvolsr_ffi.a");
    if !lib.exists() {
        let status = Command::new(env!("CARGO"))
            .args(["build", "-p", "volsr-ffi", "--lib"])
            .env("CARGO_TARGET_DIR", lib_dir.parent().unwrap())
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited {:?}", out.status);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("checkpoint format"), "{stdout}");
}
