use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use confdyn_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cd_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn field(size: usize, values: &[f64]) -> *mut CdField {
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { cd_field_new(size, values.as_ptr(), values.len(), &mut f) },
        CdStatus::Ok
    );
    f
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(cd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn field_lifecycle_and_errors() {
    let values: Vec<f64> = (0..16).map(f64::from).collect();
    let f = field(4, &values);
    assert_eq!(unsafe { cd_field_size(f) }, 4);

    let mut turned = f;
    for _ in 0..4 {
        let mut next = ptr::null_mut();
        assert_eq!(unsafe { cd_field_rot90(turned, &mut next) }, CdStatus::Ok);
        if turned != f {
            unsafe { cd_field_free(turned) };
        }
        turned = next;
    }
    let mut back = vec![0.0; 16];
    assert_eq!(
        unsafe { cd_field_values(turned, back.as_mut_ptr(), 16) },
        CdStatus::Ok
    );
    assert_eq!(back, values);

    let ones = field(4, &values.iter().map(|v| v + 1.0).collect::<Vec<_>>());
    let mut s = 0.0;
    assert_eq!(unsafe { cd_score(f, ones, &mut s) }, CdStatus::Ok);
    assert_eq!(s, 4.0);

    let mut short = [0.0; 3];
    assert_eq!(
        unsafe { cd_field_values(f, short.as_mut_ptr(), 3) },
        CdStatus::DimensionMismatch
    );
    assert!(last_error().contains("dimension"));

    let mut bad = ptr::null_mut();
    assert_eq!(
        unsafe { cd_field_new(3, values.as_ptr(), 9, &mut bad) },
        CdStatus::InvalidField
    );
    assert!(bad.is_null());
    assert_eq!(
        unsafe { cd_field_new(4, ptr::null(), 16, &mut bad) },
        CdStatus::NullPointer
    );
    assert_eq!(unsafe { cd_field_size(ptr::null()) }, 0);

    unsafe {
        cd_field_free(f);
        cd_field_free(ones);
        cd_field_free(turned);
        cd_field_free(ptr::null_mut());
    }
}

#[test]
fn numeric_entry_points() {
    let ys = [3.0, 1.0, 2.0, 5.0];
    let ws = [1.0; 4];
    let mut fit = [0.0; 4];
    assert_eq!(
        unsafe { cd_pava(ys.as_ptr(), ws.as_ptr(), 4, fit.as_mut_ptr()) },
        CdStatus::Ok
    );
    assert_eq!(fit, [2.0, 2.0, 2.0, 5.0]);

    let scores: Vec<f64> = (1..=99).map(f64::from).collect();
    let mut q = 0.0;
    let st = unsafe {
        cd_conformal_quantile(
            scores.as_ptr(),
            99,
            0.05,
            CdQuantileMode::SplitQuantile,
            &mut q,
        )
    };
    assert_eq!((st, q), (CdStatus::Ok, 95.0));
    let st = unsafe {
        cd_conformal_quantile(scores.as_ptr(), 99, 0.05, CdQuantileMode::MaxScore, &mut q)
    };
    assert_eq!((st, q), (CdStatus::Ok, 99.0));

    let mut sigma = 0.0;
    assert_eq!(
        unsafe { cd_gaussian_sigma(1.96, 0.05, false, &mut sigma) },
        CdStatus::Ok
    );
    assert_eq!(sigma, 1.0);
    assert_eq!(
        unsafe { cd_gaussian_sigma(1.0, 1.5, false, &mut sigma) },
        CdStatus::InvalidArgument
    );

    let mut lr = 0.0;
    assert_eq!(
        unsafe { cd_lr_at(0.01, 1e-4, 100, 100, &mut lr) },
        CdStatus::Ok
    );
    assert_eq!(lr, 1e-4);
    assert_eq!(
        unsafe { cd_lr_at(0.01, 1e-4, 100, 101, &mut lr) },
        CdStatus::InvalidArgument
    );

    let y = [0.0, 1.0, -1.0, 0.5];
    let mu = [0.0; 4];
    let sd = [1.0; 4];
    let mut r = CdMetricReport::default();
    assert_eq!(
        unsafe { cd_metrics(mu.as_ptr(), sd.as_ptr(), y.as_ptr(), 4, 101, &mut r) },
        CdStatus::Ok
    );
    assert_eq!(r.mae, 0.625);
    assert_eq!(r.sharpness, 1.0);
    assert_eq!(
        unsafe { cd_metrics(mu.as_ptr(), sd.as_ptr(), y.as_ptr(), 4, 1, &mut r) },
        CdStatus::InvalidArgument
    );
}

#[test]
fn experiment_and_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "[sim]\nsize = 16\nn_traj = 30\n[train]\ncycle_len = 20\n[uq]\nmc_passes = 5\n[run]\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let cfg_c = CString::new(cfg.to_str().unwrap()).unwrap();
    let method = CString::new("ensemble").unwrap();
    let mut report = CdMetricReport::default();
    let mut buf = vec![0 as std::ffi::c_char; 4096];
    let st = unsafe {
        cd_experiment_run(
            cfg_c.as_ptr(),
            method.as_ptr(),
            2,
            &mut report,
            buf.as_mut_ptr(),
            buf.len(),
        )
    };
    assert_eq!(st, CdStatus::Ok, "{}", last_error());
    assert!(report.sharpness > 0.0);
    let run_dir = unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_str()
        .unwrap()
        .to_owned();
    assert!(Path::new(&run_dir).join("report.csv").is_file());

    let bogus = CString::new("bagging").unwrap();
    let st = unsafe {
        cd_experiment_run(
            cfg_c.as_ptr(),
            bogus.as_ptr(),
            2,
            &mut report,
            ptr::null_mut(),
            0,
        )
    };
    assert_eq!(st, CdStatus::Config);

    let cache = out.join("cache");
    let snaps = fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.file_name()
                .unwrap()
                .to_str()
                .unwrap()
                .starts_with("snapshots-")
        })
        .unwrap();
    let model_path = CString::new(snaps.join("snapshot_00.cdym").to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { cd_model_load(model_path.as_ptr(), &mut model) },
        CdStatus::Ok,
        "{}",
        last_error()
    );
    let w = unsafe { cd_model_window(model) };
    assert_eq!(w, 10);

    let frames: Vec<*mut CdField> = (0..w)
        .map(|t| {
            field(
                16,
                &(0..256)
                    .map(|i| ((i + t) as f64 * 0.1).sin())
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let window: Vec<*const CdField> = frames.iter().map(|&f| f as *const CdField).collect();
    let mut outs = vec![ptr::null_mut(); 3];
    let st = unsafe { cd_model_rollout(model, window.as_ptr(), w, 3, outs.as_mut_ptr()) };
    assert_eq!(st, CdStatus::Ok, "{}", last_error());
    assert!(outs.iter().all(|f| unsafe { cd_field_size(*f) } == 16));
    let st = unsafe { cd_model_rollout(model, window.as_ptr(), w - 1, 3, outs.as_mut_ptr()) };
    assert_ne!(st, CdStatus::Ok);

    let missing = CString::new(dir.path().join("none.cdym").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(
        unsafe { cd_model_load(missing.as_ptr(), &mut none) },
        CdStatus::MissingFile
    );
    unsafe {
        for f in frames.into_iter().chain(outs) {
            cd_field_free(f);
        }
        cd_model_free(model);
    }
}

#[test]
fn header_declares_exports_and_compiles() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/confdyn.h");
    let header = fs::read_to_string(&header_path).unwrap();
    for name in [
        "cd_version",
        "cd_last_error_message",
        "cd_field_new",
        "cd_field_free",
        "cd_pava",
        "cd_metrics",
        "cd_conformal_quantile",
        "cd_gaussian_sigma",
        "cd_lr_at",
        "cd_model_load",
        "cd_model_rollout",
        "cd_experiment_run",
        "CD_STATUS_OK",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    fs::write(
        &src,
        "#include \"confdyn.h\"\nint main(void) { CdMetricReport r; return cd_lr_at(0.01, 1e-4, 10, 0, &r.mae) != CD_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header_path.parent().unwrap())
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; skipping the compile check");
        return;
    };
    assert!(status.success());
}
