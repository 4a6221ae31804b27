//! The C ABI exercised from Rust, plus a C program compiled against the
//! generated header and linked with the static library.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rdbalance::balance::balanced_direction_with;
use rdbalance::metrics::{bd_rate, RDCurve, RDPoint};
use rdbalance::solution1::{logit_update, weights_of, TrajectoryState};
use rdbalance::{GradPair, LossPair, SimplexWeights};
use rdbalance_ffi::*;

const QUAD: &str = "[problem]\nname = \"imbalanced_quadratic\"\ndim = 4\n\n[train]\nmode = \"solution1\"\nbase_rule = \"plain_descent\"\nstep_size = 0.002\nepochs = 6\nbatches_per_epoch = 5\n";

fn last_error() -> String {
    let p = rdb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn balanced_direction_matches_library() {
    let gr = [0.3, -1.2, 2.5];
    let gd = [4.0, 0.5, -0.1];
    for renormalize in [true, false] {
        let mut d = [0.0; 3];
        let mut c = 0.0;
        let status = unsafe {
            rdb_balanced_direction(
                0.3,
                0.8,
                12.0,
                gr.as_ptr(),
                gd.as_ptr(),
                3,
                renormalize,
                d.as_mut_ptr(),
                &mut c,
            )
        };
        assert_eq!(status, RdbStatus::Ok);
        let (want, want_c) = balanced_direction_with(
            &SimplexWeights::new(0.3, 0.7).unwrap(),
            &LossPair::new(0.8, 12.0).unwrap(),
            &GradPair::new(gr.to_vec(), gd.to_vec()).unwrap(),
            renormalize,
        )
        .unwrap();
        assert_eq!(d.to_vec(), want);
        assert_eq!(c, want_c);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    let g = [1.0];
    let mut d = [0.0];
    let s = unsafe {
        rdb_balanced_direction(
            0.5,
            -1.0,
            1.0,
            g.as_ptr(),
            g.as_ptr(),
            1,
            true,
            d.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, RdbStatus::NonPositiveLoss);
    assert!(last_error().contains("non-positive"));

    let s = unsafe {
        rdb_balanced_direction(
            0.5,
            1.0,
            1.0,
            ptr::null(),
            g.as_ptr(),
            1,
            true,
            d.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, RdbStatus::NullPointer);
    assert!(last_error().contains("grad_rate"));

    let s = unsafe {
        rdb_balanced_direction(
            1.5,
            1.0,
            1.0,
            g.as_ptr(),
            g.as_ptr(),
            1,
            true,
            d.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, RdbStatus::InvalidInput);

    let mut w = [0.0; 2];
    let s = unsafe {
        rdb_qp_weights(
            1.0,
            4.0,
            2.0,
            ptr::null_mut(),
            ptr::null_mut(),
            w.as_mut_ptr(),
        )
    };
    assert_eq!(s, RdbStatus::SingularGram);
}

#[test]
fn qp_weights_raw_and_projected() {
    let (mut raw, mut w, mut lambda) = ([0.0; 2], [0.0; 2], 0.0);
    let s = unsafe {
        rdb_qp_weights(
            16.0 / 9.0,
            256.0 / 81.0,
            0.0,
            raw.as_mut_ptr(),
            &mut lambda,
            w.as_mut_ptr(),
        )
    };
    assert_eq!(s, RdbStatus::Ok);
    assert!((raw[0] - 0.64).abs() < 1e-15 && (raw[1] - 0.36).abs() < 1e-15);
    assert!((lambda - 1.137_777_777_777_777_8).abs() < 1e-15);
    let e = (0.64f64 - 0.36).exp();
    assert!((w[0] - e / (1.0 + e)).abs() < 1e-15);
}

#[test]
fn trajectory_handle_follows_library_updates() {
    let mut h: *mut RdbTrajectory = ptr::null_mut();
    assert_eq!(
        unsafe { rdb_trajectory_new(0.2, -0.1, 0.5, 0.01, &mut h) },
        RdbStatus::Ok
    );
    let mut state = TrajectoryState::new([0.2, -0.1], 0.5, 0.01).unwrap();
    let steps = [
        (3.0, 40.0, 2.5, 39.0),
        (2.5, 39.0, 2.4, 30.0),
        (2.4, 30.0, 2.6, 29.0),
    ];
    for (pr, pd, nr, nd) in steps {
        assert_eq!(
            unsafe { rdb_trajectory_update(h, pr, pd, nr, nd) },
            RdbStatus::Ok
        );
        state = logit_update(
            &state,
            &LossPair::new(pr, pd).unwrap(),
            &LossPair::new(nr, nd).unwrap(),
        )
        .unwrap();
        let mut w = [0.0; 2];
        assert_eq!(
            unsafe { rdb_trajectory_weights(h, w.as_mut_ptr()) },
            RdbStatus::Ok
        );
        let want = weights_of(&state);
        assert_eq!(w, [want.rate(), want.distortion()]);
    }
    assert_eq!(
        unsafe { rdb_trajectory_update(h, 1.0, 1.0, f64::NAN, 1.0) },
        RdbStatus::NonFinite
    );
    unsafe { rdb_trajectory_free(h) };
    unsafe { rdb_trajectory_free(ptr::null_mut()) };
}

#[test]
fn curves_and_bd_rate() {
    let rates = [0.1, 0.2, 0.4, 0.8];
    let q = [28.0, 30.5, 33.0, 35.2];
    let shifted: Vec<f64> = rates.iter().map(|r| r * 0.9).collect();
    let (mut a, mut t) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(
            rdb_curve_new(rates.as_ptr(), q.as_ptr(), 4, &mut a),
            RdbStatus::Ok
        );
        assert_eq!(
            rdb_curve_new(shifted.as_ptr(), q.as_ptr(), 4, &mut t),
            RdbStatus::Ok
        );
    }
    let mut v = 0.0;
    assert_eq!(unsafe { rdb_bd_rate(a, t, &mut v) }, RdbStatus::Ok);
    let pts = |r: &[f64]| {
        r.iter()
            .zip(&q)
            .map(|(&rate, &quality)| RDPoint { rate, quality })
            .collect()
    };
    let want = bd_rate(
        &RDCurve::new("a", pts(&rates)).unwrap(),
        &RDCurve::new("t", pts(&shifted)).unwrap(),
    )
    .unwrap();
    assert_eq!(v, want);
    assert!((v + 10.0).abs() < 1e-9);

    let negative = [0.1, -0.2, 0.4, 0.8];
    let mut c = ptr::null_mut();
    assert_eq!(
        unsafe { rdb_curve_new(negative.as_ptr(), q.as_ptr(), 4, &mut c) },
        RdbStatus::InvalidCurve
    );
    assert!(c.is_null());

    // stored as measured, rejected when a fit needs monotone quality
    let folded = [30.0, 29.0, 33.0, 35.2];
    assert_eq!(
        unsafe { rdb_curve_new(rates.as_ptr(), folded.as_ptr(), 4, &mut c) },
        RdbStatus::Ok
    );
    assert_eq!(
        unsafe { rdb_bd_rate(a, c, &mut v) },
        RdbStatus::InvalidCurve
    );
    unsafe {
        rdb_curve_free(a);
        rdb_curve_free(t);
        rdb_curve_free(c);
    }
}

#[test]
fn train_from_toml_and_fine_tune_from_saved_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let toml = CString::new(QUAD).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { rdb_experiment_from_toml(toml.as_ptr(), &mut exp) },
        RdbStatus::Ok
    );

    let mut fp = [0 as std::ffi::c_char; 65];
    assert_eq!(
        unsafe { rdb_experiment_fingerprint(exp, fp.as_mut_ptr(), 64) },
        RdbStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { rdb_experiment_fingerprint(exp, fp.as_mut_ptr(), 65) },
        RdbStatus::Ok
    );
    let fp = unsafe { CStr::from_ptr(fp.as_ptr()) }
        .to_str()
        .unwrap()
        .to_owned();
    let config = rdbalance::cli::ExperimentConfig::from_toml_str(QUAD, &[]).unwrap();
    assert_eq!(fp, config.fingerprint());

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { rdb_experiment_train(exp, &mut out) },
        RdbStatus::Ok
    );
    let mut n = 0u64;
    assert_eq!(
        unsafe { rdb_outcome_iterations(out, &mut n) },
        RdbStatus::Ok
    );
    assert_eq!(n, 30);
    let mut counters = RdbCounters::default();
    assert_eq!(
        unsafe { rdb_outcome_counters(out, &mut counters) },
        RdbStatus::Ok
    );
    assert_eq!((counters.loss_evals, counters.logit_updates), (60, 30));
    let (mut first, mut last, mut w) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    unsafe {
        assert_eq!(
            rdb_outcome_record(out, 0, first.as_mut_ptr(), ptr::null_mut()),
            RdbStatus::Ok
        );
        assert_eq!(
            rdb_outcome_record(out, 29, last.as_mut_ptr(), w.as_mut_ptr()),
            RdbStatus::Ok
        );
        assert_eq!(
            rdb_outcome_record(out, 30, ptr::null_mut(), ptr::null_mut()),
            RdbStatus::InvalidInput
        );
    }
    assert!(last[0] + last[1] < first[0] + first[1]);
    assert!((w[0] + w[1] - 1.0).abs() < 1e-12);

    let mut len = 0usize;
    assert_eq!(
        unsafe { rdb_outcome_theta(out, ptr::null_mut(), 0, &mut len) },
        RdbStatus::Ok
    );
    assert_eq!(len, 4);
    let mut theta = vec![0.0; len];
    assert_eq!(
        unsafe { rdb_outcome_theta(out, theta.as_mut_ptr(), 2, ptr::null_mut()) },
        RdbStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { rdb_outcome_theta(out, theta.as_mut_ptr(), len, ptr::null_mut()) },
        RdbStatus::Ok
    );

    let ckpt = tmp.path().join("ckpt.json");
    let path = CString::new(ckpt.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { rdb_outcome_save_checkpoint(out, path.as_ptr()) },
        RdbStatus::Ok
    );
    unsafe {
        rdb_outcome_free(out);
        rdb_experiment_free(exp);
    }

    // resume: the run continues from the saved parameters
    let resumed = format!(
        "{}fine_tune_from = {:?}\n",
        QUAD.replace("epochs = 6", "epochs = 1"),
        ckpt.to_str().unwrap()
    );
    let toml = CString::new(resumed).unwrap();
    let (mut exp, mut out) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(
            rdb_experiment_from_toml(toml.as_ptr(), &mut exp),
            RdbStatus::Ok
        );
        assert_eq!(rdb_experiment_train(exp, &mut out), RdbStatus::Ok);
        let mut resumed_first = [0.0; 2];
        assert_eq!(
            rdb_outcome_record(out, 0, resumed_first.as_mut_ptr(), ptr::null_mut()),
            RdbStatus::Ok
        );
        assert!(resumed_first[0] + resumed_first[1] < last[0] + last[1]);
        assert_eq!(rdb_outcome_iterations(out, &mut n), RdbStatus::Ok);
        assert_eq!(n, 5);
        rdb_outcome_free(out);
        rdb_experiment_free(exp);
    }

    let bad = CString::new(QUAD.replace("step_size = 0.002", "step_size = -1.0")).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { rdb_experiment_from_toml(bad.as_ptr(), &mut exp) },
        RdbStatus::Config
    );
    assert!(exp.is_null());
    assert_eq!(
        unsafe { rdb_experiment_from_toml(ptr::null(), &mut exp) },
        RdbStatus::NullPointer
    );
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn c_program_links_against_header_and_static_library() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("librdbalance_ffi.a");
    assert!(
        lib.is_file(),
        "static library not found at {}",
        lib.display()
    );
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
        {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
