use std::ffi::{c_char, c_int, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ddstab::batching::Batch;
use ddstab::pipeline::{run_state_design, ExperimentConfig};
use ddstab_ffi::*;

fn last_error() -> String {
    let p = ddstab_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ddstab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_json_design_round_trip() {
    let cfg = serde_json::to_string(&ExperimentConfig::reactor()).unwrap();
    let cfg = cstr(&cfg);
    let mut d: *mut DdstabDesign = ptr::null_mut();
    unsafe {
        assert_eq!(
            ddstab_design_from_config_json(cfg.as_ptr(), &mut d),
            DdstabStatus::Ok
        );
        assert!(ddstab_last_error_message().is_null());
        let mut certified: c_int = 0;
        assert_eq!(ddstab_design_certified(d, &mut certified), DdstabStatus::Ok);
        assert_eq!(certified, 1);
        let mut a = 0.0;
        assert_eq!(ddstab_design_abscissa(d, &mut a), DdstabStatus::Ok);
        assert!(a < 0.0);

        let (mut r, mut c) = (0usize, 0usize);
        assert_eq!(
            ddstab_design_gain_shape(d, &mut r, &mut c),
            DdstabStatus::Ok
        );
        assert_eq!((r, c), (2, 6));
        let mut small = [0.0; 3];
        assert_eq!(
            ddstab_design_gain(d, small.as_mut_ptr(), small.len()),
            DdstabStatus::BufferTooSmall
        );
        assert!(last_error().contains("12"));
        let mut k = [0.0; 12];
        assert_eq!(
            ddstab_design_gain(d, k.as_mut_ptr(), k.len()),
            DdstabStatus::Ok
        );

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(ddstab_design_report_json(d, &mut json), DdstabStatus::Ok);
        let v: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["certified"], serde_json::Value::Bool(true));
        let k00 = v["gain"]["k"][0][0].as_f64().unwrap();
        assert_eq!(k00, k[0]);
        ddstab_string_free(json);
        ddstab_design_free(d);
    }
}

#[test]
fn batch_handle_design_matches_direct_run() {
    let run = run_state_design(&ExperimentConfig::reactor()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    Batch::State(run.batch.clone())
        .write_dir(dir.path())
        .unwrap();
    let path = cstr(dir.path().to_str().unwrap());
    let plant = cstr(r#"{"kind":"batch_reactor"}"#);
    unsafe {
        let mut b: *mut DdstabBatch = ptr::null_mut();
        assert_eq!(
            ddstab_batch_read_dir(path.as_ptr(), &mut b),
            DdstabStatus::Ok
        );
        let mut kind = DdstabBatchKind::Output;
        let (mut n, mut m, mut samples) = (0, 0, 0);
        assert_eq!(
            ddstab_batch_info(b, &mut kind, &mut n, &mut m, &mut samples),
            DdstabStatus::Ok
        );
        assert_eq!((kind, n, m, samples), (DdstabBatchKind::State, 4, 2, 15));

        let mut d: *mut DdstabDesign = ptr::null_mut();
        assert_eq!(
            ddstab_design_from_batch(b, plant.as_ptr(), 0.0, &mut d),
            DdstabStatus::Ok
        );
        let mut k = [0.0; 12];
        assert_eq!(ddstab_design_gain(d, k.as_mut_ptr(), 12), DdstabStatus::Ok);
        let direct = &run.report.gain.as_ref().unwrap().k;
        for i in 0..2 {
            for j in 0..6 {
                assert_eq!(k[i * 6 + j], direct[(i, j)]);
            }
        }
        ddstab_design_free(d);

        // Without ground truth: solved, not certified, no abscissa.
        let mut d: *mut DdstabDesign = ptr::null_mut();
        assert_eq!(
            ddstab_design_from_batch(b, ptr::null(), 0.0, &mut d),
            DdstabStatus::Ok
        );
        let (mut solved, mut cert) = (0, 1);
        ddstab_design_solved(d, &mut solved);
        ddstab_design_certified(d, &mut cert);
        assert_eq!((solved, cert), (1, 0));
        let mut a = 0.0;
        assert_eq!(
            ddstab_design_abscissa(d, &mut a),
            DdstabStatus::NotAvailable
        );
        ddstab_design_free(d);
        ddstab_batch_free(b);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut d: *mut DdstabDesign = ptr::null_mut();
        assert_eq!(
            ddstab_design_from_config_json(ptr::null(), &mut d),
            DdstabStatus::NullPointer
        );
        assert!(d.is_null());
        let bad = cstr("{not json");
        assert_eq!(
            ddstab_design_from_config_json(bad.as_ptr(), &mut d),
            DdstabStatus::Parse
        );
        assert!(!last_error().is_empty());

        let mut cfg = ExperimentConfig::reactor();
        cfg.horizon = 1.55;
        let cfg = cstr(&serde_json::to_string(&cfg).unwrap());
        assert_eq!(
            ddstab_design_from_config_json(cfg.as_ptr(), &mut d),
            DdstabStatus::Alignment
        );

        let missing = cstr("/nonexistent/batch");
        let mut b: *mut DdstabBatch = ptr::null_mut();
        assert_eq!(
            ddstab_batch_read_dir(missing.as_ptr(), &mut b),
            DdstabStatus::Io
        );
        assert!(b.is_null());

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            ddstab_batch_read_dir(invalid.as_ptr().cast(), &mut b),
            DdstabStatus::InvalidUtf8
        );
        ddstab_string_free(ptr::null_mut());
        ddstab_design_free(ptr::null_mut());
        ddstab_batch_free(ptr::null_mut());
    }
}

#[test]
fn infeasible_design_has_no_gain() {
    let mut cfg = ExperimentConfig::siso_example();
    cfg.signal = Some(ddstab::lti_sim::SignalSpec::zero(1));
    let cfg = cstr(&serde_json::to_string(&cfg).unwrap());
    unsafe {
        let mut d: *mut DdstabDesign = ptr::null_mut();
        assert_eq!(
            ddstab_design_from_config_json(cfg.as_ptr(), &mut d),
            DdstabStatus::Ok
        );
        let mut solved = 1;
        ddstab_design_solved(d, &mut solved);
        assert_eq!(solved, 0);
        let (mut r, mut c) = (0, 0);
        assert_eq!(
            ddstab_design_gain_shape(d, &mut r, &mut c),
            DdstabStatus::NotAvailable
        );
        ddstab_design_free(d);
    }
}

#[test]
fn header_declares_every_entry_point_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ddstab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "ddstab_version",
        "ddstab_last_error_message",
        "ddstab_string_free",
        "ddstab_batch_read_dir",
        "ddstab_batch_free",
        "ddstab_batch_info",
        "ddstab_design_from_batch",
        "ddstab_design_from_config_json",
        "ddstab_design_free",
        "ddstab_design_solved",
        "ddstab_design_certified",
        "ddstab_design_abscissa",
        "ddstab_design_gain_shape",
        "ddstab_design_gain",
        "ddstab_design_report_json",
        "ddstab_design_summary",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    // Syntax-check with the system C compiler when there is one.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ddstab.h\"\nint main(void) { DdstabDesign *d = 0; \
         DdstabStatus s = DDSTAB_STATUS_OK; void (*f)(DdstabDesign *) = ddstab_design_free; \
         (void)f; return d != 0 || s != 0; }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(_) => eprintln!("no C compiler; header compile check skipped"),
    }
}
