use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use stereounif_ffi::*;

fn last_error() -> String {
    let len = unsafe { su_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; len + 1];
    unsafe { su_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn uniform(q: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut pts = vec![0.0; n * (q + 1)];
    assert_eq!(unsafe { su_sample_uniform(q, n, seed, pts.as_mut_ptr()) }, SuStatus::Ok);
    pts
}

#[test]
fn coefficients_through_abi() {
    let mut e = 0.0;
    assert_eq!(unsafe { su_expected_h0(2, 0.0, &mut e) }, SuStatus::Ok);
    assert!((e - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let mut b = f64::NAN;
    assert_eq!(unsafe { su_gegenbauer_coef(1, 3, 1.0, &mut b) }, SuStatus::Ok);
    assert!(b.abs() < 1e-12);
    let mut w = 0.0;
    assert_eq!(unsafe { su_sobolev_weight(2, 3, 0.0, &mut w) }, SuStatus::Ok);
    assert!(w > 0.0);
}

#[test]
fn statistics_match_between_entry_points() {
    let (q, n) = (3, 60);
    let pts = uniform(q, n, 11);
    let (mut tn, mut tnk, mut ray, mut bing) = (0.0, 0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(su_stat_tn(pts.as_ptr(), n, q, 0.5, &mut tn), SuStatus::Ok);
        assert_eq!(su_stat_tnk(pts.as_ptr(), n, q, 0.5, 2000, &mut tnk), SuStatus::Ok);
        assert_eq!(su_stat_rayleigh(pts.as_ptr(), n, q, &mut ray), SuStatus::Ok);
        assert_eq!(su_stat_bingham(pts.as_ptr(), n, q, &mut bing), SuStatus::Ok);
    }
    assert!((tn - tnk).abs() < 0.05 * (1.0 + tn.abs()), "{tn} vs {tnk}");
    assert!(ray >= 0.0 && bing >= 0.0);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut out = 0.0;
    let status = unsafe { su_expected_h0(3, 2.0, &mut out) };
    assert_eq!(status, SuStatus::Config);
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { su_stat_tn(ptr::null(), 3, 2, 0.0, &mut out) }, SuStatus::NullPointer);
    assert!(last_error().contains("points"));

    // Duplicated row: coincident tie.
    let mut pts = uniform(2, 5, 3);
    let first: Vec<f64> = pts[..3].to_vec();
    pts[3..6].copy_from_slice(&first);
    assert_eq!(unsafe { su_stat_tn(pts.as_ptr(), 5, 2, 0.0, &mut out) }, SuStatus::Tie);

    let mut model = ptr::null_mut();
    let status = unsafe { su_null_model_asymptotic(2, 0.0, 0, 1000, 1, &mut model) };
    assert_eq!(status, SuStatus::NonSummable);
    assert!(model.is_null());
}

#[test]
fn null_model_handle_lifecycle() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { su_null_model_asymptotic(3, 0.0, 0, 20_000, 5, &mut model) }, SuStatus::Ok);
    assert_eq!(unsafe { su_null_model_draw_count(model) }, 20_000);
    let (mut crit, mut flag) = (0.0, -1);
    assert_eq!(unsafe { su_null_model_critical_value(model, 0.05, &mut crit, &mut flag) }, SuStatus::Ok);
    assert_eq!(flag, 0);
    let mut p = 0.0;
    assert_eq!(unsafe { su_null_model_p_value(model, crit, &mut p) }, SuStatus::Ok);
    assert!((p - 0.05).abs() < 0.01, "p = {p}");
    unsafe { su_null_model_free(model) };
    unsafe { su_null_model_free(ptr::null_mut()) };

    let mut exact = ptr::null_mut();
    assert_eq!(unsafe { su_null_model_exact(3, 0.0, 0, 50, 2000, 5, &mut exact) }, SuStatus::Ok);
    let mut crit_exact = 0.0;
    assert_eq!(
        unsafe { su_null_model_critical_value(exact, 0.05, &mut crit_exact, ptr::null_mut()) },
        SuStatus::Ok
    );
    assert!((crit_exact - crit).abs() < 0.3 * crit.abs().max(1.0));
    unsafe { su_null_model_free(exact) };
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/stereounif.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    for name in ["su_stat_tn", "su_null_model_free", "SU_STATUS_TIE", "SuNullModel"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let probe = std::env::temp_dir().join("stereounif_header_probe.c");
    std::fs::write(&probe, format!("#include \"{}\"\nint main(void) {{ return 0; }}\n", header.display())).unwrap();
    match Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror"]).arg(&probe).status() {
        Ok(status) => assert!(status.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler; skipped compile check"),
    }
}
