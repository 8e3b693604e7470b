use std::ffi::CStr;
use std::ptr;

use ampcc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ampcc_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn sensing_roundtrip_through_handles() {
    let mut h = ptr::null_mut();
    assert_eq!(ampcc_sensing_hadamard(4, 4, 0, false, &mut h), AmpccStatus::Ok);
    let (mut m, mut n) = (0, 0);
    unsafe {
        assert_eq!(ampcc_sensing_dims(h, &mut m, &mut n), AmpccStatus::Ok);
        assert_eq!((m, n), (4, 4));
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut y = [0.0; 4];
        let mut back = [0.0; 4];
        assert_eq!(ampcc_sensing_apply(h, AmpccDirection::Forward, x.as_ptr(), 4, y.as_mut_ptr(), 4), AmpccStatus::Ok);
        assert_eq!(ampcc_sensing_apply(h, AmpccDirection::Adjoint, y.as_ptr(), 4, back.as_mut_ptr(), 4), AmpccStatus::Ok);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let st = ampcc_sensing_apply(h, AmpccDirection::Forward, x.as_ptr(), 3, y.as_mut_ptr(), 4);
        assert_eq!(st, AmpccStatus::Dimension);
        assert!(!last_error().is_empty());
        ampcc_sensing_free(h);
        ampcc_sensing_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments_map_to_codes() {
    let mut h = ptr::null_mut();
    assert_eq!(ampcc_sensing_hadamard(4, 6, 0, true, &mut h), AmpccStatus::InvalidArgument);
    assert!(h.is_null());
    assert_eq!(ampcc_sensing_gaussian(2, 2, 0, ptr::null_mut()), AmpccStatus::NullPointer);
    let mut v = [1.0, 0.0, 0.0];
    assert_eq!(unsafe { ampcc_fht(v.as_mut_ptr(), 3) }, AmpccStatus::InvalidArgument);
    assert!(ampcc_puncture_rate(1.0, 1.0).is_nan());
}

#[test]
fn scalar_entry_points() {
    let mut v = [1.0, 0.0, 0.0, 0.0];
    assert_eq!(unsafe { ampcc_fht(v.as_mut_ptr(), 4) }, AmpccStatus::Ok);
    assert_eq!(v, [0.5; 4]);
    let mut m = 0.0;
    assert_eq!(unsafe { ampcc_mmse_scalar(AmpccConstellation::Bpsk, 0.0, &mut m) }, AmpccStatus::Ok);
    assert!((m - 1.0).abs() < 1e-12);
    assert!((ampcc_phi_awgn(0.5, 0.5, 1.0, false) - 1.0 / 3.0).abs() < 1e-15);
    let (mut z, mut a) = (0.0, 0.0);
    assert_eq!(unsafe { ampcc_clip_params(f64::INFINITY, &mut z, &mut a) }, AmpccStatus::Ok);
    assert_eq!((z, a), (f64::INFINITY, 1.0));
    assert!((ampcc_asc_rate(1.0, 50, 3) - 50.0 / 52.0).abs() < 1e-15);
    let (mut r, mut vs, mut ef) = (0.0, 0.0, false);
    let st = unsafe { ampcc_se_fixed_point(AmpccConstellation::Bpsk, 0.5, 0.01, &mut r, &mut vs, &mut ef) };
    assert_eq!(st, AmpccStatus::Ok);
    assert!(ef && vs < 1e-6);
    let v = unsafe { CStr::from_ptr(ampcc_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn amp_recovers_noiseless_bpsk() {
    let n = 256;
    let mut h = ptr::null_mut();
    assert_eq!(ampcc_sensing_hadamard(n, n, 4, true, &mut h), AmpccStatus::Ok);
    let c: Vec<f64> = (0..n).map(|i| if (i * 7) % 3 == 0 { 1.0 } else { -1.0 }).collect();
    let mut y = vec![0.0; n];
    let mut est = vec![0.0; n];
    let mut it = 0;
    unsafe {
        ampcc_sensing_apply(h, AmpccDirection::Forward, c.as_ptr(), n, y.as_mut_ptr(), n);
        let st = ampcc_amp_run(h, AmpccConstellation::Bpsk, y.as_ptr(), n, 1e-8, 20, est.as_mut_ptr(), n, &mut it);
        assert_eq!(st, AmpccStatus::Ok);
        let st = ampcc_amp_run(h, AmpccConstellation::Bpsk, y.as_ptr(), n, 1e-8, 20, est.as_mut_ptr(), n - 1, &mut it);
        assert_eq!(st, AmpccStatus::Dimension);
        ampcc_sensing_free(h);
    }
    assert!(it >= 1);
    assert!(est.iter().zip(&c).all(|(a, b)| (a - b).abs() < 1e-3));
}

#[test]
fn header_declares_every_entry_point() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ampcc.h")).unwrap();
    for f in [
        "ampcc_last_error",
        "ampcc_sensing_hadamard",
        "ampcc_sensing_apply",
        "ampcc_sensing_free",
        "ampcc_fht",
        "ampcc_mmse_scalar",
        "ampcc_se_fixed_point",
        "ampcc_asc_rate",
        "ampcc_amp_run",
        "AMPCC_STATUS_OK",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
