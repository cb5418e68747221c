use std::ffi::CStr;
use std::path::Path;
use std::ptr;

use dynbias_ffi::*;

fn last_error() -> String {
    let p = db_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn duffing(delta: f64, t: f64, n: usize) -> *mut DbEncoder {
    let mut enc = ptr::null_mut();
    assert_eq!(db_encoder_new_duffing(delta, t, n, &mut enc), DbStatus::Ok);
    assert!(!enc.is_null());
    enc
}

#[test]
fn encode_matches_library_and_reports_shape() {
    let enc = duffing(2.0, 4.0, 30);
    let x = [0.3, -0.7, 1.1];
    unsafe {
        assert_eq!(db_encoder_frames(enc), 30);
        let mut traj = ptr::null_mut();
        assert_eq!(db_encode(enc, x.as_ptr(), x.len(), &mut traj), DbStatus::Ok);
        let (mut f, mut n) = (0, 0);
        assert_eq!(db_trajectory_shape(traj, &mut f, &mut n), DbStatus::Ok);
        assert_eq!((f, n), (3, 30));
        let mut buf = vec![0.0; f * n * 3];
        assert_eq!(db_trajectory_copy(traj, buf.as_mut_ptr(), buf.len()), DbStatus::Ok);
        let cfg = dynbias::dynsys::EncodingConfig::with_default_substeps(4.0, 30).unwrap();
        let want = dynbias::dynsys::encode_features(&x, &dynbias::dynsys::SystemSpec::duffing(2.0), &cfg).unwrap();
        assert_eq!(buf, want.data);
        assert_eq!(&buf[..3], &[0.3, 0.06, -0.3]);

        let mut small = vec![0.0; 10];
        assert_eq!(db_trajectory_copy(traj, small.as_mut_ptr(), small.len()), DbStatus::BufferTooSmall);
        assert!(last_error().contains("need 270"));

        let mut a = -1.0;
        assert_eq!(db_trajectory_ais(traj, 16, &mut a), DbStatus::Ok);
        assert!((0.0..=4.0).contains(&a));
        assert_eq!(db_trajectory_ais(traj, 1, &mut a), DbStatus::InvalidArgument);

        let mut s = DbSpectrum::default();
        assert_eq!(db_trajectory_spectrum(traj, &mut s), DbStatus::Ok);
        assert!(s.centroid >= 0.0 && (0.0..=1.0).contains(&s.entropy));

        db_trajectory_free(traj);
        db_encoder_free(enc);
    }
}

#[test]
fn null_and_invalid_arguments_give_codes_and_messages() {
    let mut enc = ptr::null_mut();
    assert_eq!(db_encoder_new_duffing(2.0, 4.0, 0, &mut enc), DbStatus::InvalidArgument);
    assert!(enc.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(db_encoder_new_thomas(-1.0, 4.0, 10, &mut enc), DbStatus::InvalidArgument);
    assert_eq!(db_encoder_new_lorenz(28.0, 4.0, 10, ptr::null_mut()), DbStatus::NullPointer);
    unsafe {
        let mut traj = ptr::null_mut();
        assert_eq!(db_encode(ptr::null(), [1.0].as_ptr(), 1, &mut traj), DbStatus::NullPointer);
        let e = duffing(2.0, 4.0, 10);
        assert_eq!(db_encode(e, ptr::null(), 2, &mut traj), DbStatus::NullPointer);
        assert_eq!(db_encode(e, [f64::NAN].as_ptr(), 1, &mut traj), DbStatus::InvalidArgument);
        assert_eq!(db_trajectory_shape(ptr::null(), ptr::null_mut(), ptr::null_mut()), DbStatus::NullPointer);
        assert_eq!(db_encoder_frames(ptr::null()), 0);
        db_encoder_free(e);
        db_encoder_free(ptr::null_mut());
        db_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn successful_call_clears_the_last_error() {
    let mut enc = ptr::null_mut();
    assert_eq!(db_encoder_new_duffing(2.0, 4.0, 0, &mut enc), DbStatus::InvalidArgument);
    assert!(!db_last_error().is_null());
    let enc = duffing(2.0, 4.0, 5);
    assert!(db_last_error().is_null());
    unsafe { db_encoder_free(enc) };
}

#[test]
fn expansive_divergence_is_reported() {
    let enc = duffing(-1.5, 60.0, 10);
    unsafe {
        let mut traj = ptr::null_mut();
        assert_eq!(db_encode(enc, [1.0].as_ptr(), 1, &mut traj), DbStatus::Diverged);
        assert!(traj.is_null());
        assert!(last_error().contains("diverged"));
        db_encoder_free(enc);
    }
}

#[test]
fn lyapunov_sum_tracks_minus_two_delta() {
    let mut r = DbLyapunov::default();
    unsafe {
        assert_eq!(db_lyapunov_duffing(2.0, 1.0, &mut r), DbStatus::Ok);
        assert!((r.sum + 4.0).abs() < 0.4);
        assert!(r.exponents[0] >= r.exponents[1] && r.exponents[1] >= r.exponents[2]);
        assert!(r.exponents[0] < 0.0);
        assert!(!r.used_origin);
        assert_eq!(db_lyapunov_duffing(2.0, f64::INFINITY, &mut r), DbStatus::InvalidArgument);
    }
}

#[test]
fn pac_helpers() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(db_kl_gaussian([1.0].as_ptr(), [1.0].as_ptr(), 1, 1.0, &mut v), DbStatus::Ok);
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(db_kl_gaussian(ptr::null(), ptr::null(), 0, 1.0, &mut v), DbStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(db_kl_gaussian([0.0].as_ptr(), [0.0].as_ptr(), 1, 1.0, &mut v), DbStatus::InvalidArgument);
        assert_eq!(db_pac_bound(0.061, 2300.0, 1257, 0.05, &mut v), DbStatus::Ok);
        assert!((v - 1.019).abs() <= 0.005);
        assert_eq!(db_pac_bound(0.1, 1.0, 1, 0.05, &mut v), DbStatus::InvalidArgument);
        assert_eq!(db_pac_bound(0.1, 1.0, 100, 0.05, ptr::null_mut()), DbStatus::NullPointer);
    }
    assert_eq!(db_prior_variance(0.0), 1.0);
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(db_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dynbias.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "db_last_error",
        "db_version",
        "db_encoder_new_duffing",
        "db_encoder_new_lorenz",
        "db_encoder_new_thomas",
        "db_encoder_free",
        "db_encoder_frames",
        "db_encode",
        "db_trajectory_free",
        "db_trajectory_shape",
        "db_trajectory_copy",
        "db_trajectory_ais",
        "db_trajectory_spectrum",
        "db_lyapunov_duffing",
        "db_kl_gaussian",
        "db_pac_bound",
        "db_prior_variance",
        "DB_STATUS_BUFFER_TOO_SMALL",
        "typedef struct DbEncoder DbEncoder",
        "typedef struct DbTrajectory DbTrajectory",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(o) = std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        return;
    };
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
