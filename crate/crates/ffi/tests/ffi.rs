use std::ffi::CString;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use expert_advice_ffi::*;

fn game(name: &str, m: usize) -> *mut EaGame {
    let name = CString::new(name).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { ea_game_new(name.as_ptr(), m, &mut g) }, EaStatus::Ok);
    assert!(!g.is_null());
    g
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { ea_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(255)).map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn game_queries() {
    let g = game("absolute", 2);
    let (mut m, mut dim) = (0, 0);
    assert_eq!(unsafe { ea_game_dims(g, &mut m, &mut dim) }, EaStatus::Ok);
    assert_eq!((m, dim), (2, 1));
    let mut loss = 0.0;
    assert_eq!(unsafe { ea_game_loss(g, [0.25].as_ptr(), 1, 0, &mut loss) }, EaStatus::Ok);
    assert_eq!(loss, 0.25);
    let mut c = 0.0;
    assert_eq!(unsafe { ea_game_realizability_constant(g, 1.0, &mut c) }, EaStatus::Ok);
    let expected = 1.0 / (2.0 * (2.0 / (1.0 + (-1.0f64).exp())).ln());
    assert!((c - expected).abs() < 1e-9);
    let mut eta = 0.0;
    assert_eq!(unsafe { ea_game_max_learning_rate(g, &mut eta) }, EaStatus::Unsupported);
    unsafe { ea_game_free(g) };

    let g = game("log", 2);
    assert_eq!(unsafe { ea_game_max_learning_rate(g, &mut eta) }, EaStatus::Ok);
    assert_eq!(eta, 1.0);
    assert_eq!(unsafe { ea_game_loss(g, [1.0].as_ptr(), 1, 0, &mut loss) }, EaStatus::Ok);
    assert_eq!(loss, f64::INFINITY);
    unsafe { ea_game_free(g) };
}

#[test]
fn errors_carry_status_and_message() {
    let name = CString::new("no-such-game").unwrap();
    let mut g = ptr::null_mut();
    assert_ne!(unsafe { ea_game_new(name.as_ptr(), 2, &mut g) }, EaStatus::Ok);
    assert!(g.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { ea_game_new(ptr::null(), 2, &mut g) }, EaStatus::NullPointer);
    assert!(last_error().contains("null"));

    let g = game("log", 2);
    let mut loss = 0.0;
    assert_eq!(unsafe { ea_game_loss(g, [0.5, 0.5].as_ptr(), 2, 0, &mut loss) }, EaStatus::DimensionMismatch);
    assert_eq!(unsafe { ea_game_loss(g, [0.5].as_ptr(), 1, 5, &mut loss) }, EaStatus::InvalidArgument);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ea_aa_new(g, 1.0, 1.0, 2, ptr::null(), &mut s) }, EaStatus::Ok);
    assert_eq!(unsafe { ea_aa_observe(s, 0) }, EaStatus::WrongState);
    let mut d = [0.0];
    assert_eq!(unsafe { ea_aa_predict(s, [0.2, 0.8].as_ptr(), 3, d.as_mut_ptr(), 1) }, EaStatus::DimensionMismatch);
    assert_eq!(unsafe { ea_aa_predict(s, [0.2, 1.8].as_ptr(), 2, d.as_mut_ptr(), 1) }, EaStatus::InvalidArgument);
    assert_eq!(unsafe { ea_aa_predict(s, [0.2, 0.8].as_ptr(), 2, d.as_mut_ptr(), 1) }, EaStatus::Ok);
    assert_eq!(last_error(), "");

    // A too-small buffer still reports the full length.
    assert_eq!(unsafe { ea_aa_observe(s, 7) }, EaStatus::InvalidArgument);
    let full = unsafe { ea_last_error_message(ptr::null_mut(), 0) };
    let mut tiny = [0 as std::ffi::c_char; 4];
    assert_eq!(unsafe { ea_last_error_message(tiny.as_mut_ptr(), 4) }, full);
    assert_eq!(tiny[3], 0);

    unsafe {
        ea_aa_free(s);
        ea_game_free(g);
        ea_aa_free(ptr::null_mut());
        ea_dfa_free(ptr::null_mut());
        ea_game_free(ptr::null_mut());
    }
}

#[test]
fn aa_and_dfa_sessions_agree_on_log_loss() {
    let g = game("log", 2);
    let prior = [0.2, 0.3, 0.5];
    let (mut aa, mut dfa) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(ea_aa_new(g, 1.0, 1.0, 3, prior.as_ptr(), &mut aa), EaStatus::Ok);
        assert_eq!(ea_dfa_new(g, 1.0, 1.0, 3, prior.as_ptr(), &mut dfa), EaStatus::Ok);
        // The sessions keep their own reference to the game.
        ea_game_free(g);
    }
    let advice = [0.1, 0.6, 0.85];
    let outcomes = [1, 0, 1, 1, 0, 1, 1, 1, 0, 1];
    for o in outcomes {
        let (mut da, mut dd, mut pi) = ([0.0], [0.0], [0.0; 2]);
        unsafe {
            assert_eq!(ea_aa_predict(aa, advice.as_ptr(), 3, da.as_mut_ptr(), 1), EaStatus::Ok);
            assert_eq!(ea_dfa_predict(dfa, advice.as_ptr(), 3, dd.as_mut_ptr(), 1, pi.as_mut_ptr()), EaStatus::Ok);
            assert_eq!(ea_aa_observe(aa, o), EaStatus::Ok);
            assert_eq!(ea_dfa_observe(dfa, o), EaStatus::Ok);
        }
        assert!((da[0] - dd[0]).abs() < 1e-6, "{} vs {}", da[0], dd[0]);
        assert!((pi[0] + pi[1] - 1.0).abs() < 1e-12);
    }
    let (mut la, mut ld) = (0.0, 0.0);
    let (mut ea, mut ed) = ([0.0; 3], [0.0; 3]);
    let mut log_q = 0.0;
    unsafe {
        assert_eq!(ea_aa_losses(aa, &mut la, ea.as_mut_ptr(), 3), EaStatus::Ok);
        assert_eq!(ea_dfa_losses(dfa, &mut ld, ed.as_mut_ptr(), 3), EaStatus::Ok);
        assert_eq!(ea_dfa_losses(dfa, &mut ld, ed.as_mut_ptr(), 2), EaStatus::DimensionMismatch);
        assert_eq!(ea_dfa_log_supermartingale(dfa, &mut log_q), EaStatus::Ok);
        ea_aa_free(aa);
        ea_dfa_free(dfa);
    }
    assert!((la - ld).abs() < 1e-6);
    assert_eq!(ea, ed);
    // Bayes mixture loss: minus the log of the prior-weighted likelihoods.
    let lik: f64 = advice
        .iter()
        .zip(prior)
        .map(|(p, w)| w * outcomes.iter().map(|&o| if o == 1 { *p } else { 1.0 - p }).product::<f64>())
        .sum();
    assert!((la + lik.ln()).abs() < 1e-9);
    assert!(log_q <= 1e-9);
    for (t, e) in ea.iter().enumerate() {
        assert!(la <= e - prior[t].ln() + 1e-9);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("expert_advice.h")
}

fn cc() -> Command {
    Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
}

#[test]
fn header_is_valid_c() {
    let out = cc().args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-std=c99"]).arg(header()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c_program_links_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "expert_advice.h"
int main(void) {
    EaGame *g = NULL;
    EaAaSession *s = NULL;
    double d[1], loss;
    const double advice[2] = {0.2, 0.8};
    char msg[128];
    if (ea_game_new("log", 2, &g) != EA_STATUS_OK) return 1;
    if (ea_aa_new(g, 1.0, 1.0, 2, NULL, &s) != EA_STATUS_OK) return 2;
    if (ea_aa_predict(s, advice, 2, d, 1) != EA_STATUS_OK) return 3;
    if (ea_aa_observe(s, 1) != EA_STATUS_OK) return 4;
    if (ea_aa_losses(s, &loss, NULL, 0) != EA_STATUS_OK) return 5;
    ea_last_error_message(msg, sizeof msg);
    ea_aa_free(s);
    ea_game_free(g);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("use");
    let inc = header().parent().unwrap().to_path_buf();
    // Test binaries live in <profile>/deps; the static library sits in <profile>.
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libexpert_advice_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let out = cc()
        .args(["-Wall", "-Werror", "-std=c99", "-I"])
        .arg(&inc)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let status = Command::new(&exe).status().unwrap();
    assert_eq!(status.code(), Some(0));
}
