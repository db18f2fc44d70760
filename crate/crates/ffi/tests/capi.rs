use std::ffi::{CStr, CString};
use std::ptr;

use flux_ffi::*;

fn cells(state: *const FluxState) -> Vec<u32> {
    let mut buf = [0u32; 8];
    let mut len = 0usize;
    let status = unsafe { flux_state_cells(state, buf.as_mut_ptr(), buf.len(), &mut len) };
    assert_eq!(status, FluxStatus::Ok);
    buf[..len].to_vec()
}

#[test]
fn initial_state_and_drain() {
    let s = flux_state_new_initial();
    assert_eq!(cells(s), vec![2, 1, 3, 1, 2]);
    unsafe {
        assert_eq!(flux_state_sum(s), 9);
        let key = flux_state_key(s);
        assert_eq!(CStr::from_ptr(key).to_str().unwrap(), "2,1,3,1,2|0");
        flux_string_free(key);

        let mut next = ptr::null_mut();
        let mut outcome = FluxOutcome::AmplifierTiebreak;
        let code = flux_encode_action(1, true);
        assert_eq!(code, 3);
        assert_eq!(flux_state_apply(s, code as i64, &mut next, &mut outcome), FluxStatus::Ok);
        assert_eq!(outcome, FluxOutcome::Ongoing);
        assert_eq!(cells(next), vec![2, 3, 1, 2]);
        assert_eq!(flux_state_moves_played(next), 1);
        flux_state_free(next);
        flux_state_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let s = flux_state_new_initial();
        let mut next = ptr::null_mut();
        assert_eq!(
            flux_state_apply(s, 10, &mut next, ptr::null_mut()),
            FluxStatus::CodeOutOfRange
        );
        assert!(next.is_null());
        let msg = CStr::from_ptr(flux_last_error()).to_str().unwrap();
        assert!(msg.contains("10"), "{msg}");

        assert_eq!(
            flux_state_apply(ptr::null(), 0, &mut next, ptr::null_mut()),
            FluxStatus::NullPointer
        );

        let mut tiny = [0u32; 2];
        let mut len = 0;
        assert_eq!(
            flux_state_legal_actions(s, tiny.as_mut_ptr(), tiny.len(), &mut len),
            FluxStatus::BufferTooSmall
        );
        assert_eq!(len, 10);

        let mut bad = ptr::null_mut();
        let row = [0u32, 4];
        assert_eq!(
            flux_state_from_cells(row.as_ptr(), row.len(), 0, &mut bad),
            FluxStatus::Config
        );
        flux_state_free(s);

        let text = CStr::from_ptr(flux_status_message(FluxStatus::TerminalState));
        assert_eq!(text.to_str().unwrap(), "state is terminal");
    }
}

#[test]
fn terminal_state_rejects_moves() {
    unsafe {
        let row = [1u32, 10];
        let mut s = ptr::null_mut();
        assert_eq!(flux_state_from_cells(row.as_ptr(), 2, 3, &mut s), FluxStatus::Ok);
        let mut next = ptr::null_mut();
        let mut outcome = FluxOutcome::Ongoing;
        assert_eq!(flux_state_apply(s, 2, &mut next, &mut outcome), FluxStatus::Ok);
        assert_eq!(outcome, FluxOutcome::AmplifierSumExceeded);
        assert_eq!(
            flux_state_apply(next, 0, &mut ptr::null_mut(), ptr::null_mut()),
            FluxStatus::TerminalState
        );
        let mut len = 0;
        assert_eq!(
            flux_state_legal_actions(next, ptr::null_mut(), 0, &mut len),
            FluxStatus::TerminalState
        );
        flux_state_free(next);
        flux_state_free(s);
    }
}

#[test]
fn heuristic_and_solver() {
    unsafe {
        let s = flux_state_new_initial();
        let mut code = 0;
        assert_eq!(flux_heuristic_action(s, FluxRole::Shrinker, &mut code), FluxStatus::Ok);
        assert_eq!(code, 3);
        assert_eq!(flux_heuristic_action(s, FluxRole::Amplifier, &mut code), FluxStatus::Ok);
        assert_eq!(code, 4);

        let solved = flux_solve(FluxRole::Shrinker);
        assert!(flux_solved_len(solved) > 1000);
        let mut winner = FluxRole::Shrinker;
        let mut depth = 0;
        assert_eq!(flux_solved_value(solved, s, &mut winner, &mut depth), FluxStatus::Ok);
        assert!(depth <= 15);
        let mut p = -1.0;
        assert_eq!(flux_solved_random_win_prob(solved, s, &mut p), FluxStatus::Ok);
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(flux_solved_optimal_action(solved, s, &mut code), FluxStatus::Ok);

        let row = [50u32, 50];
        let mut far = ptr::null_mut();
        assert_eq!(flux_state_from_cells(row.as_ptr(), 2, 0, &mut far), FluxStatus::Ok);
        assert_eq!(
            flux_solved_value(solved, far, &mut winner, ptr::null_mut()),
            FluxStatus::UnknownState
        );
        flux_state_free(far);
        flux_solved_free(solved);
        flux_state_free(s);
    }
}

#[test]
fn qtable_round_trip_through_c_api() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.txt");
    let mut table = flux_core::qlearn::QTable::new(flux_core::Role::Shrinker);
    table.set("2,1,3,1,2|0", 5, 0.75);
    table.set("2,1,3,1,2|0", 3, 0.25);
    flux_core::qlearn::save_qtable(&table, &path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut q = ptr::null_mut();
        assert_eq!(flux_qtable_load(cpath.as_ptr(), &mut q), FluxStatus::Ok);
        assert_eq!(flux_qtable_len(q), 1);
        let mut role = FluxRole::Amplifier;
        assert_eq!(flux_qtable_role(q, &mut role), FluxStatus::Ok);
        assert_eq!(role, FluxRole::Shrinker);

        let s = flux_state_new_initial();
        let (mut code, mut fallback) = (0, true);
        assert_eq!(flux_qtable_greedy_action(q, s, 1, &mut code, &mut fallback), FluxStatus::Ok);
        assert_eq!((code, fallback), (5, false));

        let mut other = ptr::null_mut();
        flux_state_apply(s, 5, &mut other, ptr::null_mut());
        assert_eq!(flux_qtable_greedy_action(q, other, 1, &mut code, &mut fallback), FluxStatus::Ok);
        assert!(fallback);
        assert!(code < 8);
        flux_state_free(other);
        flux_state_free(s);
        flux_qtable_free(q);

        let missing = CString::new(dir.path().join("nope.txt").to_str().unwrap()).unwrap();
        let mut q2 = ptr::null_mut();
        assert_eq!(flux_qtable_load(missing.as_ptr(), &mut q2), FluxStatus::Io);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flux.h"))
        .expect("build script writes the header");
    for name in [
        "typedef struct FluxState FluxState",
        "flux_state_apply",
        "flux_qtable_greedy_action",
        "flux_solve",
        "FLUX_STATUS_CODE_OUT_OF_RANGE",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Compiles a small C program against the header and static library.
/// Skipped when there is no `cc` or the archive is not next to the test binary.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let archive = profile_dir.join("libflux_ffi.a");
    if !archive.exists() || std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no cc or {} missing", archive.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "flux.h"
int main(void) {
    struct FluxState *s = flux_state_new_initial();
    struct FluxState *next = NULL;
    enum FluxOutcome outcome;
    if (flux_state_apply(s, flux_encode_action(2, true), &next, &outcome) != FLUX_STATUS_OK) return 3;
    printf("%zu %u\n", flux_state_len(next), flux_state_sum(next));
    flux_state_free(next);
    flux_state_free(s);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = std::process::Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "cc failed");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success());
    // drain index 2 (value 3) leaves [2,1,1,1,2]
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "5 7");
}
