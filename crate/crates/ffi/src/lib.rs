//! C ABI over `flux-core`.
//!
//! All objects are opaque handles owned by the caller and released with the
//! matching `*_free`. Fallible calls return a [`FluxStatus`]; on anything but
//! `FLUX_STATUS_OK` the thread's last error message is available from
//! [`flux_last_error`]. Outputs are written only on success.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use flux_core::agents::heuristic_policy;
use flux_core::env::{Action, AmplifierReason, GameState, Op, Role, Rules, ShrinkerReason, TerminalStatus};
use flux_core::qlearn::{load_qtable, QTable};
use flux_core::solver::{random_play_table, solve, RandomPlayTable, SolvedGame};
use flux_core::{Error, GameRng};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxStatus {
    Ok = 0,
    NullPointer = 1,
    IndexOutOfRange = 2,
    TerminalState = 3,
    CodeOutOfRange = 4,
    InvalidArgument = 5,
    Format = 6,
    Io = 7,
    UnknownState = 8,
    Config = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxRole {
    Shrinker = 0,
    Amplifier = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxOutcome {
    Ongoing = 0,
    ShrinkerSingleCell = 1,
    ShrinkerTiebreak = 2,
    AmplifierSumExceeded = 3,
    AmplifierTiebreak = 4,
}

/// Game position.
pub struct FluxState {
    inner: GameState,
}

/// Trained Q-table, read-only.
pub struct FluxQTable {
    inner: QTable,
}

/// Solved game plus the random-play probabilities for every state.
pub struct FluxSolved {
    solved: SolvedGame,
    random: RandomPlayTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes stripped");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> FluxStatus {
    match err {
        Error::IndexOutOfRange { .. } => FluxStatus::IndexOutOfRange,
        Error::TerminalState => FluxStatus::TerminalState,
        Error::CodeOutOfRange { .. } => FluxStatus::CodeOutOfRange,
        Error::Format { .. } => FluxStatus::Format,
        Error::Config(_) => FluxStatus::Config,
        Error::UnknownState(_) => FluxStatus::UnknownState,
        Error::Io { .. } => FluxStatus::Io,
    }
}

fn fail(status: FluxStatus, msg: impl Into<String>) -> FluxStatus {
    set_last_error(msg);
    status
}

fn from_error(err: Error) -> FluxStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `f`, turning panics into `FLUX_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> FluxStatus) -> FluxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(FluxStatus::Panic, "internal panic"),
    }
}

macro_rules! deref {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(v) => v,
            None => return fail(FluxStatus::NullPointer, concat!(stringify!($ptr), " is null")),
        }
    };
}

macro_rules! out {
    ($ptr:expr) => {
        if $ptr.is_null() {
            return fail(FluxStatus::NullPointer, concat!(stringify!($ptr), " is null"));
        }
    };
}

fn role_in(role: FluxRole) -> Role {
    match role {
        FluxRole::Shrinker => Role::Shrinker,
        FluxRole::Amplifier => Role::Amplifier,
    }
}

fn role_out(role: Role) -> FluxRole {
    match role {
        Role::Shrinker => FluxRole::Shrinker,
        Role::Amplifier => FluxRole::Amplifier,
    }
}

fn outcome_out(status: TerminalStatus) -> FluxOutcome {
    match status {
        TerminalStatus::Ongoing => FluxOutcome::Ongoing,
        TerminalStatus::ShrinkerWin(ShrinkerReason::SingleCell) => FluxOutcome::ShrinkerSingleCell,
        TerminalStatus::ShrinkerWin(_) => FluxOutcome::ShrinkerTiebreak,
        TerminalStatus::AmplifierWin(AmplifierReason::SumExceeded20) => {
            FluxOutcome::AmplifierSumExceeded
        }
        TerminalStatus::AmplifierWin(_) => FluxOutcome::AmplifierTiebreak,
    }
}

fn rules_for(first_mover: FluxRole) -> Rules {
    Rules {
        first_mover: role_in(first_mover),
        ..Rules::default()
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Copies `items` into a caller buffer. `out_len` always receives the full
/// count, so a too-small buffer can be resized and retried.
unsafe fn copy_out(items: &[u32], out: *mut u32, cap: usize, out_len: *mut usize) -> FluxStatus {
    *out_len = items.len();
    if items.len() > cap {
        return fail(
            FluxStatus::BufferTooSmall,
            format!("need room for {} values, got {cap}", items.len()),
        );
    }
    if !items.is_empty() {
        if out.is_null() {
            return fail(FluxStatus::NullPointer, "out is null");
        }
        ptr::copy_nonoverlapping(items.as_ptr(), out, items.len());
    }
    FluxStatus::Ok
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn flux_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn flux_status_message(status: FluxStatus) -> *const c_char {
    let msg: &'static CStr = match status {
        FluxStatus::Ok => c"ok",
        FluxStatus::NullPointer => c"null pointer argument",
        FluxStatus::IndexOutOfRange => c"cell index out of range",
        FluxStatus::TerminalState => c"state is terminal",
        FluxStatus::CodeOutOfRange => c"action code out of range",
        FluxStatus::InvalidArgument => c"invalid argument",
        FluxStatus::Format => c"malformed file",
        FluxStatus::Io => c"i/o error",
        FluxStatus::UnknownState => c"state not in the solved space",
        FluxStatus::Config => c"configuration error",
        FluxStatus::BufferTooSmall => c"buffer too small",
        FluxStatus::Panic => c"internal panic",
    };
    msg.as_ptr()
}

/// The opening position `[2,1,3,1,2]`, no moves played.
#[no_mangle]
pub extern "C" fn flux_state_new_initial() -> *mut FluxState {
    boxed(FluxState {
        inner: GameState::initial(),
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_from_cells(
    cells: *const u32,
    len: usize,
    moves_played: u32,
    out_state: *mut *mut FluxState,
) -> FluxStatus {
    guard(|| {
        out!(out_state);
        if len > 0 && cells.is_null() {
            return fail(FluxStatus::NullPointer, "cells is null");
        }
        let values = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(cells, len).to_vec()
        };
        match GameState::new(values, moves_played) {
            Ok(inner) => {
                *out_state = boxed(FluxState { inner });
                FluxStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_free(state: *mut FluxState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_clone(state: *const FluxState) -> *mut FluxState {
    match state.as_ref() {
        Some(s) => boxed(FluxState {
            inner: s.inner.clone(),
        }),
        None => ptr::null_mut(),
    }
}

/// Number of cells; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn flux_state_len(state: *const FluxState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.len())
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_moves_played(state: *const FluxState) -> u32 {
    state.as_ref().map_or(0, |s| s.inner.moves_played())
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_sum(state: *const FluxState) -> u32 {
    state.as_ref().map_or(0, |s| s.inner.sum())
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_cells(
    state: *const FluxState,
    out: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> FluxStatus {
    guard(|| {
        let s = deref!(state);
        out!(out_len);
        copy_out(s.inner.cells(), out, cap, out_len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_outcome(
    state: *const FluxState,
    out_outcome: *mut FluxOutcome,
) -> FluxStatus {
    guard(|| {
        let s = deref!(state);
        out!(out_outcome);
        *out_outcome = outcome_out(s.inner.status());
        FluxStatus::Ok
    })
}

/// Role to move under the given first mover; fails on terminal states.
#[no_mangle]
pub unsafe extern "C" fn flux_state_role_to_move(
    state: *const FluxState,
    first_mover: FluxRole,
    out_role: *mut FluxRole,
) -> FluxStatus {
    guard(|| {
        let s = deref!(state);
        out!(out_role);
        match rules_for(first_mover).role_to_move(&s.inner) {
            Ok(r) => {
                *out_role = role_out(r);
                FluxStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Encoded legal actions in ascending order.
#[no_mangle]
pub unsafe extern "C" fn flux_state_legal_actions(
    state: *const FluxState,
    out: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> FluxStatus {
    guard(|| {
        let s = deref!(state);
        out!(out_len);
        match s.inner.legal_actions() {
            Ok(actions) => {
                let codes: Vec<u32> = actions.iter().map(|a| a.encode()).collect();
                copy_out(&codes, out, cap, out_len)
            }
            Err(e) => from_error(e),
        }
    })
}

/// Applies an encoded action, producing a new handle. The input is untouched.
#[no_mangle]
pub unsafe extern "C" fn flux_state_apply(
    state: *const FluxState,
    code: i64,
    out_next: *mut *mut FluxState,
    out_outcome: *mut FluxOutcome,
) -> FluxStatus {
    guard(|| {
        let s = deref!(state);
        out!(out_next);
        let action = match Action::decode(code, s.inner.len()) {
            Ok(a) => a,
            Err(e) => return from_error(e),
        };
        match s.inner.apply(action) {
            Ok((next, status)) => {
                *out_next = boxed(FluxState { inner: next });
                if !out_outcome.is_null() {
                    *out_outcome = outcome_out(status);
                }
                FluxStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Canonical key such as `2,1,3,1,2|0`. Free with [`flux_string_free`].
#[no_mangle]
pub unsafe extern "C" fn flux_state_key(state: *const FluxState) -> *mut c_char {
    match state.as_ref() {
        Some(s) => CString::new(s.inner.key()).expect("keys have no nul").into_raw(),
        None => ptr::null_mut(),
    }
}

#[no_mangle]
pub unsafe extern "C" fn flux_state_from_key(
    key: *const c_char,
    out_state: *mut *mut FluxState,
) -> FluxStatus {
    guard(|| {
        out!(out_state);
        let key = match key.as_ref().map(|_| CStr::from_ptr(key).to_str()) {
            None => return fail(FluxStatus::NullPointer, "key is null"),
            Some(Err(_)) => return fail(FluxStatus::InvalidArgument, "key is not UTF-8"),
            Some(Ok(k)) => k,
        };
        match GameState::from_key(key) {
            Ok(inner) => {
                *out_state = boxed(FluxState { inner });
                FluxStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `2 * index + 1` for a drain, `2 * index` for an amplify.
#[no_mangle]
pub extern "C" fn flux_encode_action(index: u32, drain: bool) -> u32 {
    let op = if drain { Op::Drain } else { Op::Amplify };
    Action {
        index: index as usize,
        op,
    }
    .encode()
}

#[no_mangle]
pub unsafe extern "C" fn flux_decode_action(
    code: i64,
    row_len: usize,
    out_index: *mut u32,
    out_drain: *mut bool,
) -> FluxStatus {
    guard(|| {
        out!(out_index);
        out!(out_drain);
        match Action::decode(code, row_len) {
            Ok(a) => {
                *out_index = a.index as u32;
                *out_drain = a.op == Op::Drain;
                FluxStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_heuristic_action(
    state: *const FluxState,
    role: FluxRole,
    out_code: *mut u32,
) -> FluxStatus {
    guard(|| {
        let s = deref!(state);
        out!(out_code);
        if s.inner.status().is_terminal() {
            return fail(FluxStatus::TerminalState, "state is already terminal");
        }
        *out_code = heuristic_policy(&s.inner, role_in(role)).encode();
        FluxStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_qtable_load(
    path: *const c_char,
    out_table: *mut *mut FluxQTable,
) -> FluxStatus {
    guard(|| {
        out!(out_table);
        if path.is_null() {
            return fail(FluxStatus::NullPointer, "path is null");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => Path::new(p),
            Err(_) => return fail(FluxStatus::InvalidArgument, "path is not UTF-8"),
        };
        match load_qtable(path) {
            Ok(inner) => {
                *out_table = boxed(FluxQTable { inner });
                FluxStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_qtable_free(table: *mut FluxQTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of states in the table; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn flux_qtable_len(table: *const FluxQTable) -> usize {
    table.as_ref().map_or(0, |t| t.inner.len())
}

#[no_mangle]
pub unsafe extern "C" fn flux_qtable_role(
    table: *const FluxQTable,
    out_role: *mut FluxRole,
) -> FluxStatus {
    guard(|| {
        let t = deref!(table);
        out!(out_role);
        *out_role = role_out(t.inner.role);
        FluxStatus::Ok
    })
}

/// Greedy move for `state`. When the state is not in the table a uniform
/// random legal move drawn from `seed` is returned and `out_fallback` is set.
#[no_mangle]
pub unsafe extern "C" fn flux_qtable_greedy_action(
    table: *const FluxQTable,
    state: *const FluxState,
    seed: u64,
    out_code: *mut u32,
    out_fallback: *mut bool,
) -> FluxStatus {
    guard(|| {
        let t = deref!(table);
        let s = deref!(state);
        out!(out_code);
        let legal = match s.inner.legal_actions() {
            Ok(a) => a,
            Err(e) => return from_error(e),
        };
        let (action, fallback) = match t.inner.greedy_action(&s.inner) {
            Some(a) => (a, false),
            None => (*GameRng::seed_from(seed).choose(&legal), true),
        };
        *out_code = action.encode();
        if !out_fallback.is_null() {
            *out_fallback = fallback;
        }
        FluxStatus::Ok
    })
}

/// Solves every position reachable under `first_mover`.
#[no_mangle]
pub extern "C" fn flux_solve(first_mover: FluxRole) -> *mut FluxSolved {
    let solved = solve(&rules_for(first_mover));
    let random = random_play_table(solved.space());
    boxed(FluxSolved { solved, random })
}

#[no_mangle]
pub unsafe extern "C" fn flux_solved_free(solved: *mut FluxSolved) {
    if !solved.is_null() {
        drop(Box::from_raw(solved));
    }
}

#[no_mangle]
pub unsafe extern "C" fn flux_solved_len(solved: *const FluxSolved) -> usize {
    solved.as_ref().map_or(0, |s| s.solved.len())
}

/// Winner under optimal play and the number of plies it takes.
#[no_mangle]
pub unsafe extern "C" fn flux_solved_value(
    solved: *const FluxSolved,
    state: *const FluxState,
    out_winner: *mut FluxRole,
    out_depth: *mut u32,
) -> FluxStatus {
    guard(|| {
        let g = deref!(solved);
        let s = deref!(state);
        out!(out_winner);
        match g.solved.get(&s.inner) {
            Some(v) => {
                *out_winner = role_out(v.winner);
                if !out_depth.is_null() {
                    *out_depth = v.depth;
                }
                FluxStatus::Ok
            }
            None => fail(FluxStatus::UnknownState, format!("state {} is not reachable", s.inner)),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn flux_solved_optimal_action(
    solved: *const FluxSolved,
    state: *const FluxState,
    out_code: *mut u32,
) -> FluxStatus {
    guard(|| {
        let g = deref!(solved);
        let s = deref!(state);
        out!(out_code);
        match g.solved.optimal_policy(&s.inner) {
            Ok(a) => {
                *out_code = a.encode();
                FluxStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Shrinker win probability when both sides move uniformly at random.
#[no_mangle]
pub unsafe extern "C" fn flux_solved_random_win_prob(
    solved: *const FluxSolved,
    state: *const FluxState,
    out_prob: *mut f64,
) -> FluxStatus {
    guard(|| {
        let g = deref!(solved);
        let s = deref!(state);
        out!(out_prob);
        match g.random.get(&s.inner) {
            Some(p) => {
                *out_prob = p;
                FluxStatus::Ok
            }
            None => fail(FluxStatus::UnknownState, format!("state {} is not reachable", s.inner)),
        }
    })
}
