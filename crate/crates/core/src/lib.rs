//! FLUX: a small two-player game on a contracting row of integer cells.
//!
//! The crate contains the deterministic game engine ([`env`]), baseline and
//! learned agents ([`agents`], [`qlearn`]), an exhaustive solver used as
//! ground truth ([`solver`]), the tournament harness ([`arena`]) and the
//! text protocol used to let chat models play ([`llm`]).

pub mod agents;
pub mod arena;
pub mod cli;
pub mod env;
pub mod error;
pub mod llm;
pub mod qlearn;
pub mod rng;
pub mod solver;

pub use env::{
    Action, AmplifierReason, GameState, Op, Role, Rules, ShrinkerReason, TerminalStatus,
};
pub use error::{Error, Result};
pub use rng::GameRng;
