//! The FLUX state machine.
//!
//! A state is the cell row plus the number of plies already played. Every
//! function here is pure; states are plain values.
//!
//! Rules, applied after each ply in this order:
//! 1. sum of cells above [`SUM_CAP`] ends the game for the Amplifier;
//! 2. a single remaining cell ends the game for the Shrinker;
//! 3. after ply [`MAX_PLIES`] the Shrinker wins iff fewer than
//!    [`TIEBREAK_MIN_CELLS`] cells remain, otherwise the Amplifier wins.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUM_CAP: u32 = 20;
pub const MAX_PLIES: u32 = 15;
pub const TIEBREAK_MIN_CELLS: usize = 3;
pub const INITIAL_CELLS: [u32; 5] = [2, 1, 3, 1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Player 0. Wants the row down to one cell.
    Shrinker,
    /// Player 1. Wants the sum over the cap.
    Amplifier,
}

impl Role {
    pub fn opponent(self) -> Role {
        match self {
            Role::Shrinker => Role::Amplifier,
            Role::Amplifier => Role::Shrinker,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Role::Shrinker => 0,
            Role::Amplifier => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Shrinker => "shrinker",
            Role::Amplifier => "amplifier",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shrinker" | "0" => Ok(Role::Shrinker),
            "amplifier" | "1" => Ok(Role::Amplifier),
            other => Err(Error::Config(format!("unknown role '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Amplify,
    Drain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub index: usize,
    pub op: Op,
}

impl Action {
    pub fn amplify(index: usize) -> Self {
        Action {
            index,
            op: Op::Amplify,
        }
    }

    pub fn drain(index: usize) -> Self {
        Action {
            index,
            op: Op::Drain,
        }
    }

    /// `2i` for Amplify, `2i + 1` for Drain.
    pub fn encode(self) -> u32 {
        2 * self.index as u32 + u32::from(self.op == Op::Drain)
    }

    pub fn decode(code: i64, row_len: usize) -> Result<Action> {
        if code < 0 || code >= 2 * row_len as i64 {
            return Err(Error::CodeOutOfRange { code, row_len });
        }
        let index = (code / 2) as usize;
        Ok(if code % 2 == 0 {
            Action::amplify(index)
        } else {
            Action::drain(index)
        })
    }
}

/// Renders as the reply grammar, e.g. `DRAIN 1`.
impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            Op::Amplify => write!(f, "AMPLIFY {}", self.index),
            Op::Drain => write!(f, "DRAIN {}", self.index),
        }
    }
}

pub fn encode_action(action: Action) -> u32 {
    action.encode()
}

pub fn decode_action(code: i64, row_len: usize) -> Result<Action> {
    Action::decode(code, row_len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShrinkerReason {
    SingleCell,
    TiebreakFewerThan3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AmplifierReason {
    SumExceeded20,
    TiebreakAtLeast3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalStatus {
    Ongoing,
    ShrinkerWin(ShrinkerReason),
    AmplifierWin(AmplifierReason),
}

impl TerminalStatus {
    pub fn is_terminal(self) -> bool {
        self != TerminalStatus::Ongoing
    }

    pub fn winner(self) -> Option<Role> {
        match self {
            TerminalStatus::Ongoing => None,
            TerminalStatus::ShrinkerWin(_) => Some(Role::Shrinker),
            TerminalStatus::AmplifierWin(_) => Some(Role::Amplifier),
        }
    }

    pub fn reason(self) -> Option<&'static str> {
        match self {
            TerminalStatus::Ongoing => None,
            TerminalStatus::ShrinkerWin(ShrinkerReason::SingleCell) => Some("single_cell"),
            TerminalStatus::ShrinkerWin(ShrinkerReason::TiebreakFewerThan3) => {
                Some("tiebreak_fewer_than_3")
            }
            TerminalStatus::AmplifierWin(AmplifierReason::SumExceeded20) => Some("sum_exceeded_20"),
            TerminalStatus::AmplifierWin(AmplifierReason::TiebreakAtLeast3) => {
                Some("tiebreak_at_least_3")
            }
        }
    }
}

/// `ongoing`, or `<winner>:<reason>` such as `shrinker:single_cell`.
impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.winner(), self.reason()) {
            (Some(w), Some(r)) => write!(f, "{w}:{r}"),
            _ => f.write_str("ongoing"),
        }
    }
}

impl FromStr for TerminalStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use AmplifierReason::*;
        use ShrinkerReason::*;
        Ok(match s {
            "ongoing" => TerminalStatus::Ongoing,
            "shrinker:single_cell" => TerminalStatus::ShrinkerWin(SingleCell),
            "shrinker:tiebreak_fewer_than_3" => TerminalStatus::ShrinkerWin(TiebreakFewerThan3),
            "amplifier:sum_exceeded_20" => TerminalStatus::AmplifierWin(SumExceeded20),
            "amplifier:tiebreak_at_least_3" => TerminalStatus::AmplifierWin(TiebreakAtLeast3),
            other => return Err(Error::Config(format!("unknown status '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GameState {
    cells: Vec<u32>,
    moves_played: u32,
}

impl GameState {
    /// Builds an arbitrary state. Cells must be non-empty and all positive.
    pub fn new(cells: Vec<u32>, moves_played: u32) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Config("a state needs at least one cell".into()));
        }
        if cells.contains(&0) {
            return Err(Error::Config("cell values must be positive".into()));
        }
        if moves_played > MAX_PLIES {
            return Err(Error::Config(format!(
                "moves_played {moves_played} exceeds {MAX_PLIES}"
            )));
        }
        Ok(GameState {
            cells,
            moves_played,
        })
    }

    pub fn initial() -> Self {
        GameState {
            cells: INITIAL_CELLS.to_vec(),
            moves_played: 0,
        }
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn moves_played(&self) -> u32 {
        self.moves_played
    }

    pub fn sum(&self) -> u32 {
        self.cells.iter().sum()
    }

    pub fn status(&self) -> TerminalStatus {
        if self.sum() > SUM_CAP {
            TerminalStatus::AmplifierWin(AmplifierReason::SumExceeded20)
        } else if self.cells.len() == 1 {
            TerminalStatus::ShrinkerWin(ShrinkerReason::SingleCell)
        } else if self.moves_played >= MAX_PLIES {
            if self.cells.len() < TIEBREAK_MIN_CELLS {
                TerminalStatus::ShrinkerWin(ShrinkerReason::TiebreakFewerThan3)
            } else {
                TerminalStatus::AmplifierWin(AmplifierReason::TiebreakAtLeast3)
            }
        } else {
            TerminalStatus::Ongoing
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.status().is_terminal()
    }

    fn ensure_ongoing(&self) -> Result<()> {
        if self.is_terminal() {
            Err(Error::TerminalState)
        } else {
            Ok(())
        }
    }

    /// All `(index, op)` pairs in ascending encoded order.
    pub fn legal_actions(&self) -> Result<Vec<Action>> {
        self.ensure_ongoing()?;
        Ok(self.actions_unchecked())
    }

    pub(crate) fn actions_unchecked(&self) -> Vec<Action> {
        (0..self.cells.len())
            .flat_map(|i| [Action::amplify(i), Action::drain(i)])
            .collect()
    }

    pub fn apply(&self, action: Action) -> Result<(GameState, TerminalStatus)> {
        self.ensure_ongoing()?;
        if action.index >= self.cells.len() {
            return Err(Error::IndexOutOfRange {
                index: action.index,
                len: self.cells.len(),
            });
        }
        let next = self.apply_unchecked(action);
        let status = next.status();
        Ok((next, status))
    }

    /// Transition without legality checks. The caller guarantees the state is
    /// ongoing and the index is in range.
    pub(crate) fn apply_unchecked(&self, action: Action) -> GameState {
        let mut cells = self.cells.clone();
        match action.op {
            Op::Amplify => cells[action.index] *= 2,
            Op::Drain => {
                cells[action.index] /= 2;
                if cells[action.index] == 0 {
                    cells.remove(action.index);
                }
            }
        }
        GameState {
            cells,
            moves_played: self.moves_played + 1,
        }
    }

    /// Canonical key: cells joined by `,`, then `|`, then the ply count.
    pub fn key(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 3 + 4);
        for (i, c) in self.cells.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&c.to_string());
        }
        out.push('|');
        out.push_str(&self.moves_played.to_string());
        out
    }

    pub fn from_key(key: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed state key '{key}'"));
        let (cells, moves) = key.split_once('|').ok_or_else(bad)?;
        let cells = cells
            .split(',')
            .map(|c| c.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let moves = moves.parse::<u32>().map_err(|_| bad())?;
        GameState::new(cells, moves)
    }
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

pub fn state_key(state: &GameState) -> String {
    state.key()
}

/// Game configuration. The only knobs are the opening row and which role
/// moves on even plies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rules {
    pub initial_cells: Vec<u32>,
    pub first_mover: Role,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            initial_cells: INITIAL_CELLS.to_vec(),
            first_mover: Role::Shrinker,
        }
    }
}

impl Rules {
    pub fn initial_state(&self) -> GameState {
        GameState {
            cells: self.initial_cells.clone(),
            moves_played: 0,
        }
    }

    pub fn role_to_move(&self, state: &GameState) -> Result<Role> {
        state.ensure_ongoing()?;
        Ok(self.mover_at(state.moves_played))
    }

    pub(crate) fn mover_at(&self, moves_played: u32) -> Role {
        if moves_played % 2 == 0 {
            self.first_mover
        } else {
            self.first_mover.opponent()
        }
    }
}

pub fn initial_state() -> GameState {
    GameState::initial()
}

pub fn role_to_move(state: &GameState) -> Result<Role> {
    Rules::default().role_to_move(state)
}

pub fn legal_actions(state: &GameState) -> Result<Vec<Action>> {
    state.legal_actions()
}

pub fn apply(state: &GameState, action: Action) -> Result<(GameState, TerminalStatus)> {
    state.apply(action)
}
