//! Agent abstraction and the non-LLM policies.
//!
//! An [`Agent`] is shared across games; [`Agent::start_game`] hands out a
//! [`Player`] that may carry per-game state (the LLM conversation, for one).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Action, GameState, Role};
use crate::qlearn::QTable;
use crate::rng::GameRng;
use crate::solver::SolvedGame;

/// Side information attached to a ply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
    /// `ok`, `format` or `out_of_range`; only present for LLM plies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse: Option<String>,
    #[serde(default)]
    pub substituted: bool,
    #[serde(default)]
    pub transport_failure: bool,
    /// Greedy Q policy had no entry for the state and moved at random.
    #[serde(default)]
    pub fallback: bool,
}

impl Annotation {
    pub fn is_llm_ply(&self) -> bool {
        self.parse.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub annotation: Annotation,
}

impl From<Action> for Decision {
    fn from(action: Action) -> Self {
        Decision {
            action,
            annotation: Annotation::default(),
        }
    }
}

pub trait Player {
    /// Must return an action that is legal in `state`.
    fn choose(&mut self, state: &GameState, role: Role, rng: &mut GameRng) -> Decision;
}

pub trait Agent: Send + Sync {
    fn name(&self) -> &str;
    fn start_game(&self) -> Box<dyn Player + '_>;
}

pub fn random_policy(state: &GameState, rng: &mut GameRng) -> Action {
    let actions = state.actions_unchecked();
    *rng.choose(&actions)
}

fn argmax_by_score(state: &GameState, score: impl Fn(&GameState, &GameState) -> i64) -> Action {
    let mut best: Option<(i64, Action)> = None;
    for action in state.actions_unchecked() {
        let child = state.apply_unchecked(action);
        let s = score(state, &child);
        // strict comparison keeps the lowest encoded action on ties
        if best.map_or(true, |(b, _)| s > b) {
            best = Some((s, action));
        }
    }
    best.expect("ongoing state has actions").1
}

const LENGTH_WEIGHT: i64 = 10;

/// Maximises `10 * cells_removed - max(0, sum_growth)`.
pub fn heuristic_shrinker(state: &GameState) -> Action {
    argmax_by_score(state, |before, after| {
        let removed = before.len() as i64 - after.len() as i64;
        let growth = after.sum() as i64 - before.sum() as i64;
        LENGTH_WEIGHT * removed - growth.max(0)
    })
}

/// Maximises `sum_growth - 10 * cells_removed`.
pub fn heuristic_amplifier(state: &GameState) -> Action {
    argmax_by_score(state, |before, after| {
        let removed = before.len() as i64 - after.len() as i64;
        let growth = after.sum() as i64 - before.sum() as i64;
        growth - LENGTH_WEIGHT * removed
    })
}

pub fn heuristic_policy(state: &GameState, role: Role) -> Action {
    match role {
        Role::Shrinker => heuristic_shrinker(state),
        Role::Amplifier => heuristic_amplifier(state),
    }
}

/// Greedy action from a Q-table, lowest code on ties. The flag is true when
/// the state was missing and a random legal move was used instead.
pub fn greedy_q_policy(table: &QTable, state: &GameState, rng: &mut GameRng) -> (Action, bool) {
    match table.greedy_action(state) {
        Some(action) => (action, false),
        None => (random_policy(state, rng), true),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RandomAgent;

impl Player for RandomAgent {
    fn choose(&mut self, state: &GameState, _role: Role, rng: &mut GameRng) -> Decision {
        random_policy(state, rng).into()
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn start_game(&self) -> Box<dyn Player + '_> {
        Box::new(RandomAgent)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicAgent;

impl Player for HeuristicAgent {
    fn choose(&mut self, state: &GameState, role: Role, _rng: &mut GameRng) -> Decision {
        heuristic_policy(state, role).into()
    }
}

impl Agent for HeuristicAgent {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn start_game(&self) -> Box<dyn Player + '_> {
        Box::new(HeuristicAgent)
    }
}

/// Greedy evaluation policy over a trained table.
#[derive(Debug)]
pub struct QAgent {
    name: String,
    table: Arc<QTable>,
    fallbacks: AtomicU64,
}

impl QAgent {
    pub fn new(name: impl Into<String>, table: Arc<QTable>) -> Self {
        QAgent {
            name: name.into(),
            table,
            fallbacks: AtomicU64::new(0),
        }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    /// Number of moves so far that hit an unseen state.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }
}

struct QPlayer<'a>(&'a QAgent);

impl Player for QPlayer<'_> {
    fn choose(&mut self, state: &GameState, _role: Role, rng: &mut GameRng) -> Decision {
        let (action, fallback) = greedy_q_policy(&self.0.table, state, rng);
        if fallback {
            self.0.fallbacks.fetch_add(1, Ordering::Relaxed);
            log::debug!("{}: unseen state {}, moving at random", self.0.name, state);
        }
        Decision {
            action,
            annotation: Annotation {
                fallback,
                ..Annotation::default()
            },
        }
    }
}

impl Agent for QAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn start_game(&self) -> Box<dyn Player + '_> {
        Box::new(QPlayer(self))
    }
}

/// Plays the solver's policy.
#[derive(Debug, Clone)]
pub struct OptimalAgent {
    solved: Arc<SolvedGame>,
}

impl OptimalAgent {
    pub fn new(solved: Arc<SolvedGame>) -> Self {
        OptimalAgent { solved }
    }
}

impl Player for OptimalAgent {
    fn choose(&mut self, state: &GameState, _role: Role, _rng: &mut GameRng) -> Decision {
        self.solved
            .optimal_policy(state)
            .expect("optimal agent only sees states reachable under the solved rules")
            .into()
    }
}

impl Agent for OptimalAgent {
    fn name(&self) -> &str {
        "optimal"
    }

    fn start_game(&self) -> Box<dyn Player + '_> {
        Box::new(self.clone())
    }
}
