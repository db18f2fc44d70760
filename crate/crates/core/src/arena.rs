//! Tournament harness.
//!
//! Player 0 always plays the Shrinker and player 1 the Amplifier; swapping
//! roles is a separate matchup. Game `i` of a matchup is seeded with
//! `base_seed + i`, so games are independent and can run in parallel
//! without changing any result.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Annotation, HeuristicAgent, OptimalAgent, QAgent, RandomAgent};
use crate::env::{Action, GameState, Role, Rules, TerminalStatus};
use crate::error::{Error, Result};
use crate::llm::{
    exchange_log_path, parse_reply, HttpChatBackend, InvalidReason, LlmAgent, LlmBackend,
    ParsedReply, ScriptedBackend,
};
use crate::qlearn::load_qtable;
use crate::rng::GameRng;
use crate::solver::{solve, SolvedGame};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LlmSpec {
    /// `scripted=<file>`: one reply per line.
    Scripted(PathBuf),
    /// `http` or `http=<model>`; endpoint and key from the environment.
    Http { model: Option<String> },
}

/// Agent identifier as accepted on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentSpec {
    Random,
    Heuristic,
    Rl(PathBuf),
    Llm(LlmSpec),
    Human,
    Optimal,
}

impl FromStr for AgentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Config(format!("unknown agent '{s}'"));
        match s {
            "random" => return Ok(AgentSpec::Random),
            "heuristic" => return Ok(AgentSpec::Heuristic),
            "human" => return Ok(AgentSpec::Human),
            "optimal" => return Ok(AgentSpec::Optimal),
            _ => {}
        }
        let (kind, arg) = s.split_once(':').ok_or_else(unknown)?;
        match kind {
            "rl" if !arg.is_empty() => Ok(AgentSpec::Rl(PathBuf::from(arg))),
            "llm" => {
                if let Some(path) = arg.strip_prefix("scripted=") {
                    Ok(AgentSpec::Llm(LlmSpec::Scripted(PathBuf::from(path))))
                } else if arg == "http" {
                    Ok(AgentSpec::Llm(LlmSpec::Http { model: None }))
                } else if let Some(model) = arg.strip_prefix("http=") {
                    Ok(AgentSpec::Llm(LlmSpec::Http {
                        model: Some(model.to_owned()),
                    }))
                } else {
                    Err(unknown())
                }
            }
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Random => f.write_str("random"),
            AgentSpec::Heuristic => f.write_str("heuristic"),
            AgentSpec::Human => f.write_str("human"),
            AgentSpec::Optimal => f.write_str("optimal"),
            AgentSpec::Rl(p) => write!(f, "rl:{}", p.display()),
            AgentSpec::Llm(LlmSpec::Scripted(p)) => write!(f, "llm:scripted={}", p.display()),
            AgentSpec::Llm(LlmSpec::Http { model: None }) => f.write_str("llm:http"),
            AgentSpec::Llm(LlmSpec::Http { model: Some(m) }) => write!(f, "llm:http={m}"),
        }
    }
}

/// Shared resources for building agents.
#[derive(Debug)]
pub struct AgentFactory {
    pub rules: Rules,
    pub llm_timeout: Duration,
    /// Directory for raw LLM exchanges, when logging is on.
    pub llm_log_dir: Option<PathBuf>,
    solved: OnceLock<Arc<SolvedGame>>,
}

impl AgentFactory {
    pub fn new(rules: Rules) -> Self {
        AgentFactory {
            rules,
            llm_timeout: Duration::from_secs(60),
            llm_log_dir: None,
            solved: OnceLock::new(),
        }
    }

    pub fn solved(&self) -> Arc<SolvedGame> {
        self.solved
            .get_or_init(|| Arc::new(solve(&self.rules)))
            .clone()
    }

    /// Builds the agent for `seat`. Q-tables must have been trained for the
    /// seat they are put in.
    pub fn build(&self, spec: &AgentSpec, seat: Role) -> Result<Arc<dyn Agent>> {
        Ok(match spec {
            AgentSpec::Random => Arc::new(RandomAgent),
            AgentSpec::Heuristic => Arc::new(HeuristicAgent),
            AgentSpec::Optimal => Arc::new(OptimalAgent::new(self.solved())),
            AgentSpec::Rl(path) => {
                let table = load_qtable(path).map_err(|e| match e {
                    Error::Io { path, source } => {
                        Error::Config(format!("cannot read Q-table {}: {source}", path.display()))
                    }
                    other => other,
                })?;
                if table.role != seat {
                    return Err(Error::Config(format!(
                        "{} holds a {} table but is seated as {seat}",
                        path.display(),
                        table.role
                    )));
                }
                Arc::new(QAgent::new(spec.to_string(), Arc::new(table)))
            }
            AgentSpec::Llm(llm) => {
                let backend: Arc<dyn LlmBackend> = match llm {
                    LlmSpec::Scripted(path) => Arc::new(ScriptedBackend::from_file(path)?),
                    LlmSpec::Http { model } => {
                        let mut backend =
                            HttpChatBackend::from_env(model.as_deref(), self.llm_timeout)?;
                        if let Some(dir) = &self.llm_log_dir {
                            backend = backend.with_exchange_log(&exchange_log_path(dir))?;
                        }
                        Arc::new(backend)
                    }
                };
                Arc::new(LlmAgent::new(backend))
            }
            AgentSpec::Human => {
                return Err(Error::Config(
                    "human players are only supported by `flux play`".into(),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyRecord {
    /// 1-based.
    pub ply: u32,
    pub role: Role,
    pub cells_before: Vec<u32>,
    pub action: Action,
    pub cells_after: Vec<u32>,
    pub sum_after: u32,
    pub status: TerminalStatus,
    pub annotation: Annotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    pub game_id: u64,
    pub seed: u64,
    pub shrinker: String,
    pub amplifier: String,
    pub plies: Vec<PlyRecord>,
}

impl GameRecord {
    pub fn outcome(&self) -> TerminalStatus {
        self.plies
            .last()
            .map_or(TerminalStatus::Ongoing, |p| p.status)
    }

    pub fn winner(&self) -> Option<Role> {
        self.outcome().winner()
    }

    pub fn len(&self) -> usize {
        self.plies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plies.is_empty()
    }

    pub fn state_before(&self, ply: &PlyRecord) -> Result<GameState> {
        GameState::new(ply.cells_before.clone(), ply.ply - 1)
    }
}

/// Plays one game to completion.
pub fn play_game(
    shrinker: &dyn Agent,
    amplifier: &dyn Agent,
    rules: &Rules,
    game_id: u64,
    seed: u64,
) -> GameRecord {
    let mut rng = GameRng::seed_from(seed);
    let mut players = [shrinker.start_game(), amplifier.start_game()];
    let mut state = rules.initial_state();
    let mut plies = Vec::new();
    while !state.is_terminal() {
        let role = rules.mover_at(state.moves_played());
        let decision = players[role.index()].choose(&state, role, &mut rng);
        let (next, status) = state
            .apply(decision.action)
            .expect("agents only return legal actions");
        plies.push(PlyRecord {
            ply: next.moves_played(),
            role,
            cells_before: state.cells().to_vec(),
            action: decision.action,
            cells_after: next.cells().to_vec(),
            sum_after: next.sum(),
            status,
            annotation: decision.annotation,
        });
        state = next;
    }
    GameRecord {
        game_id,
        seed,
        shrinker: shrinker.name().to_owned(),
        amplifier: amplifier.name().to_owned(),
        plies,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStats {
    pub games: u64,
    /// Indexed by role: shrinker, amplifier.
    pub wins: [u64; 2],
    pub total_plies: u64,
    pub games_at_max_plies: u64,
    /// Plies where an LLM was consulted, per role.
    pub llm_plies: [u64; 2],
    /// Forfeited LLM plies (a random move was substituted), per role.
    pub invalid_moves: [u64; 2],
    pub transport_failures: u64,
    /// Greedy Q moves made from unseen states.
    pub fallbacks: u64,
    pub outcomes: BTreeMap<String, u64>,
}

impl MatchStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a GameRecord>) -> Self {
        let mut s = MatchStats::default();
        for r in records {
            s.add(r);
        }
        s
    }

    pub fn add(&mut self, record: &GameRecord) {
        let outcome = record.outcome();
        let winner = outcome.winner().expect("recorded games are finished");
        self.games += 1;
        self.wins[winner.index()] += 1;
        self.total_plies += record.plies.len() as u64;
        if record.plies.len() as u32 >= crate::env::MAX_PLIES {
            self.games_at_max_plies += 1;
        }
        *self.outcomes.entry(outcome.to_string()).or_default() += 1;
        for p in &record.plies {
            let a = &p.annotation;
            if a.is_llm_ply() {
                self.llm_plies[p.role.index()] += 1;
            }
            if a.substituted {
                self.invalid_moves[p.role.index()] += 1;
            }
            if a.transport_failure {
                self.transport_failures += 1;
            }
            if a.fallback {
                self.fallbacks += 1;
            }
        }
    }

    pub fn win_rate(&self, role: Role) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            self.wins[role.index()] as f64 / self.games as f64
        }
    }

    pub fn avg_moves(&self) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            self.total_plies as f64 / self.games as f64
        }
    }

    /// Forfeited plies over LLM plies for `role`; zero when no LLM played it.
    pub fn invalid_fraction(&self, role: Role) -> f64 {
        let plies = self.llm_plies[role.index()];
        if plies == 0 {
            0.0
        } else {
            self.invalid_moves[role.index()] as f64 / plies as f64
        }
    }

    pub fn total_invalid(&self) -> u64 {
        self.invalid_moves.iter().sum()
    }

    pub fn total_llm_plies(&self) -> u64 {
        self.llm_plies.iter().sum()
    }
}

/// Normal-approximation 95% interval, clamped to `[0, 1]`.
pub fn compute_ci(wins: u64, games: u64) -> (f64, f64) {
    if games == 0 {
        return (0.0, 1.0);
    }
    let n = games as f64;
    let p = wins as f64 / n;
    let half = 1.96 * (p * (1.0 - p) / n).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchupSpec {
    pub p0: AgentSpec,
    pub p1: AgentSpec,
    pub games: u64,
    pub base_seed: u64,
    pub record_transcripts: bool,
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    pub stats: MatchStats,
    /// Empty unless transcripts were requested.
    pub records: Vec<GameRecord>,
}

/// Plays `games` games on up to `jobs` threads.
pub fn play_matchup(
    shrinker: &dyn Agent,
    amplifier: &dyn Agent,
    rules: &Rules,
    games: u64,
    base_seed: u64,
    jobs: usize,
) -> Vec<GameRecord> {
    let run = || {
        (0..games)
            .into_par_iter()
            .map(|i| play_game(shrinker, amplifier, rules, i, base_seed.wrapping_add(i)))
            .collect::<Vec<_>>()
    };
    if jobs <= 1 {
        return (0..games)
            .map(|i| play_game(shrinker, amplifier, rules, i, base_seed.wrapping_add(i)))
            .collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

pub fn run_matchup(spec: &MatchupSpec, factory: &AgentFactory, jobs: usize) -> Result<MatchResult> {
    if spec.games == 0 {
        return Err(Error::Config("a matchup needs at least one game".into()));
    }
    let p0 = factory.build(&spec.p0, Role::Shrinker)?;
    let p1 = factory.build(&spec.p1, Role::Amplifier)?;
    let records = play_matchup(
        p0.as_ref(),
        p1.as_ref(),
        &factory.rules,
        spec.games,
        spec.base_seed,
        jobs,
    );
    let stats = MatchStats::from_records(&records);
    Ok(MatchResult {
        stats,
        records: if spec.record_transcripts {
            records
        } else {
            Vec::new()
        },
    })
}

pub const STATS_CSV_HEADER: &str =
    "matchup,role,wins,games,win_rate,ci_low,ci_high,avg_moves,invalid_pct";

pub fn stats_csv_row(label: &str, role: Role, stats: &MatchStats) -> String {
    let wins = stats.wins[role.index()];
    let (lo, hi) = compute_ci(wins, stats.games);
    format!(
        "{},{},{},{},{:.4},{:.4},{:.4},{:.2},{:.2}",
        label,
        role,
        wins,
        stats.games,
        stats.win_rate(role),
        lo,
        hi,
        stats.avg_moves(),
        100.0 * stats.invalid_fraction(role)
    )
}

pub fn stats_csv(label: &str, stats: &MatchStats) -> String {
    let mut out = String::from(STATS_CSV_HEADER);
    out.push('\n');
    for role in [Role::Shrinker, Role::Amplifier] {
        out.push_str(&stats_csv_row(label, role, stats));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TranscriptLine {
    game: u64,
    seed: u64,
    shrinker: String,
    amplifier: String,
    ply: u32,
    role: Role,
    cells_before: Vec<u32>,
    action_code: u32,
    action: String,
    cells_after: Vec<u32>,
    sum_after: u32,
    status: String,
    #[serde(default)]
    annotation: Annotation,
}

/// JSON lines, one object per ply, games in order.
pub fn write_transcripts(records: &[GameRecord]) -> String {
    let mut out = String::new();
    for r in records {
        for p in &r.plies {
            let line = TranscriptLine {
                game: r.game_id,
                seed: r.seed,
                shrinker: r.shrinker.clone(),
                amplifier: r.amplifier.clone(),
                ply: p.ply,
                role: p.role,
                cells_before: p.cells_before.clone(),
                action_code: p.action.encode(),
                action: p.action.to_string(),
                cells_after: p.cells_after.clone(),
                sum_after: p.sum_after,
                status: p.status.to_string(),
                annotation: p.annotation.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
    }
    out
}

pub fn parse_transcripts(text: &str, path: &Path) -> Result<Vec<GameRecord>> {
    let mut records: Vec<GameRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: TranscriptLine = serde_json::from_str(raw)
            .map_err(|e| Error::format(path, lineno, e.to_string()))?;
        let action = Action::decode(line.action_code as i64, line.cells_before.len())
            .map_err(|e| Error::format(path, lineno, e.to_string()))?;
        if action.to_string() != line.action {
            return Err(Error::format(
                path,
                lineno,
                format!("action '{}' does not match code {}", line.action, line.action_code),
            ));
        }
        let status = line
            .status
            .parse::<TerminalStatus>()
            .map_err(|e| Error::format(path, lineno, e.to_string()))?;
        let ply = PlyRecord {
            ply: line.ply,
            role: line.role,
            cells_before: line.cells_before,
            action,
            cells_after: line.cells_after,
            sum_after: line.sum_after,
            status,
            annotation: line.annotation,
        };
        match records.last_mut() {
            Some(r) if r.game_id == line.game => r.plies.push(ply),
            _ => records.push(GameRecord {
                game_id: line.game,
                seed: line.seed,
                shrinker: line.shrinker,
                amplifier: line.amplifier,
                plies: vec![ply],
            }),
        }
    }
    Ok(records)
}

pub fn read_transcripts(path: &Path) -> Result<Vec<GameRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transcripts(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayMismatch {
    pub game_id: u64,
    pub ply: u32,
    pub detail: String,
}

impl fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "game {} ply {}: {}", self.game_id, self.ply, self.detail)
    }
}

/// Re-applies the recorded actions from the opening state and checks every
/// recorded field against the engine.
pub fn replay_record(record: &GameRecord, rules: &Rules) -> std::result::Result<(), ReplayMismatch> {
    let mismatch = |ply: u32, detail: String| ReplayMismatch {
        game_id: record.game_id,
        ply,
        detail,
    };
    let mut state = rules.initial_state();
    for (i, p) in record.plies.iter().enumerate() {
        let expected_ply = i as u32 + 1;
        if p.ply != expected_ply {
            return Err(mismatch(p.ply, format!("expected ply {expected_ply}")));
        }
        if p.cells_before != state.cells() {
            return Err(mismatch(
                p.ply,
                format!("cells before {:?}, engine has {:?}", p.cells_before, state.cells()),
            ));
        }
        let mover = rules
            .role_to_move(&state)
            .map_err(|_| mismatch(p.ply, "move recorded after the game ended".into()))?;
        if p.role != mover {
            return Err(mismatch(p.ply, format!("recorded mover {}, engine says {mover}", p.role)));
        }
        let (next, status) = state
            .apply(p.action)
            .map_err(|e| mismatch(p.ply, e.to_string()))?;
        if p.cells_after != next.cells() {
            return Err(mismatch(
                p.ply,
                format!("cells after {:?}, engine has {:?}", p.cells_after, next.cells()),
            ));
        }
        if p.sum_after != next.sum() {
            return Err(mismatch(
                p.ply,
                format!("sum after {}, engine has {}", p.sum_after, next.sum()),
            ));
        }
        if p.status != status {
            return Err(mismatch(p.ply, format!("status {}, engine has {status}", p.status)));
        }
        state = next;
    }
    if !state.is_terminal() {
        let last = record.plies.last().map_or(0, |p| p.ply);
        return Err(mismatch(last, "transcript ends before the game does".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Failure taxonomy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureTag {
    /// Shrinker amplified past the sum cap when a move that did not lose on
    /// the spot was available.
    SumBlindness,
    /// Reply named a cell index that does not exist.
    RowMiscount,
    /// Mover stood on a won position and played into a lost one.
    Myopia,
    /// Reply did not match the grammar at all.
    Format,
}

impl fmt::Display for FailureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureTag::SumBlindness => "sum_blindness",
            FailureTag::RowMiscount => "row_miscount",
            FailureTag::Myopia => "myopia",
            FailureTag::Format => "format",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlyTags {
    pub ply: u32,
    pub tags: Vec<FailureTag>,
}

/// Tags every ply of a game. Plies whose move was substituted are judged
/// only on the reply (format / range); the strategic tags look at moves the
/// agent actually chose.
pub fn classify_failure(record: &GameRecord, solved: &SolvedGame) -> Vec<PlyTags> {
    record
        .plies
        .iter()
        .map(|p| {
            let mut tags = Vec::new();
            let a = &p.annotation;
            let Ok(state) = record.state_before(p) else {
                return PlyTags { ply: p.ply, tags };
            };
            // transport failures carry no reply to judge
            if let Some(reply) = a.raw_reply.as_deref().filter(|_| !a.transport_failure) {
                match parse_reply(reply, &state) {
                    ParsedReply::Invalid(InvalidReason::Format) => tags.push(FailureTag::Format),
                    ParsedReply::Invalid(InvalidReason::OutOfRange) => {
                        tags.push(FailureTag::RowMiscount)
                    }
                    ParsedReply::Action(_) => {}
                }
            }
            if !a.substituted {
                tags.extend(strategic_tags(&state, p.role, p.action, solved));
            }
            PlyTags { ply: p.ply, tags }
        })
        .collect()
}

fn strategic_tags(
    state: &GameState,
    role: Role,
    action: Action,
    solved: &SolvedGame,
) -> Vec<FailureTag> {
    let mut tags = Vec::new();
    let Ok((child, status)) = state.apply(action) else {
        return tags;
    };
    let loses_now = |s: TerminalStatus| s.winner() == Some(role.opponent());

    if role == Role::Shrinker
        && matches!(
            status,
            TerminalStatus::AmplifierWin(crate::env::AmplifierReason::SumExceeded20)
        )
    {
        let had_safe_move = state
            .actions_unchecked()
            .into_iter()
            .any(|alt| !loses_now(state.apply_unchecked(alt).status()));
        if had_safe_move {
            tags.push(FailureTag::SumBlindness);
        }
    }

    let child_value = match status.winner() {
        Some(w) => Some(w),
        None => solved.value(&child),
    };
    if solved.value(state) == Some(role) && child_value == Some(role.opponent()) {
        tags.push(FailureTag::Myopia);
    }
    tags
}

pub fn failure_histogram<'a>(
    tags: impl IntoIterator<Item = &'a PlyTags>,
) -> BTreeMap<FailureTag, u64> {
    let mut hist = BTreeMap::new();
    for t in tags {
        for tag in &t.tags {
            *hist.entry(*tag).or_default() += 1;
        }
    }
    hist
}

// ---------------------------------------------------------------------------
// Baseline table reproduction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seat {
    Random,
    Heuristic,
    Rl,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub label: &'static str,
    pub role: Role,
    pub shrinker: Seat,
    pub amplifier: Seat,
    pub reference_win_pct: f64,
    pub reference_avg_moves: f64,
}

/// The eight baseline matchups with their reference numbers.
pub const REFERENCE_ROWS: [ReferenceRow; 8] = [
    ReferenceRow {
        label: "Random vs. Random",
        role: Role::Shrinker,
        shrinker: Seat::Random,
        amplifier: Seat::Random,
        reference_win_pct: 43.3,
        reference_avg_moves: 12.3,
    },
    ReferenceRow {
        label: "Heuristic vs. Random",
        role: Role::Shrinker,
        shrinker: Seat::Heuristic,
        amplifier: Seat::Random,
        reference_win_pct: 77.6,
        reference_avg_moves: 10.2,
    },
    ReferenceRow {
        label: "RL vs. Random",
        role: Role::Shrinker,
        shrinker: Seat::Rl,
        amplifier: Seat::Random,
        reference_win_pct: 89.5,
        reference_avg_moves: 11.1,
    },
    ReferenceRow {
        label: "RL vs. Heuristic",
        role: Role::Shrinker,
        shrinker: Seat::Rl,
        amplifier: Seat::Heuristic,
        reference_win_pct: 0.0,
        reference_avg_moves: 13.0,
    },
    ReferenceRow {
        label: "Random vs. Random",
        role: Role::Amplifier,
        shrinker: Seat::Random,
        amplifier: Seat::Random,
        reference_win_pct: 57.4,
        reference_avg_moves: 12.0,
    },
    ReferenceRow {
        label: "Random vs. Heuristic",
        role: Role::Amplifier,
        shrinker: Seat::Random,
        amplifier: Seat::Heuristic,
        reference_win_pct: 99.5,
        reference_avg_moves: 8.8,
    },
    ReferenceRow {
        label: "Random vs. RL",
        role: Role::Amplifier,
        shrinker: Seat::Random,
        amplifier: Seat::Rl,
        reference_win_pct: 98.8,
        reference_avg_moves: 11.6,
    },
    ReferenceRow {
        label: "Heuristic vs. RL",
        role: Role::Amplifier,
        shrinker: Seat::Heuristic,
        amplifier: Seat::Rl,
        reference_win_pct: 100.0,
        reference_avg_moves: 15.0,
    },
];

#[derive(Debug, Clone)]
pub struct Table2Report {
    pub rows: Vec<(ReferenceRow, MatchStats)>,
    /// RL against RL, reported beside the table.
    pub self_play: MatchStats,
    pub games: u64,
    pub seed: u64,
}

pub fn reproduce_table2(
    q_shrinker: &Path,
    q_amplifier: &Path,
    games: u64,
    seed: u64,
    factory: &AgentFactory,
    jobs: usize,
) -> Result<Table2Report> {
    if games == 0 {
        return Err(Error::Config("need at least one game per matchup".into()));
    }
    for p in [q_shrinker, q_amplifier] {
        if !p.is_file() {
            return Err(Error::Config(format!("missing Q-table {}", p.display())));
        }
    }
    let seat_spec = |seat: Seat, role: Role| match seat {
        Seat::Random => AgentSpec::Random,
        Seat::Heuristic => AgentSpec::Heuristic,
        Seat::Rl => AgentSpec::Rl(match role {
            Role::Shrinker => q_shrinker.to_path_buf(),
            Role::Amplifier => q_amplifier.to_path_buf(),
        }),
    };
    let mut rows = Vec::with_capacity(REFERENCE_ROWS.len());
    for (i, row) in REFERENCE_ROWS.iter().enumerate() {
        let spec = MatchupSpec {
            p0: seat_spec(row.shrinker, Role::Shrinker),
            p1: seat_spec(row.amplifier, Role::Amplifier),
            games,
            base_seed: row_seed(seed, i),
            record_transcripts: false,
        };
        rows.push((*row, run_matchup(&spec, factory, jobs)?.stats));
    }
    let self_play = MatchupSpec {
        p0: seat_spec(Seat::Rl, Role::Shrinker),
        p1: seat_spec(Seat::Rl, Role::Amplifier),
        games,
        base_seed: row_seed(seed, REFERENCE_ROWS.len()),
        record_transcripts: false,
    };
    let self_play = run_matchup(&self_play, factory, jobs)?.stats;
    Ok(Table2Report {
        rows,
        self_play,
        games,
        seed,
    })
}

/// Each row gets its own block of a million seeds.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    seed.wrapping_add(row as u64 * 1_000_000)
}

impl Table2Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(STATS_CSV_HEADER);
        out.push('\n');
        for (row, stats) in &self.rows {
            out.push_str(&stats_csv_row(row.label, row.role, stats));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} games per matchup, seed {}\n",
            self.games, self.seed
        );
        let _ = writeln!(
            out,
            "{:<22} {:<10} {:>8} {:>17} {:>9} | {:>8} {:>9}",
            "Matchup", "Role", "Win%", "95% CI", "Avg.Mv", "Ref.Win%", "Ref.AvgMv"
        );
        let _ = writeln!(out, "{}", "-".repeat(93));
        for (row, stats) in &self.rows {
            let wins = stats.wins[row.role.index()];
            let (lo, hi) = compute_ci(wins, stats.games);
            let _ = writeln!(
                out,
                "{:<22} {:<10} {:>7.1}% {:>7.1}-{:>6.1}% {:>9.1} | {:>7.1}% {:>9.1}",
                row.label,
                row.role,
                100.0 * stats.win_rate(row.role),
                100.0 * lo,
                100.0 * hi,
                stats.avg_moves(),
                row.reference_win_pct,
                row.reference_avg_moves
            );
        }
        let sp = &self.self_play;
        let _ = writeln!(
            out,
            "\nRL vs. RL: shrinker wins {:.1}%, games reaching ply 15: {:.1}%, avg moves {:.1} \
             (reference: 0% shrinker wins, every game reaching move 15)",
            100.0 * sp.win_rate(Role::Shrinker),
            100.0 * sp.games_at_max_plies as f64 / sp.games.max(1) as f64,
            sp.avg_moves()
        );
        let fallbacks: u64 = self.rows.iter().map(|(_, s)| s.fallbacks).sum();
        let _ = writeln!(out, "unseen-state fallbacks across all rows: {fallbacks}");
        out
    }
}
