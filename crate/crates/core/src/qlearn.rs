//! Tabular Q-learning with a cyclic three-mode curriculum.
//!
//! Each role has its own table keyed by the states where that role is to
//! move. A learner's transition runs from one of its own decisions to its
//! next decision (or the end of the game), so the opponent's ply is part of
//! the environment from the learner's point of view.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::random_policy;
use crate::env::{Action, GameState, Role, Rules, TerminalStatus};
use crate::error::{Error, Result};
use crate::rng::GameRng;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub role: Role,
    pub episodes: u64,
    pub config_digest: String,
    entries: BTreeMap<String, BTreeMap<u32, f64>>,
}

impl QTable {
    pub fn new(role: Role) -> Self {
        QTable {
            role,
            episodes: 0,
            config_digest: String::new(),
            entries: BTreeMap::new(),
        }
    }

    /// Number of distinct states with at least one stored value.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn actions(&self, key: &str) -> Option<&BTreeMap<u32, f64>> {
        self.entries.get(key)
    }

    /// Absent entries read as zero.
    pub fn get(&self, key: &str, code: u32) -> f64 {
        self.entries
            .get(key)
            .and_then(|m| m.get(&code))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, key: &str, code: u32, value: f64) {
        self.entries
            .entry(key.to_owned())
            .or_default()
            .insert(code, value);
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.values().flat_map(|m| m.values().copied())
    }

    /// Highest-valued legal action, lowest code on ties. `None` when the
    /// state has never been visited.
    pub fn greedy_action(&self, state: &GameState) -> Option<Action> {
        let key = state.key();
        self.entries.get(&key)?;
        Some(self.argmax(&key, &state.actions_unchecked()))
    }

    fn argmax(&self, key: &str, legal: &[Action]) -> Action {
        let mut best = legal[0];
        let mut best_value = self.get(key, best.encode());
        for &a in &legal[1..] {
            let v = self.get(key, a.encode());
            if v > best_value {
                best = a;
                best_value = v;
            }
        }
        best
    }

    fn max_value(&self, key: &str, codes: &[u32]) -> f64 {
        codes
            .iter()
            .map(|&c| self.get(key, c))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#role={}", self.role);
        let _ = writeln!(out, "#episodes={}", self.episodes);
        let _ = writeln!(out, "#config_digest={}", self.config_digest);
        let _ = writeln!(out, "#states={}", self.entries.len());
        for (key, actions) in &self.entries {
            out.push_str(key);
            out.push('\t');
            for (i, (code, value)) in actions.iter().enumerate() {
                if i > 0 {
                    out.push(';');
                }
                // f64 Display is the shortest string that parses back exactly
                let _ = write!(out, "{code}={value}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<QTable> {
        let mut role = None;
        let mut episodes = None;
        let mut digest = None;
        let mut declared_states = None;
        let mut entries = BTreeMap::new();
        let mut last_line = 0;

        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            last_line = lineno;
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let (name, value) = header
                    .split_once('=')
                    .ok_or_else(|| Error::format(path, lineno, "header without '='"))?;
                let bad = |what: &str| Error::format(path, lineno, format!("bad {what} '{value}'"));
                match name {
                    "role" => role = Some(value.parse::<Role>().map_err(|_| bad("role"))?),
                    "episodes" => episodes = Some(value.parse::<u64>().map_err(|_| bad("episodes"))?),
                    "config_digest" => digest = Some(value.to_owned()),
                    "states" => {
                        declared_states = Some(value.parse::<usize>().map_err(|_| bad("states"))?)
                    }
                    _ => {
                        return Err(Error::format(path, lineno, format!("unknown header '{name}'")))
                    }
                }
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(path, lineno, "expected '<state>\\t<values>'"))?;
            let state = GameState::from_key(key)
                .map_err(|_| Error::format(path, lineno, format!("bad state key '{key}'")))?;
            let mut actions = BTreeMap::new();
            for item in values.split(';') {
                let (code, value) = item
                    .split_once('=')
                    .ok_or_else(|| Error::format(path, lineno, format!("bad entry '{item}'")))?;
                let code: u32 = code
                    .parse()
                    .map_err(|_| Error::format(path, lineno, format!("bad action code '{code}'")))?;
                if code as usize >= 2 * state.len() {
                    return Err(Error::format(
                        path,
                        lineno,
                        format!("action code {code} invalid for a row of {}", state.len()),
                    ));
                }
                let value: f64 = value
                    .parse()
                    .map_err(|_| Error::format(path, lineno, format!("bad value '{value}'")))?;
                if !value.is_finite() {
                    return Err(Error::format(path, lineno, "non-finite value"));
                }
                actions.insert(code, value);
            }
            if entries.insert(key.to_owned(), actions).is_some() {
                return Err(Error::format(path, lineno, format!("duplicate state '{key}'")));
            }
        }

        let end = last_line + 1;
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(Error::format(path, last_line, "unterminated final line (truncated?)"));
        }
        let role = role.ok_or_else(|| Error::format(path, end, "missing #role header"))?;
        let episodes = episodes.ok_or_else(|| Error::format(path, end, "missing #episodes header"))?;
        let config_digest =
            digest.ok_or_else(|| Error::format(path, end, "missing #config_digest header"))?;
        let declared = declared_states.ok_or_else(|| Error::format(path, end, "missing #states header"))?;
        if declared != entries.len() {
            return Err(Error::format(
                path,
                end,
                format!(
                    "file declares {declared} states but contains {} (truncated?)",
                    entries.len()
                ),
            ));
        }
        Ok(QTable {
            role,
            episodes,
            config_digest,
            entries,
        })
    }
}

pub fn save_qtable(table: &QTable, path: &Path) -> Result<()> {
    fs::write(path, table.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_qtable(path: &Path) -> Result<QTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    QTable::parse(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Episode `i` runs mode `(i mod 3) + 1`.
    RoundRobin,
    /// Runs `n` consecutive episodes of each mode in turn.
    Block(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_min: f64,
    pub eps_decay: f64,
    pub episodes: u64,
    pub seed: u64,
    pub reward_win: f64,
    pub reward_loss: f64,
    pub reward_step: f64,
    pub schedule: Schedule,
    pub rules: Rules,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.2,
            gamma: 0.92,
            eps_start: 1.0,
            eps_min: 0.05,
            eps_decay: 0.9997,
            episodes: 30_000,
            seed: 0,
            reward_win: 1.0,
            reward_loss: -1.0,
            reward_step: 0.0,
            schedule: Schedule::RoundRobin,
            rules: Rules::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(what.to_owned()))
            }
        };
        check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha must be in (0, 1]")?;
        check((0.0..=1.0).contains(&self.gamma), "gamma must be in [0, 1]")?;
        check(
            0.0 <= self.eps_min && self.eps_min <= self.eps_start && self.eps_start <= 1.0,
            "need 0 <= eps_min <= eps_start <= 1",
        )?;
        check(self.eps_decay > 0.0 && self.eps_decay <= 1.0, "eps_decay must be in (0, 1]")?;
        check(
            !matches!(self.schedule, Schedule::Block(0)),
            "block schedule length must be positive",
        )?;
        Ok(())
    }

    /// SHA-256 over the JSON form of the config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn mode_for(&self, episode: u64) -> CurriculumMode {
        let slot = match self.schedule {
            Schedule::RoundRobin => episode % 3,
            Schedule::Block(n) => (episode / n) % 3,
        };
        CurriculumMode::ALL[slot as usize]
    }
}

pub fn epsilon_at(episode: u64, cfg: &TrainConfig) -> f64 {
    let decayed = cfg.eps_start * cfg.eps_decay.powf(episode as f64);
    decayed.max(cfg.eps_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurriculumMode {
    ShrinkerVsRandom,
    AmplifierVsRandom,
    SelfPlay,
}

impl CurriculumMode {
    pub const ALL: [CurriculumMode; 3] = [
        CurriculumMode::ShrinkerVsRandom,
        CurriculumMode::AmplifierVsRandom,
        CurriculumMode::SelfPlay,
    ];

    pub fn learns(self, role: Role) -> bool {
        match self {
            CurriculumMode::ShrinkerVsRandom => role == Role::Shrinker,
            CurriculumMode::AmplifierVsRandom => role == Role::Amplifier,
            CurriculumMode::SelfPlay => true,
        }
    }

    /// 1, 2 or 3.
    pub fn number(self) -> u8 {
        match self {
            CurriculumMode::ShrinkerVsRandom => 1,
            CurriculumMode::AmplifierVsRandom => 2,
            CurriculumMode::SelfPlay => 3,
        }
    }
}

/// One-step update `Q += alpha * (r + gamma * max_a' Q(s', a') - Q)`.
/// `next` is `None` when the transition ended the game.
pub fn q_update(
    table: &mut QTable,
    key: &str,
    code: u32,
    reward: f64,
    next: Option<(&str, &[u32])>,
    cfg: &TrainConfig,
) {
    let bootstrap = match next {
        Some((next_key, codes)) if !codes.is_empty() => table.max_value(next_key, codes),
        _ => 0.0,
    };
    let current = table.get(key, code);
    let updated = current + cfg.alpha * (reward + cfg.gamma * bootstrap - current);
    table.set(key, code, updated);
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub mode: CurriculumMode,
    pub status: TerminalStatus,
    pub plies: u32,
}

fn codes_of(actions: &[Action]) -> Vec<u32> {
    actions.iter().map(|a| a.encode()).collect()
}

/// Plays one training game and applies the learners' updates.
pub fn run_episode(
    mode: CurriculumMode,
    tables: [&mut QTable; 2],
    episode: u64,
    cfg: &TrainConfig,
    rng: &mut GameRng,
) -> EpisodeResult {
    let eps = epsilon_at(episode, cfg);
    let mut state = cfg.rules.initial_state();
    let mut pending: [Option<(String, u32)>; 2] = [None, None];

    let status = loop {
        let status = state.status();
        if status.is_terminal() {
            break status;
        }
        let role = cfg.rules.mover_at(state.moves_played());
        let action = if mode.learns(role) {
            let table = &mut *tables[role.index()];
            let key = state.key();
            let legal = state.actions_unchecked();
            if let Some((prev_key, prev_code)) = pending[role.index()].take() {
                let codes = codes_of(&legal);
                q_update(
                    table,
                    &prev_key,
                    prev_code,
                    cfg.reward_step,
                    Some((&key, &codes)),
                    cfg,
                );
            }
            let action = if rng.unit() < eps {
                *rng.choose(&legal)
            } else {
                table.argmax(&key, &legal)
            };
            pending[role.index()] = Some((key, action.encode()));
            action
        } else {
            random_policy(&state, rng)
        };
        state = state.apply_unchecked(action);
    };

    let winner = status.winner().expect("terminal");
    for role in [Role::Shrinker, Role::Amplifier] {
        if let Some((key, code)) = pending[role.index()].take() {
            let reward = if role == winner {
                cfg.reward_win
            } else {
                cfg.reward_loss
            };
            q_update(&mut *tables[role.index()], &key, code, reward, None, cfg);
        }
    }

    EpisodeResult {
        mode,
        status,
        plies: state.moves_played(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub episode: u64,
    pub mode: CurriculumMode,
    pub epsilon: f64,
    pub winner: Role,
    pub plies: u32,
    pub states_shrinker: usize,
    pub states_amplifier: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub const HEADER: &'static str =
        "episode,mode,epsilon,winner,plies,states_shrinker,states_amplifier";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.episode,
                p.mode.number(),
                p.epsilon,
                p.winner,
                p.plies,
                p.states_shrinker,
                p.states_amplifier
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub shrinker: QTable,
    pub amplifier: QTable,
    pub curve: TrainingCurve,
}

impl TrainOutput {
    pub fn final_epsilon(&self, cfg: &TrainConfig) -> f64 {
        epsilon_at(cfg.episodes.saturating_sub(1), cfg)
    }
}

/// Runs the full curriculum. `curve_stride` controls how often a curve point
/// is logged (1 logs every episode). Deterministic in `cfg`.
pub fn train(cfg: &TrainConfig, curve_stride: u64) -> Result<TrainOutput> {
    cfg.validate()?;
    let stride = curve_stride.max(1);
    let digest = cfg.digest();
    let mut shrinker = QTable::new(Role::Shrinker);
    let mut amplifier = QTable::new(Role::Amplifier);
    let mut rng = GameRng::seed_from(cfg.seed);
    let mut curve = TrainingCurve::default();

    for episode in 0..cfg.episodes {
        let mode = cfg.mode_for(episode);
        let result = run_episode(mode, [&mut shrinker, &mut amplifier], episode, cfg, &mut rng);
        if episode % stride == 0 || episode + 1 == cfg.episodes {
            curve.points.push(CurvePoint {
                episode,
                mode,
                epsilon: epsilon_at(episode, cfg),
                winner: result.status.winner().expect("terminal"),
                plies: result.plies,
                states_shrinker: shrinker.len(),
                states_amplifier: amplifier.len(),
            });
        }
    }

    for table in [&mut shrinker, &mut amplifier] {
        table.episodes = cfg.episodes;
        table.config_digest = digest.clone();
    }
    Ok(TrainOutput {
        shrinker,
        amplifier,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn epsilon_schedule_points() {
        let c = cfg();
        assert_eq!(epsilon_at(0, &c), 1.0);
        assert_eq!(epsilon_at(30_000, &c), 0.05);
        assert_eq!(epsilon_at(29_999, &c), 0.05);
    }

    #[test]
    fn epsilon_first_clamped_episode_matches_repeated_multiplication() {
        // independent route: multiply step by step until under the floor
        let c = cfg();
        let mut eps = 1.0f64;
        let mut first_below = 0u64;
        for e in 1..20_000u64 {
            eps *= 0.9997;
            if eps < 0.05 {
                first_below = e;
                break;
            }
        }
        assert_eq!(first_below, 9985);
        assert_eq!(epsilon_at(9985, &c), 0.05);
        assert!(epsilon_at(9984, &c) > 0.05);
        let crossover = (0.05f64).ln() / (0.9997f64).ln();
        assert!((crossover - 9984.3).abs() < 0.1, "{crossover}");
    }

    #[test]
    fn epsilon_is_monotone_and_floored() {
        let c = cfg();
        let mut prev = f64::INFINITY;
        for e in (0..40_000).step_by(37) {
            let v = epsilon_at(e, &c);
            assert!(v <= prev && v >= c.eps_min);
            prev = v;
        }
    }

    #[test]
    fn q_update_examples() {
        let c = cfg();
        let mut t = QTable::new(Role::Shrinker);
        q_update(&mut t, "2,2|0", 1, 1.0, None, &c);
        assert!((t.get("2,2|0", 1) - 0.2).abs() < 1e-15);

        let mut t = QTable::new(Role::Shrinker);
        t.set("a", 0, 0.5);
        t.set("b", 3, 1.0);
        q_update(&mut t, "a", 0, 0.0, Some(("b", &[0, 1, 2, 3])), &c);
        assert!((t.get("a", 0) - 0.584).abs() < 1e-12, "{}", t.get("a", 0));

        let frozen = TrainConfig {
            alpha: 0.0,
            ..cfg()
        };
        let mut t = QTable::new(Role::Shrinker);
        t.set("a", 0, 0.5);
        t.set("b", 0, 1.0);
        q_update(&mut t, "a", 0, 1.0, Some(("b", &[0])), &frozen);
        q_update(&mut t, "a", 0, -1.0, None, &frozen);
        assert_eq!(t.get("a", 0), 0.5);
    }

    #[test]
    fn zero_alpha_is_rejected_by_training_config() {
        let bad = TrainConfig {
            alpha: 0.0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn modes_touch_only_their_learners() {
        let c = cfg();
        for (mode, expect) in [
            (CurriculumMode::ShrinkerVsRandom, (true, false)),
            (CurriculumMode::AmplifierVsRandom, (false, true)),
            (CurriculumMode::SelfPlay, (true, true)),
        ] {
            let mut s = QTable::new(Role::Shrinker);
            let mut a = QTable::new(Role::Amplifier);
            let mut rng = GameRng::seed_from(11);
            for ep in 0..20 {
                let r = run_episode(mode, [&mut s, &mut a], ep, &c, &mut rng);
                assert!(r.status.is_terminal());
                assert!(r.plies <= 15);
            }
            assert_eq!((!s.is_empty(), !a.is_empty()), expect, "{mode:?}");
        }
    }

    #[test]
    fn schedule_cycles() {
        let c = cfg();
        let modes: Vec<u8> = (0..6).map(|e| c.mode_for(e).number()).collect();
        assert_eq!(modes, [1, 2, 3, 1, 2, 3]);
        let block = TrainConfig {
            schedule: Schedule::Block(2),
            ..cfg()
        };
        let modes: Vec<u8> = (0..7).map(|e| block.mode_for(e).number()).collect();
        assert_eq!(modes, [1, 1, 2, 2, 3, 3, 1]);
    }

    #[test]
    fn zero_episodes_gives_empty_tables() {
        let c = TrainConfig {
            episodes: 0,
            ..cfg()
        };
        let out = train(&c, 1).unwrap();
        assert!(out.shrinker.is_empty() && out.amplifier.is_empty());
        assert!(out.curve.points.is_empty());
        assert_eq!(out.final_epsilon(&c), 1.0);
    }

    #[test]
    fn table_text_round_trip() {
        let mut t = QTable::new(Role::Amplifier);
        t.episodes = 12;
        t.config_digest = "abc123".into();
        t.set("2,1,3,1,2|1", 0, 0.1 + 0.2);
        t.set("2,1,3,1,2|1", 9, -1.0 / 3.0);
        t.set("4,7|3", 2, 1e-7);
        let path = PathBuf::from("mem");
        let back = QTable::parse(&t.to_text(), &path).unwrap();
        assert_eq!(back, t);

        let empty = QTable::new(Role::Shrinker);
        assert_eq!(QTable::parse(&empty.to_text(), &path).unwrap(), empty);
    }

    #[test]
    fn truncated_table_is_a_format_error() {
        let mut t = QTable::new(Role::Shrinker);
        t.set("2,1,3,1,2|0", 3, 0.5);
        t.set("2,3,1,2|2", 1, 0.25);
        let text = t.to_text();
        let path = PathBuf::from("q.txt");
        for cut in [text.len() - 12, text.len() - 3, 20, 5] {
            let err = QTable::parse(&text[..cut], &path).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "cut {cut}: {err}");
        }
        let err = QTable::parse("#role=shrinker\n#episodes=1\nnot a line\n", &path).unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
        let err = QTable::parse("#role=shrinker\n4,7|3\t9=0.1\n", &path).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }
}
