//! Letting a chat model play.
//!
//! Each turn the board is rendered as text and appended to a running
//! conversation; the model's reply is parsed against a small grammar
//! (`AMPLIFY <i>` / `DRAIN <i>`). Anything that does not parse to a legal
//! move, including transport failures, forfeits the turn: a uniformly random
//! legal move is played instead and the ply is counted as invalid.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{random_policy, Agent, Annotation, Decision, Player};
use crate::env::{Action, GameState, Op, Role, MAX_PLIES};
use crate::error::{Error, Result};
use crate::rng::GameRng;

pub const ENV_ENDPOINT: &str = "FLUX_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "FLUX_LLM_API_KEY";
pub const ENV_MODEL: &str = "FLUX_LLM_MODEL";

pub const RULES_TEXT: &str = "\
You are playing FLUX, a two-player game on a row of positive integer cells. \
The row starts as [2, 1, 3, 1, 2]. Players take turns. On your turn pick one \
cell by its index and either AMPLIFY it (double its value) or DRAIN it (halve \
its value, rounding down). A cell whose value becomes 0 is removed and the \
cells to its right shift one place left, so their indices change. \
The Shrinker (Player 0) wins immediately when only one cell is left. \
The Amplifier (Player 1) wins immediately when a move makes the sum of all \
cells greater than 20. If neither happens, the game is decided after move 15: \
the Shrinker wins if fewer than 3 cells remain, otherwise the Amplifier wins.";

pub const INSTRUCTION: &str = "Reply with exactly: AMPLIFY <index> or DRAIN <index>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

pub type Conversation = Vec<Turn>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// Present on the first turn of a game only.
    pub rules_text: Option<String>,
    pub role_banner: String,
    pub board_table: String,
    pub instruction: String,
}

impl Observation {
    pub fn to_prompt(&self) -> String {
        let mut out = String::new();
        if let Some(rules) = &self.rules_text {
            out.push_str(rules);
            out.push_str("\n\n");
        }
        out.push_str(&self.role_banner);
        out.push('\n');
        out.push_str(&self.board_table);
        out.push_str(&self.instruction);
        out
    }
}

pub fn render_observation(state: &GameState, role: Role, first_turn: bool) -> Observation {
    let role_banner = match role {
        Role::Shrinker => "You are the Shrinker (Player 0).",
        Role::Amplifier => "You are the Amplifier (Player 1).",
    }
    .to_owned();
    let mut board = String::from("index | value\n");
    for (i, v) in state.cells().iter().enumerate() {
        let _ = writeln!(board, "{i} | {v}");
    }
    let _ = writeln!(board, "sum = {}", state.sum());
    let _ = writeln!(board, "move = {} of {MAX_PLIES}", state.moves_played() + 1);
    Observation {
        rules_text: first_turn.then(|| RULES_TEXT.to_owned()),
        role_banner,
        board_table: board,
        instruction: INSTRUCTION.to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvalidReason {
    Format,
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedReply {
    Action(Action),
    Invalid(InvalidReason),
}

impl ParsedReply {
    pub fn label(self) -> &'static str {
        match self {
            ParsedReply::Action(_) => "ok",
            ParsedReply::Invalid(InvalidReason::Format) => "format",
            ParsedReply::Invalid(InvalidReason::OutOfRange) => "out_of_range",
        }
    }
}

fn reply_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"(?i)\b(amplify|drain)\b[^A-Za-z0-9-]*(-?\d+)").expect("valid pattern")
    })
}

/// First `AMPLIFY <n>` or `DRAIN <n>` in the text, case-insensitive.
pub fn parse_reply(text: &str, state: &GameState) -> ParsedReply {
    let Some(caps) = reply_pattern().captures(text) else {
        return ParsedReply::Invalid(InvalidReason::Format);
    };
    let op = if caps[1].eq_ignore_ascii_case("amplify") {
        Op::Amplify
    } else {
        Op::Drain
    };
    // huge literals still name an index, just not an existing one
    match caps[2].parse::<i64>() {
        Ok(i) if i >= 0 && (i as usize) < state.len() => ParsedReply::Action(Action {
            index: i as usize,
            op,
        }),
        _ => ParsedReply::Invalid(InvalidReason::OutOfRange),
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("http status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, conversation: &[Turn]) -> std::result::Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LlmStats {
    pub calls: u64,
    pub invalid: u64,
    pub transport_failures: u64,
}

/// One LLM turn: observe, ask, parse, and substitute a random legal move if
/// the reply is unusable.
pub fn llm_agent_step(
    backend: &dyn LlmBackend,
    conversation: &mut Conversation,
    state: &GameState,
    role: Role,
    rng: &mut GameRng,
    stats: &mut LlmStats,
) -> Decision {
    let first_turn = conversation.is_empty();
    let observation = render_observation(state, role, first_turn);
    conversation.push(Turn {
        speaker: Speaker::User,
        text: observation.to_prompt(),
    });
    stats.calls += 1;

    let mut annotation = Annotation::default();
    let parsed = match backend.complete(conversation) {
        Ok(reply) => {
            let parsed = parse_reply(&reply, state);
            annotation.raw_reply = Some(reply);
            parsed
        }
        Err(err) => {
            log::warn!("{}: {err}; forfeiting turn", backend.name());
            stats.transport_failures += 1;
            annotation.transport_failure = true;
            ParsedReply::Invalid(InvalidReason::Format)
        }
    };
    annotation.parse = Some(parsed.label().to_owned());

    let action = match parsed {
        ParsedReply::Action(a) => a,
        ParsedReply::Invalid(_) => {
            stats.invalid += 1;
            annotation.substituted = true;
            random_policy(state, rng)
        }
    };
    conversation.push(Turn {
        speaker: Speaker::Assistant,
        text: action.to_string(),
    });
    Decision { action, annotation }
}

/// Replays a fixed list of replies. The reply for a turn is picked by how
/// many assistant turns the conversation already holds, so the backend keeps
/// no state between calls and every game starts from the top of the script.
/// Past the end of the script it answers with an empty string. A line
/// reading `<timeout>` simulates a transport failure.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    replies: Vec<String>,
}

pub const SCRIPT_TIMEOUT: &str = "<timeout>";

impl ScriptedBackend {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedBackend {
            name: "scripted".into(),
            replies,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut backend = ScriptedBackend::new(text.lines().map(str::to_owned).collect());
        backend.name = format!("scripted={}", path.display());
        Ok(backend)
    }
}

pub fn scripted_backend(script: Vec<String>) -> ScriptedBackend {
    ScriptedBackend::new(script)
}

impl LlmBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, conversation: &[Turn]) -> std::result::Result<String, BackendError> {
        let turn = conversation
            .iter()
            .filter(|t| t.speaker == Speaker::Assistant)
            .count();
        match self.replies.get(turn) {
            Some(r) if r == SCRIPT_TIMEOUT => Err(BackendError::Timeout),
            Some(r) => Ok(r.clone()),
            None => Ok(String::new()),
        }
    }
}

/// Chat-completion client (`{"model", "messages": [{role, content}],
/// "temperature": 0}`; reply read from `choices[0].message.content`).
pub struct HttpChatBackend {
    name: String,
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
    exchange_log: Option<Mutex<File>>,
}

impl std::fmt::Debug for HttpChatBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpChatBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        let model = model.into();
        let api_key = api_key.into();
        if endpoint.is_empty() {
            return Err(Error::Config("LLM endpoint is empty".into()));
        }
        if api_key.is_empty() {
            return Err(Error::Config("LLM API key is empty".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(HttpChatBackend {
            name: format!("http:{model}"),
            endpoint,
            model,
            api_key,
            agent,
            exchange_log: None,
        })
    }

    /// Reads endpoint, key and model from the environment. A missing
    /// variable is a configuration error here, before any game starts.
    pub fn from_env(model_override: Option<&str>, timeout: Duration) -> Result<Self> {
        let var = |name: &str| {
            std::env::var(name)
                .ok()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::Config(format!("environment variable {name} is not set")))
        };
        let endpoint = var(ENV_ENDPOINT)?;
        let api_key = var(ENV_API_KEY)?;
        let model = match model_override {
            Some(m) => m.to_owned(),
            None => var(ENV_MODEL)?,
        };
        HttpChatBackend::new(endpoint, model, api_key, timeout)
    }

    /// Appends every request/response pair to `path` as JSON lines.
    pub fn with_exchange_log(mut self, path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        self.exchange_log = Some(Mutex::new(file));
        Ok(self)
    }

    fn request_body(&self, conversation: &[Turn]) -> serde_json::Value {
        let messages: Vec<_> = conversation
            .iter()
            .map(|t| {
                let role = match t.speaker {
                    Speaker::User => "user",
                    Speaker::Assistant => "assistant",
                };
                json!({ "role": role, "content": t.text })
            })
            .collect();
        json!({ "model": self.model, "messages": messages, "temperature": 0 })
    }

    fn send(&self, body: &serde_json::Value) -> std::result::Result<String, BackendError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => BackendError::Status(code),
                ureq::Error::Timeout(_) => BackendError::Timeout,
                other => BackendError::Transport(other.to_string()),
            })?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }

    fn log_exchange(&self, body: &serde_json::Value, result: &std::result::Result<String, BackendError>) {
        let Some(log) = &self.exchange_log else {
            return;
        };
        let entry = match result {
            Ok(reply) => json!({ "request": body, "reply": reply }),
            Err(err) => json!({ "request": body, "error": err.to_string() }),
        };
        if let Ok(mut file) = log.lock() {
            let _ = writeln!(file, "{entry}");
        }
    }
}

impl LlmBackend for HttpChatBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, conversation: &[Turn]) -> std::result::Result<String, BackendError> {
        let body = self.request_body(conversation);
        log::debug!("request to {}: {body}", self.endpoint);
        let mut result = self.send(&body);
        let retryable = matches!(
            result,
            Err(BackendError::Timeout | BackendError::Transport(_))
                | Err(BackendError::Status(500..=599))
        );
        if retryable {
            log::info!("retrying {} once after failure", self.endpoint);
            result = self.send(&body);
        }
        log::debug!("response from {}: {result:?}", self.endpoint);
        self.log_exchange(&body, &result);
        result
    }
}

pub fn http_chat_backend(
    endpoint: &str,
    model_name: &str,
    credentials: &str,
    timeout: Duration,
) -> Result<HttpChatBackend> {
    HttpChatBackend::new(endpoint, model_name, credentials, timeout)
}

/// Agent wrapper around a backend. Conversations live in the per-game
/// player and never cross games.
#[derive(Clone)]
pub struct LlmAgent {
    name: String,
    backend: Arc<dyn LlmBackend>,
}

impl LlmAgent {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        LlmAgent {
            name: format!("llm:{}", backend.name()),
            backend,
        }
    }
}

impl std::fmt::Debug for LlmAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmAgent").field("name", &self.name).finish()
    }
}

pub struct LlmPlayer<'a> {
    backend: &'a dyn LlmBackend,
    pub conversation: Conversation,
    pub stats: LlmStats,
}

impl Player for LlmPlayer<'_> {
    fn choose(&mut self, state: &GameState, role: Role, rng: &mut GameRng) -> Decision {
        llm_agent_step(
            self.backend,
            &mut self.conversation,
            state,
            role,
            rng,
            &mut self.stats,
        )
    }
}

impl Agent for LlmAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn start_game(&self) -> Box<dyn Player + '_> {
        Box::new(LlmPlayer {
            backend: self.backend.as_ref(),
            conversation: Vec::new(),
            stats: LlmStats::default(),
        })
    }
}

/// Where exchanges go when `--log-llm` is set.
pub fn exchange_log_path(dir: &Path) -> PathBuf {
    dir.join("llm_exchanges.jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(cells: &[u32], m: u32) -> GameState {
        GameState::new(cells.to_vec(), m).unwrap()
    }

    #[test]
    fn initial_observation() {
        let obs = render_observation(&GameState::initial(), Role::Shrinker, true);
        assert!(obs.rules_text.is_some());
        assert_eq!(
            obs.board_table,
            "index | value\n0 | 2\n1 | 1\n2 | 3\n3 | 1\n4 | 2\nsum = 9\nmove = 1 of 15\n"
        );
        assert_eq!(obs.instruction, INSTRUCTION);
        assert!(obs.to_prompt().starts_with(RULES_TEXT));
    }

    #[test]
    fn later_observation_omits_rules() {
        let obs = render_observation(&st(&[2, 3, 1, 2], 1), Role::Amplifier, false);
        assert!(obs.rules_text.is_none());
        let rows = obs
            .board_table
            .lines()
            .filter(|l| l.contains(" | ") && !l.starts_with("index"))
            .count();
        assert_eq!(rows, 4);
        assert!(obs.board_table.contains("sum = 8\n"));
        assert!(obs.board_table.contains("move = 2 of 15\n"));
        assert!(obs.role_banner.contains("Amplifier"));
        assert_eq!(
            obs,
            render_observation(&st(&[2, 3, 1, 2], 1), Role::Amplifier, false)
        );
    }

    #[test]
    fn parse_examples() {
        let five = GameState::initial();
        let four = st(&[2, 3, 1, 2], 1);
        assert_eq!(parse_reply("drain 1", &five), ParsedReply::Action(Action::drain(1)));
        assert_eq!(
            parse_reply("I will AMPLIFY 7 to grow", &four),
            ParsedReply::Invalid(InvalidReason::OutOfRange)
        );
        assert_eq!(
            parse_reply("I pass", &five),
            ParsedReply::Invalid(InvalidReason::Format)
        );
        assert_eq!(
            parse_reply("Amplify: 3. Then drain 0", &four),
            ParsedReply::Action(Action::amplify(3))
        );
        assert_eq!(
            parse_reply("DRAIN -1", &four),
            ParsedReply::Invalid(InvalidReason::OutOfRange)
        );
        assert_eq!(
            parse_reply("DRAIN 99999999999999999999999", &four),
            ParsedReply::Invalid(InvalidReason::OutOfRange)
        );
        assert_eq!(
            parse_reply("drainage 2", &four),
            ParsedReply::Invalid(InvalidReason::Format)
        );
        assert_eq!(
            parse_reply("amplify the middle cell", &four),
            ParsedReply::Invalid(InvalidReason::Format)
        );
    }

    #[test]
    fn instructed_replies_round_trip() {
        let s = st(&[3, 1, 4, 1, 5], 2);
        for a in s.legal_actions().unwrap() {
            assert_eq!(parse_reply(&a.to_string(), &s), ParsedReply::Action(a));
        }
    }

    #[test]
    fn step_happy_path() {
        let backend = scripted_backend(vec!["DRAIN 1".into()]);
        let mut conv = Vec::new();
        let mut stats = LlmStats::default();
        let mut rng = GameRng::seed_from(0);
        let d = llm_agent_step(
            &backend,
            &mut conv,
            &GameState::initial(),
            Role::Shrinker,
            &mut rng,
            &mut stats,
        );
        assert_eq!(d.action, Action::drain(1));
        assert!(!d.annotation.substituted);
        assert_eq!(d.annotation.parse.as_deref(), Some("ok"));
        assert_eq!(stats.invalid, 0);
        assert_eq!(conv.len(), 2);
        assert_eq!(conv[1].text, "DRAIN 1");
    }

    #[test]
    fn step_substitutes_garbage() {
        let backend = scripted_backend(vec!["banana".into()]);
        let mut conv = Vec::new();
        let mut stats = LlmStats::default();
        let mut rng = GameRng::seed_from(3);
        let state = GameState::initial();
        let d = llm_agent_step(&backend, &mut conv, &state, Role::Shrinker, &mut rng, &mut stats);
        assert!(state.legal_actions().unwrap().contains(&d.action));
        assert!(d.annotation.substituted);
        assert!(!d.annotation.transport_failure);
        assert_eq!(d.annotation.raw_reply.as_deref(), Some("banana"));
        assert_eq!(stats.invalid, 1);
        assert_eq!(conv[1].text, d.action.to_string());
    }

    #[test]
    fn step_substitutes_on_timeout() {
        let backend = scripted_backend(vec![SCRIPT_TIMEOUT.into()]);
        let mut conv = Vec::new();
        let mut stats = LlmStats::default();
        let mut rng = GameRng::seed_from(3);
        let state = GameState::initial();
        let d = llm_agent_step(&backend, &mut conv, &state, Role::Shrinker, &mut rng, &mut stats);
        assert!(state.legal_actions().unwrap().contains(&d.action));
        assert!(d.annotation.substituted && d.annotation.transport_failure);
        assert_eq!(stats.transport_failures, 1);
        assert_eq!(stats.invalid, 1);
    }

    #[test]
    fn script_is_indexed_by_turn() {
        let backend = scripted_backend(vec!["AMPLIFY 2".into(), "DRAIN 0".into()]);
        let user = |t: &str| Turn {
            speaker: Speaker::User,
            text: t.into(),
        };
        let assistant = |t: &str| Turn {
            speaker: Speaker::Assistant,
            text: t.into(),
        };
        let mut conv = vec![user("a")];
        assert_eq!(backend.complete(&conv).unwrap(), "AMPLIFY 2");
        conv.extend([assistant("x"), user("b")]);
        assert_eq!(backend.complete(&conv).unwrap(), "DRAIN 0");
        conv.extend([assistant("y"), user("c")]);
        assert_eq!(backend.complete(&conv).unwrap(), "");

        let empty = scripted_backend(Vec::new());
        assert_eq!(empty.complete(&[user("a")]).unwrap(), "");
    }

    #[test]
    fn http_backend_requires_credentials() {
        let err = HttpChatBackend::new("http://127.0.0.1:1/v1", "m", "", Duration::from_secs(1))
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
